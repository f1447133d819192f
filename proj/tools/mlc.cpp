// mlc: compiles a Match+Lambda program into NIC firmware and reports pass totals.
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "lnic/compiler.hpp"
#include "lnic/validate.hpp"
#include "lnic/workloads.hpp"

using namespace lnic;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Match+Lambda compiler"};
  app.require_subcommand(1);

  std::string program, nic_path, report_path, listing_path;
  int opt = 1;
  bool no_guards = false;
  auto* build = app.add_subcommand("build", "compile a program to firmware");
  build->add_option("program", program, "program file (.mlp)")->required()->check(CLI::ExistingFile);
  build->add_option("--nic", nic_path, "NIC config file (key = value lines)")->check(CLI::ExistingFile);
  build->add_option("--opt", opt, "optimization level")->check(CLI::IsMember({0, 1}));
  build->add_option("--report", report_path, "write the per-pass table (pass,instructions) here");
  build->add_option("--listing", listing_path, "write the firmware listing here");
  build->add_flag("--no-guards", no_guards, "omit isolation guards (testing only)");

  std::string check_program;
  auto* check = app.add_subcommand("check", "validate a program");
  check->add_option("program", check_program, "program file (.mlp)")->required()->check(CLI::ExistingFile);

  auto* suite = app.add_subcommand("suite", "print the 4-lambda benchmark suite program");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*build) {
      const ir::MLProgram prog = ir::load_program(program);
      const NicSpec nic = nic_path.empty() ? NicSpec{} : NicSpec::load(nic_path);
      const auto result = compiler::compile(prog, nic, {opt, !no_guards});
      std::cout << "firmware: " << result.firmware.lambdas.size() << " lambdas, " << result.firmware.total_instructions()
                << " instructions, digest " << std::hex << result.firmware.digest() << std::dec << "\n";
      std::cout << result.report.summary();
      if (!report_path.empty()) write_file(report_path, result.report.table());
      if (!listing_path.empty()) write_file(listing_path, result.firmware.listing());
    } else if (*check) {
      const auto report = ir::validate(ir::load_program(check_program));
      std::cout << report.summary();
      if (!report.ok()) return 1;
      std::cout << "ok\n";
    } else if (*suite) {
      std::cout << bench::suite_text();
    }
  } catch (const std::exception& e) {
    std::cerr << "mlc: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
