// bench: workload runs, nic/host comparisons, the contention experiment and
// the optimizer pass table.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "lnic/bench.hpp"
#include "lnic/compiler.hpp"

using namespace lnic;

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void add_params(CLI::App* cmd, bench::WorkloadParams& p) {
  cmd->add_option("--content-size", p.content_size, "web content bytes");
  cmd->add_option("--key-size", p.key_size, "KV key bytes");
  cmd->add_option("--value-size", p.value_size, "KV value bytes");
  cmd->add_option("--get-ratio", p.get_ratio, "fraction of GETs")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--width", p.image_width, "image width");
  cmd->add_option("--height", p.image_height, "image height");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lnic benchmark harness"};
  app.require_subcommand(1);

  bench::BenchSpec spec;
  std::string backend = "nic", mode = "closed", out = "bench_out", nic_path;
  auto* run = app.add_subcommand("run", "run one workload on one backend");
  run->add_option("--workload", spec.workload, "workload")->check(CLI::IsMember({"webserver", "kvclient", "imagexform"}));
  run->add_option("--backend", backend, "backend")->check(CLI::IsMember({"nic", "host"}));
  run->add_option("--mode", mode, "load mode")->check(CLI::IsMember({"closed", "par56", "rrmulti"}));
  run->add_option("--n", spec.n, "request count")->check(CLI::PositiveNumber);
  run->add_option("--seed", spec.seed, "seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--nic", nic_path, "NIC config file")->check(CLI::ExistingFile);
  run->add_option("--opt", spec.testbed.opt_level, "optimization level")->check(CLI::IsMember({0, 1}));
  add_params(run, spec.params);

  auto* compare = app.add_subcommand("compare", "run one workload on both backends and tabulate");
  compare->add_option("--workload", spec.workload, "workload")->check(CLI::IsMember({"webserver", "kvclient", "imagexform"}));
  compare->add_option("--mode", mode, "load mode")->check(CLI::IsMember({"closed", "par56", "rrmulti"}));
  compare->add_option("--n", spec.n, "request count")->check(CLI::PositiveNumber);
  compare->add_option("--seed", spec.seed, "seed");
  compare->add_option("--out", out, "output directory");
  add_params(compare, spec.params);

  auto* contention = app.add_subcommand("contention", "round-robin multi-lambda vs matched isolation");
  contention->add_option("--backend", backend, "backend")->check(CLI::IsMember({"nic", "host"}));
  contention->add_option("--n", spec.n, "request count")->check(CLI::PositiveNumber);
  contention->add_option("--seed", spec.seed, "seed");
  contention->add_option("--out", out, "output directory");

  auto* optimizer = app.add_subcommand("optimizer", "instruction totals per pass on the benchmark suite");
  optimizer->add_option("--out", out, "output directory");
  optimizer->add_option("--nic", nic_path, "NIC config file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (!nic_path.empty()) spec.testbed.nic = NicSpec::load(nic_path);
    spec.backend = cp::parse_backend(backend);
    spec.mode = bench::parse_mode(mode);
    if (*run) {
      const auto result = bench::run_benchmark(spec);
      bench::write_outputs(out, spec, result);
      std::cout << bench::report_table({result.metrics});
    } else if (*compare) {
      std::vector<bench::Metrics> rows;
      for (auto b : {cp::Backend::kNic, cp::Backend::kHost}) {
        spec.backend = b;
        const auto result = bench::run_benchmark(spec);
        bench::write_outputs((std::filesystem::path(out) / cp::backend_name(b)).string(), spec, result);
        rows.push_back(result.metrics);
      }
      const std::string table = bench::report_table(rows);
      write_file(std::filesystem::path(out) / "comparison.tsv", table);
      std::cout << table;
    } else if (*contention) {
      const auto r = bench::contention_experiment(spec.backend, spec.n, spec.seed);
      const std::string table = bench::report_table({r.isolation, r.multi});
      write_file(std::filesystem::path(out) / "contention.tsv", table);
      write_file(std::filesystem::path(out) / "ecdf_isolation.csv", bench::ecdf_text(r.isolation));
      write_file(std::filesystem::path(out) / "ecdf_multi.csv", bench::ecdf_text(r.multi));
      std::cout << table;
    } else if (*optimizer) {
      const auto res = compiler::compile(bench::build_suite(), spec.testbed.nic, {1, true});
      write_file(std::filesystem::path(out) / "optimizer.csv", res.report.table());
      std::cout << res.report.summary();
    }
  } catch (const std::exception& e) {
    std::cerr << "bench: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
