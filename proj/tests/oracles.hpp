#pragma once
// Independent reference computations used as test oracles. Nothing here
// calls into the library under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace oracle {

// Big-endian append, written out byte by byte.
inline void put(std::vector<std::uint8_t>& out, std::uint64_t v, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Transport header laid out by hand from the field table.
inline std::vector<std::uint8_t> frame_bytes(std::uint8_t flags, std::uint32_t wid, std::uint64_t rid, std::uint16_t seq,
                                             std::uint16_t total, const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> b = {0xD4, 0x1C, 0x01, flags};
  put(b, wid, 4);
  put(b, rid, 8);
  put(b, seq, 2);
  put(b, total, 2);
  put(b, payload.size(), 2);
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

inline std::vector<std::uint8_t> gray(const std::vector<std::uint8_t>& rgba) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 3 < rgba.size(); i += 4) {
    const unsigned r = rgba[i], g = rgba[i + 1], b = rgba[i + 2];
    out.push_back(static_cast<std::uint8_t>((77 * r + 150 * g + 29 * b) / 256));
  }
  return out;
}

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

// Upper tail of the chi-square statistic for observed counts against a uniform expectation.
inline double chi_square_uniform_p(const std::vector<std::uint64_t>& counts) {
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// Two-sample Kolmogorov-Smirnov test, asymptotic p-value.
inline double ks_p_value(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  const double n = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  if (lambda < 1e-9) return 1.0;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2 * ((k % 2) ? 1 : -1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

// Nearest-rank percentile straight from its definition.
inline double nearest_rank(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace oracle
