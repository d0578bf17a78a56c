#include "latent_probe/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latent_probe/common.hpp"

namespace latent_probe {

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("correlation: length mismatch");
  if (a.size() < 2) throw Error("undefined correlation: fewer than 2 points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const bool const_a = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
  const bool const_b = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
  if (const_a || const_b || saa <= 0.0 || sbb <= 0.0)
    throw Error("undefined correlation: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("correlation: length mismatch");
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  return pearson(ra, rb);
}

std::optional<double> try_pearson(std::span<const double> a, std::span<const double> b) {
  try {
    return pearson(a, b);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<double> try_spearman(std::span<const double> a, std::span<const double> b) {
  try {
    return spearman(a, b);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace latent_probe
