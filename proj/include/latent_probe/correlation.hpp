#ifndef LATENT_PROBE_CORRELATION_HPP
#define LATENT_PROBE_CORRELATION_HPP

#include <optional>
#include <span>
#include <vector>

namespace latent_probe {

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> fractional_ranks(std::span<const double> values);

// Both throw Error("undefined correlation") on a constant input and on
// length mismatch or fewer than two points.
double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> a, std::span<const double> b);

// nullopt instead of an error when the correlation is undefined.
std::optional<double> try_pearson(std::span<const double> a, std::span<const double> b);
std::optional<double> try_spearman(std::span<const double> a, std::span<const double> b);

}  // namespace latent_probe

#endif  // LATENT_PROBE_CORRELATION_HPP
