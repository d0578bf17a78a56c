#ifndef LATENT_PROBE_COMMON_HPP
#define LATENT_PROBE_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace latent_probe {

inline constexpr const char* kVersion = "0.3.0";

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Any failure caused by input data or a violated precondition. The CLI maps
// these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Independent RNG stream for work item `index` under `master_seed`. Results of
// parallel drivers never depend on scheduling because every item seeds itself.
std::mt19937_64 make_stream(std::uint64_t master_seed,
                            std::uint64_t index = 0,
                            std::uint64_t salt = 0);

// Runs fn(0..n-1) on up to `jobs` threads (0 = hardware concurrency). The
// first exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::size_t n, unsigned jobs,
                  const std::function<void(std::size_t)>& fn);

// Half-up rounding of a non-negative real.
std::size_t round_half_up(double x);

}  // namespace latent_probe

#endif  // LATENT_PROBE_COMMON_HPP
