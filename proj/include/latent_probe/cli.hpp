#ifndef LATENT_PROBE_CLI_HPP
#define LATENT_PROBE_CLI_HPP

#include <iosfwd>
#include <span>
#include <string>

namespace latent_probe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Entry point behind the latent-probe executable. `args` excludes the
// program name. Never throws.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace latent_probe::cli

#endif  // LATENT_PROBE_CLI_HPP
