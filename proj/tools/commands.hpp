#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitGate = 2;

struct Invocation {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string weights; ///< hdi only
};

int cmd_decompose(const Invocation& inv);
int cmd_hdi(const Invocation& inv);
int cmd_sweep_hdi(const Invocation& inv);
int cmd_sweep_arch(const Invocation& inv);
int cmd_weights_compare(const Invocation& inv);
int cmd_optimize_proj(const Invocation& inv);

std::string version_string();

} // namespace cli
