#pragma once

#include <string>
#include <vector>

#include "prpl/core/error.hpp"

namespace prpl {

/// One refinement level: a plan over `horizon` env steps sampled every `jump` steps.
struct LevelConfig {
    std::size_t index = 0;
    std::size_t horizon = 0;
    std::size_t jump = 1;
    std::size_t tokens = 0;

    bool operator==(const LevelConfig&) const = default;
};

/// Levels chain through H_{l+1} = I_l + 1; the last jump must be 1.
inline std::vector<LevelConfig> build_levels(std::size_t total_horizon, const std::vector<std::size_t>& jumps) {
    require(!jumps.empty(), ErrorKind::configuration, "level spec needs at least one jump");
    require(jumps.back() == 1, ErrorKind::configuration, "the last temporal jump must be 1");
    require(total_horizon >= 2, ErrorKind::configuration, "total horizon must be at least 2");
    std::vector<LevelConfig> levels;
    std::size_t horizon = total_horizon;
    for (std::size_t l = 0; l < jumps.size(); ++l) {
        const std::size_t jump = jumps[l];
        require(jump >= 1, ErrorKind::configuration, "temporal jumps must be positive");
        if (l > 0)
            require(jumps[l - 1] % jump == 0, ErrorKind::configuration,
                    "jump " + std::to_string(jump) + " does not divide the previous jump " + std::to_string(jumps[l - 1]));
        require((horizon - 1) % jump == 0, ErrorKind::configuration,
                "jump " + std::to_string(jump) + " does not divide horizon - 1 = " + std::to_string(horizon - 1) +
                    " at level " + std::to_string(l));
        levels.push_back({l, horizon, jump, (horizon - 1) / jump + 1});
        horizon = jump + 1;
    }
    return levels;
}

inline std::size_t total_tokens(const std::vector<LevelConfig>& levels) {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.tokens;
    return n;
}

inline std::string describe(const std::vector<LevelConfig>& levels) {
    std::string s;
    for (const auto& l : levels) {
        if (!s.empty()) s += ", ";
        s += "(" + std::to_string(l.horizon) + "," + std::to_string(l.jump) + "," + std::to_string(l.tokens) + ")";
    }
    return s;
}

}  // namespace prpl
