#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace shadowlab {

// One finite-difference check: a named gradient, the worst relative error
// observed across random directions, and the threshold it must stay under.
struct BlockCheck {
    std::string name;
    double worst_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed() const { return worst_rel_err <= tolerance; }
};

// Runs the full differentiation audit at toy shapes: every layer primitive
// (1e-6), the attention/fusion/decoder composites (1e-4, full removal net
// 1e-3), and the loss gradients (1e-4). Fixtures are seeded and steered away
// from the non-smooth points of |.|, relu, and h-swish.
std::vector<BlockCheck> run_gradient_checks(std::uint64_t seed);

}  // namespace shadowlab
