#pragma once
// Analytic-vs-finite-difference gradient comparison on a reduced
// configuration (8x8 image, small vocab, one layer per side, 4-sample
// batch). The full finite-difference gradient costs 2 * n_params forward
// passes, so the configuration stays tiny on purpose.

#include <cstdint>
#include <string>
#include <vector>

#include "rmm/corruption.hpp"
#include "rmm/model.hpp"
#include "rmm/objectives.hpp"

namespace rmm {

struct GradCheckResult {
    std::string term;      // image_l1, image_l2sq, text, domain, resilience, total
    double max_rel = 0.0;  // worst rel_error over every parameter scalar
    std::size_t n_params = 0;
};

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckEps = 1e-5;

// Runs every term on the canonical reduced setup (one corrupted + masked
// sample per (class, domain) cell). Deterministic in seed.
std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed);

}  // namespace rmm
