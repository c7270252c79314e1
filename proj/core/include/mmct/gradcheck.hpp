#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmct {

struct GradcheckOptions {
    std::size_t trials = 100;
    std::uint64_t seed = 1;
    // Negative control: deliberately perturbs every analytic gradient so
    // all checks must fail.
    bool corrupt = false;
};

struct GradcheckResult {
    std::string name;
    double max_rel_err = 0.0;
    std::uint64_t worst_instance = 0; // instance seed of the worst trial
    bool pass = false;
};

/// Compares analytic gradients against central finite differences over the
/// full parameter vector of a small encoder, for each loss composed through
/// encoder forward + normalization (j_ii, j_tag, j_cc, j_ic, j_ci) plus the
/// encoder backward itself. Pass threshold: relative error < 1e-4.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opts);

} // namespace mmct
