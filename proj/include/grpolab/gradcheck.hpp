#pragma once

#include <cstdint>
#include <iosfwd>

namespace grpolab {

struct GradCheckReport {
    int instances = 0;
    int retries = 0;  // policy redraws forced by the clip-boundary margin
    double max_abs_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Randomized differential test of the clipped-surrogate gradient: builds
// random (policy, rollout groups, advantages) instances whose token ratios
// all sit at least 10*h away from the clip boundaries, then compares the
// analytic gradient against central finite differences entry by entry.
GradCheckReport run_gradient_check(int instances, std::uint64_t seed, double h,
                                   double tolerance, std::ostream* log);

}  // namespace grpolab
