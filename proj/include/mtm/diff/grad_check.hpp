#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mtm/diff/ops.hpp"

namespace mtm::diff {

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0; // flat coordinate of the worst entry
    double analytic_at_worst = 0.0;
    double fd_at_worst = 0.0;
    std::size_t n_checked = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0.0;
    std::string worst_group;
    double step = 0.0;
    double rtol = 0.0;
    bool pass = true;
};

// Scalar objective built on a tape from the given parameter leaves. Must be
// deterministic: two calls with equal inputs produce equal values.
using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares the reverse-mode gradient of `f` against central finite
// differences, per named parameter group. Relative error of a coordinate is
// |analytic - fd| / max(|analytic|, |fd|, 1e-6). `max_per_group` limits how
// many coordinates are probed per group (0 = all), picked on an even stride
// so repeated runs touch the same coordinates. Throws NumericError when `f`
// is non-finite at the base point or any probe.
GradCheckReport grad_check(const TapeFn& f,
                           const std::vector<std::pair<std::string, Array>>& params,
                           double step = 1e-5, double rtol = 1e-4,
                           std::size_t max_per_group = 0);

} // namespace mtm::diff
