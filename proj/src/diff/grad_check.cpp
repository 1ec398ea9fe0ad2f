#include "mtm/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mtm/errors.hpp"

namespace mtm::diff {

namespace {

double eval_value(const TapeFn& f, const std::vector<std::pair<std::string, Array>>& params) {
    Tape t;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& [name, a] : params) leaves.push_back(t.constant(a));
    const double v = f(t, leaves).scalar();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is non-finite");
    return v;
}

} // namespace

GradCheckReport grad_check(const TapeFn& f,
                           const std::vector<std::pair<std::string, Array>>& params,
                           double step, double rtol, std::size_t max_per_group) {
    if (step <= 0.0) throw ConfigError("grad_check: step must be positive");
    if (rtol <= 0.0) throw ConfigError("grad_check: rtol must be positive");

    // Reverse-mode pass at the base point.
    Tape t;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& [name, a] : params) leaves.push_back(t.input(a));
    Var root = f(t, leaves);
    if (!std::isfinite(root.scalar()))
        throw NumericError("grad_check: objective is non-finite at the base point");
    t.backward(root);

    GradCheckReport report;
    report.step = step;
    report.rtol = rtol;

    std::vector<std::pair<std::string, Array>> probe = params;
    for (std::size_t gi = 0; gi < params.size(); ++gi) {
        const Array analytic = t.grad_of(leaves[gi]);
        GradCheckGroup group;
        group.name = params[gi].first;

        const std::size_t n = analytic.size();
        std::size_t n_probe = n;
        if (max_per_group > 0) n_probe = std::min(n, max_per_group);
        for (std::size_t pi = 0; pi < n_probe; ++pi) {
            // Even stride over the coordinates keeps probe sets stable.
            const std::size_t i = n_probe == n ? pi : pi * n / n_probe;
            double& slot = probe[gi].second.data[i];
            const double saved = slot;
            slot = saved + step;
            const double up = eval_value(f, probe);
            slot = saved - step;
            const double down = eval_value(f, probe);
            slot = saved;

            const double fd = (up - down) / (2.0 * step);
            const double a = analytic.data[i];
            const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-6});
            ++group.n_checked;
            if (rel > group.max_rel_err) {
                group.max_rel_err = rel;
                group.worst_index = i;
                group.analytic_at_worst = a;
                group.fd_at_worst = fd;
            }
        }
        group.pass = group.max_rel_err <= rtol;
        if (group.max_rel_err > report.max_rel_err) {
            report.max_rel_err = group.max_rel_err;
            report.worst_group = group.name;
        }
        report.pass = report.pass && group.pass;
        report.groups.push_back(std::move(group));
    }
    return report;
}

} // namespace mtm::diff
