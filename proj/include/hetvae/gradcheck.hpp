#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "hetvae/errors.hpp"
#include "hetvae/params.hpp"

namespace hetvae {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central finite differences against the analytic gradient of a deterministic
// objective (all noise must be frozen by the caller). Relative error uses
// |a - n| / max(1, |a|, |n|).
inline GradCheckResult finite_diff_check(
    const std::function<double(const ParamStore&, GradMap*)>& objective, ParamStore& params,
    double step = 1e-5) {
    GradMap analytic;
    const double f0 = objective(params, &analytic);
    if (!std::isfinite(f0)) throw numeric_error("finite_diff_check: non-finite objective value");

    GradCheckResult res;
    for (const auto& name : params.names()) {
        if (!params.trainable(name)) continue;
        const Array& ag = analytic.at(name);
        Array& p = params.mutable_at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p.data[i];
            p.data[i] = orig + step;
            const double fp = objective(params, nullptr);
            p.data[i] = orig - step;
            const double fm = objective(params, nullptr);
            p.data[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw numeric_error("finite_diff_check: non-finite objective at " + name);
            const double num = (fp - fm) / (2.0 * step);
            const double ana = ag.data[i];
            const double rel =
                std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = name;
                res.worst_index = i;
                res.analytic = ana;
                res.numeric = num;
            }
        }
    }
    return res;
}

}  // namespace hetvae
