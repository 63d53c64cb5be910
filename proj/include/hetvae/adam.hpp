#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "hetvae/array.hpp"
#include "hetvae/errors.hpp"
#include "hetvae/params.hpp"

namespace hetvae {

// Adam with bias correction. Moment buffers are keyed by parameter name and
// created lazily as all-zero, so a fresh state with zero gradients leaves
// parameters untouched for any number of steps.
struct AdamState {
    std::uint64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::map<std::string, Array> m, v;
};

inline void adam_step(AdamState& state, ParamStore& params, const GradMap& grads) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (const auto& name : params.names()) {
        if (!params.trainable(name)) continue;
        auto git = grads.find(name);
        if (git == grads.end())
            throw dim_error("adam_step: missing gradient for parameter " + name);
        Array& p = params.mutable_at(name);
        const Array& g = git->second;
        if (!p.same_shape(g))
            throw dim_error("adam_step: gradient shape " + shape_str(g.shape) +
                            " does not match parameter " + name + " " + shape_str(p.shape));
        auto mit = state.m.find(name);
        if (mit == state.m.end()) {
            state.m[name] = Array::zeros(p.shape);
            state.v[name] = Array::zeros(p.shape);
            mit = state.m.find(name);
        }
        Array& m = mit->second;
        Array& v = state.v[name];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
            if (!std::isfinite(p.data[i]))
                throw numeric_error("adam_step: non-finite update for parameter " + name);
        }
    }
}

}  // namespace hetvae
