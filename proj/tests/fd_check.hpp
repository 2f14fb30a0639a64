#pragma once

// Central finite-difference gradient oracle. Kept independent of the tape's
// backward pass: it only ever calls the forward path of the loss function.

#include <algorithm>
#include <cmath>
#include <functional>

#include "rdm/autodiff.hpp"

namespace rdm_test {

// Builds the scalar loss for the given parameters on a fresh tape.
using LossFn = std::function<rdm::Var(rdm::Tape&, const rdm::ParamVars&)>;

inline double eval_loss(const rdm::ParamStore& params, const LossFn& fn) {
    rdm::Tape tape;
    rdm::ParamVars vars = rdm::register_params(tape, params);
    rdm::Var loss = fn(tape, vars);
    return tape.value(loss).value();
}

inline rdm::GradMap analytic_gradients(const rdm::ParamStore& params, const LossFn& fn) {
    rdm::Tape tape;
    rdm::ParamVars vars = rdm::register_params(tape, params);
    rdm::Var loss = fn(tape, vars);
    return rdm::backward_params(tape, loss, vars);
}

inline rdm::GradMap fd_gradients(const rdm::ParamStore& params, const LossFn& fn, double h = 1e-5) {
    rdm::GradMap out;
    for (const auto& [name, value] : params) {
        rdm::Tensor g = rdm::Tensor::zeros(value.shape());
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            rdm::ParamStore plus;
            rdm::ParamStore minus;
            for (const auto& [n2, v2] : params) {
                rdm::Tensor vp = v2;
                rdm::Tensor vm = v2;
                if (n2 == name) {
                    vp[i] += h;
                    vm[i] -= h;
                }
                plus.insert(n2, vp);
                minus.insert(n2, vm);
            }
            g[i] = (eval_loss(plus, fn) - eval_loss(minus, fn)) / (2.0 * h);
        }
        out.emplace(name, std::move(g));
    }
    return out;
}

inline double max_rel_error(const rdm::GradMap& a, const rdm::GradMap& b, double floor = 1e-6) {
    double worst = 0.0;
    for (const auto& [name, ga] : a) {
        const rdm::Tensor& gb = b.at(name);
        for (Eigen::Index i = 0; i < ga.size(); ++i) {
            const double denom = std::max({std::abs(ga[i]), std::abs(gb[i]), floor});
            worst = std::max(worst, std::abs(ga[i] - gb[i]) / denom);
        }
    }
    return worst;
}

// analytic-vs-FD relative error for one loss function
inline double gradient_check(const rdm::ParamStore& params, const LossFn& fn, double h = 1e-5) {
    return max_rel_error(analytic_gradients(params, fn), fd_gradients(params, fn, h));
}

}  // namespace rdm_test
