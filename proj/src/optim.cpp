#include "rdm/optim.hpp"

#include <cmath>
#include <limits>

namespace rdm {

void AdamState::restore(std::uint64_t step, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v) {
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state) {
    require(state.step_ < std::numeric_limits<std::uint32_t>::max(), "adam_step: step counter overflow");
    state.step_ += 1;
    const AdamConfig& c = state.cfg_;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_));

    for (auto& [name, p] : params) {
        auto mit = state.m_.find(name);
        if (mit == state.m_.end()) {
            mit = state.m_.emplace(name, Tensor::zeros(p.shape())).first;
            state.v_.emplace(name, Tensor::zeros(p.shape()));
        }
        Tensor& m = mit->second;
        Tensor& v = state.v_.at(name);
        require(m.same_shape(p) && v.same_shape(p), "adam_step: moment shape mismatch for '" + name + "'");

        auto git = grads.find(name);
        if (git == grads.end()) {
            // zero gradient: moments decay, update is m_hat scaled, which is
            // zero when the moments are zero
            m.array() *= c.beta1;
            v.array() *= c.beta2;
        } else {
            const Tensor& g = git->second;
            require(g.same_shape(p), "adam_step: gradient shape mismatch for '" + name + "'");
            m.array() = c.beta1 * m.array() + (1.0 - c.beta1) * g.array();
            v.array() = c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square();
        }
        p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
        if (!p.all_finite()) throw NumericError("adam_step: parameter '" + name + "' became non-finite");
    }
}

}  // namespace rdm
