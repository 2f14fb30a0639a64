#pragma once

#include <cstdint>
#include <map>

#include "rdm/autodiff.hpp"

namespace rdm {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment estimates plus the update counter. One state owns the
// optimization of exactly one ParamStore; moments are allocated lazily on the
// first step so loading a checkpointed state stays simple.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return step_; }

    const std::map<std::string, Tensor>& first_moments() const { return m_; }
    const std::map<std::string, Tensor>& second_moments() const { return v_; }

    // checkpoint restore
    void restore(std::uint64_t step, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v);

private:
    friend void adam_step(ParamStore& params, const GradMap& grads, AdamState& state);

    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
};

// One bias-corrected Adam update. Parameters missing from `grads` are treated
// as having zero gradient. Shape mismatches are contract violations.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state);

}  // namespace rdm
