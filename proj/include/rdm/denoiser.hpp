#pragma once

#include <cstdint>
#include <filesystem>

#include "rdm/autodiff.hpp"
#include "rdm/diffusion.hpp"

namespace rdm {

// Residual MLP over the latent with sinusoidal time features and one
// cross-attention site per block attending over the conditioning set.
struct DenoiserConfig {
    int latent_dim = 2;
    int hidden = 128;
    int blocks = 4;
    int heads = 4;
    int cond_dim = 64;
    int time_dim = 32;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t param_count() const;

    bool operator==(const DenoiserConfig&) const = default;
};

// Seeded initialization: linear layers scaled by 1/sqrt(fan_in), biases and
// the output projection zero, so a fresh denoiser predicts exactly zero.
//
// Parameter paths: in.w/in.b, time.w/time.b, blk<i>.norm1.g/.b,
// blk<i>.mlp.w1/.b1/.w2/.b2, blk<i>.norm2.g/.b,
// blk<i>.attn.wq/.bq/.wk/.bk/.wv/.bv/.wo/.bo, out.norm.g/.b, out.w/out.b.
ParamStore init_params(const DenoiserConfig& config);

// Interleaved sin/cos features at geometrically spaced frequencies.
Tensor time_embedding(int t, int dim);

// Training-path forward: parameters live on the tape.
Var predict_noise(Tape& tape, const ParamVars& params, const DenoiserConfig& config,
                  const Tensor& z_t, int t, const ConditioningSet& cond);

// Frozen forward for sampling and evaluation.
Tensor predict_noise(const ParamStore& params, const DenoiserConfig& config, const Tensor& z_t,
                     int t, const ConditioningSet& cond);

// Config + weights bundle.
struct Denoiser {
    DenoiserConfig config;
    ParamStore params;

    NoiseFn noise_fn() const {
        return [this](const Tensor& z_t, int t, const ConditioningSet& cond) {
            return predict_noise(params, config, z_t, t, cond);
        };
    }
};

// Checkpoint directory: params.rdmw next to config.json; loading validates
// that the weights match the config layout.
void save_denoiser(const Denoiser& d, const std::filesystem::path& dir);
Denoiser load_denoiser(const std::filesystem::path& dir);

std::string denoiser_config_json(const DenoiserConfig& config);
DenoiserConfig denoiser_config_from_json(const std::string& text, const std::string& source);

}  // namespace rdm
