#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rdm/autodiff.hpp"
#include "rdm/embedding.hpp"
#include "rdm/rng.hpp"
#include "rdm/tensor.hpp"

namespace rdm {

// Per-timestep forward-process tables, 1-indexed access for t in [1, T].
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int t) const { return beta[check(t)]; }
    double alpha_at(int t) const { return alpha[check(t)]; }
    double alpha_bar_at(int t) const { return alpha_bar[check(t)]; }

private:
    std::size_t check(int t) const {
        require(t >= 1 && t <= T, "NoiseSchedule: t out of range");
        return static_cast<std::size_t>(t - 1);
    }
};

// Linear beta interpolation between beta_min and beta_max. At the default
// desk scale (T=200) and at the reference T=1000, alpha_bar at T is < 1e-2;
// tiny T values (say T=1) leave more signal and are allowed for tests.
NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

// Observation <-> latent mapping standing in for a learned autoencoder.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual Tensor encode(const Tensor& observation) const = 0;
    virtual Tensor decode(const Tensor& latent) const = 0;
    virtual std::string name() const = 0;
};

class IdentityCodec final : public LatentCodec {
public:
    Tensor encode(const Tensor& observation) const override { return observation; }
    Tensor decode(const Tensor& latent) const override { return latent; }
    std::string name() const override { return "identity"; }
};

// Ordered set of retrieved neighbor embeddings (optionally query-prepended),
// stacked as a rank-2 matrix of unit rows. Order carries no meaning for the
// denoiser; it attends over the rows as a set.
class ConditioningSet {
public:
    static ConditioningSet from_embeddings(const std::vector<Embedding>& embeddings,
                                           std::vector<std::string> ids);

    int count() const { return matrix_.dim(0); }
    int dim() const { return matrix_.dim(1); }
    const Tensor& matrix() const { return matrix_; }
    const std::vector<std::string>& ids() const { return ids_; }

    ConditioningSet permuted(const std::vector<int>& order) const;

private:
    Tensor matrix_ = Tensor({1, 1});
    std::vector<std::string> ids_;
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule);

// noise prediction built on a tape (training path)
using NoisePredictor =
    std::function<Var(Tape&, const Tensor& z_t, int t, const ConditioningSet&)>;

// frozen noise prediction (sampling path)
using NoiseFn = std::function<Tensor(const Tensor& z_t, int t, const ConditioningSet&)>;

// Mean squared error between eps and the denoiser prediction at (z_t, t,
// cond); differentiable w.r.t. whatever parameters eps_theta registered on
// the tape.
Var rdm_loss(Tape& tape, const NoisePredictor& eps_theta, const LatentCodec& codec,
             const Tensor& x, const ConditioningSet& cond, int t, const Tensor& eps,
             const NoiseSchedule& schedule);

// Ancestral reverse chain from z_T ~ N(0, I) to z_0, with fixed beta_t
// reverse variance. Deterministic given the generator state.
Tensor sample_ancestral(const NoiseFn& eps_theta, const ConditioningSet& cond,
                        const NoiseSchedule& schedule, Rng& rng, const std::vector<int>& shape);

}  // namespace rdm
