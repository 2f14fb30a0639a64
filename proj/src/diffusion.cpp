#include "rdm/diffusion.hpp"

#include <cmath>

namespace rdm {

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
    require(T >= 1, "make_schedule: T >= 1 required");
    require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0,
            "make_schedule: need 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
        const double b = beta_min + (beta_max - beta_min) * frac;
        s.beta[static_cast<std::size_t>(t)] = b;
        s.alpha[static_cast<std::size_t>(t)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

ConditioningSet ConditioningSet::from_embeddings(const std::vector<Embedding>& embeddings,
                                                 std::vector<std::string> ids) {
    require(!embeddings.empty(), "ConditioningSet: empty");
    require(ids.size() == embeddings.size(), "ConditioningSet: ids must match embeddings");
    const int dim = embeddings.front().dim();
    ConditioningSet out;
    out.matrix_ = Tensor({static_cast<int>(embeddings.size()), dim});
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        require(embeddings[i].dim() == dim, "ConditioningSet: dimension mismatch");
        for (int j = 0; j < dim; ++j)
            out.matrix_(static_cast<Eigen::Index>(i), j) = embeddings[i].vec()[j];
    }
    out.ids_ = std::move(ids);
    return out;
}

ConditioningSet ConditioningSet::permuted(const std::vector<int>& order) const {
    require(static_cast<int>(order.size()) == count(), "permuted: order size mismatch");
    ConditioningSet out;
    out.matrix_ = Tensor({count(), dim()});
    out.ids_.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int src = order[i];
        require(src >= 0 && src < count(), "permuted: bad index");
        for (int j = 0; j < dim(); ++j)
            out.matrix_(static_cast<Eigen::Index>(i), j) = matrix_(src, j);
        out.ids_[i] = ids_[static_cast<std::size_t>(src)];
    }
    return out;
}

Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    require(t >= 1 && t <= schedule.T, "forward_diffuse: t out of range");
    require(eps.same_shape(z0), "forward_diffuse: eps shape must match z0");
    const double ab = schedule.alpha_bar_at(t);
    return Tensor(z0.shape(), std::sqrt(ab) * z0.array() + std::sqrt(1.0 - ab) * eps.array());
}

Var rdm_loss(Tape& tape, const NoisePredictor& eps_theta, const LatentCodec& codec,
             const Tensor& x, const ConditioningSet& cond, int t, const Tensor& eps,
             const NoiseSchedule& schedule) {
    require(cond.count() >= 1, "rdm_loss: empty conditioning set");
    const Tensor z0 = codec.encode(x);
    const Tensor z_t = forward_diffuse(z0, t, eps, schedule);
    Var eps_hat = eps_theta(tape, z_t, t, cond);
    require(tape.value(eps_hat).same_shape(eps), "rdm_loss: prediction shape mismatch");
    return mse(eps_hat, tape.constant(eps));
}

Tensor sample_ancestral(const NoiseFn& eps_theta, const ConditioningSet& cond,
                        const NoiseSchedule& schedule, Rng& rng, const std::vector<int>& shape) {
    require(cond.count() >= 1, "sample_ancestral: empty conditioning set");
    Tensor z = Tensor::gaussian(shape, rng);
    for (int t = schedule.T; t >= 1; --t) {
        const Tensor eps_hat = eps_theta(z, t, cond);
        require(eps_hat.same_shape(z), "sample_ancestral: prediction shape mismatch");
        const double beta = schedule.beta_at(t);
        const double alpha = schedule.alpha_at(t);
        const double abar = schedule.alpha_bar_at(t);
        const double coef = beta / std::sqrt(1.0 - abar);
        Tensor next(z.shape(), (z.array() - coef * eps_hat.array()) / std::sqrt(alpha));
        if (t > 1) {
            const double sigma = std::sqrt(beta);
            for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += sigma * rng.gaussian();
        }
        if (!next.all_finite())
            throw NumericError("sample_ancestral: non-finite latent at timestep " + std::to_string(t));
        z = std::move(next);
    }
    return z;
}

}  // namespace rdm
