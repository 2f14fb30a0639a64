#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rdm/tensor.hpp"

namespace rdm {

// Unit-norm vector in the shared item/query space.
class Embedding {
public:
    Embedding() = default;

    // Normalizes the input; zero vectors are rejected.
    static Embedding normalized(const Tensor& v);

    // Accepts a vector that is already unit within `tol` without touching its
    // bits. Persistence paths rely on this: an f32-quantized unit vector must
    // survive a save/load round trip exactly.
    static Embedding from_unit(const Tensor& v, double tol = 2e-3);

    const Tensor& vec() const { return vec_; }
    int dim() const { return vec_.dim(0); }

    double dot(const Embedding& other) const {
        require(dim() == other.dim(), "Embedding::dot: dimension mismatch");
        return (vec_.array() * other.vec_.array()).sum();
    }

private:
    explicit Embedding(Tensor v) : vec_(std::move(v)) {}
    Tensor vec_ = Tensor({1});
};

double cosine_similarity(const Embedding& a, const Embedding& b);

// Synthetic datum standing in for an image: a latent content vector, a style
// label, and the observation both are rendered into.
struct ToyItem {
    Tensor content;      // rank 1, kContentDim
    int style_label = 0;
    Tensor observation;  // rank 1, obs_dim
};

// Either or both of content and style; at least one must be present.
struct Query {
    std::optional<Tensor> content_spec;
    std::optional<int> style_token;

    Query with_style(int token) const {
        Query q = *this;
        q.style_token = token;
        return q;
    }
};

inline constexpr int kContentDim = 8;

// Analytic joint embedder over the toy world. Items, queries and raw
// observations all land in one d-dimensional unit sphere:
//
//   embed(content, style) = normalize([content | w_s * onehot(style) | 0-pad])
//
// Observations are produced by an orthonormal map M of [content | gain *
// onehot(style)], so embed_observation can recover the constituents of any
// point in observation space, including generated ones, and agrees exactly
// with embed_item on rendered items.
class ToyEmbedder {
public:
    ToyEmbedder(int styles, int dim = 64, int obs_dim = 32, double style_weight = 1.0,
                double style_gain = 2.0, std::uint64_t seed = 0);

    int styles() const { return styles_; }
    int dim() const { return dim_; }
    int obs_dim() const { return obs_dim_; }
    double style_weight() const { return style_weight_; }
    double style_gain() const { return style_gain_; }
    std::uint64_t seed() const { return seed_; }

    // deterministic observation for (content, style)
    Tensor observe(const Tensor& content, int style_label) const;

    ToyItem make_item(const Tensor& content, int style_label) const;

    Embedding embed_item(const ToyItem& item) const;
    Embedding embed_query(const Query& q) const;
    Embedding embed_observation(const Tensor& observation) const;

    // soft style evidence recovered from an observation (length S, unnormalized)
    Tensor style_scores(const Tensor& observation) const;

private:
    Tensor assemble(const Tensor* content, const Tensor* style_block) const;

    int styles_;
    int dim_;
    int obs_dim_;
    double style_weight_;
    double style_gain_;
    std::uint64_t seed_;
    RowMatrix basis_;  // obs_dim x (kContentDim + styles), orthonormal columns
};

// Embedding file, magic RDMV: version u32, count u64, dim u32, dtype u8
// (0 = f32), then count records of (length-prefixed id, dim f32 values).
struct EmbeddingFile {
    std::vector<std::pair<std::string, Embedding>> records;
    int renormalized = 0;  // how many stored vectors deviated from unit norm by > 1e-3
};

void save_embedding_file(const std::vector<std::pair<std::string, Embedding>>& records,
                         const std::filesystem::path& path);
EmbeddingFile load_embedding_file(const std::filesystem::path& path);
EmbeddingFile decode_embedding_file(const std::vector<std::uint8_t>& bytes, const std::string& source);

}  // namespace rdm
