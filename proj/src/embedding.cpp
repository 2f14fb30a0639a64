#include "rdm/embedding.hpp"

#include <cmath>

#include "rdm/io.hpp"

namespace rdm {

namespace {
constexpr std::uint32_t kEmbeddingFileVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;
}  // namespace

Embedding Embedding::normalized(const Tensor& v) {
    require(v.rank() == 1, "Embedding: rank-1 tensor required");
    require(v.all_finite(), "Embedding: non-finite entries");
    const double norm = std::sqrt(v.array().square().sum());
    require(norm > 0.0, "Embedding: zero vector cannot be normalized");
    return Embedding(Tensor(v.shape(), v.array() / norm));
}

Embedding Embedding::from_unit(const Tensor& v, double tol) {
    require(v.rank() == 1, "Embedding: rank-1 tensor required");
    require(v.all_finite(), "Embedding: non-finite entries");
    const double norm = std::sqrt(v.array().square().sum());
    require(std::abs(norm - 1.0) <= tol, "Embedding: vector is not unit norm");
    return Embedding(v);
}

double cosine_similarity(const Embedding& a, const Embedding& b) { return a.dot(b); }

ToyEmbedder::ToyEmbedder(int styles, int dim, int obs_dim, double style_weight, double style_gain,
                         std::uint64_t seed)
    : styles_(styles),
      dim_(dim),
      obs_dim_(obs_dim),
      style_weight_(style_weight),
      style_gain_(style_gain),
      seed_(seed) {
    require(styles_ >= 1, "ToyEmbedder: styles >= 1 required");
    require(dim_ >= kContentDim + styles_, "ToyEmbedder: dim must fit content + style blocks");
    require(obs_dim_ >= kContentDim + styles_, "ToyEmbedder: obs_dim must fit content + style blocks");
    require(style_gain_ > 0.0, "ToyEmbedder: style_gain must be positive");

    // Orthonormal columns via modified Gram-Schmidt on a seeded Gaussian
    // matrix. Hand-rolled so the basis is identical across platforms.
    const int cols = kContentDim + styles_;
    Rng rng(mix_seed(seed_, 0xB515ULL));
    basis_ = RowMatrix(obs_dim_, cols);
    for (int c = 0; c < cols; ++c) {
        Eigen::VectorXd v(obs_dim_);
        for (int r = 0; r < obs_dim_; ++r) v[r] = rng.gaussian();
        for (int prev = 0; prev < c; ++prev) v -= basis_.col(prev).dot(v) * basis_.col(prev);
        const double norm = v.norm();
        require(norm > 1e-9, "ToyEmbedder: degenerate basis draw");
        basis_.col(c) = v / norm;
    }
}

Tensor ToyEmbedder::observe(const Tensor& content, int style_label) const {
    require(content.rank() == 1 && content.dim(0) == kContentDim, "observe: content must be 8-dim");
    require(style_label >= 0 && style_label < styles_, "observe: style_label out of range");
    Eigen::VectorXd z = Eigen::VectorXd::Zero(kContentDim + styles_);
    for (int i = 0; i < kContentDim; ++i) z[i] = content[i];
    z[kContentDim + style_label] = style_gain_;
    Eigen::VectorXd obs = basis_ * z;
    Tensor out({obs_dim_});
    for (int i = 0; i < obs_dim_; ++i) out[i] = obs[i];
    return out;
}

ToyItem ToyEmbedder::make_item(const Tensor& content, int style_label) const {
    return ToyItem{content, style_label, observe(content, style_label)};
}

Tensor ToyEmbedder::assemble(const Tensor* content, const Tensor* style_block) const {
    Tensor full({dim_});
    if (content != nullptr)
        for (int i = 0; i < kContentDim; ++i) full[i] = (*content)[i];
    if (style_block != nullptr)
        for (int s = 0; s < styles_; ++s) full[kContentDim + s] = style_weight_ * (*style_block)[s];
    return full;
}

Embedding ToyEmbedder::embed_item(const ToyItem& item) const {
    require(item.content.rank() == 1 && item.content.dim(0) == kContentDim,
            "embed_item: content must be 8-dim");
    require(item.style_label >= 0 && item.style_label < styles_, "embed_item: style_label out of range");
    Tensor onehot({styles_});
    onehot[item.style_label] = 1.0;
    return Embedding::normalized(assemble(&item.content, &onehot));
}

Embedding ToyEmbedder::embed_query(const Query& q) const {
    require(q.content_spec.has_value() || q.style_token.has_value(), "embed_query: empty query");
    const Tensor* content = nullptr;
    if (q.content_spec) {
        require(q.content_spec->rank() == 1 && q.content_spec->dim(0) == kContentDim,
                "embed_query: content_spec must be 8-dim");
        content = &*q.content_spec;
    }
    Tensor onehot({styles_});
    const Tensor* style_block = nullptr;
    if (q.style_token) {
        require(*q.style_token >= 0 && *q.style_token < styles_, "embed_query: style_token out of range");
        onehot[*q.style_token] = 1.0;
        style_block = &onehot;
    }
    return Embedding::normalized(assemble(content, style_block));
}

Tensor ToyEmbedder::style_scores(const Tensor& observation) const {
    require(observation.rank() == 1 && observation.dim(0) == obs_dim_,
            "style_scores: wrong observation dimension");
    Eigen::Map<const Eigen::VectorXd> obs(observation.data(), obs_dim_);
    Eigen::VectorXd z = basis_.transpose() * obs;
    Tensor scores({styles_});
    for (int s = 0; s < styles_; ++s) scores[s] = z[kContentDim + s] / style_gain_;
    return scores;
}

Embedding ToyEmbedder::embed_observation(const Tensor& observation) const {
    require(observation.rank() == 1 && observation.dim(0) == obs_dim_,
            "embed_observation: wrong observation dimension");
    Eigen::Map<const Eigen::VectorXd> obs(observation.data(), obs_dim_);
    Eigen::VectorXd z = basis_.transpose() * obs;
    Tensor content({kContentDim});
    for (int i = 0; i < kContentDim; ++i) content[i] = z[i];
    Tensor style({styles_});
    for (int s = 0; s < styles_; ++s) style[s] = z[kContentDim + s] / style_gain_;
    return Embedding::normalized(assemble(&content, &style));
}

void save_embedding_file(const std::vector<std::pair<std::string, Embedding>>& records,
                         const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("RDMV");
    w.u32(kEmbeddingFileVersion);
    w.u64(records.size());
    const int dim = records.empty() ? 0 : records.front().second.dim();
    w.u32(static_cast<std::uint32_t>(dim));
    w.u8(kDtypeF32);
    for (const auto& [id, emb] : records) {
        require(emb.dim() == dim, "save_embedding_file: inconsistent dimensions");
        w.str(id);
        for (int i = 0; i < dim; ++i) w.f32(static_cast<float>(emb.vec()[i]));
    }
    atomic_write_file(path, w.buffer());
}

EmbeddingFile load_embedding_file(const std::filesystem::path& path) {
    return decode_embedding_file(read_file_bytes(path), path.string());
}

EmbeddingFile decode_embedding_file(const std::vector<std::uint8_t>& bytes, const std::string& source) {
    ByteReader r(bytes, source);
    r.expect_magic("RDMV");
    const std::uint32_t version = r.u32();
    if (version != kEmbeddingFileVersion) r.fail("unsupported RDMV version " + std::to_string(version));
    const std::uint64_t count = r.u64();
    const std::uint32_t dim = r.u32();
    const std::uint8_t dtype = r.u8();
    if (dtype != kDtypeF32) r.fail("unknown dtype " + std::to_string(dtype));
    if (count > 0 && dim == 0) r.fail("zero dimension with nonzero count");

    EmbeddingFile out;
    out.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string id = r.str();
        Tensor v({static_cast<int>(dim)});
        for (std::uint32_t j = 0; j < dim; ++j) v[j] = static_cast<double>(r.f32());
        const double norm = std::sqrt(v.array().square().sum());
        if (norm <= 0.0) r.fail("zero vector in record '" + id + "'");
        // stored vectors are expected to be unit; renormalize only genuine
        // deviations so that clean files round-trip bit-exactly
        if (std::abs(norm - 1.0) > 1e-3) {
            out.renormalized += 1;
            out.records.emplace_back(std::move(id), Embedding::normalized(v));
        } else {
            out.records.emplace_back(std::move(id), Embedding::from_unit(v));
        }
    }
    r.expect_end();
    return out;
}

}  // namespace rdm
