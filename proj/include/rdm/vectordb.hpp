#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rdm/embedding.hpp"
#include "rdm/tensor.hpp"

namespace rdm {

struct DbRecord {
    std::string id;
    Embedding embedding;
    std::vector<std::uint8_t> payload;
};

struct Neighbor {
    std::string id;
    double similarity = 0.0;
};

// Ordered search result: similarities non-increasing, ties broken by
// ascending id. truncated is set when fewer than k candidates existed.
struct Neighbors {
    std::vector<Neighbor> hits;
    bool truncated = false;
};

struct AnnIndexParams {
    int n_list = 16;
    int kmeans_iters = 25;
    std::uint64_t seed = 0;
};

// IVF partition: seeded k-means centroids plus one inverted list per
// centroid. Every record index appears in exactly one list.
struct AnnIndex {
    AnnIndexParams params;
    RowMatrix centroids;                  // n_list x dim, f32-quantized values
    std::vector<std::vector<std::uint32_t>> lists;
};

// How build_database derives stored views from each corpus item. Toy patches
// are seeded jittered copies of the observation, re-embedded individually.
struct PatchPolicy {
    bool enabled = false;
    int min_patches = 2;
    int max_patches = 3;
    double jitter_sigma = 0.05;
    std::uint64_t seed = 0;
};

// Immutable embedding database. Copies share storage; "swapping" a database
// is plain handle replacement and never touches the records.
class VectorDatabase {
public:
    VectorDatabase() = default;

    // Embeddings are quantized to the f32 grid on entry so that search
    // results are identical before and after a save/load round trip.
    static VectorDatabase build(std::vector<DbRecord> records, std::string name = "db");

    bool empty() const { return !data_ || data_->records.empty(); }
    std::size_t size() const { return data_ ? data_->records.size() : 0; }
    int dim() const { return data_ ? data_->dim : 0; }
    const std::string& name() const;
    const std::vector<DbRecord>& records() const;
    const DbRecord& record(std::size_t i) const;
    const DbRecord* find(const std::string& id) const;
    bool has_index() const { return data_ && data_->index.has_value(); }
    const AnnIndex& index() const;

    Neighbors search_exact(const Embedding& query, int k) const;
    Neighbors search_ann(const Embedding& query, int k, int n_probe) const;

    // search_ann when an index is present (probing all lists when n_probe
    // <= 0), search_exact otherwise
    Neighbors search(const Embedding& query, int k, int n_probe = 0) const;

    // Returns a new handle sharing these records, with an IVF index attached.
    VectorDatabase with_ann_index(const AnnIndexParams& params) const;

    // Attaches an already-built index (load path); the index must cover the
    // record set exactly.
    VectorDatabase with_restored_index(AnnIndex index) const;

private:
    struct Data {
        std::string name;
        int dim = 0;
        std::vector<DbRecord> records;
        RowMatrix matrix;  // size x dim, row i = record i embedding
        std::optional<AnnIndex> index;
    };

    explicit VectorDatabase(std::shared_ptr<const Data> data) : data_(std::move(data)) {}
    const Data& data() const;

    std::shared_ptr<const Data> data_;
};

VectorDatabase build_database(const std::vector<ToyItem>& corpus, const ToyEmbedder& embedder,
                              const PatchPolicy& patching, std::string name = "db");

// Same IVF construction exposed at the spec surface.
VectorDatabase build_ann_index(const VectorDatabase& db, int n_list, std::uint64_t seed,
                               int kmeans_iters = 25);

// Database directory: meta.json (dim, count, index params, checksums),
// vectors.rdmv, payloads.bin and optional index.rdmi. Loads verify the CRC32
// of every file before parsing it.
void save_database(const VectorDatabase& db, const std::filesystem::path& dir);
VectorDatabase load_database(const std::filesystem::path& dir);

// Toy payload block: style label plus the stored observation.
std::vector<std::uint8_t> encode_toy_payload(int style_label, const Tensor& observation);
std::pair<int, Tensor> decode_toy_payload(const std::vector<std::uint8_t>& payload);

}  // namespace rdm
