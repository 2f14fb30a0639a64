#include "rdm/vectordb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <utility>

#include "json.hpp"
#include "rdm/io.hpp"
#include "rdm/rng.hpp"

namespace rdm {

namespace {

using nlohmann::json;

constexpr std::uint32_t kIndexVersion = 1;

Eigen::Map<const Eigen::VectorXd> query_vector(const Embedding& q, int dim) {
    require(q.dim() == dim, "search: query dimension " + std::to_string(q.dim()) +
                                " does not match database dimension " + std::to_string(dim));
    return Eigen::Map<const Eigen::VectorXd>(q.vec().data(), dim);
}

// top-k by (similarity desc, id asc) over candidate record indices; scores
// are aligned with `candidates`
Neighbors select_top_k(std::vector<std::uint32_t>& candidates, const std::vector<double>& scores,
                       int k, const std::vector<DbRecord>& records) {
    std::vector<std::uint32_t> pos(candidates.size());
    for (std::uint32_t i = 0; i < pos.size(); ++i) pos[i] = i;
    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return records[candidates[a]].id < records[candidates[b]].id;
    };
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), pos.size());
    if (take < pos.size())
        std::partial_sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take), pos.end(),
                          better);
    else
        std::sort(pos.begin(), pos.end(), better);

    Neighbors out;
    out.truncated = take < static_cast<std::size_t>(k);
    out.hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        out.hits.push_back({records[candidates[pos[i]]].id, scores[pos[i]]});
    return out;
}

}  // namespace

const VectorDatabase::Data& VectorDatabase::data() const {
    require(data_ != nullptr, "VectorDatabase: empty handle");
    return *data_;
}

const std::string& VectorDatabase::name() const { return data().name; }
const std::vector<DbRecord>& VectorDatabase::records() const { return data().records; }

const DbRecord& VectorDatabase::record(std::size_t i) const {
    require(i < size(), "VectorDatabase::record: index out of range");
    return data().records[i];
}

const DbRecord* VectorDatabase::find(const std::string& id) const {
    for (const DbRecord& r : records())
        if (r.id == id) return &r;
    return nullptr;
}

const AnnIndex& VectorDatabase::index() const {
    require(has_index(), "VectorDatabase: no ANN index present");
    return *data().index;
}

VectorDatabase VectorDatabase::build(std::vector<DbRecord> records, std::string name) {
    auto data = std::make_shared<Data>();
    data->name = std::move(name);
    if (!records.empty()) data->dim = records.front().embedding.dim();

    std::set<std::string> seen;
    for (DbRecord& r : records) {
        require(!r.id.empty(), "build: empty record id");
        if (!seen.insert(r.id).second) throw ContractError("build: duplicate id '" + r.id + "'");
        require(r.embedding.dim() == data->dim, "build: dimension mismatch in record '" + r.id + "'");
        // pin stored values to the f32 grid so search results survive a
        // save/load round trip unchanged
        r.embedding = Embedding::from_unit(r.embedding.vec().quantized_f32());
    }

    data->matrix = RowMatrix(static_cast<Eigen::Index>(records.size()), data->dim);
    for (std::size_t i = 0; i < records.size(); ++i)
        data->matrix.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(records[i].embedding.vec().data(), data->dim);
    data->records = std::move(records);
    return VectorDatabase(std::move(data));
}

Neighbors VectorDatabase::search_exact(const Embedding& query, int k) const {
    require(k >= 1, "search_exact: k >= 1 required");
    require(!empty(), "search_exact: empty database");
    const Data& d = data();
    const auto q = query_vector(query, d.dim);

    // row-wise dot, the same kernel search_ann uses, so full probing is
    // bit-identical to exact search
    std::vector<std::uint32_t> candidates(d.records.size());
    std::vector<double> scores(d.records.size());
    for (std::uint32_t i = 0; i < candidates.size(); ++i) {
        candidates[i] = i;
        scores[i] = d.matrix.row(static_cast<Eigen::Index>(i)).dot(q);
    }
    return select_top_k(candidates, scores, k, d.records);
}

Neighbors VectorDatabase::search_ann(const Embedding& query, int k, int n_probe) const {
    require(has_index(), "search_ann: no index on this database");
    require(k >= 1, "search_ann: k >= 1 required");
    require(!empty(), "search_ann: empty database");
    const Data& d = data();
    const AnnIndex& ix = *d.index;
    require(n_probe >= 1 && n_probe <= ix.params.n_list, "search_ann: n_probe out of range");
    const auto q = query_vector(query, d.dim);

    // rank centroids by distance to the query; |q| is shared, so maximizing
    // dot - |c|^2/2 is minimizing the Euclidean distance
    const Eigen::VectorXd cscore = ix.centroids * q - 0.5 * ix.centroids.rowwise().squaredNorm();
    std::vector<int> order(static_cast<std::size_t>(ix.params.n_list));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (cscore[a] != cscore[b]) return cscore[a] > cscore[b];
        return a < b;
    });

    std::vector<std::uint32_t> candidates;
    for (int p = 0; p < n_probe; ++p) {
        const auto& list = ix.lists[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])];
        candidates.insert(candidates.end(), list.begin(), list.end());
    }
    std::vector<double> scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        scores[i] = d.matrix.row(candidates[i]).dot(q);
    return select_top_k(candidates, scores, k, d.records);
}

Neighbors VectorDatabase::search(const Embedding& query, int k, int n_probe) const {
    if (has_index()) {
        const int lists = index().params.n_list;
        const int probe = n_probe <= 0 ? lists : std::min(n_probe, lists);
        return search_ann(query, k, probe);
    }
    return search_exact(query, k);
}

VectorDatabase VectorDatabase::with_ann_index(const AnnIndexParams& params) const {
    const Data& d = data();
    require(params.n_list >= 1, "with_ann_index: n_list >= 1 required");
    require(static_cast<std::size_t>(params.n_list) <= d.records.size(),
            "with_ann_index: n_list exceeds record count");
    require(params.kmeans_iters >= 1, "with_ann_index: kmeans_iters >= 1 required");

    const Eigen::Index n = d.matrix.rows();
    const Eigen::Index dim = d.matrix.cols();
    const int n_list = params.n_list;

    // k-means++ seeding
    Rng rng(mix_seed(params.seed, 0x1df5));
    RowMatrix centroids(n_list, dim);
    std::vector<Eigen::Index> chosen;
    chosen.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    centroids.row(0) = d.matrix.row(chosen[0]);
    Eigen::VectorXd d2 = (d.matrix.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < n_list; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            // every remaining point coincides with a centroid
            do {
                pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            } while (std::find(chosen.begin(), chosen.end(), pick) != chosen.end());
        } else {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                pick = i;
                acc += d2[i];
                if (r < acc) break;
            }
        }
        chosen.push_back(pick);
        centroids.row(c) = d.matrix.row(pick);
        d2 = d2.cwiseMin((d.matrix.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    auto assign_all = [&]() {
        RowMatrix dots = d.matrix * centroids.transpose();  // n x n_list
        Eigen::VectorXd half = 0.5 * centroids.rowwise().squaredNorm();
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_score = dots(i, 0) - half[0];
            for (int c = 1; c < n_list; ++c) {
                const double s = dots(i, c) - half[c];
                if (s > best_score) {
                    best_score = s;
                    best = c;
                }
            }
            assign[static_cast<std::size_t>(i)] = best;
        }
    };

    for (int iter = 0; iter < params.kmeans_iters; ++iter) {
        assign_all();
        RowMatrix sums = RowMatrix::Zero(n_list, dim);
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(n_list), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += d.matrix.row(i);
            counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1;
        }
        for (int c = 0; c < n_list; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) =
                    sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            } else {
                // reseed an empty cluster at the worst-served record
                Eigen::Index far = 0;
                double far_d = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double dd =
                        (d.matrix.row(i) - centroids.row(assign[static_cast<std::size_t>(i)]))
                            .squaredNorm();
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                centroids.row(c) = d.matrix.row(far);
                assign[static_cast<std::size_t>(far)] = c;
            }
        }
    }

    // quantize to persisted precision, then derive the final assignment from
    // the quantized centroids so a round trip reproduces every list
    for (Eigen::Index c = 0; c < centroids.rows(); ++c)
        for (Eigen::Index j = 0; j < dim; ++j)
            centroids(c, j) = static_cast<double>(static_cast<float>(centroids(c, j)));
    assign_all();

    AnnIndex ix;
    ix.params = params;
    ix.centroids = std::move(centroids);
    ix.lists.assign(static_cast<std::size_t>(n_list), {});
    for (Eigen::Index i = 0; i < n; ++i)
        ix.lists[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].push_back(
            static_cast<std::uint32_t>(i));

    return with_restored_index(std::move(ix));
}

VectorDatabase VectorDatabase::with_restored_index(AnnIndex index) const {
    const Data& d = data();
    std::size_t covered = 0;
    for (const auto& list : index.lists) covered += list.size();
    require(covered == d.records.size(), "index does not cover the record set");
    auto out = std::make_shared<Data>(d);
    out->index = std::move(index);
    return VectorDatabase(std::move(out));
}

VectorDatabase build_ann_index(const VectorDatabase& db, int n_list, std::uint64_t seed,
                               int kmeans_iters) {
    return db.with_ann_index(AnnIndexParams{n_list, kmeans_iters, seed});
}

VectorDatabase build_database(const std::vector<ToyItem>& corpus, const ToyEmbedder& embedder,
                              const PatchPolicy& patching, std::string name) {
    require(!corpus.empty(), "build_database: empty corpus");
    require(!patching.enabled ||
                (patching.min_patches >= 1 && patching.max_patches >= patching.min_patches),
            "build_database: bad patch range");
    require(!patching.enabled || patching.max_patches <= 3, "build_database: at most 3 patches per item");

    std::vector<DbRecord> records;
    char idbuf[32];
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const ToyItem& item = corpus[i];
        std::snprintf(idbuf, sizeof(idbuf), "i%08zu", i);
        if (!patching.enabled) {
            records.push_back(DbRecord{idbuf, embedder.embed_item(item),
                                       encode_toy_payload(item.style_label, item.observation)});
            continue;
        }
        Rng rng(mix_seed(patching.seed, static_cast<std::uint64_t>(i)));
        const int span = patching.max_patches - patching.min_patches + 1;
        const int n_patches =
            patching.min_patches + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
        for (int p = 0; p < n_patches; ++p) {
            Tensor obs = item.observation;
            for (Eigen::Index j = 0; j < obs.size(); ++j) obs[j] += patching.jitter_sigma * rng.gaussian();
            records.push_back(DbRecord{std::string(idbuf) + "#p" + std::to_string(p),
                                       embedder.embed_observation(obs),
                                       encode_toy_payload(item.style_label, obs)});
        }
    }
    return VectorDatabase::build(std::move(records), std::move(name));
}

// ---- persistence ----

namespace {

std::vector<std::uint8_t> encode_index(const AnnIndex& ix, int dim) {
    ByteWriter w;
    w.magic("RDMI");
    w.u32(kIndexVersion);
    w.u32(static_cast<std::uint32_t>(ix.params.n_list));
    w.u32(static_cast<std::uint32_t>(dim));
    w.u32(static_cast<std::uint32_t>(ix.params.kmeans_iters));
    w.u64(ix.params.seed);
    for (Eigen::Index c = 0; c < ix.centroids.rows(); ++c)
        for (Eigen::Index j = 0; j < ix.centroids.cols(); ++j)
            w.f32(static_cast<float>(ix.centroids(c, j)));
    for (const auto& list : ix.lists) {
        w.u32(static_cast<std::uint32_t>(list.size()));
        for (std::uint32_t r : list) w.u32(r);
    }
    return w.buffer();
}

AnnIndex decode_index(const std::vector<std::uint8_t>& bytes, const std::string& source,
                      int expect_dim, std::size_t record_count) {
    ByteReader r(bytes, source);
    r.expect_magic("RDMI");
    const std::uint32_t version = r.u32();
    if (version != kIndexVersion) r.fail("unsupported RDMI version " + std::to_string(version));
    AnnIndex ix;
    ix.params.n_list = static_cast<int>(r.u32());
    const int dim = static_cast<int>(r.u32());
    if (dim != expect_dim) r.fail("index dimension does not match database");
    ix.params.kmeans_iters = static_cast<int>(r.u32());
    ix.params.seed = r.u64();
    if (ix.params.n_list < 1) r.fail("n_list must be positive");
    ix.centroids = RowMatrix(ix.params.n_list, dim);
    for (int c = 0; c < ix.params.n_list; ++c)
        for (int j = 0; j < dim; ++j) ix.centroids(c, j) = static_cast<double>(r.f32());
    ix.lists.resize(static_cast<std::size_t>(ix.params.n_list));
    std::vector<bool> seen(record_count, false);
    for (auto& list : ix.lists) {
        const std::uint32_t count = r.u32();
        list.resize(count);
        for (std::uint32_t& v : list) {
            v = r.u32();
            if (v >= record_count) r.fail("inverted list references record " + std::to_string(v));
            if (seen[v]) r.fail("record " + std::to_string(v) + " appears in two lists");
            seen[v] = true;
        }
    }
    r.expect_end();
    for (std::size_t i = 0; i < record_count; ++i)
        if (!seen[i]) throw FormatError(source + ": record " + std::to_string(i) + " missing from index");
    return ix;
}

std::string crc_hex(const std::vector<std::uint8_t>& bytes) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", crc32_bytes(bytes));
    return buf;
}

}  // namespace

void save_database(const VectorDatabase& db, const std::filesystem::path& dir) {
    require(db.size() > 0, "save_database: empty database");
    std::filesystem::create_directories(dir);

    std::vector<std::pair<std::string, Embedding>> vecs;
    vecs.reserve(db.size());
    ByteWriter payloads;
    for (const DbRecord& r : db.records()) {
        vecs.emplace_back(r.id, r.embedding);
        payloads.u32(static_cast<std::uint32_t>(r.payload.size()));
        payloads.bytes(r.payload.data(), r.payload.size());
    }
    save_embedding_file(vecs, dir / "vectors.rdmv");
    atomic_write_file(dir / "payloads.bin", payloads.buffer());

    json meta;
    meta["format"] = "rdm-vectordb";
    meta["version"] = 1;
    meta["name"] = db.name();
    meta["dim"] = db.dim();
    meta["count"] = db.size();
    json sums;
    sums["vectors.rdmv"] = crc_hex(read_file_bytes(dir / "vectors.rdmv"));
    sums["payloads.bin"] = crc_hex(payloads.buffer());
    if (db.has_index()) {
        const AnnIndex& ix = db.index();
        auto ibytes = encode_index(ix, db.dim());
        atomic_write_file(dir / "index.rdmi", ibytes);
        sums["index.rdmi"] = crc_hex(ibytes);
        meta["index"] = {{"n_list", ix.params.n_list},
                         {"kmeans_iters", ix.params.kmeans_iters},
                         {"seed", ix.params.seed}};
    } else {
        meta["index"] = nullptr;
    }
    meta["checksums"] = sums;
    atomic_write_text(dir / "meta.json", meta.dump(2) + "\n");
}

VectorDatabase load_database(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    json meta;
    try {
        meta = json::parse(read_text_file(meta_path));
    } catch (const json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }

    try {
        if (meta.value("format", "") != "rdm-vectordb")
            throw FormatError(meta_path.string() + ": not a database directory");

        auto checked_read = [&](const std::string& file) {
            auto bytes = read_file_bytes(dir / file);
            const std::string expect = meta.at("checksums").at(file).get<std::string>();
            if (crc_hex(bytes) != expect)
                throw FormatError((dir / file).string() + ": checksum mismatch (expected " + expect +
                                  ", got " + crc_hex(bytes) + ")");
            return bytes;
        };

        EmbeddingFile vecs =
            decode_embedding_file(checked_read("vectors.rdmv"), (dir / "vectors.rdmv").string());
        const auto pay_bytes = checked_read("payloads.bin");
        ByteReader pr(pay_bytes, (dir / "payloads.bin").string());

        const std::size_t count = meta.at("count").get<std::size_t>();
        if (vecs.records.size() != count)
            throw FormatError(meta_path.string() + ": count does not match vectors.rdmv");

        std::vector<DbRecord> records;
        records.reserve(count);
        for (auto& [id, emb] : vecs.records) {
            const std::uint32_t len = pr.u32();
            std::vector<std::uint8_t> payload(len);
            if (len > 0) pr.bytes(payload.data(), len);
            records.push_back(DbRecord{std::move(id), std::move(emb), std::move(payload)});
        }
        pr.expect_end();

        VectorDatabase db = VectorDatabase::build(std::move(records), meta.value("name", "db"));
        if (!meta.at("index").is_null()) {
            const auto ix_bytes = checked_read("index.rdmi");
            AnnIndex ix = decode_index(ix_bytes, (dir / "index.rdmi").string(), db.dim(), db.size());
            return db.with_restored_index(std::move(ix));
        }
        return db;
    } catch (const json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_toy_payload(int style_label, const Tensor& observation) {
    ByteWriter w;
    w.magic("TOYP");
    w.u32(static_cast<std::uint32_t>(style_label));
    w.u32(static_cast<std::uint32_t>(observation.size()));
    for (Eigen::Index i = 0; i < observation.size(); ++i) w.f32(static_cast<float>(observation[i]));
    return w.buffer();
}

std::pair<int, Tensor> decode_toy_payload(const std::vector<std::uint8_t>& payload) {
    ByteReader r(payload, "payload");
    r.expect_magic("TOYP");
    const int style = static_cast<int>(r.u32());
    const int dim = static_cast<int>(r.u32());
    if (dim <= 0) r.fail("bad payload dimension");
    Tensor obs({dim});
    for (int i = 0; i < dim; ++i) obs[i] = static_cast<double>(r.f32());
    r.expect_end();
    return {style, obs};
}

}  // namespace rdm
