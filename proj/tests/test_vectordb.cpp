#include "doctest.h"
#include "rdm/io.hpp"
#include "rdm/vectordb.hpp"

#include <algorithm>
#include <filesystem>

using namespace rdm;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("rdm_vdb_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Embedding random_unit(int dim, Rng& rng) {
    return Embedding::normalized(Tensor::gaussian({dim}, rng));
}

std::vector<DbRecord> random_records(int n, int dim, Rng& rng) {
    std::vector<DbRecord> recs;
    char buf[16];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "r%06d", i);
        recs.push_back(DbRecord{buf, random_unit(dim, rng), {}});
    }
    return recs;
}

// Brute-force oracle: straightforward loops, no Eigen, same tie rule.
std::vector<std::pair<std::string, double>> brute_force_topk(const std::vector<DbRecord>& recs,
                                                             const Embedding& q, int k) {
    std::vector<std::pair<std::string, double>> all;
    for (const DbRecord& r : recs) {
        double dot = 0.0;
        for (int i = 0; i < q.dim(); ++i) dot += r.embedding.vec()[i] * q.vec()[i];
        all.emplace_back(r.id, dot);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
    return all;
}

// unit-sphere clusters for index tests: tight caps around random directions
struct Clustered {
    std::vector<DbRecord> records;
    std::vector<int> labels;
};

Clustered clustered_records(int n_clusters, int per_cluster, int dim, Rng& rng,
                            double spread = 0.15) {
    Clustered out;
    std::vector<Embedding> centers;
    for (int c = 0; c < n_clusters; ++c) centers.push_back(random_unit(dim, rng));
    char buf[24];
    int idx = 0;
    for (int c = 0; c < n_clusters; ++c) {
        for (int i = 0; i < per_cluster; ++i) {
            Tensor v = Tensor({dim});
            for (int d = 0; d < dim; ++d)
                v[d] = centers[static_cast<std::size_t>(c)].vec()[d] + spread * rng.gaussian();
            std::snprintf(buf, sizeof(buf), "c%02d_%06d", c, idx++);
            out.records.push_back(DbRecord{buf, Embedding::normalized(v), {}});
            out.labels.push_back(c);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("search_exact: axis-aligned two-record database") {
    std::vector<DbRecord> recs;
    recs.push_back({"a", Embedding::normalized(Tensor::vector({1.0, 0.0})), {}});
    recs.push_back({"b", Embedding::normalized(Tensor::vector({0.0, 1.0})), {}});
    VectorDatabase db = VectorDatabase::build(recs);

    Embedding q = Embedding::normalized(Tensor::vector({1.0, 0.0}));
    Neighbors n1 = db.search_exact(q, 1);
    REQUIRE(n1.hits.size() == 1);
    CHECK(n1.hits[0].id == "a");
    CHECK(n1.hits[0].similarity == doctest::Approx(1.0));
    CHECK(!n1.truncated);

    // k beyond the record count clamps and flags
    Neighbors n5 = db.search_exact(q, 5);
    CHECK(n5.hits.size() == 2);
    CHECK(n5.truncated);
}

TEST_CASE("search_exact: errors") {
    VectorDatabase empty = VectorDatabase::build({});
    Embedding q = Embedding::normalized(Tensor::vector({1.0, 0.0}));
    CHECK_THROWS_AS(empty.search_exact(q, 1), ContractError);

    Rng rng(1);
    VectorDatabase db = VectorDatabase::build(random_records(10, 4, rng));
    CHECK_THROWS_AS(db.search_exact(q, 1), ContractError);  // dim mismatch
    Embedding q4 = random_unit(4, rng);
    CHECK_THROWS_AS(db.search_exact(q4, 0), ContractError);
}

TEST_CASE("build: duplicate ids and dim mismatches rejected") {
    Rng rng(2);
    auto recs = random_records(4, 8, rng);
    recs[3].id = recs[0].id;
    CHECK_THROWS_AS(VectorDatabase::build(recs), ContractError);

    auto recs2 = random_records(4, 8, rng);
    recs2[2].embedding = random_unit(6, rng);
    CHECK_THROWS_AS(VectorDatabase::build(recs2), ContractError);
}

TEST_CASE("search_exact matches the brute-force oracle, k=19") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 50 + static_cast<int>(rng.below(950));
        VectorDatabase db = VectorDatabase::build(random_records(n, 64, rng));
        for (int qi = 0; qi < 10; ++qi) {
            Embedding q = random_unit(64, rng);
            Neighbors got = db.search_exact(q, 19);
            auto want = brute_force_topk(db.records(), q, 19);
            REQUIRE(got.hits.size() == want.size());
            for (std::size_t i = 0; i < want.size(); ++i) {
                CHECK(got.hits[i].id == want[i].first);
                CHECK(got.hits[i].similarity == doctest::Approx(want[i].second).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("ties break by ascending id") {
    std::vector<DbRecord> recs;
    // identical embedding under three ids
    Embedding e = Embedding::normalized(Tensor::vector({3.0, 4.0}));
    recs.push_back({"z", e, {}});
    recs.push_back({"a", e, {}});
    recs.push_back({"m", e, {}});
    VectorDatabase db = VectorDatabase::build(recs);
    Neighbors n = db.search_exact(e, 3);
    REQUIRE(n.hits.size() == 3);
    CHECK(n.hits[0].id == "a");
    CHECK(n.hits[1].id == "m");
    CHECK(n.hits[2].id == "z");
}

TEST_CASE("ann index: degenerate single list") {
    Rng rng(4);
    VectorDatabase db = VectorDatabase::build(random_records(20, 8, rng));
    VectorDatabase indexed = build_ann_index(db, 1, 7);
    REQUIRE(indexed.has_index());
    CHECK(indexed.index().lists.size() == 1);
    CHECK(indexed.index().lists[0].size() == 20);
    // original handle untouched
    CHECK(!db.has_index());
}

TEST_CASE("ann index: rebuild with the same seed is bit-identical") {
    Rng rng(5);
    VectorDatabase db = VectorDatabase::build(random_records(500, 16, rng));
    VectorDatabase a = build_ann_index(db, 8, 42);
    VectorDatabase b = build_ann_index(db, 8, 42);
    CHECK(a.index().centroids == b.index().centroids);
    CHECK(a.index().lists == b.index().lists);
}

TEST_CASE("ann index: partition purity on well-separated clusters") {
    Rng rng(6);
    Clustered data = clustered_records(4, 250, 16, rng, 0.08);
    VectorDatabase db = VectorDatabase::build(data.records);
    VectorDatabase indexed = build_ann_index(db, 4, 11);

    std::size_t majority_total = 0;
    for (const auto& list : indexed.index().lists) {
        CHECK(list.size() >= 1);
        std::vector<int> counts(4, 0);
        for (std::uint32_t r : list) counts[static_cast<std::size_t>(data.labels[r])] += 1;
        majority_total += static_cast<std::size_t>(*std::max_element(counts.begin(), counts.end()));
    }
    const double purity = static_cast<double>(majority_total) / static_cast<double>(db.size());
    CHECK(purity >= 0.95);
}

TEST_CASE("ann with full probing equals exact search") {
    Rng rng(7);
    Clustered data = clustered_records(8, 100, 32, rng);
    VectorDatabase db = build_ann_index(VectorDatabase::build(data.records), 8, 3);
    for (int qi = 0; qi < 50; ++qi) {
        Embedding q = random_unit(32, rng);
        Neighbors exact = db.search_exact(q, 10);
        Neighbors ann = db.search_ann(q, 10, 8);
        REQUIRE(exact.hits.size() == ann.hits.size());
        for (std::size_t i = 0; i < exact.hits.size(); ++i) {
            CHECK(exact.hits[i].id == ann.hits[i].id);
            CHECK(exact.hits[i].similarity == ann.hits[i].similarity);
        }
    }
}

TEST_CASE("ann recall on clustered data") {
    Rng rng(8);
    Clustered data = clustered_records(16, 1250, 64, rng, 0.12);  // 20k vectors
    VectorDatabase db = build_ann_index(VectorDatabase::build(data.records), 16, 9);

    std::size_t hit = 0;
    std::size_t total = 0;
    for (int qi = 0; qi < 40; ++qi) {
        // queries near the data manifold
        const auto& base = db.record(rng.below(db.size())).embedding;
        Tensor qv = base.vec();
        for (Eigen::Index i = 0; i < qv.size(); ++i) qv[i] += 0.05 * rng.gaussian();
        Embedding q = Embedding::normalized(qv);

        Neighbors exact = db.search_exact(q, 20);
        Neighbors ann = db.search_ann(q, 20, 4);
        for (const Neighbor& e : exact.hits) {
            total += 1;
            for (const Neighbor& a : ann.hits)
                if (a.id == e.id) {
                    hit += 1;
                    break;
                }
        }
    }
    CHECK(static_cast<double>(hit) / static_cast<double>(total) >= 0.9);
}

TEST_CASE("search_ann contract errors") {
    Rng rng(9);
    VectorDatabase db = VectorDatabase::build(random_records(50, 8, rng));
    Embedding q = random_unit(8, rng);
    CHECK_THROWS_AS(db.search_ann(q, 5, 1), ContractError);  // no index
    VectorDatabase ix = build_ann_index(db, 4, 1);
    CHECK_THROWS_AS(ix.search_ann(q, 5, 0), ContractError);
    CHECK_THROWS_AS(ix.search_ann(q, 5, 5), ContractError);
    CHECK_THROWS_AS(build_ann_index(db, 51, 1), ContractError);  // n_list > count
}

TEST_CASE("build_database: patch policy counts") {
    ToyEmbedder emb(4);
    Rng rng(10);
    std::vector<ToyItem> corpus;
    for (int i = 0; i < 10; ++i)
        corpus.push_back(emb.make_item(Tensor::gaussian({kContentDim}, rng), static_cast<int>(rng.below(4))));

    VectorDatabase plain = build_database(corpus, emb, PatchPolicy{});
    CHECK(plain.size() == 10);

    PatchPolicy patched{true, 2, 3, 0.05, 77};
    VectorDatabase a = build_database(corpus, emb, patched);
    CHECK(a.size() >= 20);
    CHECK(a.size() <= 30);

    VectorDatabase b = build_database(corpus, emb, patched);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.record(i).id == b.record(i).id);
        CHECK(a.record(i).embedding.vec().array().isApprox(b.record(i).embedding.vec().array()));
    }

    // payloads carry the style label and observation
    auto [style, obs] = decode_toy_payload(a.record(0).payload);
    CHECK(style == corpus[0].style_label);
    CHECK(obs.size() == emb.obs_dim());
}

TEST_CASE("database save/load round trip") {
    TempDir tmp;
    ToyEmbedder emb(4);
    Rng rng(11);
    std::vector<ToyItem> corpus;
    for (int i = 0; i < 30; ++i)
        corpus.push_back(emb.make_item(Tensor::gaussian({kContentDim}, rng), static_cast<int>(rng.below(4))));
    VectorDatabase db =
        build_database(corpus, emb, PatchPolicy{true, 2, 3, 0.05, 3}, "roundtrip");
    db = build_ann_index(db, 4, 5);

    save_database(db, tmp.path / "db");
    VectorDatabase loaded = load_database(tmp.path / "db");

    REQUIRE(loaded.size() == db.size());
    CHECK(loaded.name() == "roundtrip");
    CHECK(loaded.dim() == db.dim());
    for (std::size_t i = 0; i < db.size(); ++i) {
        CHECK(loaded.record(i).id == db.record(i).id);
        CHECK(loaded.record(i).payload == db.record(i).payload);
        for (int d = 0; d < db.dim(); ++d)
            CHECK(loaded.record(i).embedding.vec()[d] == db.record(i).embedding.vec()[d]);
    }

    // identical ANN results before and after the round trip
    REQUIRE(loaded.has_index());
    CHECK(loaded.index().centroids == db.index().centroids);
    for (int qi = 0; qi < 20; ++qi) {
        Embedding q = random_unit(db.dim(), rng);
        Neighbors pre = db.search_ann(q, 8, 2);
        Neighbors post = loaded.search_ann(q, 8, 2);
        REQUIRE(pre.hits.size() == post.hits.size());
        for (std::size_t i = 0; i < pre.hits.size(); ++i) {
            CHECK(pre.hits[i].id == post.hits[i].id);
            CHECK(pre.hits[i].similarity == post.hits[i].similarity);
        }
    }
}

TEST_CASE("database load detects single-byte corruption") {
    TempDir tmp;
    Rng rng(12);
    VectorDatabase db = VectorDatabase::build(random_records(25, 8, rng), "fragile");
    save_database(db, tmp.path / "db");

    auto bytes = read_file_bytes(tmp.path / "db" / "vectors.rdmv");
    bytes[bytes.size() / 2] ^= 0x01;
    atomic_write_file(tmp.path / "db" / "vectors.rdmv", bytes);

    try {
        load_database(tmp.path / "db");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("vectors.rdmv") != std::string::npos);
        CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
}
