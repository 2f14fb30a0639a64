#include "doctest.h"
#include "fd_check.hpp"
#include "rdm/autodiff.hpp"

#include <cstring>
#include <map>
#include <set>

using namespace rdm;
using rdm_test::gradient_check;
using rdm_test::LossFn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double sigma = 1.0) {
    return Tensor::gaussian(std::move(shape), rng, sigma);
}

Tensor random_positive(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::gaussian(std::move(shape), rng);
    t.array() = t.array().abs() + 0.5;
    return t;
}

// weighted sum against a fixed random matrix, to get a scalar loss that is
// sensitive to every output entry
Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
    Rng rng(seed);
    Var w = tape.constant(random_tensor(tape.value(y).shape(), rng));
    return sum(mul(y, w));
}

struct Scenario {
    ParamStore params;
    LossFn loss;
};

// One or more finite-difference scenarios per registered primitive op; the
// registry walk below fails if a primitive has no scenario.
std::map<std::string, std::vector<Scenario>> op_scenarios() {
    std::map<std::string, std::vector<Scenario>> cases;
    Rng rng(2024);

    {
        ParamStore p;
        p.insert("a", random_tensor({2, 3}, rng));
        p.insert("b", random_tensor({2, 3}, rng));
        cases["add"].push_back({p, [](Tape& t, const ParamVars& v) {
                                    return weighted_sum(t, add(v.at("a"), v.at("b")), 1);
                                }});
        cases["sub"].push_back({p, [](Tape& t, const ParamVars& v) {
                                    return weighted_sum(t, sub(v.at("a"), v.at("b")), 2);
                                }});
        cases["mul"].push_back({p, [](Tape& t, const ParamVars& v) {
                                    return weighted_sum(t, mul(v.at("a"), v.at("b")), 3);
                                }});
    }
    {
        ParamStore p;
        p.insert("a", random_tensor({3, 4}, rng));
        cases["scale"].push_back({p, [](Tape& t, const ParamVars& v) {
                                      return weighted_sum(t, scale(v.at("a"), -1.7), 4);
                                  }});
        cases["transpose"].push_back({p, [](Tape& t, const ParamVars& v) {
                                          return weighted_sum(t, transpose(v.at("a")), 5);
                                      }});
        cases["slice"].push_back({p, [](Tape& t, const ParamVars& v) {
                                      return weighted_sum(t, slice(v.at("a"), 1, 2), 6);
                                  }});
        cases["softmax_rows"].push_back({p, [](Tape& t, const ParamVars& v) {
                                             return weighted_sum(t, softmax_rows(v.at("a")), 7);
                                         }});
        cases["layer_norm_rows"].push_back({p, [](Tape& t, const ParamVars& v) {
                                                return weighted_sum(t, layer_norm_rows(v.at("a")), 8);
                                            }});
        cases["silu"].push_back({p, [](Tape& t, const ParamVars& v) {
                                     return weighted_sum(t, silu(v.at("a")), 9);
                                 }});
        cases["sum"].push_back({p, [](Tape& t, const ParamVars& v) { return sum(v.at("a")); }});
        cases["mean"].push_back({p, [](Tape& t, const ParamVars& v) { return mean(v.at("a")); }});
    }
    {
        // matmul rank combinations
        ParamStore p;
        p.insert("m23", random_tensor({2, 3}, rng));
        p.insert("m34", random_tensor({3, 4}, rng));
        p.insert("v3", random_tensor({3}, rng));
        cases["matmul"].push_back({p, [](Tape& t, const ParamVars& v) {
                                       return weighted_sum(t, matmul(v.at("m23"), v.at("m34")), 10);
                                   }});
        cases["matmul"].push_back({p, [](Tape& t, const ParamVars& v) {
                                       return weighted_sum(t, matmul(v.at("v3"), v.at("m34")), 11);
                                   }});
        cases["matmul"].push_back({p, [](Tape& t, const ParamVars& v) {
                                       return weighted_sum(t, matmul(v.at("m23"), v.at("v3")), 12);
                                   }});
        cases["matmul"].push_back({p, [](Tape& t, const ParamVars& v) {
                                       return matmul(v.at("v3"), v.at("v3"));  // dot -> scalar
                                   }});
    }
    {
        ParamStore p;
        p.insert("a", random_tensor({3, 4}, rng));
        p.insert("bias", random_tensor({4}, rng));
        cases["add_rows"].push_back({p, [](Tape& t, const ParamVars& v) {
                                         return weighted_sum(t, add_rows(v.at("a"), v.at("bias")), 13);
                                     }});
    }
    {
        ParamStore p;
        p.insert("x", random_positive({2, 3}, rng));
        cases["log"].push_back({p, [](Tape& t, const ParamVars& v) {
                                    return weighted_sum(t, rdm::log(v.at("x")), 14);
                                }});
    }
    {
        ParamStore p;
        p.insert("a", random_tensor({5}, rng));
        p.insert("b", random_tensor({3}, rng));
        cases["concat"].push_back({p, [](Tape& t, const ParamVars& v) {
                                       return weighted_sum(t, concat(v.at("a"), v.at("b")), 15);
                                   }});
        cases["slice"].push_back({p, [](Tape& t, const ParamVars& v) {
                                      return weighted_sum(t, slice(v.at("a"), 2, 2), 16);
                                  }});
        cases["softmax_rows"].push_back({p, [](Tape& t, const ParamVars& v) {
                                             return weighted_sum(t, softmax_rows(v.at("a")), 17);
                                         }});
        cases["layer_norm_rows"].push_back({p, [](Tape& t, const ParamVars& v) {
                                                return weighted_sum(t, layer_norm_rows(v.at("a")), 18);
                                            }});
    }
    {
        ParamStore p;
        p.insert("a", random_tensor({2, 3}, rng));
        p.insert("b", random_tensor({2, 2}, rng));
        cases["concat"].push_back({p, [](Tape& t, const ParamVars& v) {
                                       return weighted_sum(t, concat(v.at("a"), v.at("b")), 19);
                                   }});
    }
    return cases;
}

}  // namespace

TEST_CASE("backward: analytic examples") {
    // f(x) = sum(x * x) -> grad 2x
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1.0, 2.0, 3.0}));
    Var loss = sum(mul(x, x));
    tape.backward(loss);
    Tensor g = tape.grad(x);
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(4.0));
    CHECK(g[2] == doctest::Approx(6.0));

    // f(x) = sum(x) -> grad of ones
    Tape tape2;
    Rng rng(11);
    Var y = tape2.leaf(random_tensor({4, 3}, rng));
    tape2.backward(sum(y));
    Tensor gy = tape2.grad(y);
    for (Eigen::Index i = 0; i < gy.size(); ++i) CHECK(gy[i] == 1.0);
}

TEST_CASE("backward: loss must be scalar") {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
    Var y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("non-finite values name the operation") {
    Tape tape;
    Var x = tape.constant(Tensor::vector({-1.0, 2.0}));
    try {
        (void)rdm::log(x);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("log") != std::string::npos);
    }
}

TEST_CASE("every registered op passes a finite-difference check") {
    auto cases = op_scenarios();
    for (const std::string& op : registered_ops()) {
        INFO("op: " << op);
        REQUIRE(cases.count(op) == 1);
        for (const Scenario& s : cases.at(op)) {
            const double err = gradient_check(s.params, s.loss);
            INFO("relative error " << err);
            CHECK(err < 1e-4);
        }
    }
    // no stale scenarios for unregistered ops
    std::set<std::string> known(registered_ops().begin(), registered_ops().end());
    for (const auto& [name, v] : cases) CHECK(known.count(name) == 1);
}

TEST_CASE("two-layer net with cross-attention, 64 params, matches finite differences") {
    Rng rng(5);
    ParamStore p;
    p.insert("w1", random_tensor({3, 6}, rng, 0.7));   // 18
    p.insert("b1", random_tensor({6}, rng, 0.3));      //  6
    p.insert("wq", random_tensor({6, 4}, rng, 0.7));   // 24
    p.insert("wk", random_tensor({2, 4}, rng, 0.7));   //  8
    p.insert("wv", random_tensor({2, 4}, rng, 0.7));   //  8
    CHECK(p.scalar_count() == 64);

    const Tensor x = random_tensor({3}, rng);
    const Tensor cond = random_tensor({2, 2}, rng);

    LossFn net = [&](Tape& t, const ParamVars& v) {
        Var input = t.constant(x);
        Var ctx = t.constant(cond);
        Var h = silu(add(matmul(input, v.at("w1")), v.at("b1")));
        Var q = matmul(h, v.at("wq"));
        Var k = matmul(ctx, v.at("wk"));
        Var val = matmul(ctx, v.at("wv"));
        Var attended = attention(q, k, val);
        return mean(mul(attended, attended));
    };
    CHECK(gradient_check(p, net) < 1e-4);
}

TEST_CASE("attention: degenerate softmax cases") {
    Tape tape;
    Rng rng(21);
    const Tensor qv = random_tensor({4}, rng);
    const Tensor vv = random_tensor({1, 5}, rng);

    // one key equal to the query: softmax over a single element is 1
    Var q = tape.constant(qv);
    Tensor kmat({1, 4});
    for (int i = 0; i < 4; ++i) kmat(0, i) = qv[i];
    Var k = tape.constant(kmat);
    Var v = tape.constant(vv);
    Var out = attention(q, k, v);
    for (int i = 0; i < 5; ++i) CHECK(tape.value(out)[i] == vv(0, i));

    // two identical keys: outputs average the two value rows
    Tensor k2({2, 4});
    Tensor v2({2, 5});
    for (int i = 0; i < 4; ++i) {
        k2(0, i) = qv[i] * 0.3;
        k2(1, i) = qv[i] * 0.3;
    }
    Rng rng2(22);
    for (int i = 0; i < 5; ++i) {
        v2(0, i) = rng2.gaussian();
        v2(1, i) = rng2.gaussian();
    }
    Var out2 = attention(tape.constant(qv), tape.constant(k2), tape.constant(v2));
    for (int i = 0; i < 5; ++i)
        CHECK(tape.value(out2)[i] == doctest::Approx(0.5 * (v2(0, i) + v2(1, i))).epsilon(1e-14));
}

TEST_CASE("attention: softmax weights sum to one and outputs stay in the value hull") {
    Tape tape;
    Rng rng(31);
    Var q = tape.constant(random_tensor({4, 8}, rng));
    Var k = tape.constant(random_tensor({4, 8}, rng));
    Var v = tape.constant(random_tensor({4, 6}, rng));

    const double inv_sqrt_d = 1.0 / std::sqrt(8.0);
    Var weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
    const Tensor& w = tape.value(weights);
    for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int c = 0; c < 4; ++c) s += w(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }

    // convex combination: each output coordinate within [min, max] of the
    // corresponding value column
    Var out = attention(q, k, v);
    const Tensor& o = tape.value(out);
    const Tensor& vv = tape.value(v);
    for (int c = 0; c < 6; ++c) {
        double lo = vv(0, c), hi = vv(0, c);
        for (int r = 1; r < 4; ++r) {
            lo = std::min(lo, vv(r, c));
            hi = std::max(hi, vv(r, c));
        }
        for (int r = 0; r < 4; ++r) {
            CHECK(o(r, c) >= lo - 1e-12);
            CHECK(o(r, c) <= hi + 1e-12);
        }
    }
}

TEST_CASE("tape evaluation is bit-deterministic") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tape tape;
        Var a = tape.leaf(random_tensor({3, 5}, rng));
        Var b = tape.leaf(random_tensor({5, 4}, rng));
        Var h = silu(layer_norm_rows(matmul(a, b)));
        Var loss = mean(mul(h, h));
        tape.backward(loss);
        std::vector<double> out;
        const Tensor& lv = tape.value(loss);
        out.push_back(lv.value());
        Tensor ga = tape.grad(a);
        Tensor gb = tape.grad(b);
        out.insert(out.end(), ga.data(), ga.data() + ga.size());
        out.insert(out.end(), gb.data(), gb.data() + gb.size());
        return out;
    };
    auto r1 = run(99);
    auto r2 = run(99);
    REQUIRE(r1.size() == r2.size());
    CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("gradients flow only to nodes that require them") {
    Tape tape;
    Var c = tape.constant(Tensor::vector({1.0, 2.0}));
    Var x = tape.leaf(Tensor::vector({3.0, 4.0}));
    Var loss = sum(mul(c, x));
    tape.backward(loss);
    Tensor gx = tape.grad(x);
    CHECK(gx[0] == 1.0);
    CHECK(gx[1] == 2.0);
    Tensor gc = tape.grad(c);  // constants read back as zero
    CHECK(gc[0] == 0.0);
}
