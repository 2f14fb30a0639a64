#include "doctest.h"
#include "rdm/tensor.hpp"

#include <cstring>

using namespace rdm;

TEST_CASE("tensor shape and storage") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    t(1, 2) = 5.0;
    CHECK(t[5] == 5.0);  // row-major

    Tensor s = Tensor::scalar(2.5);
    CHECK(s.is_scalar());
    CHECK(s.value() == 2.5);

    CHECK_THROWS_AS(Tensor({0, 3}), ContractError);
    CHECK_THROWS_AS(Tensor({-1}), ContractError);
    CHECK_THROWS_AS(Tensor({2}, Eigen::ArrayXd::Zero(3)), ContractError);
}

TEST_CASE("tensor finiteness checks") {
    Tensor t({2});
    CHECK(t.all_finite());
    t[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK(!t.all_finite());
}

TEST_CASE("tensor matrix view round trip") {
    RowMatrix m(2, 2);
    m << 1.0, 2.0, 3.0, 4.0;
    Tensor t = Tensor::from_matrix(m);
    CHECK(t(0, 1) == 2.0);
    CHECK(t.matrix()(1, 0) == 3.0);

    // rank-1 views as a single row
    Tensor v = Tensor::vector({1.0, 2.0, 3.0});
    CHECK(v.matrix().rows() == 1);
    CHECK(v.matrix().cols() == 3);
}

TEST_CASE("f32 quantization is idempotent") {
    Rng rng(7);
    Tensor t = Tensor::gaussian({32}, rng);
    Tensor q1 = t.quantized_f32();
    Tensor q2 = q1.quantized_f32();
    CHECK(std::memcmp(q1.data(), q2.data(), sizeof(double) * 32) == 0);
    for (int i = 0; i < 32; ++i)
        CHECK(std::abs(q1[i] - t[i]) <= 6e-8 * std::max(1.0, std::abs(t[i])));
}

TEST_CASE("rng determinism and statistics") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng g(3);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = g.gaussian();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}
