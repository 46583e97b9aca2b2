#include <gtest/gtest.h>

#include <numeric>

#include "htnn/tensor.hpp"
#include "test_support.hpp"

namespace htnn {
namespace {

using testing::random_tensor;

TEST(Tensorize, RowMajorLayout) {
    const Tensor x = tensorize(Tensor::vector({1, 2, 3, 4, 5, 6}), {2, 3});
    EXPECT_EQ(x.at({0, 0}), 1.0);
    EXPECT_EQ(x.at({0, 1}), 2.0);
    EXPECT_EQ(x.at({0, 2}), 3.0);
    EXPECT_EQ(x.at({1, 0}), 4.0);
    EXPECT_EQ(x.at({1, 2}), 6.0);
}

TEST(Tensorize, Singleton) {
    const Tensor x = tensorize(Tensor::vector({7}), {1, 1, 1});
    EXPECT_EQ(x.order(), 3u);
    EXPECT_EQ(x.at({0, 0, 0}), 7.0);
}

TEST(Tensorize, SizeMismatchThrows) {
    EXPECT_THROW(tensorize(Tensor::vector({1, 2, 3}), {2, 2}), ShapeError);
    EXPECT_THROW(tensorize(Tensor(Shape{2, 2}), {4}), ShapeError);
}

TEST(Flatten, RoundTrips) {
    Rng rng(1);
    const Tensor v = random_tensor({24}, rng);
    EXPECT_EQ(flatten(tensorize(v, {2, 3, 4})), v);
    EXPECT_EQ(flatten(tensorize(Tensor::vector({1, 2, 3, 4, 5, 6}), {2, 3})).storage(),
              (std::vector<double>{1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(flatten(Tensor::scalar(3.5)).storage(), std::vector<double>{3.5});
    const Tensor t = random_tensor({2, 3, 2, 2}, rng);
    EXPECT_EQ(tensorize(flatten(t), t.shape()), t);
}

TEST(Contract, MatrixProduct) {
    const Tensor a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor b(Shape{3, 2}, {1, 0, 0, 1, 1, 1});
    const Tensor c = contract(a, b, {1}, {0});
    EXPECT_EQ(c.shape(), (Shape{2, 2}));
    EXPECT_EQ(c.storage(), (std::vector<double>{4, 5, 10, 11}));
}

TEST(Contract, AllOnesSumsContractedLength) {
    const Tensor a(Shape{2, 2, 3}, 1.0);
    const Tensor b(Shape{3, 2, 2}, 1.0);
    const Tensor c = contract(a, b, {2}, {0});
    EXPECT_EQ(c.shape(), (Shape{2, 2, 2, 2}));
    for (double v : c.data()) {
        EXPECT_EQ(v, 3.0);
    }
}

TEST(Contract, MatchesIndexLoopOracle) {
    Rng rng(50);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n1 = 1 + rng.below(4), n2 = 1 + rng.below(4), l = 1 + rng.below(5);
        const std::size_t m1 = 1 + rng.below(4), m2 = 1 + rng.below(4);
        const Tensor a = random_tensor({n1, n2, l}, rng);
        const Tensor b = random_tensor({l, m1, m2}, rng);
        const Tensor c = contract(a, b, {2}, {0});
        ASSERT_EQ(c.shape(), (Shape{n1, n2, m1, m2}));
        for (std::size_t i1 = 0; i1 < n1; ++i1)
            for (std::size_t i2 = 0; i2 < n2; ++i2)
                for (std::size_t j1 = 0; j1 < m1; ++j1)
                    for (std::size_t j2 = 0; j2 < m2; ++j2) {
                        double want = 0.0;
                        for (std::size_t al = 0; al < l; ++al) {
                            want += a.at({i1, i2, al}) * b.at({al, j1, j2});
                        }
                        const double got = c.at({i1, i2, j1, j2});
                        EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, std::abs(want)));
                    }
    }
}

TEST(Contract, MultiModeUnsortedPairs) {
    Rng rng(3);
    const Tensor a = random_tensor({2, 3, 4}, rng);
    const Tensor b = random_tensor({4, 5, 3}, rng);
    // Pair a mode 2 with b mode 0 and a mode 1 with b mode 2.
    const Tensor c = contract(a, b, {2, 1}, {0, 2});
    ASSERT_EQ(c.shape(), (Shape{2, 5}));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double want = 0.0;
            for (std::size_t p = 0; p < 3; ++p)
                for (std::size_t q = 0; q < 4; ++q) want += a.at({i, p, q}) * b.at({q, j, p});
            EXPECT_NEAR(c.at({i, j}), want, 1e-12);
        }
}

TEST(Contract, Errors) {
    const Tensor a(Shape{2, 3});
    const Tensor b(Shape{4, 2});
    try {
        contract(a, b, {1}, {0});
        FAIL() << "expected ContractionError";
    } catch (const ContractionError& e) {
        EXPECT_NE(std::string(e.what()).find("(1, 0)"), std::string::npos);
    }
    EXPECT_THROW(contract(a, Tensor(Shape{2, 2}), {0, 0}, {0, 1}), ArgumentError);
    EXPECT_THROW(contract(a, b, {0}, {}), ArgumentError);
}

TEST(Contract, Bilinearity) {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_tensor({3, 2, 4}, rng);
        const Tensor a2 = random_tensor({3, 2, 4}, rng);
        const Tensor b = random_tensor({4, 3, 2}, rng);
        const double alpha = rng.normal();
        const Tensor lhs = contract(alpha * a + a2, b, {2, 0}, {0, 1});
        const Tensor rhs = alpha * contract(a, b, {2, 0}, {0, 1}) + contract(a2, b, {2, 0}, {0, 1});
        EXPECT_LE(relative_error(lhs.data(), rhs.data()), 1e-12);
    }
}

TEST(Contract, ChainAssociativity) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_tensor({2, 3, 4}, rng);
        const Tensor b = random_tensor({4, 3, 5}, rng);
        const Tensor c = random_tensor({5, 2, 2}, rng);
        // (A.B).C versus A.(B.C); A's mode 2 meets B's mode 0, B's mode 2 meets C's mode 0.
        const Tensor left = contract(contract(a, b, {2}, {0}), c, {3}, {0});
        const Tensor right = contract(a, contract(b, c, {2}, {0}), {2}, {0});
        ASSERT_EQ(left.shape(), right.shape());
        EXPECT_LE(relative_error(left.data(), right.data()), 1e-12);
    }
}

TEST(Permute, Identity) {
    Rng rng(2);
    const Tensor t = random_tensor({2, 3, 4}, rng);
    EXPECT_EQ(permute(t, {0, 1, 2}), t);
}

TEST(Permute, TransposeExhaustive) {
    Rng rng(4);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor xt = permute(x, {1, 0});
    ASSERT_EQ(xt.shape(), (Shape{4, 3}));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(x.at({i, j}), xt.at({j, i}));
}

TEST(Permute, InverseRoundTrip) {
    Rng rng(5);
    const Tensor t = random_tensor({2, 3, 1, 4, 2}, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
    const Tensor p = permute(t, perm);
    EXPECT_EQ(p.shape(), (Shape{4, 2, 2, 1, 3}));
    EXPECT_EQ(permute(p, inverse_permutation(perm)), t);
}

TEST(Permute, InvalidPermutation) {
    const Tensor t(Shape{2, 3});
    EXPECT_THROW(permute(t, {0, 0}), ArgumentError);
    EXPECT_THROW(permute(t, {0, 2}), ArgumentError);
    EXPECT_THROW(permute(t, {0}), ArgumentError);
}

TEST(TensorType, Invariants) {
    EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>(3)), ShapeError);
    const Tensor s = Tensor::scalar(2.0);
    EXPECT_EQ(s.order(), 0u);
    EXPECT_EQ(s.size(), 1u);
    const Tensor big(Shape(12, 2));
    EXPECT_EQ(big.size(), 4096u);
}

} // namespace
} // namespace htnn
