#include <doctest.h>

#include <cstring>

#include "iqe/gradcheck.hpp"
#include "iqe/tensor.hpp"

using namespace iqe;

namespace {

using T64 = TensorT<double>;

T64 rand_t(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    return T64::uniform(std::move(shape), rng, lo, hi);
}

// Values bounded away from zero so kinked ops (relu) stay FD-checkable.
T64 rand_away_from_zero(Shape shape, Rng& rng, double margin = 0.1) {
    T64 t(std::move(shape));
    for (auto& x : t.values()) {
        double v = rng.uniform(margin, 1.0);
        x = rng.uniform() < 0.5 ? -v : v;
    }
    return t;
}

// Scalar projection of an arbitrary-shaped output with fixed random weights,
// so the whole Jacobian gets exercised.
T64 project(const T64& out, const T64& weights) { return sum(mul(out, weights)); }

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    T64 x({1, 2}, {0.0, 0.0});
    auto y = softmax_rows(x);
    CHECK(y.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay in the open unit interval") {
    Rng rng(7);
    auto x = rand_t({5, 9}, rng, -4.0, 4.0);
    auto y = softmax_rows(x);
    for (int i = 0; i < 5; ++i) {
        double s = 0;
        for (int j = 0; j < 9; ++j) {
            double v = y.at(i, j);
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("l2 normalization produces unit rows") {
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        auto v = rand_away_from_zero({6}, rng);
        auto y = l2_normalize_rows(v);
        double s = 0;
        for (int j = 0; j < 6; ++j) s += y.at(j) * y.at(j);
        CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("cosine similarity of a vector with itself is one") {
    Rng rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        auto v = rand_away_from_zero({8}, rng);
        CHECK(cosine_similarity(v, v).item() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("forward results are bit-identical across repeated evaluation") {
    Rng rng(23);
    auto a = rand_t({7, 5}, rng);
    auto b = rand_t({5, 6}, rng);
    auto c1 = matmul(a, b);
    auto c2 = matmul(a, b);
    CHECK(std::memcmp(c1.data(), c2.data(), sizeof(double) * (size_t)c1.size()) == 0);
    auto s1 = softmax_rows(c1);
    auto s2 = softmax_rows(c2);
    CHECK(std::memcmp(s1.data(), s2.data(), sizeof(double) * (size_t)s1.size()) == 0);
}

TEST_CASE("shape errors are rejected") {
    T64 a({2, 3}, 1.0);
    T64 b({2, 3}, 1.0);
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
    T64 c({4, 3}, 1.0);
    CHECK_THROWS_AS(add(a, c), std::invalid_argument);
    CHECK_THROWS_AS(reshape(a, {5}), std::invalid_argument);
    CHECK_THROWS_AS(slice_rows(a, 1, 1), std::invalid_argument);
}

TEST_CASE("non-finite outputs raise") {
    T64 big({2}, {800.0, 1.0});
    CHECK_THROWS_AS(exp_op(big), std::runtime_error);
}

TEST_CASE("backward on a diamond graph sums the per-path gradients") {
    T64 x({3}, {0.5, -1.25, 2.0});
    x.set_requires_grad(true);
    {
        TapeT<double> tape;
        auto h = mul(x, x);       // shared subexpression
        auto y = sum(add(h, h));  // y = 2 * sum(x^2), dy/dx = 4x
        tape.backward(y);
    }
    REQUIRE(x.has_grad());
    for (int i = 0; i < 3; ++i) CHECK(x.grad()[(size_t)i] == doctest::Approx(4.0 * x.at(i)).epsilon(1e-12));
}

TEST_CASE("gradient accumulates exactly once per leaf per backward pass") {
    T64 x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    {
        TapeT<double> tape;
        auto y = sum(x);
        tape.backward(y);
    }
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    {
        TapeT<double> tape;
        auto y = sum(x);
        tape.backward(y);  // second pass accumulates on top
    }
    CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("relu gradient matches central differences away from the kink") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(100, seed));
        auto x = rand_away_from_zero({4, 6}, rng, 1e-3 * 2);
        auto w = rand_t({4, 6}, rng);
        double err = grad_check([&]() { return project(relu(x), w); }, {x});
        CHECK(err < 1e-4);
    }
}

TEST_CASE("matmul gradient on random 4x5 by 5x3 matches central differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(200, seed));
        auto a = rand_t({4, 5}, rng);
        auto b = rand_t({5, 3}, rng);
        auto w = rand_t({4, 3}, rng);
        double err = grad_check([&]() { return project(matmul(a, b), w); }, {a, b});
        CHECK(err < 1e-6);
    }
}

TEST_CASE("softmax row of length 8 gradient matches central differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(300, seed));
        auto x = rand_t({1, 8}, rng, -2.0, 2.0);
        auto w = rand_t({1, 8}, rng);
        double err = grad_check([&]() { return project(softmax_rows(x), w); }, {x});
        CHECK(err < 1e-5);
    }
}

TEST_CASE("every primitive passes gradient checks across 10 seeds") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(400, seed));
        auto a = rand_t({3, 4}, rng);
        auto b = rand_t({3, 4}, rng);
        auto v = rand_t({4}, rng);
        auto w = rand_t({3, 4}, rng);

        CHECK(grad_check([&]() { return project(add(a, b), w); }, {a, b}) < 1e-4);
        CHECK(grad_check([&]() { return project(add(a, v), w); }, {a, v}) < 1e-4);
        CHECK(grad_check([&]() { return project(sub(a, b), w); }, {a, b}) < 1e-4);
        CHECK(grad_check([&]() { return project(mul(a, b), w); }, {a, b}) < 1e-4);
        CHECK(grad_check([&]() { return project(mul(a, v), w); }, {a, v}) < 1e-4);
        CHECK(grad_check([&]() { return project(affine(a, 1.7, -0.3), w); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return project(sigmoid(a), w); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return project(exp_op(a), w); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return sum(a); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return mean(a); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return project(reshape(a, {4, 3}), reshape(w, {4, 3})); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return project(transpose(a), transpose(w)); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return project(slice_rows(a, 1, 3), slice_rows(w, 1, 3)); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return project(slice_cols(a, 0, 2), slice_cols(w, 0, 2)); }, {a}) < 1e-4);
        {
            auto w2 = rand_t({6, 4}, rng);
            CHECK(grad_check([&]() { return project(concat_rows<double>({a, b}), w2); }, {a, b}) < 1e-4);
        }
        {
            auto w2 = rand_t({3, 8}, rng);
            CHECK(grad_check([&]() { return project(concat_cols<double>({a, b}), w2); }, {a, b}) < 1e-4);
        }
        {
            std::vector<int> idx{2, 0, 2, 1};
            auto w2 = rand_t({4, 4}, rng);
            CHECK(grad_check([&]() { return project(take_rows(a, idx), w2); }, {a}) < 1e-4);
        }
        {
            auto pos = rand_t({3, 4}, rng, 0.05, 0.9);
            CHECK(grad_check([&]() { return project(log_op(pos), w); }, {pos}) < 1e-4);
            CHECK(grad_check([&]() { return project(pow_const(pos, 2.0), w); }, {pos}) < 1e-4);
            CHECK(grad_check([&]() { return project(clamp(pos, 0.01, 0.95), w); }, {pos}) < 1e-4);
        }
        CHECK(grad_check([&]() { return project(layer_norm_rows(a), w); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return project(l2_normalize_rows(a), w); }, {a}) < 1e-4);
        CHECK(grad_check([&]() { return sum(cosine_similarity(a, b)); }, {a, b}) < 1e-4);
        {
            // unique maximum so the subgradient is FD-consistent
            auto m = rand_t({3, 4}, rng, -1.0, 1.0);
            m.values()[5] = 3.0;
            CHECK(grad_check([&]() { return max_reduce(m); }, {m}) < 1e-4);
        }
    }
}

TEST_CASE("bilinear upsample of a constant grid is constant") {
    T64 g({3, 3}, 0.42);
    auto up = bilinear_upsample(g, 9, 7);
    for (long i = 0; i < up.size(); ++i) CHECK(up.data()[i] == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("bilinear upsample interpolates midpoints") {
    T64 g({2, 2}, {0.0, 1.0, 0.0, 1.0});
    auto up = bilinear_upsample(g, 2, 3);
    CHECK(up.at(0, 0) == doctest::Approx(0.0));
    CHECK(up.at(0, 1) == doctest::Approx(0.5));
    CHECK(up.at(0, 2) == doctest::Approx(1.0));
    CHECK(up.at(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("bilinear upsample keeps corner pixels exact") {
    Rng rng(77);
    auto g = rand_t({4, 4}, rng);
    auto up = bilinear_upsample(g, 13, 9);
    CHECK(up.at(0, 0) == doctest::Approx(g.at(0, 0)).epsilon(1e-12));
    CHECK(up.at(0, 8) == doctest::Approx(g.at(0, 3)).epsilon(1e-12));
    CHECK(up.at(12, 0) == doctest::Approx(g.at(3, 0)).epsilon(1e-12));
    CHECK(up.at(12, 8) == doctest::Approx(g.at(3, 3)).epsilon(1e-12));
}

TEST_CASE("bilinear upsample rejects degenerate grids") {
    T64 tiny({1, 3}, 0.0);
    CHECK_THROWS_AS(bilinear_upsample(tiny, 4, 4), std::invalid_argument);
}

TEST_CASE("bilinear upsample extrema stay within grid extrema") {
    Rng rng(91);
    auto g = rand_t({5, 5}, rng);
    double lo = 1e9, hi = -1e9;
    for (long i = 0; i < g.size(); ++i) {
        lo = std::min(lo, g.data()[i]);
        hi = std::max(hi, g.data()[i]);
    }
    auto up = bilinear_upsample(g, 17, 23);
    for (long i = 0; i < up.size(); ++i) {
        CHECK(up.data()[i] >= lo - 1e-12);
        CHECK(up.data()[i] <= hi + 1e-12);
    }
}

TEST_CASE("bilinear upsample gradient matches central differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(500, seed));
        auto g = rand_t({3, 4}, rng);
        auto w = rand_t({7, 9}, rng);
        double err = grad_check([&]() { return project(bilinear_upsample(g, 7, 9), w); }, {g});
        CHECK(err < 1e-5);
    }
}
