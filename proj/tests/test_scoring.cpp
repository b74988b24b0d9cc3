#include <doctest.h>

#include <cmath>

#include "iqe/gradcheck.hpp"
#include "iqe/scoring.hpp"

using namespace iqe;

namespace {

using T64 = TensorT<double>;

// four copies of one token so the 2x2 grid is valid
template <typename S>
TensorT<S> token_grid(std::vector<S> token) {
    const int c = (int)token.size();
    TensorT<S> out({4, c});
    for (int i = 0; i < 4; ++i)
        std::copy(token.begin(), token.end(), out.data() + (size_t)i * c);
    return out;
}

}  // namespace

TEST_CASE("a token equidistant from both embedding rows maps to one half") {
    T64 emb({2, 2}, {1.0, 0.0, 0.0, 1.0});
    auto adapted = token_grid<double>({1.0, 1.0});
    auto m = layer_map(adapted, emb, 2, 2);
    for (long i = 0; i < m.size(); ++i) CHECK(m.data()[i] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("a token aligned with the abnormal row maps to e/(e+1)") {
    T64 emb({2, 2}, {1.0, 0.0, 0.0, 1.0});
    auto adapted = token_grid<double>({0.0, 1.0});
    auto m = layer_map(adapted, emb, 2, 2);
    const double expect = std::exp(1.0) / (std::exp(1.0) + 1.0);  // 0.73105857863
    CHECK(m.at(0, 0) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(m.at(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("positive rescaling of embedding rows leaves the map unchanged") {
    Rng rng(1);
    auto emb = T64::uniform({2, 8}, rng, -1, 1);
    auto adapted = T64::uniform({9, 8}, rng, -1, 1);
    auto m1 = layer_map(adapted, emb, 6, 6);
    auto m2 = layer_map(adapted, scale(emb, 37.5), 6, 6);
    for (long i = 0; i < m1.size(); ++i)
        CHECK(m1.data()[i] == doctest::Approx(m2.data()[i]).epsilon(1e-9));
}

TEST_CASE("map values stay inside the open unit interval") {
    Rng rng(2);
    auto emb = T64::uniform({2, 8}, rng, -1, 1);
    auto adapted = T64::uniform({16, 8}, rng, -1, 1);
    auto m = layer_map(adapted, emb, 12, 12);
    for (long i = 0; i < m.size(); ++i) {
        CHECK(m.data()[i] > 0.0);
        CHECK(m.data()[i] < 1.0);
    }
}

TEST_CASE("swapping the embedding rows complements the map") {
    Rng rng(3);
    auto emb = T64::uniform({2, 8}, rng, -1, 1);
    auto adapted = T64::uniform({16, 8}, rng, -1, 1);
    auto m = layer_map(adapted, emb, 12, 12);
    T64 swapped({2, 8});
    std::copy(emb.data() + 8, emb.data() + 16, swapped.data());
    std::copy(emb.data(), emb.data() + 8, swapped.data() + 8);
    auto mc = layer_map(adapted, swapped, 12, 12);
    for (long i = 0; i < m.size(); ++i)
        CHECK(m.data()[i] + mc.data()[i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("raising the abnormal cosine at fixed normal cosine raises the map value") {
    T64 emb({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
    const double c = 0.3;  // fixed cosine against the normal row
    double prev = -1.0;
    for (double phi = 1.4; phi > 0.05; phi -= 0.2) {
        const double s = std::sqrt(1.0 - c * c);
        auto adapted = token_grid<double>({c, s * std::cos(phi), s * std::sin(phi)});
        auto m = layer_map(adapted, emb, 2, 2);
        CHECK(m.at(0, 0) > prev);
        prev = m.at(0, 0);
    }
}

TEST_CASE("layer map rejects non-square token counts") {
    T64 emb({2, 4}, 0.5);
    T64 adapted({6, 4}, 0.25);
    CHECK_THROWS_AS(layer_map(adapted, emb, 8, 8), std::invalid_argument);
}

TEST_CASE("layer map gradients match central differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(800, seed));
        auto emb = T64::uniform({2, 6}, rng, -1, 1);
        auto adapted = T64::uniform({4, 6}, rng, -1, 1);
        auto w = T64::uniform({5, 5}, rng, -1, 1);
        double err =
            grad_check([&]() { return sum(mul(layer_map(adapted, emb, 5, 5), w)); }, {adapted, emb});
        CHECK(err < 1e-4);
    }
}

TEST_CASE("fusion endpoints reproduce the pure branches") {
    Rng rng(4);
    std::vector<T64> mq, mt;
    for (int i = 0; i < 4; ++i) {
        mq.push_back(T64::uniform({6, 6}, rng, 0, 1));
        mt.push_back(T64::uniform({6, 6}, rng, 0, 1));
    }
    auto fq = fuse_maps(mq, mt, 1.0);
    auto ft = fuse_maps(mq, mt, 0.0);
    T64 sq({6, 6}), st({6, 6});
    for (int i = 0; i < 4; ++i)
        for (long j = 0; j < 36; ++j) {
            sq.data()[j] += mq[(size_t)i].data()[j];
            st.data()[j] += mt[(size_t)i].data()[j];
        }
    for (long j = 0; j < 36; ++j) {
        CHECK(fq.data()[j] == doctest::Approx(sq.data()[j]).epsilon(1e-12));
        CHECK(ft.data()[j] == doctest::Approx(st.data()[j]).epsilon(1e-12));
    }
}

TEST_CASE("fusion is linear in alpha") {
    Rng rng(5);
    std::vector<T64> mq, mt;
    for (int i = 0; i < 4; ++i) {
        mq.push_back(T64::uniform({5, 7}, rng, 0, 1));
        mt.push_back(T64::uniform({5, 7}, rng, 0, 1));
    }
    const double alpha = 0.3;
    auto f1 = fuse_maps(mq, mt, alpha);
    auto f2 = fuse_maps(mq, mt, 1.0 - alpha);
    auto all = fuse_maps(mq, mt, 1.0);
    auto allt = fuse_maps(mq, mt, 0.0);
    for (long j = 0; j < f1.size(); ++j)
        CHECK(f1.data()[j] + f2.data()[j] ==
              doctest::Approx(all.data()[j] + allt.data()[j]).epsilon(1e-9));
}

TEST_CASE("fusion validates alpha and shapes") {
    std::vector<T64> a{T64({2, 2}, 0.5)}, b{T64({3, 2}, 0.5)};
    CHECK_THROWS_AS(fuse_maps(a, b, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(fuse_maps(a, a, 1.5), std::invalid_argument);
}

TEST_CASE("the anomaly score is the map maximum") {
    T64 flat({4, 4}, 0.37);
    CHECK(anomaly_score(flat) == doctest::Approx(0.37));
    T64 spike({4, 4}, 0.1);
    spike.values()[9] = 0.93;
    CHECK(anomaly_score(spike) == doctest::Approx(0.93));
}

TEST_CASE("the anomaly score ignores pixel order") {
    Rng rng(6);
    auto m = T64::uniform({5, 5}, rng, 0, 1);
    auto shuffled = m;
    std::vector<double> vals(shuffled.values());
    Rng perm(7);
    for (size_t i = vals.size() - 1; i > 0; --i)
        std::swap(vals[i], vals[(size_t)perm.uniform_int(0, (int)i)]);
    T64 ms({5, 5}, vals);
    CHECK(anomaly_score(m) == doctest::Approx(anomaly_score(ms)).epsilon(1e-12));
}

TEST_CASE("export normalization maps extremes to the unit range") {
    T64 m({2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 9.0});
    auto n = minmax_normalize(m);
    CHECK(n[0] == doctest::Approx(0.0));
    CHECK(n[5] == doctest::Approx(1.0));
    CHECK(n[2] == doctest::Approx(0.25));
}
