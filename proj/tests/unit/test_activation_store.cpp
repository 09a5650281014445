#include <doctest.h>

#include "oracles.hpp"
#include "ovce/activation_store.hpp"
#include "ovce/error.hpp"

#include <cmath>
#include <fstream>
#include <random>

using namespace ovce;

TEST_CASE("bilinear resize") {
    SUBCASE("1x2 to 1x4 with aligned corners") {
        const ActivationMap a{0, 0, 2, 1, {0.0f, 1.0f}};
        const auto r = bilinear_resize(a, 4, 1);
        REQUIRE(r.values.size() == 4);
        CHECK(r.values[0] == 0.0f);
        CHECK(r.values[1] == doctest::Approx(1.0 / 3).epsilon(1e-6));
        CHECK(r.values[2] == doctest::Approx(2.0 / 3).epsilon(1e-6));
        CHECK(r.values[3] == 1.0f);
    }
    SUBCASE("constant stays constant") {
        const ActivationMap a{0, 0, 3, 2, std::vector<float>(6, 3.5f)};
        for (auto [w, h] : {std::pair{7, 7}, std::pair{1, 1}, std::pair{2, 9}}) {
            const auto r = bilinear_resize(a, w, h);
            for (float v : r.values) CHECK(v == 3.5f);
        }
    }
    SUBCASE("same shape copies") {
        const ActivationMap a{0, 0, 2, 2, {0.1f, 0.9f, 0.5f, 0.4f}};
        CHECK(bilinear_resize(a, 2, 2).values == a.values);
    }
    SUBCASE("matches the long-double reference and stays within bounds") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<float> val(-3, 7);
        std::uniform_int_distribution<int> side(1, 9);
        for (int i = 0; i < 50; ++i) {
            ActivationMap a{0, 0, side(rng), side(rng), {}};
            for (int k = 0; k < a.width * a.height; ++k) a.values.push_back(val(rng));
            const int w = side(rng) * 2, h = side(rng) * 2;
            const auto r = bilinear_resize(a, w, h);
            const auto want = oracle::bilinear(a.values, a.width, a.height, w, h);
            const auto [lo, hi] = std::minmax_element(a.values.begin(), a.values.end());
            for (std::size_t k = 0; k < want.size(); ++k) {
                CHECK(r.values[k] == doctest::Approx(want[k]).epsilon(1e-5));
                CHECK(r.values[k] >= *lo - 1e-5f);
                CHECK(r.values[k] <= *hi + 1e-5f);
            }
        }
    }
    CHECK_THROWS_AS(bilinear_resize({0, 0, 2, 1, {0, 1}}, 0, 1), ShapeMismatch);
}

TEST_CASE("k-means boundaries") {
    ClusterConfig cfg;
    SUBCASE("two symmetric clusters") {
        const std::vector<float> v{0, 0, 0, 10, 10, 10};
        cfg.k = 2;
        const auto c = kmeans_1d(v, cfg);
        REQUIRE(c.size() == 2);
        CHECK(c[0] == 0.0);
        CHECK(c[1] == 10.0);
        const auto r = cluster_ranges(v, cfg);
        CHECK(r[0].range_id == 1);
        CHECK(std::isinf(r[0].lo));
        CHECK(r[0].hi == 5.0);
        CHECK(r[1].lo == 5.0);
        CHECK(std::isinf(r[1].hi));
    }
    SUBCASE("k = 1 covers everything") {
        cfg.k = 1;
        const auto r = cluster_ranges(std::vector<float>{1, 2, 3}, cfg);
        REQUIRE(r.size() == 1);
        CHECK(r[0].contains(-1e300));
        CHECK(r[0].contains(1e300));
    }
    SUBCASE("five separated gaussians land one per range") {
        std::mt19937_64 rng(99);
        std::vector<float> v;
        std::vector<int> comp;
        const double sigma = 1.0;
        for (int c = 0; c < 5; ++c) {
            std::normal_distribution<double> g(c * 20.0, sigma);  // 20 sigma apart
            for (int i = 0; i < 400; ++i) {
                v.push_back(static_cast<float>(g(rng)));
                comp.push_back(c);
            }
        }
        cfg.k = 5;
        const auto r = cluster_ranges(v, cfg);
        REQUIRE(r.size() == 5);
        for (std::size_t i = 0; i < v.size(); ++i) {
            int hit = -1, hits = 0;
            for (std::size_t j = 0; j < r.size(); ++j)
                if (r[j].contains(v[i])) {
                    hit = static_cast<int>(j);
                    ++hits;
                }
            CHECK(hits == 1);
            CHECK(hit == comp[i]);
        }
    }
    SUBCASE("too few distinct values") {
        cfg.k = 3;
        CHECK_THROWS_AS(kmeans_1d(std::vector<float>{1, 1, 2, 2}, cfg), DegenerateValues);
        CHECK_THROWS_AS(kmeans_1d(std::vector<float>{1, NAN, 2, 3}, cfg), DegenerateValues);
    }
    SUBCASE("deterministic for a seed") {
        std::mt19937_64 rng(1);
        std::exponential_distribution<float> e(0.5);
        std::vector<float> v(5000);
        for (auto& x : v) x = e(rng);
        cfg.k = 5;
        CHECK(kmeans_1d(v, cfg) == kmeans_1d(v, cfg));
    }
    SUBCASE("nonzero_only drops zeros") {
        cfg.k = 2;
        cfg.nonzero_only = true;
        std::vector<float> v(100, 0.0f);
        for (int i = 0; i < 5; ++i) v.push_back(4.0f), v.push_back(8.0f);
        const auto c = kmeans_1d(v, cfg);
        CHECK(c[0] == 4.0);
        CHECK(c[1] == 8.0);
    }
}

TEST_CASE("binarize against a range") {
    const ActivationMap a{0, 0, 2, 2, {0.1f, 0.9f, 0.5f, 0.4f}};
    CHECK(binarize_activations(a, ActivationRange{}).count() == 4);
    CHECK(binarize_activations(a, ActivationRange{1, 0.9f, INFINITY}).count() == 1);
    CHECK(binarize_activations(a, ActivationRange{1, std::nextafter(0.9f, 2.0f), INFINITY}).count() == 0);
    const auto m = binarize_activations(a, ActivationRange{1, 0.4f, 0.9f});
    CHECK(m.count() == 2);
    CHECK(m.get(0, 1));  // 0.5
    CHECK(m.get(1, 1));  // 0.4
    CHECK_FALSE(m.get(1, 0));  // 0.9 is the open end
}

TEST_CASE("range json keeps infinite bounds as null") {
    const ActivationRange r{2, -INFINITY, 1.25};
    const auto j = to_json(r);
    CHECK(j["lo"].is_null());
    const auto back = range_from_json(j);
    CHECK(back.range_id == 2);
    CHECK(std::isinf(back.lo));
    CHECK(back.hi == 1.25);
}

TEST_CASE("activation file round trip and corruption") {
    ActivationTensor t(3, 2, 4, 5);
    std::mt19937_64 rng(8);
    std::normal_distribution<float> g;
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t s = 0; s < 2; ++s)
            for (auto& v : t.map_values(n, s)) v = g(rng);
    t.sample_ids = {"img/a.jpg", "img/b.jpg"};
    const auto dir = oracle::temp_dir("acts");
    const auto p = dir / "a.ovceact";
    write_activations(p, t);
    const auto back = read_activations(p);
    CHECK(back == t);
    CHECK(back.map(2, 1).at(3, 4) == t.map(2, 1).at(3, 4));

    std::string bytes;
    {
        std::ifstream in(p, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) { std::ofstream(p, std::ios::binary) << b; };
    write(bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(read_activations(p), CorruptArchive);
    write(bytes + "xxxx");
    CHECK_THROWS_AS(read_activations(p), CorruptArchive);
    std::string v2 = bytes;
    v2[8] = 2;
    write(v2);
    CHECK_THROWS_AS(read_activations(p), VersionMismatch);
    std::string bad = bytes;
    bad[3] = 'X';
    write(bad);
    CHECK_THROWS_AS(read_activations(p), CorruptArchive);
    std::filesystem::remove_all(dir);
}

TEST_CASE("five binarized ranges partition every sample") {
    ActivationTensor t(2, 6, 7, 5);
    std::mt19937_64 rng(17);
    std::lognormal_distribution<float> g(0, 1);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t s = 0; s < 6; ++s)
            for (auto& v : t.map_values(n, s)) v = g(rng);
    ClusterConfig cfg;
    for (std::size_t n = 0; n < 2; ++n) {
        const auto na = binarize_neuron(t, n, 16, 12, cfg);
        REQUIRE(na.binarized.size() == 5);
        for (std::size_t s = 0; s < 6; ++s) {
            std::uint64_t total = 0;
            std::vector<Word> cover(na.binarized[0].mask.stride(), 0);
            for (const auto& b : na.binarized) {
                total += b.mask.sample(s).count();
                kernels::serial::or_into(cover, b.mask.sample_words(s));
                CHECK(b.sample_sizes[s] == b.mask.sample(s).count());
            }
            CHECK(total == 16u * 12u);
            CHECK(kernels::serial::popcount(cover) == 16u * 12u);
        }
    }
}
