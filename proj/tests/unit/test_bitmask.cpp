#include <doctest.h>

#include "oracles.hpp"
#include "ovce/bitmask.hpp"
#include "ovce/error.hpp"

#include <random>

using namespace ovce;

namespace {

BinaryMask from_points(int w, int h, std::initializer_list<std::pair<int, int>> pts) {
    BinaryMask m(w, h);
    for (auto [x, y] : pts) m.set(x, y);
    return m;
}

} // namespace

TEST_CASE("set/get and count") {
    BinaryMask m(5, 3);
    CHECK(m.count() == 0);
    m.set(4, 2);
    m.set(0, 0);
    CHECK(m.get(4, 2));
    CHECK(m.get(0, 0));
    CHECK_FALSE(m.get(1, 0));
    CHECK(m.count() == 2);
    m.set(4, 2, false);
    CHECK(m.count() == 1);
    CHECK(BinaryMask::filled(9, 9).count() == 81);
}

TEST_CASE("bounding box and inscribed rectangle of simple shapes") {
    SUBCASE("full 3x3") {
        const auto m = BinaryMask::filled(3, 3);
        CHECK(bounding_box(m.view())->area() == 9);
        CHECK(largest_inscribed_rectangle(m.view())->area() == 9);
    }
    SUBCASE("L shape picks the 3x1 column") {
        const auto m = from_points(3, 3, {{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}});
        CHECK(m.count() == 5);
        CHECK(bounding_box(m.view())->area() == 9);
        const auto r = largest_inscribed_rectangle(m.view());
        REQUIRE(r);
        CHECK(r->area() == 3);
    }
    SUBCASE("empty") {
        BinaryMask m(4, 4);
        CHECK_FALSE(bounding_box(m.view()));
        CHECK_FALSE(largest_inscribed_rectangle(m.view()));
    }
    SUBCASE("single pixel") {
        const auto m = from_points(4, 3, {{3, 1}});
        CHECK(*bounding_box(m.view()) == Rect{3, 1, 4, 2});
        CHECK(*largest_inscribed_rectangle(m.view()) == Rect{3, 1, 4, 2});
    }
}

TEST_CASE("inscribed rectangle matches brute force on random masks") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> side(1, 16);
    std::uniform_real_distribution<double> dens(0.2, 0.95);
    for (int i = 0; i < 300; ++i) {
        const int w = side(rng), h = side(rng);
        const auto g = oracle::random_grid(rng, w, h, dens(rng));
        const auto m = oracle::from_grid(g);
        const auto r = largest_inscribed_rectangle(m.view());
        const auto want = oracle::max_rect_area(g);
        CHECK((r ? r->area() : 0) == want);
        if (r) CHECK(oracle::all_ones(g, *r));
        CHECK(bounding_box(m.view()) == oracle::bbox(g));
    }
}

TEST_CASE("overlap_area") {
    CHECK(overlap_area(Rect{0, 0, 4, 4}, Rect{2, 2, 6, 6}) == 4);
    CHECK(overlap_area(Rect{0, 0, 2, 2}, Rect{2, 0, 4, 2}) == 0);
    CHECK(overlap_area(std::nullopt, Rect{0, 0, 2, 2}) == 0);
}

TEST_CASE("nearest-neighbour resampling") {
    SUBCASE("all ones stays all ones") {
        const auto r = resample_mask(BinaryMask::filled(4, 4), 8, 8);
        CHECK(r.count() == 64);
    }
    SUBCASE("same shape is bit-identical") {
        std::mt19937_64 rng(3);
        const auto m = oracle::from_grid(oracle::random_grid(rng, 7, 5, 0.5));
        CHECK(resample_mask(m, 7, 5) == m);
    }
    SUBCASE("checkerboard replicates into 2x2 blocks") {
        const auto m = from_points(2, 2, {{0, 0}, {1, 1}});
        const auto r = resample_mask(m, 4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(r.get(x, y) == ((x / 2) == (y / 2)));
    }
    SUBCASE("downsampling picks the centre sample") {
        // 4 -> 2 reads source columns 1 and 3
        const auto m = from_points(4, 1, {{1, 0}});
        const auto r = resample_mask(m, 2, 1);
        CHECK(r.get(0, 0));
        CHECK_FALSE(r.get(1, 0));
    }
    CHECK_THROWS_AS(resample_mask(BinaryMask(2, 2), 0, 3), ShapeMismatch);
}

TEST_CASE("mask plane pads each sample to whole words") {
    MaskPlane p(3, 9, 9);  // 81 bits -> 2 words
    CHECK(p.stride() == 2);
    p.set(1, 8, 8);
    CHECK(p.sample(1).get(8, 8));
    CHECK(p.sample(1).count() == 1);
    CHECK(p.sample(0).count() == 0);
    CHECK(p.sample(2).count() == 0);
    BinaryMask m = BinaryMask::filled(9, 9);
    p.set_sample(2, m);
    CHECK(p.sample_mask(2) == m);
}
