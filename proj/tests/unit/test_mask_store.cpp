#include <doctest.h>

#include "oracles.hpp"
#include "ovce/error.hpp"
#include "ovce/hash.hpp"
#include "ovce/mask_store.hpp"
#include "ovce/synth.hpp"

#include <cstring>

using namespace ovce;
using nlohmann::json;

namespace {

ConceptRegistry colors() {
    return ConceptRegistry::from_json(json::parse(R"({"subsets":[
        {"label":"colors","concepts":[{"name":"red"},{"name":"blue"}]},
        {"label":"parts","concepts":[{"name":"wing"},{"name":"tail"},{"name":"beak"}]}]})"));
}

MaskArchive small_archive() {
    MaskArchive a(colors(), 2, 2, 2);
    a.set_labelmap({0, 0, 2, 2, {0, 0, 1, 0}});
    a.set_labelmap({1, 0, 2, 2, {1, 1, 1, 1}});
    a.set_labelmap({0, 1, 2, 2, {2, 3, 4, 2}});
    a.set_labelmap({1, 1, 2, 2, {4, 4, 4, 3}});
    a.seal();
    return a;
}

void put_u32(std::string& s, std::size_t at, std::uint32_t v) { std::memcpy(s.data() + at, &v, 4); }

std::uint32_t crc_of(const std::string& s, std::size_t from, std::size_t to) {
    return crc32({reinterpret_cast<const std::uint8_t*>(s.data()) + from, to - from});
}

/// Checks that every subset's concept masks partition each sample's pixels.
bool partitions(const MaskArchive& a) {
    for (const auto& s : a.manifest().subsets())
        for (std::size_t x = 0; x < a.samples(); ++x) {
            std::vector<Word> cover(a.plane(s.concept_ids.front()).stride(), 0);
            std::uint64_t total = 0;
            for (ConceptId c : s.concept_ids) {
                auto w = a.plane(c).sample_words(x);
                total += kernels::serial::popcount(w);
                kernels::serial::or_into(cover, w);
            }
            if (total != a.pixels() || kernels::serial::popcount(cover) != a.pixels()) return false;
        }
    return true;
}

} // namespace

TEST_CASE("label map binarization") {
    const auto reg = colors();
    SUBCASE("2x2 red/blue grid") {
        const auto masks = binarize_labelmap({0, 0, 2, 2, {0, 0, 1, 0}}, reg);
        REQUIRE(masks.size() == 2);
        CHECK(masks[0].first == 0);
        CHECK(masks[0].second.count() == 3);
        CHECK(masks[1].second.count() == 1);
        CHECK(masks[1].second.get(0, 1));
    }
    SUBCASE("single concept fills its mask") {
        const auto masks = binarize_labelmap({0, 1, 3, 3, std::vector<ConceptId>(9, 3)}, reg);
        CHECK(masks[0].second.count() == 0);
        CHECK(masks[1].second.count() == 9);
        CHECK(masks[2].second.count() == 0);
    }
    SUBCASE("foreign id") {
        CHECK_THROWS_AS(binarize_labelmap({0, 0, 2, 2, {0, 0, 2, 0}}, reg), UnknownConceptId);
    }
}

TEST_CASE("compute_stats") {
    SUBCASE("full 3x3") {
        const auto m = BinaryMask::filled(3, 3);
        const auto st = compute_stats(m.view(), {{1, m.view()}});
        CHECK(st.size == 9);
        CHECK(st.bbox->area() == 9);
        CHECK(st.inscribed->area() == 9);
        CHECK(st.ims.at(1) == 9);
    }
    SUBCASE("L shape") {
        BinaryMask m(3, 3);
        for (auto [x, y] : std::vector<std::pair<int, int>>{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}}) m.set(x, y);
        const auto st = compute_stats(m.view(), {});
        CHECK(st.size == 5);
        CHECK(st.bbox->area() == 9);
        CHECK(st.inscribed->area() == 3);
    }
    SUBCASE("empty") {
        BinaryMask m(3, 3), act = BinaryMask::filled(3, 3);
        const auto st = compute_stats(m.view(), {{1, act.view()}, {2, act.view()}});
        CHECK(st.size == 0);
        CHECK_FALSE(st.bbox);
        CHECK_FALSE(st.inscribed);
        CHECK(st.ims.at(1) == 0);
        CHECK(st.ims.at(2) == 0);
    }
    SUBCASE("shape mismatch") {
        BinaryMask m(3, 3), act(2, 2);
        CHECK_THROWS_AS(compute_stats(m.view(), {{1, act.view()}}), ShapeMismatch);
    }
}

TEST_CASE("sealed archive derives planes and geometry") {
    const auto a = small_archive();
    CHECK(a.plane(0).sample(0).count() == 3);
    CHECK(a.plane(1).sample(1).count() == 4);
    CHECK(a.plane(4).sample(0).count() == 1);
    CHECK(a.geometry(2)[0].size == 2);
    CHECK(a.geometry(2)[0].inscribed->area() == 1);
    CHECK(a.geometry(2)[0].bbox->area() == 4);
    CHECK_FALSE(a.geometry(2)[1].bbox);
    CHECK(partitions(a));
    CHECK_THROWS_AS(a.plane(77), UnknownConceptId);
}

TEST_CASE("sealing rejects a pixel outside the subset") {
    MaskArchive a(colors(), 2, 2, 1);
    a.set_labelmap({0, 0, 2, 2, {0, 0, 3, 0}});
    CHECK_THROWS_AS(a.seal(), PartitionViolation);
}

TEST_CASE("archive round trip") {
    const auto a = small_archive();
    for (bool derived : {false, true}) {
        const std::string bytes = encode_archive(a, derived);
        const auto b = decode_archive(bytes);
        CHECK(b == a);
        CHECK(b.plane(3) == a.plane(3));
        CHECK(b.geometry(4) == a.geometry(4));
        CHECK(encode_archive(b, derived) == bytes);
    }
    const auto dir = oracle::temp_dir("archive");
    write_archive(dir / "m.ovcemsk", a);
    CHECK(read_archive(dir / "m.ovcemsk") == a);
    std::filesystem::remove_all(dir);
}

TEST_CASE("generated archives round trip and partition") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto w = generate(oracle::search_spec(seed, 8));
        CHECK(partitions(w.archive));
        const auto back = decode_archive(encode_archive(w.archive, true));
        CHECK(back == w.archive);
        CHECK(partitions(back));
    }
}

TEST_CASE("corrupt archives") {
    const auto a = small_archive();
    const std::string good = encode_archive(a);

    SUBCASE("truncated at every length") {
        for (std::size_t n = 0; n < good.size(); ++n)
            CHECK_THROWS_AS(decode_archive(std::string_view(good).substr(0, n)), CorruptArchive);
    }
    SUBCASE("trailing bytes") { CHECK_THROWS_AS(decode_archive(good + "x"), CorruptArchive); }
    SUBCASE("bad magic") {
        std::string s = good;
        s[0] = 'X';
        CHECK_THROWS_AS(decode_archive(s), CorruptArchive);
    }
    SUBCASE("future version") {
        std::string s = good;
        put_u32(s, 8, 2);
        CHECK_THROWS_AS(decode_archive(s), VersionMismatch);
    }
    SUBCASE("flipped label byte fails its checksum") {
        std::string s = good;
        s[s.size() - 6] ^= 1;
        CHECK_THROWS_AS(decode_archive(s), CorruptArchive);
    }
    SUBCASE("foreign label with a valid checksum") {
        // last record: subset 1 sample 1, four u16 labels then crc
        std::string s = good;
        const std::size_t rec = s.size() - (8 + 8 + 4);
        const ConceptId foreign = 0;
        std::memcpy(s.data() + rec + 8, &foreign, 2);
        put_u32(s, s.size() - 4, crc_of(s, rec, s.size() - 4));
        CHECK_THROWS_AS(decode_archive(s), PartitionViolation);
    }
}

TEST_CASE("overlapping sidecar masks violate the partition") {
    const auto a = small_archive();
    std::string s = encode_archive(a, true);
    // sidecar records: id, samples*stride words, crc; concepts in id order.
    const std::size_t stride = a.plane(0).stride();
    const std::size_t rec_len = 4 + a.samples() * stride * 8 + 4;
    const std::size_t first = s.size() - a.manifest().size() * rec_len;
    // give red the blue pixel of sample 0 as well
    Word w;
    std::memcpy(&w, s.data() + first + 4, 8);
    w |= Word{1} << 2;
    std::memcpy(s.data() + first + 4, &w, 8);
    put_u32(s, first + rec_len - 4, crc_of(s, first, first + rec_len - 4));
    CHECK_THROWS_AS(decode_archive(s), PartitionViolation);
}

TEST_CASE("resampling an archive keeps the partition") {
    const auto w = generate(oracle::search_spec(9, 6));
    for (auto [tw, th] : {std::pair{8, 8}, std::pair{32, 24}, std::pair{5, 7}}) {
        const auto r = w.archive.resampled(tw, th);
        CHECK(r.width() == tw);
        CHECK(r.height() == th);
        CHECK(partitions(r));
        for (ConceptId c : {ConceptId{1}, ConceptId{2}})
            for (std::size_t x = 0; x < r.samples(); ++x)
                CHECK(r.plane(c).sample_mask(x) == resample_mask(w.archive.plane(c).sample(x), tw, th));
    }
}

TEST_CASE("subset split and merge") {
    const auto a = small_archive();
    const auto p0 = a.subset_archive(0), p1 = a.subset_archive(1);
    CHECK(p0.has_subset(0));
    CHECK_FALSE(p0.has_subset(1));
    CHECK(p0.manifest().size() == 2);
    const auto m = MaskArchive::merge({&p1, &p0});
    CHECK(m == a);
    CHECK(m.content_hash() == a.content_hash());
    const MaskArchive other(colors(), 3, 3, 2);
    CHECK_THROWS_AS(MaskArchive::merge({&p0, &other}), ShapeMismatch);
}
