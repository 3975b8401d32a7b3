#include <catch_amalgamated.hpp>

#include <bit>
#include <cstdint>

#include "cloudclass/core/checkpoint.hpp"
#include "cloudclass/core/manifest.hpp"
#include "cloudclass/core/object_io.hpp"
#include "cloudclass/core/rng.hpp"
#include "cloudclass/core/types.hpp"

#include "helpers.hpp"

using namespace cloudclass;

TEST_CASE("SOBN file size of a one-point object is header + xyz + mask byte") {
    testutil::TempDir dir("sobn_size");
    ObjectInstance obj;
    obj.cloud.points = {{1.0f, 2.0f, 3.0f}};
    obj.mask = {1};
    const auto path = dir.path() / "one.sobn";
    write_object(obj, path);
    CHECK(std::filesystem::file_size(path) == 24 + 12 + 1);
}

TEST_CASE("SOBN round trip reproduces the object bit-exactly") {
    testutil::TempDir dir("sobn_rt");
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 40ull, 500ull}) {
        auto obj = testutil::random_object(seed, 1 + seed % 97);
        obj.variant = VariantTag::kPbT50Rs;
        obj.sample_index = static_cast<std::uint32_t>(seed % 5);
        const auto path = dir.path() / (std::to_string(seed) + ".sobn");
        write_object(obj, path);
        const ObjectInstance back = read_object(path, obj.scene_id, obj.variant);
        REQUIRE(back == obj);
        for (std::size_t i = 0; i < obj.cloud.count(); ++i) {
            CHECK(std::bit_cast<std::uint32_t>(back.cloud.points[i].x) ==
                  std::bit_cast<std::uint32_t>(obj.cloud.points[i].x));
        }
    }
}

TEST_CASE("writing the same object twice gives byte-identical files") {
    testutil::TempDir dir("sobn_bytes");
    const auto obj = testutil::random_object(99, 64);
    write_object(obj, dir.path() / "a.sobn");
    write_object(obj, dir.path() / "b.sobn");
    CHECK(testutil::read_bytes(dir.path() / "a.sobn") ==
          testutil::read_bytes(dir.path() / "b.sobn"));
}

TEST_CASE("SOBN reader rejects corrupted input with a byte offset") {
    testutil::TempDir dir("sobn_bad");
    const auto obj = testutil::random_object(7, 16);
    const auto path = dir.path() / "x.sobn";
    write_object(obj, path);

    SECTION("corrupted magic") {
        auto bytes = testutil::read_bytes(path);
        bytes[0] = 'X';
        testutil::write_bytes(path, bytes);
        try {
            read_object(path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset == 0);
        }
    }

    SECTION("truncated mask payload") {
        auto bytes = testutil::read_bytes(path);
        bytes.resize(bytes.size() - 3); // drop part of the mask
        testutil::write_bytes(path, bytes);
        CHECK_THROWS_AS(read_object(path), FormatError);
    }

    SECTION("unsupported version") {
        auto bytes = testutil::read_bytes(path);
        bytes[4] = 9;
        testutil::write_bytes(path, bytes);
        try {
            read_object(path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset == 4);
        }
    }

    SECTION("trailing bytes") {
        auto bytes = testutil::read_bytes(path);
        bytes.push_back(0);
        testutil::write_bytes(path, bytes);
        CHECK_THROWS_AS(read_object(path), FormatError);
    }
}

TEST_CASE("write_object validates object invariants") {
    testutil::TempDir dir("sobn_invalid");
    ObjectInstance obj;
    obj.cloud.points = {{0, 0, 0}, {1, 1, 1}};
    obj.mask = {0, 0}; // no foreground
    CHECK_THROWS_AS(write_object(obj, dir.path() / "bad.sobn"), ValidationError);

    obj.mask = {1}; // wrong length
    CHECK_THROWS_AS(write_object(obj, dir.path() / "bad.sobn"), ValidationError);
}

TEST_CASE("manifest: empty file parses to an empty manifest") {
    testutil::TempDir dir("manifest_empty");
    const auto path = dir.path() / "m.tsv";
    { std::ofstream out(path); }
    CHECK(load_manifest(path).entries.empty());
}

TEST_CASE("manifest rejects a scene occurring in both splits, naming it") {
    Manifest m;
    m.entries.push_back({"a.sobn", "s1", 0, VariantTag::kObjOnly, 0, Split::kTrain});
    m.entries.push_back({"b.sobn", "s1", 1, VariantTag::kObjOnly, 0, Split::kTest});
    try {
        m.validate();
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("s1") != std::string::npos);
    }
}

TEST_CASE("manifest rejects duplicate paths") {
    Manifest m;
    m.entries.push_back({"a.sobn", "s1", 0, VariantTag::kObjOnly, 0, Split::kTrain});
    m.entries.push_back({"a.sobn", "s2", 1, VariantTag::kObjOnly, 0, Split::kTrain});
    CHECK_THROWS_AS(m.validate(), ValidationError);
}

TEST_CASE("manifest round trip over synthetic entries is identity") {
    testutil::TempDir dir("manifest_rt");
    Rng rng(5);
    Manifest m;
    for (int i = 0; i < 100; ++i) {
        ManifestEntry e;
        e.path = "objects/obj_" + std::to_string(i) + ".sobn";
        // even scenes train, odd scenes test, so splits stay scene-disjoint
        const auto scene = rng.below(20);
        e.scene_id = "scene_" + std::to_string(scene);
        e.class_id = static_cast<std::uint32_t>(rng.below(15));
        e.variant = static_cast<VariantTag>(rng.below(6));
        e.sample_index = is_perturbed(e.variant) ? static_cast<std::uint32_t>(rng.below(5)) : 0;
        e.split = scene % 2 == 0 ? Split::kTrain : Split::kTest;
        m.entries.push_back(std::move(e));
    }
    const auto path = dir.path() / "m.tsv";
    save_manifest(m, path);
    CHECK(load_manifest(path) == m);
}

TEST_CASE("derived seeds are pure functions with independent purpose streams") {
    const SeedSpec spec{42};
    CHECK(spec.derive("scene_a", 3, 1, "perturb") == spec.derive("scene_a", 3, 1, "perturb"));
    CHECK(spec.derive("scene_a", 3, 1, "perturb") != spec.derive("scene_a", 3, 1, "sample"));
    CHECK(spec.derive("scene_a", 3, 1, "perturb") != spec.derive("scene_a", 3, 2, "perturb"));
    CHECK(spec.derive("scene_a", 3, 1, "perturb") != spec.derive("scene_b", 3, 1, "perturb"));
    CHECK(spec.derive("scene_a", 3, 1, "perturb") != SeedSpec{43}.derive("scene_a", 3, 1, "perturb"));
    // field boundaries matter: ("ab", x) vs ("a", "bx") style collisions
    CHECK(spec.derive("ab", 0, 0, "c") != spec.derive("a", 0, 0, "bc"));
}

TEST_CASE("rng streams are deterministic and distribution helpers behave") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform(2.0, 5.0);
        CHECK(u >= 2.0);
        CHECK(u < 5.0);
        CHECK(r.below(10) < 10);
    }
    double acc = 0;
    Rng g(8);
    for (int i = 0; i < 20000; ++i) acc += g.normal(0.0, 1.0);
    CHECK(std::abs(acc / 20000.0) < 0.03);
}

TEST_CASE("SOBW checkpoint round trip preserves names, shapes, values") {
    testutil::TempDir dir("sobw_rt");
    std::vector<NamedArray> params;
    Rng rng(11);
    for (int i = 0; i < 5; ++i) {
        NamedArray p;
        p.name = "layer" + std::to_string(i) + ".weight";
        p.shape = {static_cast<std::uint32_t>(1 + rng.below(8)),
                   static_cast<std::uint32_t>(1 + rng.below(8))};
        p.values.resize(p.shape[0] * p.shape[1]);
        for (auto& v : p.values) v = static_cast<float>(rng.uniform(-1, 1));
        params.push_back(std::move(p));
    }
    const auto path = dir.path() / "w.sobw";
    write_checkpoint(params, path);
    CHECK(read_checkpoint(path) == params);

    write_checkpoint(params, dir.path() / "w2.sobw");
    CHECK(testutil::read_bytes(path) == testutil::read_bytes(dir.path() / "w2.sobw"));
}

TEST_CASE("SOBW rejects duplicate parameter names and bad magic") {
    testutil::TempDir dir("sobw_bad");
    std::vector<NamedArray> params{{"w", {1}, {1.0f}}, {"w", {1}, {2.0f}}};
    CHECK_THROWS_AS(write_checkpoint(params, dir.path() / "x.sobw"), ValidationError);

    write_checkpoint({{"w", {1}, {1.0f}}}, dir.path() / "ok.sobw");
    auto bytes = testutil::read_bytes(dir.path() / "ok.sobw");
    bytes[1] = 'X';
    testutil::write_bytes(dir.path() / "ok.sobw", bytes);
    CHECK_THROWS_AS(read_checkpoint(dir.path() / "ok.sobw"), FormatError);
}

TEST_CASE("class table fixes the fifteen scan categories") {
    const ClassTable table;
    REQUIRE(table.size() == 15);
    CHECK(table.name_of(0) == "bag");
    CHECK(table.name_of(14) == "toilet");
    CHECK(table.id_of("chair") == 5);
    for (std::uint32_t i = 0; i < table.size(); ++i) CHECK(table.id_of(table.name_of(i)) == i);
    CHECK_THROWS_AS(table.id_of("spaceship"), ValidationError);
    CHECK_THROWS_AS(ClassTable({"a", "a"}), ValidationError);
}

TEST_CASE("variant tags map to their canonical names") {
    for (const auto& [tag, name] : kVariantNames) CHECK(parse_variant(name) == tag);
    CHECK(variant_name(VariantTag::kPbT50Rs) == "PB_T50_RS");
    CHECK_THROWS_AS(parse_variant("PB_T75"), ValidationError);
}

TEST_CASE("aabb containment is closed on both faces") {
    const Aabb box{{0, 0, 0}, {1, 1, 1}};
    CHECK(box.contains({0, 0, 0}));
    CHECK(box.contains({1, 1, 1}));
    CHECK(box.contains({0.5, 0.5, 0.5}));
    CHECK_FALSE(box.contains({1.0000001, 0.5, 0.5}));
    CHECK(box.valid());
    CHECK_FALSE(Aabb{{1, 0, 0}, {0, 1, 1}}.valid());
}
