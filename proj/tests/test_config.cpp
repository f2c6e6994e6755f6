#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hiva/config.hpp"

using namespace hiva;
using nlohmann::json;

TEST_CASE("minimal config fills documented defaults") {
    RunConfig c = parse_config(json::object());
    CHECK(c.k == 3);
    CHECK(c.lambda == doctest::Approx(1e-5));
    CHECK(c.threshold == doctest::Approx(0.5));
    CHECK(c.n_aus == 6);
    CHECK(c.backbone == "toy-conv");
    CHECK(c.stage1.lr == doctest::Approx(1e-5));
    CHECK(c.stage2.lr == doctest::Approx(1e-6));
    CHECK_FALSE(c.ablation.no_ddca);
}

TEST_CASE("negative lambda rejected naming the key path") {
    json doc = {{"loss", {{"lambda", -1.0}}}};
    CHECK_THROWS_WITH_AS(parse_config(doc), "loss.lambda: must be >= 0", ConfigError);
}

TEST_CASE("unknown key rejected with suggestion") {
    json doc = {{"modle", {{"d", 8}}}};
    try {
        parse_config(doc);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("modle") != std::string::npos);
        CHECK(msg.find("model") != std::string::npos);
    }
}

TEST_CASE("nested unknown key rejected") {
    json doc = {{"model", {{"widht", 8}}}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("k must respect n_aus") {
    json doc = {{"model", {{"n_aus", 4}}}, {"graph", {{"k", 4}}}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    doc["graph"]["k"] = 3;
    CHECK(parse_config(doc).k == 3);
}

TEST_CASE("cooccurrence must be symmetric with unit diagonal") {
    json base = {{"model", {{"n_aus", 2}, {"d", 8}, {"d_text", 8}}},
                 {"text", {{"encoder_heads", 2}, {"ctx_heads", 2}}},
                 {"graph", {{"k", 1}}}};
    json doc = base;
    doc["data"]["synthetic"] = {{"n_samples", 4},
                                {"cooccurrence", {{1.0, 0.5}, {0.4, 1.0}}}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    doc["data"]["synthetic"]["cooccurrence"] = {{1.0, 0.5}, {0.5, 1.0}};
    RunConfig c = parse_config(doc);
    REQUIRE(c.synthetic.has_value());
    CHECK(c.synthetic->cooccurrence[0][1] == doctest::Approx(0.5));
}

TEST_CASE("config hash changes iff a schema-visible value changes") {
    json doc = {{"model", {{"d", 32}}}};
    RunConfig a = parse_config(doc);
    RunConfig b = parse_config(doc);
    CHECK(a.hash() == b.hash());
    doc["model"]["d"] = 64;
    CHECK(parse_config(doc).hash() != a.hash());
}

TEST_CASE("ablation toggles do not change the config hash") {
    json doc = {{"model", {{"d", 32}}}};
    RunConfig a = parse_config(doc);
    doc["ablation"] = {{"no_ddca", true}, {"no_text", true}};
    RunConfig b = parse_config(doc);
    CHECK(b.ablation.no_ddca);
    CHECK(a.hash() == b.hash());
}

TEST_CASE("dotted-path overrides reach nested keys") {
    json doc = {{"model", {{"d", 32}}}};
    json ov = {{"model.d", 16}, {"train.seed", 7}, {"ablation.no_ddca", true}};
    RunConfig c = parse_config(apply_overrides(doc, ov));
    CHECK(c.d == 16);
    CHECK(c.seed == 7);
    CHECK(c.ablation.no_ddca);
}

TEST_CASE("feature grid side per backbone") {
    RunConfig c;
    c.image_size = 32;
    c.backbone = "toy-conv";
    CHECK(c.feature_hw() == 4);
    c.image_size = 224;
    c.backbone = "swin-like";
    CHECK(c.feature_hw() == 7);
}

TEST_CASE("fnv1a64 matches known vector") {
    // empty input returns the offset basis
    CHECK(fnv1a64(nullptr, 0) == 14695981039346656037ull);
    const char* s = "a";
    CHECK(fnv1a64(s, 1) == 0xaf63dc4c8601ec8cull);
    CHECK(hash_hex(0xaf63dc4c8601ec8cull) == "af63dc4c8601ec8c");
}

TEST_CASE("wrong types rejected") {
    json doc = {{"model", {{"d", "sixty-four"}}}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    json doc2 = {{"train", {{"stage1", {{"lr", 0.0}}}}}};
    CHECK_THROWS_AS(parse_config(doc2), ConfigError);
}
