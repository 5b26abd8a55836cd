#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "shellac/config.hpp"
#include "shellac/error.hpp"

using namespace shellac;

namespace {

std::string error_of(const std::string& text, const std::vector<std::string>& overrides = {}) {
    try {
        parse_config_text(text, overrides);
    } catch (const UsageError& e) {
        return e.what();
    }
    return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("empty config yields defaults") {
    const auto t = parse_config_text("");
    CHECK(t.training == TrainingConfig{});
    CHECK(t.training.learning_rate == 2e-4);
    CHECK(t.training.ema_rate == 0.999);
    CHECK(t.data.fs == 22050.0);
    CHECK(t.sampler == SamplerRun{});
    CHECK(!t.guide);
    // The default network frame is one revolution snapped to the total stride.
    CHECK(t.network.sample_count == network_frame_length(NetworkConfig{}, 22050.0));
    CHECK(t.network.sample_count % t.network.total_stride() == 0);
    CHECK(parse_config_text("{}").network == t.network);
}

TEST_CASE("network frame length") {
    CHECK(network_frame_length(NetworkConfig{}, 22050.0) == 16960);  // 16962 floored to 64
    CHECK(network_frame_length(NetworkConfig::desk(), 8000.0) == 6154);
}

TEST_CASE("sections and comments parse") {
    const auto t = parse_config_text(R"({
        // desk run
        "network": {"preset": "desk"},
        "data": {"fs": 8000, "manifest": "corpus.txt",
                 "normalization": {"gain_db": -12, "mode": "literal"}},
        "training": {"batch_size": 4, "total_iterations": 2000, "seed": 7},
        "sampler": {"steps": 50, "tau0": 0.6, "tau_p": 0.3, "revolutions": 4},
        "guide": {"preset": "hiss-clicks", "clicks": null}
    })");
    CHECK(t.network.downsample_factors == NetworkConfig::desk().downsample_factors);
    CHECK(t.network.sample_count == 6154);
    CHECK(t.data.normalization.mode == NormalizationMode::literal);
    CHECK(t.data.normalization.gain_db == -12.0);
    CHECK(t.training.batch_size == 4);
    CHECK(t.training.total_iterations == 2000);
    CHECK(t.sampler.tau_p == 0.3);
    REQUIRE(t.guide);
    CHECK(t.guide->fs == 8000.0);  // inherited from data
    CHECK(t.guide->hiss);
    CHECK(!t.guide->clicks);
}

TEST_CASE("dotted overrides") {
    auto t = parse_config_text("", {"training.learning_rate=2e-4"});
    CHECK(t.training.learning_rate == 2e-4);
    t = parse_config_text(R"({"training": {"learning_rate": 1e-3}})", {"training.learning_rate=5e-5", "data.manifest=list.txt"});
    CHECK(t.training.learning_rate == 5e-5);
    CHECK(t.data.manifest == "list.txt");
    t = parse_config_text("", {"sampler.tau_p=0.5", "sampler.revolutions=3", "sampler.tau0=0.9"});
    CHECK(t.sampler.revolutions == 3);
    t = parse_config_text("", {"sampler.clip_denoised=4", "training.ema_warmup=false"});
    CHECK(t.sampler.clip_denoised == 4.0);
    CHECK_FALSE(t.training.ema_warmup);
    CHECK_FALSE(parse_config_text("").sampler.clip_denoised.has_value());

    nlohmann::json doc = nlohmann::json::object();
    apply_override(doc, "a.b.c=[1,2]");
    CHECK(doc["a"]["b"]["c"] == nlohmann::json::array({1, 2}));
    CHECK_THROWS_AS(apply_override(doc, "novalue"), UsageError);
    CHECK_THROWS_AS(apply_override(doc, "=3"), UsageError);
}

TEST_CASE("unknown keys and bad values name the key") {
    CHECK(contains(error_of(R"({"training": {"learning_rat": 1}})"), "training.learning_rat"));
    CHECK(contains(error_of(R"({"trainig": {}})"), "trainig"));
    CHECK(contains(error_of(R"({"training": {"batch_size": "four"}})"), "training.batch_size"));
    CHECK(contains(error_of(R"({"training": {"ema_rate": 1.5}})"), "training"));
    CHECK(contains(error_of(R"({"network": {"preset": "huge"}})"), "network.preset"));
    CHECK(contains(error_of(R"({"guide": {"hiss": {"eq_bands": [{"center": 1, "gian_db": 3}]}}})"),
                   "guide.hiss.eq_bands[0].gian_db"));
    CHECK(contains(error_of("", {"sampler.stepz=3"}), "sampler.stepz"));
}

TEST_CASE("syntax errors report line and column") {
    const auto msg = error_of("{\n  \"training\": {\n    \"seed\": 3,,\n  }\n}");
    CHECK(contains(msg, "<config>:3:15:"));  // origin:line:column
    CHECK(contains(error_of("[1, 2]"), "object"));
}

TEST_CASE("sections round trip through JSON") {
    TrainingConfig tc;
    tc.learning_rate = 3e-4;
    tc.seed = 12345678901234ULL;
    tc.grad_clip = 1.0;
    CHECK(training_from_json(to_json(tc)) == tc);

    auto nc = NetworkConfig::desk();
    CHECK(network_from_json(to_json(nc)) == nc);

    SamplerRun sr;
    sr.tau_p = 0.25;
    sr.revolutions = 5;
    CHECK(sampler_from_json(to_json(sr)) == sr);

    for (const char* name : {"filtered-noise-thumps", "hiss-clicks"}) {
        auto g = GuideSpec::preset(name, 16000.0);
        g.hum = HumSpec{60.0, {0.01, 0.002}, 4};
        g.rumble = RumbleSpec{20.0, -INFINITY};
        CHECK(guide_from_json(to_json(g)) == g);
    }

    DataConfig dc;
    dc.manifest = "m.txt";
    dc.normalization.mode = NormalizationMode::literal;
    const auto back = data_from_json(to_json(dc));
    CHECK(back.manifest == "m.txt");
    CHECK(back.normalization.mode == NormalizationMode::literal);
}

TEST_CASE("config files") {
    const auto dir = std::filesystem::temp_directory_path() / "shellac_test_config";
    std::filesystem::create_directories(dir);
    const auto p = dir / "run.json";
    std::ofstream(p) << R"({"training": {"seed": 9}})";
    CHECK(parse_config(p).training.seed == 9);
    CHECK(parse_config(p, {"training.seed=10"}).training.seed == 10);
    CHECK_THROWS_AS(parse_config(dir / "missing.json"), IoError);
}
