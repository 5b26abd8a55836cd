#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "shellac/checkpoint.hpp"
#include "shellac/error.hpp"

using namespace shellac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "shellac_test_checkpoint";
    fs::create_directories(dir);
    return dir / name;
}

class GaussianSource final : public BatchSource {
public:
    GaussianSource(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), rng_(seed) {}
    std::vector<std::vector<double>> next() override {
        std::vector<std::vector<double>> b(batch_, std::vector<double>(n_));
        for (auto& f : b) rng_.fill_normal(f);
        return b;
    }
    std::string state() const override { return rng_.state(); }
    void restore(const std::string& s) override { rng_.set_state(s); }

private:
    std::size_t n_, batch_;
    Rng rng_;
};

Checkpoint make(const NetworkConfig& nc, long iterations) {
    UNet net(nc);
    UNetModel model(net);
    Checkpoint c;
    c.network = nc;
    c.training.batch_size = 2;
    c.training.learning_rate = 1e-3;
    c.training.total_iterations = iterations;
    c.data.manifest = "corpus.txt";
    c.state = TrainerState::fresh(net.init_params(1), 2);
    GaussianSource src(static_cast<std::size_t>(nc.sample_count), 2, 3);
    train(model, c.training, c.state, src, [&](const TrainerState&, const BatchSource& d) { c.data_state = d.state(); });
    return c;
}

void check_same(const Checkpoint& a, const Checkpoint& b) {
    CHECK(a.network == b.network);
    CHECK(a.training == b.training);
    CHECK(a.data.manifest == b.data.manifest);
    CHECK(a.state.iteration == b.state.iteration);
    CHECK(a.state.adam.step == b.state.adam.step);
    CHECK(a.state.rng.state() == b.state.rng.state());
    CHECK(a.data_state == b.data_state);
    REQUIRE(a.state.params.size() == b.state.params.size());
    for (std::size_t i = 0; i < a.state.params.size(); ++i) {
        CHECK(a.state.params.arrays[i].name == b.state.params.arrays[i].name);
        CHECK(a.state.params.arrays[i].trainable == b.state.params.arrays[i].trainable);
        CHECK(a.state.params.arrays[i].data == b.state.params.arrays[i].data);
        CHECK(a.state.params.ema[i] == b.state.params.ema[i]);
        CHECK(a.state.adam.m[i] == b.state.adam.m[i]);
        CHECK(a.state.adam.v[i] == b.state.adam.v[i]);
    }
}

}  // namespace

TEST_CASE("checkpoint round trip is exact") {
    const auto c = make(testing::tiny_config(), 3);
    const auto p = scratch("rt.ckpt");
    save_checkpoint(p, c);
    CHECK(!fs::exists(fs::path(p.string() + ".tmp")));
    check_same(c, load_checkpoint(p));

    const auto meta = checkpoint_metadata(p);
    CHECK(meta.at("iteration") == 3);
    CHECK(meta.at("parameter_count") == c.state.params.scalar_count());
}

TEST_CASE("truncated and foreign files are data errors") {
    const auto c = make(testing::tiny_config(), 1);
    const auto p = scratch("t.ckpt");
    save_checkpoint(p, c);
    const auto size = fs::file_size(p);
    for (auto keep : {size - 1, size - 9, size / 2, std::uintmax_t{20}, std::uintmax_t{4}}) {
        const auto q = scratch("cut.ckpt");
        fs::copy_file(p, q, fs::copy_options::overwrite_existing);
        fs::resize_file(q, keep);
        CHECK_THROWS_AS(load_checkpoint(q), DataError);
    }
    const auto junk = scratch("junk.ckpt");
    std::ofstream(junk) << "not a checkpoint at all";
    CHECK_THROWS_AS(load_checkpoint(junk), DataError);
    CHECK_THROWS_AS(load_checkpoint(scratch("absent.ckpt")), IoError);
}

TEST_CASE("layout mismatch is rejected") {
    auto c = make(testing::tiny_config(), 0);
    c.state.params.arrays.pop_back();
    c.state.params.ema.pop_back();
    c.state.adam.m.pop_back();
    c.state.adam.v.pop_back();
    const auto p = scratch("layout.ckpt");
    save_checkpoint(p, c);
    CHECK_THROWS_AS(load_checkpoint(p), DataError);
}

TEST_CASE("resuming from a saved file is bit identical") {
    const auto nc = testing::tiny_config();
    UNet net(nc);
    UNetModel model(net);
    TrainingConfig tc;
    tc.batch_size = 2;
    tc.learning_rate = 1e-3;
    tc.total_iterations = 8;
    tc.checkpoint_interval = 4;

    auto full = TrainerState::fresh(net.init_params(5), 6);
    GaussianSource src(static_cast<std::size_t>(nc.sample_count), 2, 7);
    const auto p = scratch("mid.ckpt");
    train(model, tc, full, src, [&](const TrainerState& s, const BatchSource& d) {
        if (s.iteration == 4) save_checkpoint(p, Checkpoint{nc, tc, DataConfig{}, s, d.state()});
    });

    auto ck = load_checkpoint(p);
    REQUIRE(ck.state.iteration == 4);
    GaussianSource resumed_src(static_cast<std::size_t>(nc.sample_count), 2, 12345);
    resumed_src.restore(ck.data_state);
    train(model, ck.training, ck.state, resumed_src, {});
    REQUIRE(ck.state.iteration == 8);
    for (std::size_t i = 0; i < full.params.size(); ++i) {
        CHECK(ck.state.params.arrays[i].data == full.params.arrays[i].data);
        CHECK(ck.state.params.ema[i] == full.params.ema[i]);
    }
}
