#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aem/checkpoint.hpp"
#include "stubs.hpp"

using namespace aem;
using namespace aem::teststubs;

namespace {

// Unique path under the build tree; removed by the fixture's destructor.
struct TempFile {
    std::string path;
    explicit TempFile(const char* stem) {
        path = std::string(stem) + "-" + std::to_string(::getpid()) + ".ckpt";
    }
    ~TempFile() { std::filesystem::remove(path); }
};

CheckpointMeta meta_for(const Rig<>& rig, const char* rng_state = "17 42") {
    CheckpointMeta m;
    m.model = rig.model.config();
    m.rng_state = rng_state;
    m.best_metric = -2.718281828459045;
    m.best_step = 123;
    return m;
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise faithful") {
    TempFile tmp("ckpt_roundtrip");
    ModelConfig cfg = mixture_cfg(3, 2);
    Rig<> rig(cfg, 99);
    // Values with awkward bit patterns: denormal-ish, negative zero, huge.
    rig.store.entries()[0].value(0, 0) = 1e-310;
    rig.store.entries()[0].value(1, 0) = -0.0;
    rig.store.entries()[1].value(0, 0) = -1.7976931348623157e308;

    CheckpointMeta meta = meta_for(rig);
    meta.train.seed = 777;
    meta.train.total_steps = 5;
    save_checkpoint(tmp.path, meta, rig.store);

    SECTION("peek recovers the header without touching parameters") {
        const CheckpointMeta peeked = peek_checkpoint(tmp.path);
        CHECK(peeked.version == kCheckpointVersion);
        CHECK(peeked.rng_state == "17 42");
        CHECK(peeked.best_metric == -2.718281828459045);  // hexfloat, so exact
        CHECK(peeked.best_step == 123);
        CHECK(peeked.model.dim == 3);
        CHECK(peeked.model.mixture_comps == 2);
        CHECK(peeked.train.seed == 777);
        CHECK(peeked.train.total_steps == 5);
        CHECK(peeked.entry_names.size() == rig.store.size());
    }

    SECTION("restore reproduces every value bitwise") {
        Rig<> other(cfg, 1);  // different init, fully overwritten
        restore_checkpoint(tmp.path, other.store);
        for (std::size_t i = 0; i < rig.store.size(); ++i) {
            const Mat& a = rig.store.entries()[i].value;
            const Mat& b = other.store.entries()[i].value;
            REQUIRE(a.rows() == b.rows());
            for (Eigen::Index c = 0; c < a.cols(); ++c)
                for (Eigen::Index r = 0; r < a.rows(); ++r) {
                    std::uint64_t ua = 0, ub = 0;
                    std::memcpy(&ua, &a(r, c), 8);
                    std::memcpy(&ub, &b(r, c), 8);
                    REQUIRE(ua == ub);  // covers -0.0 and NaN payloads too
                }
        }
    }

    SECTION("load_model rebuilds a model that evaluates identically") {
        auto lm = load_model(tmp.path);
        Mat x(3, 4);
        Rng data_rng(5);
        for (Eigen::Index j = 0; j < 4; ++j)
            for (Eigen::Index i = 0; i < 3; ++i) x(i, j) = data_rng.uniform(-1.0, 1.0);
        const LogProbEstimate a = rig.model.estimate_log_prob(x, 8, Rng(3));
        const LogProbEstimate b = lm->model->estimate_log_prob(x, 8, Rng(3));
        CHECK(a.log_p_hat == b.log_p_hat);
        CHECK(a.log_q == b.log_q);
        CHECK(a.log_z_hat == b.log_z_hat);
    }

    SECTION("save after load writes identical bytes") {
        auto lm = load_model(tmp.path);
        TempFile tmp2("ckpt_resave");
        save_checkpoint(tmp2.path, lm->meta, lm->store);
        std::ifstream f1(tmp.path, std::ios::binary), f2(tmp2.path, std::ios::binary);
        std::stringstream b1, b2;
        b1 << f1.rdbuf();
        b2 << f2.rdbuf();
        CHECK(b1.str() == b2.str());
    }
}

TEST_CASE("checkpoint refuses what it cannot honor") {
    ModelConfig cfg = mixture_cfg(2, 2);
    Rig<> rig(cfg, 4);
    CheckpointMeta meta = meta_for(rig);

    SECTION("unsupported version") {
        TempFile tmp("ckpt_version");
        save_checkpoint(tmp.path, meta, rig.store);
        // Bump the version in place; the rest of the file stays valid.
        std::ifstream is(tmp.path, std::ios::binary);
        std::stringstream all;
        all << is.rdbuf();
        is.close();
        std::string body = all.str();
        const auto pos = body.find("aem-checkpoint 1");
        REQUIRE(pos != std::string::npos);
        body.replace(pos, 16, "aem-checkpoint 2");
        std::ofstream(tmp.path, std::ios::binary) << body;
        CHECK_THROWS_AS(peek_checkpoint(tmp.path), ParseError);
        CHECK_THROWS_AS(load_model(tmp.path), ParseError);
    }

    SECTION("not a checkpoint at all") {
        TempFile tmp("ckpt_garbage");
        std::ofstream(tmp.path) << "once upon a time\n";
        CHECK_THROWS_AS(peek_checkpoint(tmp.path), ParseError);
    }

    SECTION("missing file") { CHECK_THROWS_AS(peek_checkpoint("no/such/file.ckpt"), InputError); }

    SECTION("parameter shape mismatch against the restoring model") {
        TempFile tmp("ckpt_shape");
        save_checkpoint(tmp.path, meta, rig.store);
        ModelConfig wider = cfg;
        wider.resmade_hidden_dim = 24;  // same entry names, bigger matrices
        Rig<> other(wider, 4);
        CHECK_THROWS_AS(restore_checkpoint(tmp.path, other.store), ConfigError);
    }

    SECTION("parameter count mismatch") {
        TempFile tmp("ckpt_count");
        save_checkpoint(tmp.path, meta, rig.store);
        ModelConfig deeper = cfg;
        deeper.resmade_n_blocks = 2;  // extra block entries
        Rig<> other(deeper, 4);
        CHECK_THROWS_AS(restore_checkpoint(tmp.path, other.store), ConfigError);
    }

    SECTION("truncated parameter payload") {
        TempFile tmp("ckpt_trunc");
        save_checkpoint(tmp.path, meta, rig.store);
        const auto full = std::filesystem::file_size(tmp.path);
        std::filesystem::resize_file(tmp.path, full - 16);
        Rig<> other(cfg, 4);
        CHECK_THROWS_AS(restore_checkpoint(tmp.path, other.store), ParseError);
    }

    SECTION("missing required key") {
        TempFile tmp("ckpt_nokey");
        save_checkpoint(tmp.path, meta, rig.store);
        std::ifstream is(tmp.path, std::ios::binary);
        std::stringstream all;
        all << is.rdbuf();
        is.close();
        std::string body = all.str();
        const auto pos = body.find("rng_state");
        REQUIRE(pos != std::string::npos);
        body.replace(pos, 9, "rng_stale");
        std::ofstream(tmp.path, std::ios::binary) << body;
        CHECK_THROWS_AS(peek_checkpoint(tmp.path), ParseError);
    }
}

TEST_CASE("checkpoint keeps uniform-proposal bounds") {
    TempFile tmp("ckpt_uniform");
    ModelConfig cfg = unit_uniform_cfg(2);
    cfg.uniform_bounds = {-1.5, 2.5, 0.25, 0.75};
    Rig<> rig(cfg, 8);
    save_checkpoint(tmp.path, meta_for(rig), rig.store);
    auto lm = load_model(tmp.path);
    CHECK(lm->meta.model.proposal_kind == "uniform");
    CHECK(lm->meta.model.uniform_bounds == cfg.uniform_bounds);
    CHECK(lm->model->has_uniform_proposal());
}
