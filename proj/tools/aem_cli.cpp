// Command-line front end: dataset generation, training, evaluation, SIR
// sampling, normalizer calibration, density grids, and the importance
// sampling scaling demo. Every subcommand that takes --seed is deterministic
// end to end.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aem/aem.hpp"

namespace {

using aem::Mat;

constexpr const char* kUsage = R"(usage: aem <command> [flags]

commands:
  gen-data   --kind spirals|checkerboard|diamond|image --n N --seed S
             [--image file.pgm] --out data.csv
  train      --data data.csv --config train.cfg --out model.ckpt
             [--log train_log.csv] [--train-frac 0.8] [--val-frac 0.1]
             [--test-frac 0.1] [--standardize] [--quiet]
             (also writes model.ckpt.val.csv and model.ckpt.test.csv)
  eval       --ckpt model.ckpt --data test.csv --samples S [--seed S]
             [--threads T] [--kde --tune-data val.csv [--tune-subset N]
             [--kde-samples N]]
  sample     --ckpt model.ckpt --n N [--pool 100] --seed S --out samples.csv
  calibrate  --ckpt model.ckpt --data val.csv [--s-grid 20,200,2000,20000]
             [--n 1000] [--seed S] [--threads T] --out report.csv
  grid       --ckpt model.ckpt --res R [--samples 1000] [--seed S]
             [--threads T] (--data data.csv | --bounds lo1,hi1,lo2,hi2)
             --out prefix        (writes prefix.csv and prefix.pgm)
  is-demo    [--dims 1,2,4,8,16,32,64] [--trials 50] [--samples 20]
             [--seed 17] --out trials.csv
)";

// Flags are --name value pairs except for a fixed set of boolean switches.
class Flags {
public:
    Flags(int argc, char** argv, int from, std::set<std::string> allowed,
          std::set<std::string> switches = {})
        : allowed_(std::move(allowed)), switches_(std::move(switches)) {
        for (int i = from; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.rfind("--", 0) != 0) throw aem::UsageError("expected a flag, got '" + arg + "'");
            arg = arg.substr(2);
            if (!allowed_.count(arg) && !switches_.count(arg))
                throw aem::UsageError("unknown flag --" + arg);
            if (kv_.count(arg)) throw aem::UsageError("duplicate flag --" + arg);
            if (switches_.count(arg)) {
                kv_[arg] = "1";
            } else {
                if (i + 1 >= argc) throw aem::UsageError("flag --" + arg + " needs a value");
                kv_[arg] = argv[++i];
            }
        }
    }

    bool has(const std::string& k) const { return kv_.count(k) != 0; }
    std::string get(const std::string& k) const {
        auto it = kv_.find(k);
        if (it == kv_.end()) throw aem::UsageError("missing required flag --" + k);
        return it->second;
    }
    std::string get(const std::string& k, const std::string& dflt) const {
        auto it = kv_.find(k);
        return it == kv_.end() ? dflt : it->second;
    }
    long get_long(const std::string& k) const { return aem::detail::parse_long(k.c_str(), get(k)); }
    long get_long(const std::string& k, long dflt) const {
        return has(k) ? get_long(k) : dflt;
    }
    double get_double(const std::string& k, double dflt) const {
        return has(k) ? aem::detail::parse_double(k.c_str(), get(k)) : dflt;
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> allowed_, switches_;
};

std::vector<int> parse_int_list(const char* key, const std::string& s) {
    std::vector<int> out;
    for (double v : aem::detail::parse_double_list(key, s)) {
        if (v != std::floor(v)) throw aem::ConfigError(std::string(key) + ": expected integers");
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw aem::ConfigError(std::string(key) + ": empty list");
    return out;
}

int default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

int cmd_gen_data(int argc, char** argv) {
    Flags f(argc, argv, 2, {"kind", "n", "seed", "image", "out"});
    const aem::DataKind kind = aem::parse_data_kind(f.get("kind"));
    const Mat data = aem::generate(kind, f.get_long("n"),
                                   static_cast<std::uint64_t>(f.get_long("seed")),
                                   f.get("image", ""));
    aem::save_csv(f.get("out"), data);
    std::printf("wrote %ld points to %s\n", static_cast<long>(data.rows()), f.get("out").c_str());
    return 0;
}

int cmd_train(int argc, char** argv) {
    Flags f(argc, argv, 2,
            {"data", "config", "out", "log", "train-frac", "val-frac", "test-frac"},
            {"standardize", "quiet"});
    aem::ModelConfig mc;
    aem::TrainConfig tc;
    aem::load_config_file(f.get("config"), mc, tc);

    const Mat raw = aem::load_csv(f.get("data"));
    if (mc.dim == 0) mc.dim = static_cast<int>(raw.cols());
    if (mc.dim != raw.cols())
        throw aem::ConfigError("train: config dim " + std::to_string(mc.dim) + " but data has " +
                               std::to_string(raw.cols()) + " columns");
    const aem::DatasetSplit split =
        aem::split_standardize(raw, f.get_double("train-frac", 0.8), f.get_double("val-frac", 0.1),
                               f.get_double("test-frac", 0.1), tc.seed, f.has("standardize"));
    if (mc.proposal_kind == "uniform" && mc.uniform_bounds.empty())
        mc.uniform_bounds = aem::bounding_box(split.train);
    mc.validate();
    tc.validate();

    const std::string out = f.get("out");
    aem::save_csv(out + ".val.csv", split.validation);
    aem::save_csv(out + ".test.csv", split.test);

    aem::ParameterStore store;
    aem::Rng init = aem::model_init_stream(tc.seed);
    aem::Model model(mc, store, init);

    std::ofstream log_file;
    std::ostream* log = nullptr;
    if (f.has("log")) {
        log_file.open(f.get("log"));
        if (!log_file) throw aem::InputError("train: cannot write " + f.get("log"));
        log = &log_file;
    }
    const aem::TrainResult res =
        aem::train_model(model, split.train.transpose(), split.validation.transpose(), tc, out,
                         log, !f.has("quiet"));
    if (res.diverged) {
        std::fprintf(stderr, "aem train: %s\n", res.message.c_str());
        return 1;
    }
    std::printf("trained %ld steps%s; best validation %.6f at step %ld; checkpoint %s\n",
                res.steps_run, res.stopped_early ? " (stopped early)" : "", res.best_metric,
                res.best_step, out.c_str());
    return 0;
}

int cmd_eval(int argc, char** argv) {
    Flags f(argc, argv, 2,
            {"ckpt", "data", "samples", "seed", "threads", "tune-data", "tune-subset",
             "kde-samples"},
            {"kde"});
    auto lm = aem::load_model(f.get("ckpt"));
    const Mat data = aem::load_csv(f.get("data")).transpose();
    const int S = static_cast<int>(f.get_long("samples"));
    const int threads = static_cast<int>(f.get_long("threads", default_threads()));
    const aem::Rng rng(static_cast<std::uint64_t>(f.get_long("seed", 0)));
    const auto n = static_cast<double>(data.cols());

    auto report = [&](const char* name, const Eigen::VectorXd& ll) {
        const double mean = ll.mean();
        const double var = (ll.array() - mean).square().sum() / (n - 1.0);
        std::printf("%s: %.6f nats +/- %.6f (2 standard errors, %ld points)\n", name, mean,
                    2.0 * std::sqrt(var / n), static_cast<long>(data.cols()));
    };

    if (f.has("kde")) {
        const Mat tune = aem::load_csv(f.get("tune-data")).transpose();
        const auto subset = static_cast<Eigen::Index>(f.get_long("tune-subset", 2000));
        const int kde_s = static_cast<int>(f.get_long("kde-samples", 20000));
        const aem::KdeConfig kc =
            lm->model->tune_kde(tune.leftCols(std::min(subset, tune.cols())), kde_s, rng.split(1));
        std::printf("tuned kde: bandwidth %.6g alpha %.6g (%d samples)\n", kc.bandwidth, kc.alpha,
                    kc.samples);
        report("kde log likelihood", lm->model->kde_log_prob(data, kc, rng.split(2)));
        return 0;
    }
    const aem::LogProbEstimate est = lm->model->estimate_log_prob(data, S, rng, threads);
    std::printf("importance samples per conditional: %d\n", est.samples);
    report("model log likelihood", est.log_p_hat);
    report("proposal log likelihood", est.log_q);
    return 0;
}

int cmd_sample(int argc, char** argv) {
    Flags f(argc, argv, 2, {"ckpt", "n", "pool", "seed", "out"});
    auto lm = aem::load_model(f.get("ckpt"));
    aem::Rng rng(static_cast<std::uint64_t>(f.get_long("seed")));
    const Mat samples = lm->model->sir_sample(f.get_long("n"),
                                              static_cast<int>(f.get_long("pool", 100)), rng);
    aem::save_csv(f.get("out"), samples.transpose());
    std::printf("wrote %ld samples to %s\n", static_cast<long>(samples.cols()),
                f.get("out").c_str());
    return 0;
}

int cmd_calibrate(int argc, char** argv) {
    Flags f(argc, argv, 2, {"ckpt", "data", "s-grid", "n", "seed", "threads", "out"});
    auto lm = aem::load_model(f.get("ckpt"));
    const Mat data = aem::load_csv(f.get("data")).transpose();
    const std::vector<int> s_grid = parse_int_list("s-grid", f.get("s-grid", "20,200,2000,20000"));
    const aem::Rng rng(static_cast<std::uint64_t>(f.get_long("seed", 0)));
    const aem::CalibrationReport rep =
        aem::calibrate(*lm->model, data, s_grid, f.get_long("n", 1000), rng,
                       static_cast<int>(f.get_long("threads", default_threads())));
    std::ofstream os(f.get("out"));
    if (!os) throw aem::InputError("calibrate: cannot write " + f.get("out"));
    aem::write_calibration_csv(os, rep);
    for (std::size_t si = 0; si < rep.s_grid.size(); ++si)
        std::printf("S=%d: median |error| %.6g (%d conditionals, %d non-converged)\n",
                    rep.s_grid[si], aem::percentile(rep.abs_errors_at(si), 50.0),
                    static_cast<int>(rep.error.rows()), rep.non_converged);
    return 0;
}

int cmd_grid(int argc, char** argv) {
    Flags f(argc, argv, 2, {"ckpt", "res", "samples", "seed", "threads", "data", "bounds", "out"});
    auto lm = aem::load_model(f.get("ckpt"));
    if (lm->meta.model.dim != 2) throw aem::ConfigError("grid: model must be two-dimensional");
    const auto res = static_cast<Eigen::Index>(f.get_long("res"));
    if (res < 2) throw aem::ConfigError("grid: resolution must be at least 2");
    std::vector<double> box;
    if (f.has("bounds")) {
        box = aem::detail::parse_double_list("bounds", f.get("bounds"));
        if (box.size() != 4 || !(box[0] < box[1]) || !(box[2] < box[3]))
            throw aem::ConfigError("grid: bounds must be lo1,hi1,lo2,hi2 with lo < hi");
    } else {
        box = aem::bounding_box(aem::load_csv(f.get("data")));
    }

    Mat pts(2, res * res);
    const double dx = (box[1] - box[0]) / static_cast<double>(res - 1);
    const double dy = (box[3] - box[2]) / static_cast<double>(res - 1);
    // Row-major from the top row down, matching PGM pixel order.
    for (Eigen::Index r = 0; r < res; ++r)
        for (Eigen::Index c = 0; c < res; ++c) {
            pts(0, r * res + c) = box[0] + static_cast<double>(c) * dx;
            pts(1, r * res + c) = box[3] - static_cast<double>(r) * dy;
        }
    const aem::Rng rng(static_cast<std::uint64_t>(f.get_long("seed", 0)));
    const aem::LogProbEstimate est =
        lm->model->estimate_log_prob(pts, static_cast<int>(f.get_long("samples", 1000)), rng,
                                     static_cast<int>(f.get_long("threads", default_threads())));

    const std::string prefix = f.get("out");
    Mat csv(res * res, 3);
    csv.leftCols(2) = pts.transpose();
    csv.col(2) = est.log_p_hat;
    aem::save_csv(prefix + ".csv", csv, "x1,x2,log_density");

    std::ofstream pgm(prefix + ".pgm");
    if (!pgm) throw aem::InputError("grid: cannot write " + prefix + ".pgm");
    pgm << "P2\n" << res << ' ' << res << "\n255\n";
    const double top = est.log_p_hat.maxCoeff();
    for (Eigen::Index r = 0; r < res; ++r) {
        for (Eigen::Index c = 0; c < res; ++c) {
            const int v = static_cast<int>(
                std::lround(255.0 * std::exp(est.log_p_hat(r * res + c) - top)));
            pgm << v << (c + 1 == res ? '\n' : ' ');
        }
    }
    std::printf("wrote %s.csv and %s.pgm (%ldx%ld)\n", prefix.c_str(), prefix.c_str(),
                static_cast<long>(res), static_cast<long>(res));
    return 0;
}

int cmd_is_demo(int argc, char** argv) {
    Flags f(argc, argv, 2, {"dims", "trials", "samples", "seed", "out"});
    const std::vector<int> dims = parse_int_list("dims", f.get("dims", "1,2,4,8,16,32,64"));
    aem::Rng rng(static_cast<std::uint64_t>(f.get_long("seed", 17)));
    const aem::IsScalingResult demo =
        aem::is_scaling_demo(dims, rng, static_cast<int>(f.get_long("trials", 50)),
                             static_cast<int>(f.get_long("samples", 20)));
    std::ofstream os(f.get("out"));
    if (!os) throw aem::InputError("is-demo: cannot write " + f.get("out"));
    aem::write_is_demo_csv(os, demo);
    for (std::size_t di = 0; di < demo.dims.size(); ++di)
        std::printf("dim %d: median log Z-hat %.4f\n", demo.dims[di],
                    aem::percentile(demo.trial_log_z[di], 50.0));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fputs(kUsage, stderr);
        return 1;
    }
    const std::string cmd = argv[1];
    try {
        if (cmd == "gen-data") return cmd_gen_data(argc, argv);
        if (cmd == "train") return cmd_train(argc, argv);
        if (cmd == "eval") return cmd_eval(argc, argv);
        if (cmd == "sample") return cmd_sample(argc, argv);
        if (cmd == "calibrate") return cmd_calibrate(argc, argv);
        if (cmd == "grid") return cmd_grid(argc, argv);
        if (cmd == "is-demo") return cmd_is_demo(argc, argv);
        if (cmd == "help" || cmd == "--help" || cmd == "-h") {
            std::fputs(kUsage, stdout);
            return 0;
        }
        std::fprintf(stderr, "aem: unknown command '%s'\n%s", cmd.c_str(), kUsage);
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "aem %s: %s\n", cmd.c_str(), e.what());
        return 1;
    }
}
