#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aem/errors.hpp"

namespace aem {

// Architecture and proposal settings. Field names follow the config-file keys.
struct ModelConfig {
    int dim = 0;  // data dimensionality, filled in from the dataset
    int resmade_hidden_dim = 256;
    int resmade_n_blocks = 4;
    std::string resmade_activation = "relu";
    double resmade_dropout = 0.0;
    int context_dim = 64;
    int enn_hidden_dim = 128;
    int enn_n_blocks = 4;
    std::string enn_activation = "relu";
    double enn_dropout = 0.0;
    int mixture_comps = 20;
    double mixture_scale_min = 1e-3;
    std::string proposal_kind = "mixture";  // mixture | uniform
    // Per-dimension lo,hi pairs for the uniform kind; set from the training
    // data bounding box.
    std::vector<double> uniform_bounds;

    void validate() const {
        if (dim < 2) throw ConfigError("model: dim must be >= 2");
        if (resmade_hidden_dim < 1 || enn_hidden_dim < 1 || context_dim < 1)
            throw ConfigError("model: widths must be positive");
        if (resmade_n_blocks < 0 || enn_n_blocks < 0)
            throw ConfigError("model: block counts must be non-negative");
        if (resmade_activation != "relu")
            throw ConfigError("model: resmade_activation must be relu");
        if (enn_activation != "relu" && enn_activation != "tanh")
            throw ConfigError("model: enn_activation must be relu or tanh");
        if (resmade_dropout < 0.0 || resmade_dropout >= 1.0 || enn_dropout < 0.0 ||
            enn_dropout >= 1.0)
            throw ConfigError("model: dropout rates must lie in [0, 1)");
        if (proposal_kind == "mixture") {
            if (mixture_comps < 1) throw ConfigError("model: mixture_comps must be positive");
            if (mixture_scale_min <= 0.0)
                throw ConfigError("model: mixture_scale_min must be positive");
        } else if (proposal_kind == "uniform") {
            if (uniform_bounds.size() != static_cast<std::size_t>(2 * dim))
                throw ConfigError("model: uniform_bounds needs lo,hi per dimension");
            for (int d = 0; d < dim; ++d)
                if (!(uniform_bounds[2 * d] < uniform_bounds[2 * d + 1]))
                    throw ConfigError("model: uniform bounds must satisfy lo < hi");
        } else {
            throw ConfigError("model: proposal_kind must be mixture or uniform");
        }
    }
};

// Optimization settings.
struct TrainConfig {
    int batch_size = 256;
    long total_steps = 400000;
    long warm_up_steps = 5000;
    double learning_rate = 5e-4;
    int train_importance_samples = 20;  // S during training
    long val_interval = 1000;
    long val_subset = 0;        // 0 = validate on the full split
    long early_stop_window = 0;  // 0 = keep-best only, never stop early
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
        if (total_steps < 1) throw ConfigError("train: total_steps must be positive");
        if (warm_up_steps < 0 || warm_up_steps > total_steps)
            throw ConfigError("train: warm_up_steps must lie in [0, total_steps]");
        if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
        if (train_importance_samples < 1)
            throw ConfigError("train: train_importance_samples must be >= 1");
        if (val_interval < 1) throw ConfigError("train: val_interval must be positive");
        if (val_subset < 0 || early_stop_window < 0)
            throw ConfigError("train: negative val_subset or early_stop_window");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ParseError("config: bad numeric value for " + key + ": '" + v + "'");
    }
    if (pos != v.size()) throw ParseError("config: trailing junk in value for " + key);
    return x;
}

inline long parse_long(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long x = 0;
    try {
        x = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw ParseError("config: bad integer value for " + key + ": '" + v + "'");
    }
    if (pos != v.size()) throw ParseError("config: trailing junk in value for " + key);
    return x;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    return out;
}

inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

// Flat `key = value` text with # comments, in file order.
inline std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                           const char* origin) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(std::string(origin) + ": line " + std::to_string(lineno) +
                             ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError(std::string(origin) + ": line " + std::to_string(lineno) +
                             ": empty key");
        if (kv.count(key))
            throw ParseError(std::string(origin) + ": duplicate key " + key);
        kv[key] = value;
    }
    return kv;
}

inline void apply_config_entry(ModelConfig& mc, TrainConfig& tc, const std::string& key,
                               const std::string& value) {
    using detail::parse_double;
    using detail::parse_double_list;
    using detail::parse_long;
    if (key == "dim") mc.dim = static_cast<int>(parse_long(key, value));
    else if (key == "resmade_hidden_dim") mc.resmade_hidden_dim = static_cast<int>(parse_long(key, value));
    else if (key == "resmade_n_blocks") mc.resmade_n_blocks = static_cast<int>(parse_long(key, value));
    else if (key == "resmade_activation") mc.resmade_activation = value;
    else if (key == "resmade_dropout") mc.resmade_dropout = parse_double(key, value);
    else if (key == "context_dim") mc.context_dim = static_cast<int>(parse_long(key, value));
    else if (key == "enn_hidden_dim") mc.enn_hidden_dim = static_cast<int>(parse_long(key, value));
    else if (key == "enn_n_blocks") mc.enn_n_blocks = static_cast<int>(parse_long(key, value));
    else if (key == "enn_activation") mc.enn_activation = value;
    else if (key == "enn_dropout") mc.enn_dropout = parse_double(key, value);
    else if (key == "mixture_comps") mc.mixture_comps = static_cast<int>(parse_long(key, value));
    else if (key == "mixture_scale_min") mc.mixture_scale_min = parse_double(key, value);
    else if (key == "proposal_kind") mc.proposal_kind = value;
    else if (key == "uniform_bounds") mc.uniform_bounds = parse_double_list(key, value);
    else if (key == "batch_size") tc.batch_size = static_cast<int>(parse_long(key, value));
    else if (key == "total_steps") tc.total_steps = parse_long(key, value);
    else if (key == "warm_up_steps") tc.warm_up_steps = parse_long(key, value);
    else if (key == "learning_rate") tc.learning_rate = parse_double(key, value);
    else if (key == "train_importance_samples") tc.train_importance_samples = static_cast<int>(parse_long(key, value));
    else if (key == "val_interval") tc.val_interval = parse_long(key, value);
    else if (key == "val_subset") tc.val_subset = parse_long(key, value);
    else if (key == "early_stop_window") tc.early_stop_window = parse_long(key, value);
    else if (key == "seed") tc.seed = static_cast<std::uint64_t>(parse_long(key, value));
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline void load_config_file(const std::string& path, ModelConfig& mc, TrainConfig& tc) {
    std::ifstream in(path);
    if (!in) throw InputError("config: cannot open " + path);
    for (const auto& [k, v] : parse_key_values(in, path.c_str())) apply_config_entry(mc, tc, k, v);
}

// Every field, one key per line, doubles at full precision.
inline std::string serialize_config(const ModelConfig& mc, const TrainConfig& tc) {
    using detail::format_double;
    std::ostringstream os;
    os << "dim = " << mc.dim << '\n';
    os << "resmade_hidden_dim = " << mc.resmade_hidden_dim << '\n';
    os << "resmade_n_blocks = " << mc.resmade_n_blocks << '\n';
    os << "resmade_activation = " << mc.resmade_activation << '\n';
    os << "resmade_dropout = " << format_double(mc.resmade_dropout) << '\n';
    os << "context_dim = " << mc.context_dim << '\n';
    os << "enn_hidden_dim = " << mc.enn_hidden_dim << '\n';
    os << "enn_n_blocks = " << mc.enn_n_blocks << '\n';
    os << "enn_activation = " << mc.enn_activation << '\n';
    os << "enn_dropout = " << format_double(mc.enn_dropout) << '\n';
    os << "mixture_comps = " << mc.mixture_comps << '\n';
    os << "mixture_scale_min = " << format_double(mc.mixture_scale_min) << '\n';
    os << "proposal_kind = " << mc.proposal_kind << '\n';
    if (!mc.uniform_bounds.empty()) {
        os << "uniform_bounds = ";
        for (std::size_t i = 0; i < mc.uniform_bounds.size(); ++i) {
            if (i) os << ',';
            os << format_double(mc.uniform_bounds[i]);
        }
        os << '\n';
    }
    os << "batch_size = " << tc.batch_size << '\n';
    os << "total_steps = " << tc.total_steps << '\n';
    os << "warm_up_steps = " << tc.warm_up_steps << '\n';
    os << "learning_rate = " << format_double(tc.learning_rate) << '\n';
    os << "train_importance_samples = " << tc.train_importance_samples << '\n';
    os << "val_interval = " << tc.val_interval << '\n';
    os << "val_subset = " << tc.val_subset << '\n';
    os << "early_stop_window = " << tc.early_stop_window << '\n';
    os << "seed = " << tc.seed << '\n';
    return os.str();
}

}  // namespace aem
