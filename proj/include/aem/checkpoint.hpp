#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "aem/config.hpp"
#include "aem/model.hpp"
#include "aem/numerics.hpp"
#include "aem/parameter_store.hpp"
#include "aem/rng.hpp"

namespace aem {

inline constexpr int kCheckpointVersion = 1;

// Everything in a checkpoint besides the raw parameter values: a text header
// of key = value lines plus one `entry <name> <rows> <cols>` line per tensor,
// terminated by a blank line. Parameter values follow as little-endian 64-bit
// reals in entry order, so a round trip is bitwise faithful. Masks are not
// stored; they are rebuilt from the config, which must reproduce the shapes.
struct CheckpointMeta {
    int version = kCheckpointVersion;
    ModelConfig model;
    TrainConfig train;
    std::string rng_state;
    double best_metric = kNegInf;
    long best_step = -1;
    std::vector<std::string> entry_names;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> entry_shapes;
};

namespace detail {

inline void write_le_doubles(std::ostream& os, const double* p, std::size_t n) {
    std::vector<char> buf(n * 8);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t u = 0;
        std::memcpy(&u, p + i, 8);
        for (int b = 0; b < 8; ++b) buf[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>(u >> (8 * b));
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void read_le_doubles(std::istream& is, double* p, std::size_t n) {
    std::vector<char> buf(n * 8);
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size())
        throw ParseError("checkpoint: truncated parameter data");
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t u = 0;
        for (int b = 7; b >= 0; --b)
            u = (u << 8) | static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + static_cast<std::size_t>(b)]));
        std::memcpy(p + i, &u, 8);
    }
}

inline std::string format_hex_double(double x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

inline double parse_hex_double(const std::string& s) {
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw ParseError("checkpoint: bad real value '" + s + "'");
    return x;
}

// Reads the text header up to the blank line; the stream is left at the
// first byte of parameter data.
inline CheckpointMeta read_header(std::istream& is, const std::string& path) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path + ": empty checkpoint");
    std::istringstream magic(line);
    std::string tag;
    CheckpointMeta meta;
    if (!(magic >> tag >> meta.version) || tag != "aem-checkpoint")
        throw ParseError(path + ": not a checkpoint file");
    if (meta.version != kCheckpointVersion)
        throw ParseError(path + ": unsupported checkpoint version " +
                         std::to_string(meta.version) + " (expected " +
                         std::to_string(kCheckpointVersion) + ")");

    std::ostringstream kv_lines;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) break;
        if (line.rfind("entry ", 0) == 0) {
            std::istringstream es(line.substr(6));
            std::string name;
            Eigen::Index r = 0, c = 0;
            if (!(es >> name >> r >> c) || r < 1 || c < 1)
                throw ParseError(path + ": malformed entry line '" + line + "'");
            meta.entry_names.push_back(name);
            meta.entry_shapes.emplace_back(r, c);
        } else {
            kv_lines << line << '\n';
        }
    }
    std::istringstream kv_in(kv_lines.str());
    auto kv = parse_key_values(kv_in, path.c_str());
    auto take = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParseError(path + ": missing checkpoint key '" + std::string(key) + "'");
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    meta.rng_state = take("rng_state");
    meta.best_metric = parse_hex_double(take("best_metric"));
    meta.best_step = detail::parse_long("best_step", take("best_step"));
    for (const auto& [k, v] : kv) apply_config_entry(meta.model, meta.train, k, v);
    if (meta.entry_names.empty()) throw ParseError(path + ": checkpoint lists no parameters");
    return meta;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                            const ParameterStore& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("checkpoint: cannot write " + path);
    os << "aem-checkpoint " << kCheckpointVersion << '\n';
    os << serialize_config(meta.model, meta.train);
    os << "rng_state = " << meta.rng_state << '\n';
    os << "best_metric = " << detail::format_hex_double(meta.best_metric) << '\n';
    os << "best_step = " << meta.best_step << '\n';
    for (const auto& e : store.entries())
        os << "entry " << e.name << ' ' << e.value.rows() << ' ' << e.value.cols() << '\n';
    os << '\n';
    for (const auto& e : store.entries())
        detail::write_le_doubles(os, e.value.data(), static_cast<std::size_t>(e.value.size()));
    if (!os) throw InputError("checkpoint: write failed for " + path);
}

// Header only; cheap way to recover the configs before building the model.
inline CheckpointMeta peek_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("checkpoint: cannot open " + path);
    return detail::read_header(is, path);
}

// Fills a store whose registered entries (from constructing the model off
// the checkpoint's config) must match the stored list exactly.
inline CheckpointMeta restore_checkpoint(const std::string& path, ParameterStore& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("checkpoint: cannot open " + path);
    CheckpointMeta meta = detail::read_header(is, path);
    if (meta.entry_names.size() != store.size())
        throw ConfigError("checkpoint: parameter count mismatch (file has " +
                          std::to_string(meta.entry_names.size()) + ", model has " +
                          std::to_string(store.size()) + ")");
    auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name != meta.entry_names[i])
            throw ConfigError("checkpoint: entry order mismatch at '" + meta.entry_names[i] +
                              "' (model has '" + entries[i].name + "')");
        const auto [r, c] = meta.entry_shapes[i];
        if (entries[i].value.rows() != r || entries[i].value.cols() != c)
            throw ConfigError("checkpoint: shape mismatch for '" + entries[i].name + "'");
    }
    for (auto& e : entries)
        detail::read_le_doubles(is, e.value.data(), static_cast<std::size_t>(e.value.size()));
    return meta;
}

// A model reconstructed from a checkpoint, with the store it borrows kept
// alongside. Not movable: the model holds a reference into the store.
struct LoadedModel {
    CheckpointMeta meta;
    ParameterStore store;
    std::unique_ptr<Model> model;

    LoadedModel() = default;
    LoadedModel(const LoadedModel&) = delete;
    LoadedModel& operator=(const LoadedModel&) = delete;
};

inline std::unique_ptr<LoadedModel> load_model(const std::string& path) {
    auto lm = std::make_unique<LoadedModel>();
    CheckpointMeta meta = peek_checkpoint(path);
    meta.model.validate();
    Rng scratch(0);  // initial values are overwritten wholesale below
    lm->model = std::make_unique<Model>(meta.model, lm->store, scratch);
    lm->meta = restore_checkpoint(path, lm->store);
    return lm;
}

}  // namespace aem
