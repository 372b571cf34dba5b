#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aem/config.hpp"
#include "aem/errors.hpp"
#include "aem/numerics.hpp"
#include "aem/parameter_store.hpp"
#include "aem/rng.hpp"

namespace aem {

// Datasets are row-major here: one point per row, one coordinate per column.
// Model code wants points in columns; callers transpose at the boundary.

enum class DataKind { spirals, checkerboard, diamond, image };

inline DataKind parse_data_kind(const std::string& s) {
    if (s == "spirals") return DataKind::spirals;
    if (s == "checkerboard") return DataKind::checkerboard;
    if (s == "diamond") return DataKind::diamond;
    if (s == "image") return DataKind::image;
    throw ConfigError("data: unknown kind '" + s + "' (spirals, checkerboard, diamond, image)");
}

namespace detail {

// 8-bit grayscale PGM, P2 (ascii) or P5 (raw). Header tokens may be separated
// by whitespace and '#' comments.
struct PgmImage {
    Eigen::Index width = 0, height = 0;
    std::vector<double> intensity;  // row-major, row 0 is the top of the image
};

inline long next_pgm_token(std::istream& is, const std::string& path) {
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        } else {
            c = is.get();
        }
    }
    if (c == EOF) throw InputError(path + ": truncated image header");
    long v = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw InputError(path + ": malformed image header");
    if (c != EOF) is.unget();
    return v;
}

inline PgmImage load_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError(path + ": cannot open image");
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || (m1 != '2' && m1 != '5'))
        throw InputError(path + ": not a PGM image (want P2 or P5)");
    PgmImage img;
    img.width = next_pgm_token(is, path);
    img.height = next_pgm_token(is, path);
    const long maxval = next_pgm_token(is, path);
    if (img.width < 1 || img.height < 1) throw InputError(path + ": degenerate image size");
    if (maxval < 1 || maxval > 255) throw InputError(path + ": only 8-bit grayscale supported");
    const std::size_t n = static_cast<std::size_t>(img.width * img.height);
    img.intensity.resize(n);
    if (m1 == '5') {
        is.get();  // single whitespace byte separates the header from raw data
        std::vector<unsigned char> raw(n);
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is.gcount()) != n)
            throw InputError(path + ": truncated image data");
        for (std::size_t i = 0; i < n; ++i) img.intensity[i] = raw[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const long v = next_pgm_token(is, path);
            if (v > maxval) throw InputError(path + ": pixel value exceeds maxval");
            img.intensity[i] = static_cast<double>(v);
        }
    }
    return img;
}

}  // namespace detail

// Two interleaved spiral arms with small isotropic noise: along each arm
// t = 3*pi*sqrt(u), radius 2*sqrt(u), and the second arm is the first negated.
inline Mat generate_spirals(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Mat out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sign = rng.uniform_int(2) == 0 ? 1.0 : -1.0;
        const double t = 3.0 * M_PI * std::sqrt(rng.uniform());
        const double r = 2.0 * t / (3.0 * M_PI);
        out(i, 0) = sign * r * std::cos(t) + rng.normal(0.0, 0.01);
        out(i, 1) = sign * r * std::sin(t) + rng.normal(0.0, 0.01);
    }
    return out;
}

// Alternating 4x4 grid of unit squares on [-2,2]^2; a point lands in a high
// square exactly when floor(x1) + floor(x2) is even.
inline Mat generate_checkerboard(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Mat out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x1 = rng.uniform(-2.0, 2.0);
        const double band = rng.uniform_int(2) == 0 ? 0.0 : -2.0;
        const double parity = std::floor(x1 / 2.0) * 2.0;  // even floor below x1
        out(i, 0) = x1;
        out(i, 1) = rng.uniform() + (std::floor(x1) - parity) + band;
    }
    return out;
}

// 15x15 grid of isotropic Gaussians (spacing 1, std 0.15) centered at the
// origin, rotated 45 degrees and shrunk by 10 to near-unit support.
inline Mat generate_diamond(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    const double c = std::sqrt(0.5);
    Mat out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::uint64_t idx = rng.uniform_int(225);
        const double gx = static_cast<double>(idx / 15) - 7.0 + rng.normal(0.0, 0.15);
        const double gy = static_cast<double>(idx % 15) - 7.0 + rng.normal(0.0, 0.15);
        out(i, 0) = (c * gx - c * gy) * 0.1;
        out(i, 1) = (c * gx + c * gy) * 0.1;
    }
    return out;
}

// Draws pixel cells with probability proportional to intensity, jitters
// uniformly inside the cell, and maps to [0,1]^2 with image row 0 on top.
inline Mat generate_image(Eigen::Index n, std::uint64_t seed, const std::string& image_path) {
    const detail::PgmImage img = detail::load_pgm(image_path);
    std::vector<double> cdf(img.intensity.size());
    double total = 0.0;
    for (std::size_t i = 0; i < img.intensity.size(); ++i) {
        total += img.intensity[i];
        cdf[i] = total;
    }
    if (!(total > 0.0)) throw InputError(image_path + ": image has zero total intensity");
    Rng rng(seed);
    const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
    Mat out(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto flat = static_cast<Eigen::Index>(std::min<std::ptrdiff_t>(
            it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
        const Eigen::Index row = flat / img.width, col = flat % img.width;
        out(i, 0) = (static_cast<double>(col) + rng.uniform()) / w;
        out(i, 1) = (static_cast<double>(img.height - 1 - row) + rng.uniform()) / h;
    }
    return out;
}

inline Mat generate(DataKind kind, Eigen::Index n, std::uint64_t seed,
                    const std::string& image_path = "") {
    if (n < 1) throw ConfigError("data: need at least one point");
    switch (kind) {
        case DataKind::spirals: return generate_spirals(n, seed);
        case DataKind::checkerboard: return generate_checkerboard(n, seed);
        case DataKind::diamond: return generate_diamond(n, seed);
        case DataKind::image:
            if (image_path.empty()) throw ConfigError("data: image kind needs an image path");
            return generate_image(n, seed, image_path);
    }
    throw ConfigError("data: unknown kind");
}

inline Mat load_csv(const std::string& path, char delimiter = ',', bool has_header = false) {
    std::ifstream is(path);
    if (!is) throw InputError(path + ": cannot open");
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    bool pending_header = has_header;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        if (pending_header) {
            pending_header = false;
            continue;
        }
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            const std::size_t end = line.find(delimiter, start);
            const std::string cell =
                detail::trim(line.substr(start, end == std::string::npos ? end : end - start));
            char* cend = nullptr;
            const double v = std::strtod(cell.c_str(), &cend);
            if (cell.empty() || cend != cell.c_str() + cell.size())
                throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                                 cell + "'");
            row.push_back(v);
            if (end == std::string::npos) break;
            start = end + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(rows.front().size()) + " columns, got " +
                             std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");
    Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return out;
}

inline void save_csv(const std::string& path, const Mat& m, const std::string& header = "") {
    std::ofstream os(path);
    if (!os) throw InputError(path + ": cannot write");
    if (!header.empty()) os << header << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) os << ',';
            os << detail::format_double(m(i, j));
        }
        os << '\n';
    }
    if (!os) throw InputError(path + ": write failed");
}

struct DatasetSplit {
    Mat train, validation, test;
    Eigen::VectorXd mean, stddev;  // per column, from the train split
    bool standardized = false;
};

// Seeded shuffle, contiguous floor-sized splits (leftover rows dropped), then
// optional per-column standardization fit on the train split only.
inline DatasetSplit split_standardize(const Mat& m, double train_frac, double val_frac,
                                      double test_frac, std::uint64_t seed, bool standardize) {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(test_frac > 0.0))
        throw ConfigError("split: fractions must be positive");
    if (train_frac + val_frac + test_frac > 1.0 + 1e-12)
        throw ConfigError("split: fractions sum above 1");
    const auto n = m.rows();
    const auto n_train = static_cast<Eigen::Index>(std::floor(train_frac * static_cast<double>(n)));
    const auto n_val = static_cast<Eigen::Index>(std::floor(val_frac * static_cast<double>(n)));
    const auto n_test = static_cast<Eigen::Index>(std::floor(test_frac * static_cast<double>(n)));
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw ConfigError("split: a split came out empty (" + std::to_string(n) + " rows)");

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(idx);

    DatasetSplit out;
    auto gather = [&](Eigen::Index offset, Eigen::Index count) {
        Mat g(count, m.cols());
        for (Eigen::Index i = 0; i < count; ++i)
            g.row(i) = m.row(idx[static_cast<std::size_t>(offset + i)]);
        return g;
    };
    out.train = gather(0, n_train);
    out.validation = gather(n_train, n_val);
    out.test = gather(n_train + n_val, n_test);

    out.mean = Eigen::VectorXd::Zero(m.cols());
    out.stddev = Eigen::VectorXd::Ones(m.cols());
    if (standardize) {
        out.standardized = true;
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double mu = out.train.col(j).mean();
            const double var = (out.train.col(j).array() - mu).square().mean();
            if (!(var > 1e-24))
                throw ConfigError("split: column " + std::to_string(j) +
                                  " is constant, cannot standardize");
            out.mean(j) = mu;
            out.stddev(j) = std::sqrt(var);
        }
        for (Mat* part : {&out.train, &out.validation, &out.test})
            *part = ((part->rowwise() - out.mean.transpose()).array().rowwise() /
                     out.stddev.transpose().array())
                        .matrix();
    }
    return out;
}

// Per-column lo/hi pairs flattened as (lo0, hi0, lo1, hi1, ...), the layout
// uniform proposal bounds use.
inline std::vector<double> bounding_box(const Mat& m) {
    if (m.rows() < 1) throw ConfigError("bounding box: empty matrix");
    std::vector<double> box;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        box.push_back(m.col(j).minCoeff());
        box.push_back(m.col(j).maxCoeff());
    }
    return box;
}

}  // namespace aem
