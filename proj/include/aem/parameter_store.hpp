#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "aem/errors.hpp"
#include "aem/rng.hpp"

namespace aem {

using Mat = Eigen::MatrixXd;

// One learnable tensor plus its gradient and Adam moment buffers.
struct ParamEntry {
    std::string name;
    Mat value;
    Mat grad;
    Mat m;
    Mat v;
};

// Named parameter registry with a stable (insertion) order, shared by the
// optimizer and the checkpoint reader/writer.
class ParameterStore {
public:
    Mat& add_zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        ParamEntry& e = insert(name, rows, cols);
        return e.value;
    }

    // Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); for y = W x the
    // fan-in is the column count.
    Mat& add_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
        ParamEntry& e = insert(name, rows, cols);
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) e.value(i, j) = rng.uniform(-a, a);
        return e.value;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    ParamEntry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("parameter store: unknown entry '" + name + "'");
        return entries_[it->second];
    }

    const ParamEntry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("parameter store: unknown entry '" + name + "'");
        return entries_[it->second];
    }

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
        return n;
    }

    void zero_grads() {
        for (auto& e : entries_) e.grad.setZero();
    }

private:
    ParamEntry& insert(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (name.empty()) throw UsageError("parameter store: empty name");
        if (index_.count(name)) throw UsageError("parameter store: duplicate entry '" + name + "'");
        if (rows <= 0 || cols <= 0) throw UsageError("parameter store: non-positive shape for '" + name + "'");
        index_[name] = entries_.size();
        entries_.push_back(ParamEntry{name, Mat::Zero(rows, cols), Mat::Zero(rows, cols),
                                      Mat::Zero(rows, cols), Mat::Zero(rows, cols)});
        return entries_.back();
    }

    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace aem
