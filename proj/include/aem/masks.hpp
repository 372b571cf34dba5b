#pragma once

#include <cstdio>
#include <memory>
#include <vector>

#include "aem/errors.hpp"
#include "aem/parameter_store.hpp"

namespace aem {

// Sequential degree assignment shared by every hidden layer of the ARNN.
struct DegreeAssignment {
    int dim = 0;     // D
    int hidden = 0;  // H
    std::vector<int> input_degrees;   // 1..D
    std::vector<int> hidden_degrees;  // length H, values in 1..D-1
};

// hidden degree d_k = ((k-1) mod (D-1)) + 1, 1-based k.
inline DegreeAssignment assign_degrees(int D, int H) {
    if (D < 2)
        throw ConfigError(
            "degrees: need dim >= 2; one-dimensional data has a single unconditional model");
    if (H < D)
        std::fprintf(stderr,
                     "warning: hidden width %d below dim %d loses input information\n", H, D);
    if (H < 1) throw ConfigError("degrees: hidden width must be positive");
    DegreeAssignment a;
    a.dim = D;
    a.hidden = H;
    a.input_degrees.resize(D);
    for (int j = 0; j < D; ++j) a.input_degrees[j] = j + 1;
    a.hidden_degrees.resize(H);
    for (int k = 1; k <= H; ++k) a.hidden_degrees[k - 1] = ((k - 1) % (D - 1)) + 1;
    return a;
}

// Hidden-to-hidden and input-projection connections allow dest >= src.
inline std::shared_ptr<const Mat> input_mask(const DegreeAssignment& a) {
    auto m = std::make_shared<Mat>(a.hidden, a.dim);
    for (int i = 0; i < a.hidden; ++i)
        for (int j = 0; j < a.dim; ++j)
            (*m)(i, j) = a.hidden_degrees[i] >= a.input_degrees[j] ? 1.0 : 0.0;
    return m;
}

inline std::shared_ptr<const Mat> hidden_mask(const DegreeAssignment& a) {
    auto m = std::make_shared<Mat>(a.hidden, a.hidden);
    for (int i = 0; i < a.hidden; ++i)
        for (int j = 0; j < a.hidden; ++j)
            (*m)(i, j) = a.hidden_degrees[i] >= a.hidden_degrees[j] ? 1.0 : 0.0;
    return m;
}

// Output connections are strict: the slot group for dimension d (degree d)
// sees hidden units of degree < d, so dimension 1 rows are all zeros and its
// outputs are bias-only constants.
inline std::shared_ptr<const Mat> output_mask(const DegreeAssignment& a, int slots_per_dim) {
    if (slots_per_dim < 1) throw ConfigError("masks: slots_per_dim must be positive");
    auto m = std::make_shared<Mat>(static_cast<Eigen::Index>(a.dim) * slots_per_dim, a.hidden);
    for (int d = 0; d < a.dim; ++d) {
        const int out_degree = d + 1;
        for (int s = 0; s < slots_per_dim; ++s) {
            const Eigen::Index row = static_cast<Eigen::Index>(d) * slots_per_dim + s;
            for (int j = 0; j < a.hidden; ++j)
                (*m)(row, j) = out_degree > a.hidden_degrees[j] ? 1.0 : 0.0;
        }
    }
    return m;
}

}  // namespace aem
