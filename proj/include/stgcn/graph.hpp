#pragma once

#include <string>
#include <vector>

#include "stgcn/tensor.hpp"

namespace stgcn {

struct SubjectRecord;

// Spatial functional-connectivity graph: symmetric matrix of correlation
// magnitudes in [0, 1], zero diagonal (the self loop enters through the +I
// term of the normalization).
struct AffinityMatrix {
    int n_rois = 0;
    std::vector<double> values;  // n x n row-major

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n_rois + j]; }
};

// Lambda^{-1/2} (A + I) Lambda^{-1/2} with Lambda_ii = sum_j A_ij + 1.
struct NormalizedAdjacency {
    int n_rois = 0;
    std::vector<double> values;
    std::vector<double> degree;  // the diagonal of Lambda

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n_rois + j]; }
};

// Learned positive symmetric edge-importance matrix M = softplus(theta),
// one unconstrained parameter per unordered ROI pair (upper triangle packed,
// diagonal included). A single instance is shared by every ST-GC layer.
struct EdgeImportance {
    int n_rois = 0;
    TensorPtr theta;  // packed, length n(n+1)/2, requires_grad

    // M as an op result so gradients flow back into theta.
    TensorPtr materialize() const;

    // Current M values without touching the graph.
    std::vector<double> matrix_values() const;
};

// Affinity from per-ROI series concatenated over the given subjects in order.
// Subjects must share n_rois; a zero-variance concatenated ROI is an error
// naming the ROI.
AffinityMatrix compute_affinity(const std::vector<SubjectRecord>& subjects,
                                const std::vector<int>& subject_indices);

// Convenience overload over all subjects in order.
AffinityMatrix compute_affinity(const std::vector<SubjectRecord>& subjects);

NormalizedAdjacency normalize_adjacency(const AffinityMatrix& a);

// theta = softplus^{-1}(1) = ln(e - 1) everywhere, so M starts as all-ones
// and the model initially matches the plain normalized propagation.
EdgeImportance importance_init(int n_rois);

// Lambda^{-1/2} ((A + I) * M) Lambda^{-1/2} with Lambda computed from A alone
// and * element-wise; the result participates in the compute graph through M.
TensorPtr effective_adjacency(const AffinityMatrix& a, const EdgeImportance& m);

// The constant factor (A + I)_ij / sqrt(Lambda_i Lambda_j); effective
// adjacency is this times M element-wise.
TensorPtr normalization_constant(const AffinityMatrix& a);

// CSV export: n rows of n comma-separated values, 9 significant digits.
void write_matrix_csv(const std::string& path, const std::vector<double>& values, int n);

}  // namespace stgcn
