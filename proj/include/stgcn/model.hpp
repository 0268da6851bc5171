#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stgcn/graph.hpp"
#include "stgcn/tensor.hpp"

namespace stgcn {

struct SubjectRecord;

struct STGCNConfig {
    int n_rois = 0;
    int in_channels = 1;
    int hidden_channels = 64;
    int n_layers = 3;
    int temporal_kernel = 11;
    int stride = 1;
    double dropout_rate = 0.5;
    int n_classes = 1;  // binary, single sigmoid output
    bool depthwise_temporal = false;
    bool use_activations = true;
    bool dropout_after_spatial = false;  // default placement is after the temporal stage

    void validate() const;
};

// The 3-layer ST-GCN classifier: per-frame spatial graph convolution over the
// importance-weighted normalized adjacency, per-ROI temporal convolution,
// global average pooling and a sigmoid head. One EdgeImportance instance is
// shared by all layers.
class STGCNModel {
public:
    struct Layer {
        TensorPtr w_sg;  // (C_l, hidden)
        TensorPtr w_tg;  // (hidden, hidden, taps), or (hidden, taps) depthwise
        TensorPtr bias;  // (hidden,)
    };

    static STGCNModel init(const STGCNConfig& cfg, const AffinityMatrix& affinity, Rng& rng);

    // x is (1, T', N); returns the sigmoid probability as a (1, 1) tensor.
    TensorPtr forward(const TensorPtr& x, bool training, Rng& rng) const;

    // Stable-order (name, tensor) list of all trainable parameters.
    std::vector<std::pair<std::string, TensorPtr>> parameters() const;

    std::int64_t parameter_count() const;
    static std::int64_t expected_parameter_count(const STGCNConfig& cfg);

    const STGCNConfig& config() const { return config_; }
    const AffinityMatrix& affinity() const { return affinity_; }
    const EdgeImportance& importance() const { return importance_; }
    EdgeImportance& importance() { return importance_; }
    const std::vector<Layer>& layers() const { return layers_; }

    // Used by the checkpoint reader.
    STGCNModel(STGCNConfig cfg, AffinityMatrix affinity, EdgeImportance importance,
               std::vector<Layer> layers, TensorPtr head_w, TensorPtr head_b);

private:
    STGCNConfig config_;
    AffinityMatrix affinity_;
    TensorPtr norm_const_;  // (A+I)_ij / sqrt(deg_i deg_j), frozen
    EdgeImportance importance_;
    std::vector<Layer> layers_;
    TensorPtr head_w_;  // (hidden, 1)
    TensorPtr head_b_;  // (1, 1)
};

struct MLPConfig {
    int input_dim = 0;  // N(N-1)/2 static correlations
    int hidden = 64;    // two hidden layers of this width

    void validate() const;
};

class MLPModel {
public:
    static MLPModel init(const MLPConfig& cfg, Rng& rng);

    // features is (1, input_dim); returns the sigmoid probability as (1, 1).
    TensorPtr forward(const TensorPtr& features) const;

    std::vector<std::pair<std::string, TensorPtr>> parameters() const;

    const MLPConfig& config() const { return config_; }

    MLPModel(MLPConfig cfg, std::vector<TensorPtr> tensors);

private:
    MLPConfig config_;
    TensorPtr w1_, b1_, w2_, b2_, w3_, b3_;
};

// Signed Pearson correlations (population normalization) of all ROI pairs
// over the full series, upper triangle in row-major (i < j) order.
std::vector<double> static_corr_features(const SubjectRecord& subject);

}  // namespace stgcn
