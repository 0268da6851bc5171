#include "stgcn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "stgcn/data.hpp"

namespace stgcn {

void STGCNConfig::validate() const {
    if (n_rois < 1) {
        throw std::invalid_argument("STGCNConfig: n_rois must be >= 1");
    }
    if (temporal_kernel % 2 == 0 || temporal_kernel < 1) {
        throw std::invalid_argument("STGCNConfig: temporal_kernel must be odd, got " +
                                    std::to_string(temporal_kernel));
    }
    if (n_layers < 1) {
        throw std::invalid_argument("STGCNConfig: n_layers must be >= 1");
    }
    if (hidden_channels < 1) {
        throw std::invalid_argument("STGCNConfig: hidden_channels must be >= 1");
    }
    if (stride != 1) {
        throw std::invalid_argument("STGCNConfig: only stride 1 is supported");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::invalid_argument("STGCNConfig: dropout_rate must be in [0, 1)");
    }
    if (n_classes != 1) {
        throw std::invalid_argument("STGCNConfig: only the binary single-sigmoid head is supported");
    }
}

namespace {

// Scaled uniform fan-in init. Glorot leaves this depth of un-normalized
// stack with vanishing pooled features at the pinned learning rate, so
// kernels use He-style bounds (sqrt(2) gain on the rectified temporal path).
TensorPtr he_uniform(std::vector<int> shape, int fan_in, double gain, Rng& rng) {
    const double bound = gain * std::sqrt(6.0 / fan_in);
    return Tensor::uniform(std::move(shape), -bound, bound, rng, /*requires_grad=*/true);
}

}  // namespace

STGCNModel STGCNModel::init(const STGCNConfig& cfg, const AffinityMatrix& affinity, Rng& rng) {
    cfg.validate();
    if (affinity.n_rois != cfg.n_rois) {
        throw std::invalid_argument("STGCNModel: affinity has " + std::to_string(affinity.n_rois) +
                                    " ROIs but config says " + std::to_string(cfg.n_rois));
    }
    std::vector<Layer> layers;
    const int h = cfg.hidden_channels;
    int c_in = cfg.in_channels;
    for (int l = 0; l < cfg.n_layers; ++l) {
        Layer layer;
        layer.w_sg = he_uniform({c_in, h}, c_in, 1.0, rng);
        if (cfg.depthwise_temporal) {
            layer.w_tg = he_uniform({h, cfg.temporal_kernel}, cfg.temporal_kernel,
                                    std::sqrt(2.0), rng);
        } else {
            layer.w_tg = he_uniform({h, h, cfg.temporal_kernel}, h * cfg.temporal_kernel,
                                    std::sqrt(2.0), rng);
        }
        layer.bias = Tensor::zeros({h}, /*requires_grad=*/true);
        layers.push_back(std::move(layer));
        c_in = h;
    }
    TensorPtr head_w = he_uniform({h, 1}, h, 1.0, rng);
    TensorPtr head_b = Tensor::zeros({1, 1}, /*requires_grad=*/true);
    STGCNModel model(cfg, affinity, importance_init(cfg.n_rois), std::move(layers),
                     std::move(head_w), std::move(head_b));
    return model;
}

STGCNModel::STGCNModel(STGCNConfig cfg, AffinityMatrix affinity, EdgeImportance importance,
                       std::vector<Layer> layers, TensorPtr head_w, TensorPtr head_b)
    : config_(std::move(cfg)),
      affinity_(std::move(affinity)),
      importance_(std::move(importance)),
      layers_(std::move(layers)),
      head_w_(std::move(head_w)),
      head_b_(std::move(head_b)) {
    norm_const_ = normalization_constant(affinity_);
}

TensorPtr STGCNModel::forward(const TensorPtr& x, bool training, Rng& rng) const {
    if (x->rank() != 3 || x->dim(0) != config_.in_channels || x->dim(2) != config_.n_rois) {
        throw std::invalid_argument("STGCNModel::forward: expected input (" +
                                    std::to_string(config_.in_channels) + ", T', " +
                                    std::to_string(config_.n_rois) + "), got " +
                                    shape_str(x->shape()));
    }
    const int n = config_.n_rois;
    const int t = x->dim(1);
    TensorPtr adj_eff = mul(norm_const_, importance_.materialize());
    TensorPtr adj_t = transpose(adj_eff);

    TensorPtr h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const int c = h->dim(0);
        const int m = layer.w_sg->dim(1);
        // spatial stage: per frame Aeff * f_t * W_SG, batched over frames
        h = reshape(matmul(reshape(h, {c * t, n}), adj_t), {c, t * n});
        h = reshape(matmul(transpose(layer.w_sg), h), {m, t, n});
        if (config_.use_activations) {
            h = relu(h);
        }
        if (config_.dropout_after_spatial) {
            h = dropout(h, config_.dropout_rate, training, rng);
        }
        // temporal stage: same-padded 1D convolution along frames, per ROI
        h = config_.depthwise_temporal ? conv1d_same_depthwise(h, layer.w_tg)
                                       : conv1d_same(h, layer.w_tg);
        h = add_channel_bias(h, layer.bias);
        if (config_.use_activations) {
            h = relu(h);
        }
        if (!config_.dropout_after_spatial) {
            h = dropout(h, config_.dropout_rate, training, rng);
        }
        if (!all_finite(*h)) {
            throw std::runtime_error("STGCNModel::forward: non-finite activations after layer " +
                                     std::to_string(l));
        }
    }
    TensorPtr pooled = reduce_mean(h, {1, 2});  // global average over frames and ROIs
    TensorPtr logit = add(matmul(reshape(pooled, {1, config_.hidden_channels}), head_w_), head_b_);
    return sigmoid(logit);
}

std::vector<std::pair<std::string, TensorPtr>> STGCNModel::parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        out.emplace_back(prefix + "w_sg", layers_[l].w_sg);
        out.emplace_back(prefix + "w_tg", layers_[l].w_tg);
        out.emplace_back(prefix + "bias", layers_[l].bias);
    }
    out.emplace_back("theta", importance_.theta);
    out.emplace_back("head.w", head_w_);
    out.emplace_back("head.b", head_b_);
    return out;
}

std::int64_t STGCNModel::parameter_count() const {
    std::int64_t count = 0;
    for (const auto& [name, p] : parameters()) {
        count += p->size();
    }
    return count;
}

std::int64_t STGCNModel::expected_parameter_count(const STGCNConfig& cfg) {
    const std::int64_t h = cfg.hidden_channels;
    const std::int64_t taps = cfg.temporal_kernel;
    std::int64_t count = 0;
    std::int64_t c_in = cfg.in_channels;
    for (int l = 0; l < cfg.n_layers; ++l) {
        count += c_in * h;                                    // w_sg
        count += cfg.depthwise_temporal ? h * taps : h * h * taps;  // w_tg
        count += h;                                           // bias
        c_in = h;
    }
    count += static_cast<std::int64_t>(cfg.n_rois) * (cfg.n_rois + 1) / 2;  // theta
    count += h + 1;                                           // head
    return count;
}

void MLPConfig::validate() const {
    if (input_dim < 1) {
        throw std::invalid_argument("MLPConfig: input_dim must be >= 1");
    }
    if (hidden < 1) {
        throw std::invalid_argument("MLPConfig: hidden must be >= 1");
    }
}

MLPModel MLPModel::init(const MLPConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<TensorPtr> tensors;
    tensors.push_back(he_uniform({cfg.input_dim, cfg.hidden}, cfg.input_dim, 1.0, rng));
    tensors.push_back(Tensor::zeros({1, cfg.hidden}, true));
    tensors.push_back(he_uniform({cfg.hidden, cfg.hidden}, cfg.hidden, std::sqrt(2.0), rng));
    tensors.push_back(Tensor::zeros({1, cfg.hidden}, true));
    tensors.push_back(he_uniform({cfg.hidden, 1}, cfg.hidden, std::sqrt(2.0), rng));
    tensors.push_back(Tensor::zeros({1, 1}, true));
    return MLPModel(cfg, std::move(tensors));
}

MLPModel::MLPModel(MLPConfig cfg, std::vector<TensorPtr> tensors) : config_(std::move(cfg)) {
    if (tensors.size() != 6) {
        throw std::invalid_argument("MLPModel: expected 6 parameter tensors");
    }
    w1_ = tensors[0];
    b1_ = tensors[1];
    w2_ = tensors[2];
    b2_ = tensors[3];
    w3_ = tensors[4];
    b3_ = tensors[5];
}

TensorPtr MLPModel::forward(const TensorPtr& features) const {
    if (features->rank() != 2 || features->dim(0) != 1 || features->dim(1) != config_.input_dim) {
        throw std::invalid_argument("MLPModel::forward: expected features (1, " +
                                    std::to_string(config_.input_dim) + "), got " +
                                    shape_str(features->shape()));
    }
    TensorPtr h = relu(add(matmul(features, w1_), b1_));
    h = relu(add(matmul(h, w2_), b2_));
    return sigmoid(add(matmul(h, w3_), b3_));
}

std::vector<std::pair<std::string, TensorPtr>> MLPModel::parameters() const {
    return {{"fc1.w", w1_}, {"fc1.b", b1_}, {"fc2.w", w2_}, {"fc2.b", b2_},
            {"fc3.w", w3_}, {"fc3.b", b3_}};
}

std::vector<double> static_corr_features(const SubjectRecord& subject) {
    const int n = subject.n_rois;
    const int t = subject.n_frames;
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < t; ++f) {
            mean[static_cast<std::size_t>(i)] += subject.at(i, f);
        }
        mean[static_cast<std::size_t>(i)] /= t;
    }
    std::vector<double> var(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < t; ++f) {
            const double d = subject.at(i, f) - mean[static_cast<std::size_t>(i)];
            var[static_cast<std::size_t>(i)] += d * d;
        }
        if (var[static_cast<std::size_t>(i)] <= 0.0) {
            throw std::invalid_argument("static_corr_features: ROI " + std::to_string(i) +
                                        " of subject '" + subject.id + "' has zero variance");
        }
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double cov = 0.0;
            for (int f = 0; f < t; ++f) {
                cov += (subject.at(i, f) - mean[static_cast<std::size_t>(i)]) *
                       (subject.at(j, f) - mean[static_cast<std::size_t>(j)]);
            }
            out.push_back(cov / std::sqrt(var[static_cast<std::size_t>(i)] *
                                          var[static_cast<std::size_t>(j)]));
        }
    }
    return out;
}

}  // namespace stgcn
