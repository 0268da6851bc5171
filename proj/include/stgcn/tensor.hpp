#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stgcn/rng.hpp"

namespace stgcn {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major double tensor with reverse-mode autodiff. Ops record the
// graph through shared_ptr parents; backward() on a scalar walks the graph in
// reverse topological order. Gradients accumulate additively into leaf
// tensors across backward() calls until zero_grad().
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    using BackwardFn = std::function<void(Tensor&)>;

    static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<int> shape, double value, bool requires_grad = false);
    static TensorPtr from_data(std::vector<int> shape, std::vector<double> values,
                               bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);
    // Uniform in [lo, hi) from the supplied generator.
    static TensorPtr uniform(std::vector<int> shape, double lo, double hi, Rng& rng,
                             bool requires_grad = false);

    // Internal: op output wiring (exposed for ops defined outside this file).
    static TensorPtr op_result(std::vector<int> shape, std::vector<TensorPtr> parents,
                               BackwardFn backward);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool requires_grad() const { return requires_grad_; }
    bool is_leaf() const { return !backward_fn_; }
    double* grad() { return grad_.data(); }
    const double* grad() const { return grad_.data(); }
    const std::vector<double>& grad_values() const { return grad_; }

    // Value of a size-1 tensor.
    double item() const;

    void zero_grad();

    // Reverse sweep from a scalar; throws on non-scalar or non-finite loss.
    void backward();

private:
    Tensor() = default;

    std::vector<int> shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
    bool requires_grad_ = false;
    std::vector<TensorPtr> parents_;
    BackwardFn backward_fn_;
};

// While alive, newly created op results do not track gradients or record the
// graph (evaluation mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- ops ----

// a[p x q] * b[q x r]
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);

// Same-padded cross-correlation along the time axis. x is (C, T) or
// (C, T, lanes); w is (Co, Ci, taps) with taps odd.
TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& w);
// Depthwise: w is (C, taps).
TensorPtr conv1d_same_depthwise(const TensorPtr& x, const TensorPtr& w);

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);

TensorPtr relu(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr softplus(const TensorPtr& a);

// x (C, ...) + b[C] broadcast over trailing axes.
TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& b);

TensorPtr reduce_sum(const TensorPtr& x, std::vector<int> axes);
TensorPtr reduce_mean(const TensorPtr& x, std::vector<int> axes);
TensorPtr sum_all(const TensorPtr& x);
TensorPtr mean_all(const TensorPtr& x);

// Inverted dropout: training mode zeroes elements with probability rate and
// scales survivors by 1/(1-rate); eval mode is the identity. rate in [0, 1).
TensorPtr dropout(const TensorPtr& x, double rate, bool training, Rng& rng);

TensorPtr reshape(const TensorPtr& x, std::vector<int> shape);

// Packed upper triangle (row-major, diagonal included, length n(n+1)/2) to a
// full symmetric n x n matrix; backward sums the two mirrored contributions
// into the single underlying parameter.
TensorPtr mirror_upper(const TensorPtr& packed, int n);

// Binary cross-entropy of a probability against a 0/1 label, with the
// probability clamped to [eps, 1-eps], eps = 1e-12.
TensorPtr bce_loss(const TensorPtr& p, double label);

// Utility
bool all_finite(const Tensor& t);
std::string shape_str(const std::vector<int>& shape);

}  // namespace stgcn
