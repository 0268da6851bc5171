#include "stgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "stgcn/kernels.hpp"

namespace stgcn {

namespace {

thread_local int g_no_grad_depth = 0;

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t p = 1;
    for (const int d : shape) {
        if (d < 0) {
            throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
        }
        p *= d;
    }
    return p;
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape() != b->shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a->shape()) + " vs " + shape_str(b->shape()));
    }
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << ", ";
        }
        os << shape[i];
    }
    os << ')';
    return os.str();
}

bool all_finite(const Tensor& t) {
    for (const double v : t.values()) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return from_data(std::move(shape), {}, requires_grad);
}

TensorPtr Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    const auto n = shape_product(shape);
    std::vector<double> v(static_cast<std::size_t>(n), value);
    return from_data(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::from_data(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad) {
    const auto n = shape_product(shape);
    TensorPtr t(new Tensor());
    t->shape_ = std::move(shape);
    if (values.empty()) {
        values.assign(static_cast<std::size_t>(n), 0.0);
    } else if (static_cast<std::int64_t>(values.size()) != n) {
        throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(t->shape_));
    }
    t->data_ = std::move(values);
    t->requires_grad_ = requires_grad;
    if (requires_grad) {
        t->grad_.assign(t->data_.size(), 0.0);
    }
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

TensorPtr Tensor::uniform(std::vector<int> shape, double lo, double hi, Rng& rng,
                          bool requires_grad) {
    const auto n = shape_product(shape);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return from_data(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::op_result(std::vector<int> shape, std::vector<TensorPtr> parents,
                            BackwardFn backward) {
    TensorPtr t(new Tensor());
    const auto n = shape_product(shape);
    t->shape_ = std::move(shape);
    t->data_.assign(static_cast<std::size_t>(n), 0.0);
    bool track = false;
    if (grad_enabled()) {
        for (const auto& p : parents) {
            if (p->requires_grad()) {
                track = true;
                break;
            }
        }
    }
    if (track) {
        t->requires_grad_ = true;
        t->grad_.assign(t->data_.size(), 0.0);
        t->parents_ = std::move(parents);
        t->backward_fn_ = std::move(backward);
    }
    return t;
}

double Tensor::item() const {
    if (size() != 1) {
        throw std::invalid_argument("item() requires a size-1 tensor, got shape " +
                                    shape_str(shape_));
    }
    return data_[0];
}

void Tensor::zero_grad() {
    std::fill(grad_.begin(), grad_.end(), 0.0);
}

void Tensor::backward() {
    if (size() != 1) {
        throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                    shape_str(shape_));
    }
    if (!std::isfinite(data_[0])) {
        throw std::runtime_error("backward() called on a non-finite loss");
    }
    if (!requires_grad_) {
        throw std::runtime_error("backward() on a tensor that does not track gradients");
    }

    // Post-order DFS over gradient-tracking parents.
    std::vector<Tensor*> topo;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    seen.insert(this);
    stack.emplace_back(this, 0);
    while (!stack.empty()) {
        Tensor* node = stack.back().first;
        const std::size_t i = stack.back().second;
        if (i < node->parents_.size()) {
            ++stack.back().second;
            Tensor* parent = node->parents_[i].get();
            if (parent->requires_grad_ && seen.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    // Interior grads are scratch for this sweep; leaf grads persist so that
    // repeated backward() calls accumulate.
    for (Tensor* t : topo) {
        if (!t->is_leaf()) {
            std::fill(t->grad_.begin(), t->grad_.end(), 0.0);
        }
    }
    grad_[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        if ((*it)->backward_fn_) {
            (*it)->backward_fn_(**it);
        }
    }
    for (Tensor* t : topo) {
        if (t->is_leaf()) {
            for (const double g : t->grad_) {
                if (!std::isfinite(g)) {
                    throw std::runtime_error("NaN encountered during backward");
                }
            }
        }
    }
}

// ---- ops ----

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a->shape()) +
                                    " x " + shape_str(b->shape()));
    }
    const int m = a->dim(0);
    const int k = a->dim(1);
    const int n = b->dim(1);
    auto out = Tensor::op_result({m, n}, {a, b}, [a, b, m, k, n](Tensor& self) {
        if (a->requires_grad()) {
            kernels::matmul_nt_acc(a->grad(), self.grad(), b->data(), m, n, k);
        }
        if (b->requires_grad()) {
            kernels::matmul_tn_acc(b->grad(), a->data(), self.grad(), k, m, n);
        }
    });
    kernels::matmul(out->data(), a->data(), b->data(), m, k, n);
    return out;
}

TensorPtr transpose(const TensorPtr& a) {
    if (a->rank() != 2) {
        throw std::invalid_argument("transpose: expected rank-2 tensor, got " +
                                    shape_str(a->shape()));
    }
    const int m = a->dim(0);
    const int n = a->dim(1);
    auto out = Tensor::op_result({n, m}, {a}, [a, m, n](Tensor& self) {
        if (!a->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        double* da = a->grad();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                da[static_cast<std::ptrdiff_t>(i) * n + j] += g[static_cast<std::ptrdiff_t>(j) * m + i];
            }
        }
    });
    const double* src = a->data();
    double* dst = out->data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            dst[static_cast<std::ptrdiff_t>(j) * m + i] = src[static_cast<std::ptrdiff_t>(i) * n + j];
        }
    }
    return out;
}

namespace {

struct ConvDims {
    int ci = 0;
    int t = 0;
    int lanes = 1;
};

ConvDims conv_input_dims(const TensorPtr& x) {
    ConvDims d;
    if (x->rank() == 2) {
        d.ci = x->dim(0);
        d.t = x->dim(1);
        d.lanes = 1;
    } else if (x->rank() == 3) {
        d.ci = x->dim(0);
        d.t = x->dim(1);
        d.lanes = x->dim(2);
    } else {
        throw std::invalid_argument("conv1d_same: input must be (C, T) or (C, T, lanes), got " +
                                    shape_str(x->shape()));
    }
    if (d.t < 1) {
        throw std::invalid_argument("conv1d_same: empty time axis in " + shape_str(x->shape()));
    }
    return d;
}

}  // namespace

TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& w) {
    const ConvDims d = conv_input_dims(x);
    if (w->rank() != 3) {
        throw std::invalid_argument("conv1d_same: kernel must be (Co, Ci, taps), got " +
                                    shape_str(w->shape()));
    }
    const int co = w->dim(0);
    const int taps = w->dim(2);
    if (taps % 2 == 0) {
        throw std::invalid_argument("conv1d_same: kernel size " + std::to_string(taps) +
                                    " must be odd for centered same padding");
    }
    if (w->dim(1) != d.ci) {
        throw std::invalid_argument("conv1d_same: channel mismatch, input " +
                                    shape_str(x->shape()) + " vs kernel " + shape_str(w->shape()));
    }
    std::vector<int> out_shape = x->shape();
    out_shape[0] = co;
    const ConvDims dd = d;
    auto out = Tensor::op_result(std::move(out_shape), {x, w}, [x, w, co, dd, taps](Tensor& self) {
        if (x->requires_grad()) {
            kernels::conv1d_backward_x(x->grad(), self.grad(), w->data(), co, dd.ci, taps, dd.t,
                                       dd.lanes);
        }
        if (w->requires_grad()) {
            kernels::conv1d_backward_w(w->grad(), self.grad(), x->data(), co, dd.ci, taps, dd.t,
                                       dd.lanes);
        }
    });
    kernels::conv1d_forward(out->data(), x->data(), w->data(), co, d.ci, taps, d.t, d.lanes);
    return out;
}

TensorPtr conv1d_same_depthwise(const TensorPtr& x, const TensorPtr& w) {
    const ConvDims d = conv_input_dims(x);
    if (w->rank() != 2) {
        throw std::invalid_argument("conv1d_same_depthwise: kernel must be (C, taps), got " +
                                    shape_str(w->shape()));
    }
    const int taps = w->dim(1);
    if (taps % 2 == 0) {
        throw std::invalid_argument("conv1d_same_depthwise: kernel size " + std::to_string(taps) +
                                    " must be odd for centered same padding");
    }
    if (w->dim(0) != d.ci) {
        throw std::invalid_argument("conv1d_same_depthwise: channel mismatch, input " +
                                    shape_str(x->shape()) + " vs kernel " + shape_str(w->shape()));
    }
    const ConvDims dd = d;
    auto out = Tensor::op_result(x->shape(), {x, w}, [x, w, dd, taps](Tensor& self) {
        if (x->requires_grad()) {
            kernels::conv1d_dw_backward_x(x->grad(), self.grad(), w->data(), dd.ci, taps, dd.t,
                                          dd.lanes);
        }
        if (w->requires_grad()) {
            kernels::conv1d_dw_backward_w(w->grad(), self.grad(), x->data(), dd.ci, taps, dd.t,
                                          dd.lanes);
        }
    });
    kernels::conv1d_dw_forward(out->data(), x->data(), w->data(), d.ci, taps, d.t, d.lanes);
    return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    auto out = Tensor::op_result(a->shape(), {a, b}, [a, b](Tensor& self) {
        const double* g = self.grad();
        const auto n = self.size();
        if (a->requires_grad()) {
            double* da = a->grad();
            for (std::int64_t i = 0; i < n; ++i) {
                da[i] += g[i];
            }
        }
        if (b->requires_grad()) {
            double* db = b->grad();
            for (std::int64_t i = 0; i < n; ++i) {
                db[i] += g[i];
            }
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        out->data()[i] = a->data()[i] + b->data()[i];
    }
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    auto out = Tensor::op_result(a->shape(), {a, b}, [a, b](Tensor& self) {
        const double* g = self.grad();
        const auto n = self.size();
        if (a->requires_grad()) {
            double* da = a->grad();
            for (std::int64_t i = 0; i < n; ++i) {
                da[i] += g[i];
            }
        }
        if (b->requires_grad()) {
            double* db = b->grad();
            for (std::int64_t i = 0; i < n; ++i) {
                db[i] -= g[i];
            }
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        out->data()[i] = a->data()[i] - b->data()[i];
    }
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    auto out = Tensor::op_result(a->shape(), {a, b}, [a, b](Tensor& self) {
        const double* g = self.grad();
        const auto n = self.size();
        if (a->requires_grad()) {
            double* da = a->grad();
            const double* bv = b->data();
            for (std::int64_t i = 0; i < n; ++i) {
                da[i] += g[i] * bv[i];
            }
        }
        if (b->requires_grad()) {
            double* db = b->grad();
            const double* av = a->data();
            for (std::int64_t i = 0; i < n; ++i) {
                db[i] += g[i] * av[i];
            }
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        out->data()[i] = a->data()[i] * b->data()[i];
    }
    return out;
}

TensorPtr scale(const TensorPtr& a, double c) {
    auto out = Tensor::op_result(a->shape(), {a}, [a, c](Tensor& self) {
        if (!a->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        double* da = a->grad();
        const auto n = self.size();
        for (std::int64_t i = 0; i < n; ++i) {
            da[i] += c * g[i];
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        out->data()[i] = c * a->data()[i];
    }
    return out;
}

TensorPtr relu(const TensorPtr& a) {
    auto out = Tensor::op_result(a->shape(), {a}, [a](Tensor& self) {
        if (!a->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        const double* y = self.data();
        double* da = a->grad();
        const auto n = self.size();
        for (std::int64_t i = 0; i < n; ++i) {
            if (y[i] > 0.0) {
                da[i] += g[i];
            }
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = a->data()[i];
        out->data()[i] = v > 0.0 ? v : 0.0;
    }
    return out;
}

namespace {

inline double sigmoid_value(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

TensorPtr sigmoid(const TensorPtr& a) {
    auto out = Tensor::op_result(a->shape(), {a}, [a](Tensor& self) {
        if (!a->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        const double* y = self.data();
        double* da = a->grad();
        const auto n = self.size();
        for (std::int64_t i = 0; i < n; ++i) {
            da[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        out->data()[i] = sigmoid_value(a->data()[i]);
    }
    return out;
}

TensorPtr softplus(const TensorPtr& a) {
    auto out = Tensor::op_result(a->shape(), {a}, [a](Tensor& self) {
        if (!a->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        const double* x = a->data();
        double* da = a->grad();
        const auto n = self.size();
        for (std::int64_t i = 0; i < n; ++i) {
            da[i] += g[i] * sigmoid_value(x[i]);
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double z = a->data()[i];
        // overflow-safe: ln(1+e^z) = z + ln(1+e^-z) for z > 0
        out->data()[i] = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    return out;
}

TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& b) {
    if (x->rank() < 1 || b->rank() != 1 || x->dim(0) != b->dim(0)) {
        throw std::invalid_argument("add_channel_bias: expected x (C, ...) and b (C,), got " +
                                    shape_str(x->shape()) + " and " + shape_str(b->shape()));
    }
    const int c = x->dim(0);
    const std::int64_t inner = x->size() / c;
    auto out = Tensor::op_result(x->shape(), {x, b}, [x, b, c, inner](Tensor& self) {
        const double* g = self.grad();
        if (x->requires_grad()) {
            double* dx = x->grad();
            const auto n = self.size();
            for (std::int64_t i = 0; i < n; ++i) {
                dx[i] += g[i];
            }
        }
        if (b->requires_grad()) {
            double* db = b->grad();
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                const double* gc = g + static_cast<std::ptrdiff_t>(ch) * inner;
                for (std::int64_t i = 0; i < inner; ++i) {
                    acc += gc[i];
                }
                db[ch] += acc;
            }
        }
    });
    for (int ch = 0; ch < c; ++ch) {
        const double bv = b->data()[ch];
        const double* xc = x->data() + static_cast<std::ptrdiff_t>(ch) * inner;
        double* yc = out->data() + static_cast<std::ptrdiff_t>(ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) {
            yc[i] = xc[i] + bv;
        }
    }
    return out;
}

namespace {

struct ReducePlan {
    std::vector<int> out_shape;
    std::vector<std::int64_t> out_stride_per_axis;  // 0 for reduced axes
    std::int64_t reduced_count = 1;
};

ReducePlan plan_reduce(const TensorPtr& x, const std::vector<int>& axes, const char* op) {
    if (axes.empty()) {
        throw std::invalid_argument(std::string(op) + ": no reduction axes given");
    }
    std::vector<bool> reduce(static_cast<std::size_t>(x->rank()), false);
    for (const int ax : axes) {
        if (ax < 0 || ax >= x->rank()) {
            throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(ax) +
                                        " out of range for shape " + shape_str(x->shape()));
        }
        if (reduce[static_cast<std::size_t>(ax)]) {
            throw std::invalid_argument(std::string(op) + ": duplicate axis " + std::to_string(ax));
        }
        if (x->dim(ax) == 0) {
            throw std::invalid_argument(std::string(op) + ": empty reduction axis " +
                                        std::to_string(ax) + " in shape " + shape_str(x->shape()));
        }
        reduce[static_cast<std::size_t>(ax)] = true;
    }
    ReducePlan plan;
    for (int d = 0; d < x->rank(); ++d) {
        if (reduce[static_cast<std::size_t>(d)]) {
            plan.reduced_count *= x->dim(d);
        } else {
            plan.out_shape.push_back(x->dim(d));
        }
    }
    // strides of the output laid out over the kept axes, in input-axis order
    plan.out_stride_per_axis.assign(static_cast<std::size_t>(x->rank()), 0);
    std::int64_t stride = 1;
    for (int d = x->rank() - 1; d >= 0; --d) {
        if (!reduce[static_cast<std::size_t>(d)]) {
            plan.out_stride_per_axis[static_cast<std::size_t>(d)] = stride;
            stride *= x->dim(d);
        }
    }
    return plan;
}

// Applies fn(input_linear_index, output_linear_index) over all elements.
template <typename Fn>
void for_each_reduce_pair(const TensorPtr& x, const ReducePlan& plan, Fn&& fn) {
    const int rank = x->rank();
    std::vector<int> idx(static_cast<std::size_t>(rank), 0);
    const std::int64_t n = x->size();
    std::int64_t out_idx = 0;
    for (std::int64_t lin = 0; lin < n; ++lin) {
        fn(lin, out_idx);
        // odometer increment, maintaining out_idx incrementally
        for (int d = rank - 1; d >= 0; --d) {
            auto& v = idx[static_cast<std::size_t>(d)];
            const std::int64_t os = plan.out_stride_per_axis[static_cast<std::size_t>(d)];
            ++v;
            out_idx += os;
            if (v < x->dim(d)) {
                break;
            }
            out_idx -= os * v;
            v = 0;
        }
    }
}

TensorPtr reduce_impl(const TensorPtr& x, std::vector<int> axes, bool mean, const char* name) {
    const ReducePlan plan = plan_reduce(x, axes, name);
    const double denom = mean ? static_cast<double>(plan.reduced_count) : 1.0;
    auto out = Tensor::op_result(plan.out_shape, {x}, [x, plan, denom](Tensor& self) {
        if (!x->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        double* dx = x->grad();
        const double inv = 1.0 / denom;
        for_each_reduce_pair(x, plan, [&](std::int64_t lin, std::int64_t out_idx) {
            dx[lin] += g[out_idx] * inv;
        });
    });
    const double* src = x->data();
    double* dst = out->data();
    for_each_reduce_pair(x, plan, [&](std::int64_t lin, std::int64_t out_idx) {
        dst[out_idx] += src[lin];
    });
    if (mean) {
        const double inv = 1.0 / denom;
        for (std::int64_t i = 0; i < out->size(); ++i) {
            dst[i] *= inv;
        }
    }
    return out;
}

}  // namespace

TensorPtr reduce_sum(const TensorPtr& x, std::vector<int> axes) {
    return reduce_impl(x, std::move(axes), false, "reduce_sum");
}

TensorPtr reduce_mean(const TensorPtr& x, std::vector<int> axes) {
    return reduce_impl(x, std::move(axes), true, "reduce_mean");
}

TensorPtr sum_all(const TensorPtr& x) {
    std::vector<int> axes(static_cast<std::size_t>(x->rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return reduce_sum(x, std::move(axes));
}

TensorPtr mean_all(const TensorPtr& x) {
    std::vector<int> axes(static_cast<std::size_t>(x->rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return reduce_mean(x, std::move(axes));
}

TensorPtr dropout(const TensorPtr& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        auto out = Tensor::op_result(x->shape(), {x}, [x](Tensor& self) {
            if (!x->requires_grad()) {
                return;
            }
            const double* g = self.grad();
            double* dx = x->grad();
            const auto n = self.size();
            for (std::int64_t i = 0; i < n; ++i) {
                dx[i] += g[i];
            }
        });
        std::copy(x->data(), x->data() + x->size(), out->data());
        return out;
    }
    const double keep = 1.0 - rate;
    const double inv_keep = 1.0 / keep;
    auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x->size()));
    for (auto& m : *mask) {
        m = rng.uniform() < keep ? inv_keep : 0.0;
    }
    auto out = Tensor::op_result(x->shape(), {x}, [x, mask](Tensor& self) {
        if (!x->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        double* dx = x->grad();
        const auto n = self.size();
        for (std::int64_t i = 0; i < n; ++i) {
            dx[i] += g[i] * (*mask)[static_cast<std::size_t>(i)];
        }
    });
    const auto n = out->size();
    for (std::int64_t i = 0; i < n; ++i) {
        out->data()[i] = x->data()[i] * (*mask)[static_cast<std::size_t>(i)];
    }
    return out;
}

TensorPtr reshape(const TensorPtr& x, std::vector<int> shape) {
    const auto n = shape_product(shape);
    if (n != x->size()) {
        throw std::invalid_argument("reshape: size mismatch, " + shape_str(x->shape()) + " -> " +
                                    shape_str(shape));
    }
    auto out = Tensor::op_result(std::move(shape), {x}, [x](Tensor& self) {
        if (!x->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        double* dx = x->grad();
        const auto count = self.size();
        for (std::int64_t i = 0; i < count; ++i) {
            dx[i] += g[i];
        }
    });
    std::copy(x->data(), x->data() + x->size(), out->data());
    return out;
}

namespace {

// packed index of unordered pair (i, j) with i <= j in an upper triangle that
// includes the diagonal
inline std::int64_t packed_index(int i, int j, int n) {
    return static_cast<std::int64_t>(i) * n - static_cast<std::int64_t>(i) * (i - 1) / 2 + (j - i);
}

}  // namespace

TensorPtr mirror_upper(const TensorPtr& packed, int n) {
    const std::int64_t expect = static_cast<std::int64_t>(n) * (n + 1) / 2;
    if (packed->rank() != 1 || packed->size() != expect) {
        throw std::invalid_argument("mirror_upper: expected packed length " +
                                    std::to_string(expect) + " for n=" + std::to_string(n) +
                                    ", got " + shape_str(packed->shape()));
    }
    auto out = Tensor::op_result({n, n}, {packed}, [packed, n](Tensor& self) {
        if (!packed->requires_grad()) {
            return;
        }
        const double* g = self.grad();
        double* dp = packed->grad();
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                double acc = g[static_cast<std::ptrdiff_t>(i) * n + j];
                if (j != i) {
                    acc += g[static_cast<std::ptrdiff_t>(j) * n + i];
                }
                dp[packed_index(i, j, n)] += acc;
            }
        }
    });
    double* dst = out->data();
    const double* src = packed->data();
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const double v = src[packed_index(i, j, n)];
            dst[static_cast<std::ptrdiff_t>(i) * n + j] = v;
            dst[static_cast<std::ptrdiff_t>(j) * n + i] = v;
        }
    }
    return out;
}

TensorPtr bce_loss(const TensorPtr& p, double label) {
    if (p->size() != 1) {
        throw std::invalid_argument("bce_loss: probability must be a scalar, got shape " +
                                    shape_str(p->shape()));
    }
    if (label != 0.0 && label != 1.0) {
        throw std::invalid_argument("bce_loss: label must be 0 or 1, got " + std::to_string(label));
    }
    constexpr double kEps = 1e-12;
    const double pc = std::clamp(p->item(), kEps, 1.0 - kEps);
    auto out = Tensor::op_result({}, {p}, [p, label, pc](Tensor& self) {
        if (!p->requires_grad()) {
            return;
        }
        p->grad()[0] += self.grad()[0] * (pc - label) / (pc * (1.0 - pc));
    });
    out->data()[0] = -(label * std::log(pc) + (1.0 - label) * std::log1p(-pc));
    return out;
}

}  // namespace stgcn
