// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtr {

std::int64_t shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

namespace {

void validate_shape(const std::vector<int>& shape, std::size_t nvalues) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (int e : shape) {
        if (e <= 0) throw ShapeError(msg("tensor extents must be positive, got ", e));
    }
    if (static_cast<std::size_t>(shape_size(shape)) != nvalues) {
        throw ShapeError(msg("shape does not cover values: product ", shape_size(shape), " vs ",
                             nvalues, " values"));
    }
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> v, bool rg)
    : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
    validate_shape(shape, values.size());
    if (requires_grad) grad.assign(values.size(), 0.0);
}

TensorPtr Tensor::make(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), std::move(values), requires_grad);
}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto n = static_cast<std::size_t>(shape_size(shape));
    return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

TensorPtr Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    auto n = static_cast<std::size_t>(shape_size(shape));
    return make(std::move(shape), std::vector<double>(n, value), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return make({1}, {value}, requires_grad);
}

void Tensor::set_requires_grad(bool rg) {
    requires_grad = rg;
    if (rg) {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    } else {
        grad.clear();
    }
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::ensure_finite(const char* op) const {
    if (finite_ok_) return;
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw ValueError(msg(op, ": non-finite input value in tensor of shape ", shape_str()));
        }
    }
    finite_ok_ = true;
}

std::string Tensor::shape_str() const {
    std::string s = "{";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += "}";
    return s;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

void Tape::record(std::vector<TensorPtr> inputs, TensorPtr output, std::function<void()> backward) {
    outputs_.insert(output.get());
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

bool Tape::contains_output(const TensorPtr& t) const {
    return outputs_.count(t.get()) > 0;
}

void Tape::backward(const TensorPtr& loss) {
    if (loss->size() != 1) {
        throw ShapeError(msg("backward: loss must be scalar, got shape ", loss->shape_str()));
    }
    if (!contains_output(loss)) {
        throw ValueError("backward: loss was not produced on this tape");
    }
    // Intermediate grads are recomputed per pass; leaves accumulate.
    for (auto& node : nodes_) {
        if (node.output->requires_grad) node.output->zero_grad();
    }
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backward_fn();
    }
}

// ---------------------------------------------------------------------------
// Op helpers
// ---------------------------------------------------------------------------

namespace ops {
namespace {

bool any_requires_grad(const std::vector<TensorPtr>& inputs) {
    for (const auto& t : inputs) {
        if (t->requires_grad) return true;
    }
    return false;
}

/// Marks the output differentiable and records the node when a tape is
/// active and some input carries gradient.
void finish(Tape* tape, std::vector<TensorPtr> inputs, const TensorPtr& out,
            std::function<void()> backward) {
    if (tape != nullptr && any_requires_grad(inputs)) {
        out->set_requires_grad(true);
        tape->record(std::move(inputs), out, std::move(backward));
    }
}

void check_rank(const char* op, const TensorPtr& t, int rank) {
    if (t->rank() != rank) {
        throw ShapeError(msg(op, ": expected rank-", rank, " tensor, got shape ", t->shape_str()));
    }
}

}  // namespace

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    check_rank("matmul", a, 2);
    check_rank("matmul", b, 2);
    if (a->shape[1] != b->shape[0]) {
        throw ShapeError(msg("matmul: inner extents differ: ", a->shape_str(), " x ", b->shape_str()));
    }
    a->ensure_finite("matmul");
    b->ensure_finite("matmul");
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a->values.data() + static_cast<std::size_t>(i) * k;
        double* orow = out->values.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b->values.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    finish(tape, {a, b}, out, [a, b, out, m, k, n]() {
        // dA += G * B^T ; dB += A^T * G
        if (a->requires_grad) {
            for (int i = 0; i < m; ++i) {
                const double* grow = out->grad.data() + static_cast<std::size_t>(i) * n;
                double* darow = a->grad.data() + static_cast<std::size_t>(i) * k;
                for (int p = 0; p < k; ++p) {
                    const double* brow = b->values.data() + static_cast<std::size_t>(p) * n;
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    darow[p] += acc;
                }
            }
        }
        if (b->requires_grad) {
            for (int i = 0; i < m; ++i) {
                const double* arow = a->values.data() + static_cast<std::size_t>(i) * k;
                const double* grow = out->grad.data() + static_cast<std::size_t>(i) * n;
                for (int p = 0; p < k; ++p) {
                    const double av = arow[p];
                    if (av == 0.0) continue;
                    double* dbrow = b->grad.data() + static_cast<std::size_t>(p) * n;
                    for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                }
            }
        }
    });
    return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    a->ensure_finite("add");
    b->ensure_finite("add");
    const bool same = a->shape == b->shape;
    const bool row_broadcast = !same && a->rank() == 2 && b->rank() == 2 && b->shape[0] == 1 &&
                               b->shape[1] == a->shape[1];
    if (!same && !row_broadcast) {
        throw ShapeError(msg("add: shapes ", a->shape_str(), " and ", b->shape_str(),
                             " are neither equal nor {m,n}+{1,n}"));
    }
    auto out = Tensor::make(a->shape, a->values);
    if (same) {
        for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] += b->values[i];
    } else {
        const int rows = a->shape[0], cols = a->shape[1];
        for (int i = 0; i < rows; ++i) {
            double* orow = out->values.data() + static_cast<std::size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) orow[j] += b->values[j];
        }
    }
    finish(tape, {a, b}, out, [a, b, out, same]() {
        if (a->requires_grad) {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            if (same) {
                for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i];
            } else {
                const int rows = a->shape[0], cols = a->shape[1];
                for (int i = 0; i < rows; ++i) {
                    const double* grow = out->grad.data() + static_cast<std::size_t>(i) * cols;
                    for (int j = 0; j < cols; ++j) b->grad[j] += grow[j];
                }
            }
        }
    });
    return out;
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw ShapeError(msg("mul_elementwise: shapes differ: ", a->shape_str(), " vs ", b->shape_str()));
    }
    a->ensure_finite("mul_elementwise");
    b->ensure_finite("mul_elementwise");
    auto out = Tensor::make(a->shape, a->values);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] *= b->values[i];
    finish(tape, {a, b}, out, [a, b, out]() {
        if (a->requires_grad) {
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * b->values[i];
        }
        if (b->requires_grad) {
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i] * a->values[i];
        }
    });
    return out;
}

namespace {

/// outer/extent/inner decomposition of a shape around `axis`.
struct AxisSplit {
    std::size_t outer, extent, inner;
};

AxisSplit split_axis(const std::vector<int>& shape, int axis) {
    AxisSplit s{1, static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]), 1};
    for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
        s.inner *= static_cast<std::size_t>(shape[i]);
    return s;
}

}  // namespace

TensorPtr concat(Tape* tape, const std::vector<TensorPtr>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: needs at least one input");
    const auto& first = parts.front();
    if (axis < 0 || axis >= first->rank()) {
        throw ShapeError(msg("concat: axis ", axis, " out of range for shape ", first->shape_str()));
    }
    int total = 0;
    for (const auto& p : parts) {
        p->ensure_finite("concat");
        if (p->rank() != first->rank()) {
            throw ShapeError(msg("concat: rank mismatch: ", first->shape_str(), " vs ", p->shape_str()));
        }
        for (int d = 0; d < first->rank(); ++d) {
            if (d != axis && p->shape[static_cast<std::size_t>(d)] != first->shape[static_cast<std::size_t>(d)]) {
                throw ShapeError(msg("concat: extent mismatch off axis ", axis, ": ",
                                     first->shape_str(), " vs ", p->shape_str()));
            }
        }
        total += p->dim(axis);
    }
    std::vector<int> oshape = first->shape;
    oshape[static_cast<std::size_t>(axis)] = total;
    auto out = Tensor::zeros(oshape);
    const auto os = split_axis(oshape, axis);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const auto ps = split_axis(p->shape, axis);
        for (std::size_t o = 0; o < ps.outer; ++o) {
            const double* src = p->values.data() + o * ps.extent * ps.inner;
            double* dst = out->values.data() + (o * os.extent + offset) * os.inner;
            std::copy(src, src + ps.extent * ps.inner, dst);
        }
        offset += ps.extent;
    }
    finish(tape, parts, out, [parts, out, axis, os]() {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const auto ps = split_axis(p->shape, axis);
            if (p->requires_grad) {
                for (std::size_t o = 0; o < ps.outer; ++o) {
                    const double* src = out->grad.data() + (o * os.extent + off) * os.inner;
                    double* dst = p->grad.data() + o * ps.extent * ps.inner;
                    for (std::size_t i = 0; i < ps.extent * ps.inner; ++i) dst[i] += src[i];
                }
            }
            off += ps.extent;
        }
    });
    return out;
}

TensorPtr slice(Tape* tape, const TensorPtr& x, int axis, int start, int length) {
    if (axis < 0 || axis >= x->rank()) {
        throw ShapeError(msg("slice: axis ", axis, " out of range for shape ", x->shape_str()));
    }
    if (start < 0 || length <= 0 || start + length > x->dim(axis)) {
        throw ShapeError(msg("slice: window [", start, ", ", start + length, ") exceeds extent ",
                             x->dim(axis), " of shape ", x->shape_str()));
    }
    x->ensure_finite("slice");
    std::vector<int> oshape = x->shape;
    oshape[static_cast<std::size_t>(axis)] = length;
    auto out = Tensor::zeros(oshape);
    const auto xs = split_axis(x->shape, axis);
    const auto osz = static_cast<std::size_t>(length) * xs.inner;
    for (std::size_t o = 0; o < xs.outer; ++o) {
        const double* src = x->values.data() + (o * xs.extent + static_cast<std::size_t>(start)) * xs.inner;
        std::copy(src, src + osz, out->values.data() + o * osz);
    }
    finish(tape, {x}, out, [x, out, xs, start, length]() {
        if (!x->requires_grad) return;
        const auto osz = static_cast<std::size_t>(length) * xs.inner;
        for (std::size_t o = 0; o < xs.outer; ++o) {
            const double* src = out->grad.data() + o * osz;
            double* dst = x->grad.data() + (o * xs.extent + static_cast<std::size_t>(start)) * xs.inner;
            for (std::size_t i = 0; i < osz; ++i) dst[i] += src[i];
        }
    });
    return out;
}

namespace {

template <typename Fwd, typename Deriv>
TensorPtr unary_elementwise(Tape* tape, const TensorPtr& x, const char* name, Fwd fwd, Deriv dydx) {
    x->ensure_finite(name);
    auto out = Tensor::make(x->shape, x->values);
    for (auto& v : out->values) v = fwd(v);
    finish(tape, {x}, out, [x, out, dydx]() {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < x->grad.size(); ++i) {
            x->grad[i] += out->grad[i] * dydx(x->values[i], out->values[i]);
        }
    });
    return out;
}

}  // namespace

TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
    return unary_elementwise(
        tape, x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr tanh(Tape* tape, const TensorPtr& x) {
    return unary_elementwise(
        tape, x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
    return unary_elementwise(
        tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

TensorPtr softmax(Tape* tape, const TensorPtr& x, const std::vector<double>* mask) {
    x->ensure_finite("softmax");
    if (mask != nullptr && mask->size() != x->values.size()) {
        throw ShapeError(msg("softmax: mask length ", mask->size(), " vs tensor size ", x->size()));
    }
    const std::size_t n = x->values.size();
    auto active = std::make_shared<std::vector<char>>(n, char(1));
    if (mask != nullptr) {
        for (std::size_t i = 0; i < n; ++i) (*active)[i] = (*mask)[i] > 0.0 ? 1 : 0;
    }
    double maxv = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if ((*active)[i]) maxv = std::max(maxv, x->values[i]);
    }
    if (!std::isfinite(maxv)) throw ValueError("softmax: no unmasked positions");
    auto out = Tensor::zeros(x->shape);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if ((*active)[i]) {
            out->values[i] = std::exp(x->values[i] - maxv);
            z += out->values[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) out->values[i] /= z;
    finish(tape, {x}, out, [x, out, active]() {
        if (!x->requires_grad) return;
        double dot = 0.0;
        for (std::size_t i = 0; i < out->values.size(); ++i) dot += out->grad[i] * out->values[i];
        for (std::size_t i = 0; i < out->values.size(); ++i) {
            if ((*active)[i]) x->grad[i] += out->values[i] * (out->grad[i] - dot);
        }
    });
    return out;
}

TensorPtr dropout(Tape* tape, const TensorPtr& x, double rate, EvalMode mode, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ValueError(msg("dropout: rate must lie in [0, 1), got ", rate));
    }
    if (mode == EvalMode::infer || rate == 0.0) return x;
    if (rng == nullptr) throw ValueError("dropout: train mode requires a random source");
    x->ensure_finite("dropout");
    const double keep_scale = 1.0 / (1.0 - rate);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto keep = std::make_shared<std::vector<double>>(x->values.size());
    auto out = Tensor::make(x->shape, x->values);
    for (std::size_t i = 0; i < out->values.size(); ++i) {
        const double k = unit(*rng) >= rate ? keep_scale : 0.0;
        (*keep)[i] = k;
        out->values[i] *= k;
    }
    finish(tape, {x}, out, [x, out, keep]() {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i] * (*keep)[i];
    });
    return out;
}

TensorPtr conv2d_full_depth(Tape* tape, const TensorPtr& x, const TensorPtr& filters,
                            const TensorPtr& bias, Padding padding) {
    check_rank("conv2d_full_depth", x, 3);
    check_rank("conv2d_full_depth", filters, 4);
    if (filters->shape[3] != x->shape[2]) {
        throw ShapeError(msg("conv2d_full_depth: filter depth ", filters->shape[3],
                             " must span input depth ", x->shape[2]));
    }
    if (bias != nullptr && (bias->rank() != 1 || bias->shape[0] != filters->shape[0])) {
        throw ShapeError(msg("conv2d_full_depth: bias shape ", bias->shape_str(), " vs ",
                             filters->shape[0], " filters"));
    }
    x->ensure_finite("conv2d_full_depth");
    filters->ensure_finite("conv2d_full_depth");
    if (bias) bias->ensure_finite("conv2d_full_depth");

    const int h = x->shape[0], w = x->shape[1], c = x->shape[2];
    const int f = filters->shape[0], kh = filters->shape[1], kw = filters->shape[2];
    int oh = 0, ow = 0, off_h = 0, off_w = 0;
    if (padding == Padding::same) {
        oh = h;
        ow = w;
        off_h = (kh - 1) / 2;
        off_w = (kw - 1) / 2;
    } else {
        oh = h - kh + 1;
        ow = w - kw + 1;
        if (oh <= 0 || ow <= 0) {
            throw ShapeError(msg("conv2d_full_depth: valid padding with kernel ", kh, "x", kw,
                                 " exceeds input ", h, "x", w));
        }
    }
    auto out = Tensor::zeros({oh, ow, f});
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            for (int q = 0; q < f; ++q) {
                double acc = bias ? bias->values[static_cast<std::size_t>(q)] : 0.0;
                for (int u = 0; u < kh; ++u) {
                    const int xi = i + u - off_h;
                    if (xi < 0 || xi >= h) continue;
                    for (int v = 0; v < kw; ++v) {
                        const int xj = j + v - off_w;
                        if (xj < 0 || xj >= w) continue;
                        const double* xrow = &x->values[(static_cast<std::size_t>(xi) * w + xj) * c];
                        const double* frow =
                            &filters->values[((static_cast<std::size_t>(q) * kh + u) * kw + v) * c];
                        for (int ch = 0; ch < c; ++ch) acc += xrow[ch] * frow[ch];
                    }
                }
                out->at3(i, j, q) = acc;
            }
        }
    }
    std::vector<TensorPtr> inputs = {x, filters};
    if (bias) inputs.push_back(bias);
    finish(tape, inputs, out, [x, filters, bias, out, off_h, off_w]() {
        const int h = x->shape[0], w = x->shape[1], c = x->shape[2];
        const int f = filters->shape[0], kh = filters->shape[1], kw = filters->shape[2];
        const int oh = out->shape[0], ow = out->shape[1];
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                const double* gpos = &out->grad[(static_cast<std::size_t>(i) * ow + j) * f];
                for (int q = 0; q < f; ++q) {
                    const double g = gpos[q];
                    if (g == 0.0) continue;
                    if (bias && bias->requires_grad) bias->grad[static_cast<std::size_t>(q)] += g;
                    for (int u = 0; u < kh; ++u) {
                        const int xi = i + u - off_h;
                        if (xi < 0 || xi >= h) continue;
                        for (int v = 0; v < kw; ++v) {
                            const int xj = j + v - off_w;
                            if (xj < 0 || xj >= w) continue;
                            const std::size_t xbase = (static_cast<std::size_t>(xi) * w + xj) * c;
                            const std::size_t fbase =
                                ((static_cast<std::size_t>(q) * kh + u) * kw + v) * c;
                            if (x->requires_grad) {
                                for (int ch = 0; ch < c; ++ch)
                                    x->grad[xbase + ch] += g * filters->values[fbase + ch];
                            }
                            if (filters->requires_grad) {
                                for (int ch = 0; ch < c; ++ch)
                                    filters->grad[fbase + ch] += g * x->values[xbase + ch];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

TensorPtr global_maxpool_2d(Tape* tape, const TensorPtr& x) {
    check_rank("global_maxpool_2d", x, 3);
    x->ensure_finite("global_maxpool_2d");
    const int h = x->shape[0], w = x->shape[1], c = x->shape[2];
    auto out = Tensor::zeros({1, c});
    auto argmax = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const std::size_t idx = (static_cast<std::size_t>(i) * w + j) * c + ch;
                if (x->values[idx] > best) {
                    best = x->values[idx];
                    best_idx = idx;
                }
            }
        }
        out->values[static_cast<std::size_t>(ch)] = best;
        (*argmax)[static_cast<std::size_t>(ch)] = best_idx;
    }
    finish(tape, {x}, out, [x, out, argmax]() {
        if (!x->requires_grad) return;
        for (std::size_t ch = 0; ch < argmax->size(); ++ch) {
            x->grad[(*argmax)[ch]] += out->grad[ch];
        }
    });
    return out;
}

TensorPtr masked_maxpool_over_sequence(Tape* tape, const TensorPtr& x, const std::vector<double>& mask) {
    check_rank("masked_maxpool_over_sequence", x, 2);
    const int len = x->shape[0], d = x->shape[1];
    if (mask.size() != static_cast<std::size_t>(len)) {
        throw ShapeError(msg("masked_maxpool_over_sequence: mask length ", mask.size(),
                             " vs sequence length ", len));
    }
    bool any_active = false;
    for (double m : mask) any_active = any_active || m > 0.0;
    if (!any_active) throw ValueError("masked_maxpool_over_sequence: all positions masked");
    x->ensure_finite("masked_maxpool_over_sequence");
    auto out = Tensor::zeros({1, d});
    auto argmax = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (int i = 0; i < len; ++i) {
            if (mask[static_cast<std::size_t>(i)] <= 0.0) continue;
            const std::size_t idx = static_cast<std::size_t>(i) * d + j;
            if (x->values[idx] > best) {
                best = x->values[idx];
                best_idx = idx;
            }
        }
        out->values[static_cast<std::size_t>(j)] = best;
        (*argmax)[static_cast<std::size_t>(j)] = best_idx;
    }
    finish(tape, {x}, out, [x, out, argmax]() {
        if (!x->requires_grad) return;
        for (std::size_t j = 0; j < argmax->size(); ++j) x->grad[(*argmax)[j]] += out->grad[j];
    });
    return out;
}

TensorPtr scalar_scale(Tape* tape, const TensorPtr& x, const TensorPtr& s) {
    if (s->size() != 1) {
        throw ShapeError(msg("scalar_scale: scale must be one element, got shape ", s->shape_str()));
    }
    x->ensure_finite("scalar_scale");
    s->ensure_finite("scalar_scale");
    const double sv = s->values[0];
    auto out = Tensor::make(x->shape, x->values);
    for (auto& v : out->values) v *= sv;
    finish(tape, {x, s}, out, [x, s, out]() {
        const double sv = s->values[0];
        if (x->requires_grad) {
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i] * sv;
        }
        if (s->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < out->grad.size(); ++i) acc += out->grad[i] * x->values[i];
            s->grad[0] += acc;
        }
    });
    return out;
}

TensorPtr reshape(Tape* tape, const TensorPtr& x, std::vector<int> shape) {
    if (shape_size(shape) != x->size()) {
        throw ShapeError(msg("reshape: tensor of ", x->size(), " values cannot take a shape of ",
                             shape_size(shape), " slots"));
    }
    x->ensure_finite("reshape");
    auto out = Tensor::make(std::move(shape), x->values);
    finish(tape, {x}, out, [x, out]() {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr sum_all(Tape* tape, const TensorPtr& x) {
    x->ensure_finite("sum_all");
    double acc = 0.0;
    for (double v : x->values) acc += v;
    auto out = Tensor::make({1, 1}, {acc});
    finish(tape, {x}, out, [x, out]() {
        if (!x->requires_grad) return;
        const double g = out->grad[0];
        for (auto& gv : x->grad) gv += g;
    });
    return out;
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Generic dispatcher
// ---------------------------------------------------------------------------

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::mul_elementwise: return "mul_elementwise";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::tanh: return "tanh";
        case OpKind::relu: return "relu";
        case OpKind::softmax: return "softmax";
        case OpKind::dropout: return "dropout";
        case OpKind::conv2d_full_depth: return "conv2d_full_depth";
        case OpKind::global_maxpool_2d: return "global_maxpool_2d";
        case OpKind::masked_maxpool_over_sequence: return "masked_maxpool_over_sequence";
        case OpKind::scalar_scale: return "scalar_scale";
    }
    return "unknown";
}

namespace {

void need_inputs(OpKind kind, const std::vector<TensorPtr>& inputs, std::size_t lo, std::size_t hi) {
    if (inputs.size() < lo || inputs.size() > hi) {
        throw ShapeError(msg(op_kind_name(kind), ": expected ", lo,
                             lo == hi ? "" : msg("..", hi), " inputs, got ", inputs.size()));
    }
}

}  // namespace

TensorPtr primitive_forward(Tape* tape, OpKind kind, const std::vector<TensorPtr>& inputs,
                            const OpAttrs& attrs) {
    switch (kind) {
        case OpKind::matmul:
            need_inputs(kind, inputs, 2, 2);
            return ops::matmul(tape, inputs[0], inputs[1]);
        case OpKind::add:
            need_inputs(kind, inputs, 2, 2);
            return ops::add(tape, inputs[0], inputs[1]);
        case OpKind::mul_elementwise:
            need_inputs(kind, inputs, 2, 2);
            return ops::mul(tape, inputs[0], inputs[1]);
        case OpKind::concat:
            return ops::concat(tape, inputs, attrs.axis);
        case OpKind::slice:
            need_inputs(kind, inputs, 1, 1);
            return ops::slice(tape, inputs[0], attrs.axis, attrs.start, attrs.length);
        case OpKind::sigmoid:
            need_inputs(kind, inputs, 1, 1);
            return ops::sigmoid(tape, inputs[0]);
        case OpKind::tanh:
            need_inputs(kind, inputs, 1, 1);
            return ops::tanh(tape, inputs[0]);
        case OpKind::relu:
            need_inputs(kind, inputs, 1, 1);
            return ops::relu(tape, inputs[0]);
        case OpKind::softmax:
            need_inputs(kind, inputs, 1, 1);
            return ops::softmax(tape, inputs[0], attrs.mask);
        case OpKind::dropout:
            need_inputs(kind, inputs, 1, 1);
            return ops::dropout(tape, inputs[0], attrs.rate, attrs.mode, attrs.rng);
        case OpKind::conv2d_full_depth:
            need_inputs(kind, inputs, 2, 3);
            return ops::conv2d_full_depth(tape, inputs[0], inputs[1],
                                          inputs.size() == 3 ? inputs[2] : nullptr, attrs.padding);
        case OpKind::global_maxpool_2d:
            need_inputs(kind, inputs, 1, 1);
            return ops::global_maxpool_2d(tape, inputs[0]);
        case OpKind::masked_maxpool_over_sequence:
            need_inputs(kind, inputs, 1, 1);
            if (attrs.mask == nullptr) {
                throw ValueError("masked_maxpool_over_sequence: mask attribute required");
            }
            return ops::masked_maxpool_over_sequence(tape, inputs[0], *attrs.mask);
        case OpKind::scalar_scale:
            need_inputs(kind, inputs, 2, 2);
            return ops::scalar_scale(tape, inputs[0], inputs[1]);
    }
    throw ValueError("primitive_forward: unknown op kind");
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

GradCheckReport finite_difference_check(const ScalarFn& f, const TensorPtr& point, double step,
                                        double tolerance) {
    if (step <= 0.0) throw ValueError("finite_difference_check: step must be positive");

    // Analytic gradient via the tape.
    auto x = Tensor::make(point->shape, point->values, true);
    Tape tape;
    auto loss = f(x, &tape);
    if (loss->size() != 1) {
        throw ShapeError("finite_difference_check: f must return a scalar");
    }
    tape.backward(loss);
    const std::vector<double> analytic = x->grad;
    const double f0 = loss->values[0];

    GradCheckReport report;
    report.coords_checked = point->values.size();
    auto eval_at = [&](const std::vector<double>& vals) {
        auto probe = Tensor::make(point->shape, vals, false);
        return f(probe, nullptr)->values[0];
    };
    std::vector<double> vals = point->values;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        vals[i] = orig + step;
        const double fp = eval_at(vals);
        vals[i] = orig - step;
        const double fm = eval_at(vals);
        vals[i] = orig;

        const double fwd = (fp - f0) / step;
        const double bwd = (f0 - fm) / step;
        const double slope_scale = std::max({1.0, std::abs(fwd), std::abs(bwd)});
        if (std::abs(fwd - bwd) > 1e-3 * slope_scale) {
            // One-sided slopes disagree: the point sits on a kink, where
            // only a subgradient exists. Report, do not fail.
            report.kink_coords.push_back(i);
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
        report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace mtr
