// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Dense double-precision tensors with tape-based reverse-mode
/// differentiation. Everything is CPU, row-major, and deliberately small:
/// the op set is exactly what the ranking architectures need and gradient
/// checks are expected to be decisive, so clarity wins over throughput.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "mtr/common.hpp"

namespace mtr {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense n-dimensional value container. Values are row-major doubles.
/// `grad` is allocated (same extent as `values`) iff `requires_grad`.
/// Values are treated as immutable once a tensor has entered an op;
/// code that mutates `values` in place (the optimizer, tests) must call
/// invalidate_finite_cache() afterwards.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> v, bool rg = false);

    static TensorPtr make(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
    static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<int> shape, double value, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    // Row-major accessors for the common ranks.
    double& at2(int i, int j) { return values[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at2(int i, int j) const { return values[static_cast<std::size_t>(i) * shape[1] + j]; }
    double& at3(int i, int j, int c) {
        return values[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + c];
    }
    double at3(int i, int j, int c) const {
        return values[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + c];
    }

    void set_requires_grad(bool rg);
    void zero_grad();

    /// Throws ValueError naming `op` if any value is NaN/Inf. The scan
    /// result is cached so repeated use of the same tensor is cheap.
    void ensure_finite(const char* op) const;
    void invalidate_finite_cache() { finite_ok_ = false; }

    std::string shape_str() const;

private:
    mutable bool finite_ok_ = false;
};

std::int64_t shape_size(const std::vector<int>& shape);

/// A named model parameter. Non-trainable parameters (the frozen embedding
/// table) are carried alongside trainable ones so serialization sees them,
/// but receive no optimizer updates and are excluded from parameter counts.
struct Parameter {
    std::string name;
    TensorPtr tensor;
    bool trainable = true;
};

enum class OpKind {
    matmul,
    add,
    mul_elementwise,
    concat,
    slice,
    sigmoid,
    tanh,
    relu,
    softmax,
    dropout,
    conv2d_full_depth,
    global_maxpool_2d,
    masked_maxpool_over_sequence,
    scalar_scale,
};

enum class Padding { same, valid };
enum class EvalMode { train, infer };

/// Attribute bag for primitive_forward. Typed op wrappers in mtr::ops are
/// the primary API; this struct exists so the generic dispatcher (used by
/// the per-primitive gradient-check sweeps) can drive every op kind.
struct OpAttrs {
    int axis = 0;
    int start = 0;
    int length = 0;
    Padding padding = Padding::valid;
    double rate = 0.0;
    EvalMode mode = EvalMode::infer;
    Rng* rng = nullptr;
    const std::vector<double>* mask = nullptr;
};

/// Ordered record of executed ops. Each node keeps shared ownership of its
/// input/output tensors plus a closure implementing the backward rule.
/// A tape and the tensors recorded on it belong to one worker at a time;
/// independent tapes may run concurrently.
class Tape {
public:
    /// Appends an op. `backward` must add each input's contribution into
    /// input->grad (when that input requires grad), reading output->grad.
    void record(std::vector<TensorPtr> inputs, TensorPtr output, std::function<void()> backward);

    /// Reverse sweep from a scalar loss produced on this tape. Grad buffers
    /// of op outputs (intermediates) are recomputed from scratch; leaf grads
    /// accumulate across calls, so two backward passes without a zero_grad
    /// yield exactly twice the leaf gradients.
    void backward(const TensorPtr& loss);

    bool contains_output(const TensorPtr& t) const;
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<TensorPtr> inputs;
        TensorPtr output;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
    std::unordered_set<const Tensor*> outputs_;
};

namespace ops {

// All ops validate shapes and input finiteness, record themselves on `tape`
// when it is non-null and any input requires grad, and propagate
// requires_grad to the output.

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
/// Elementwise add. One explicit broadcast rule: b may be {1, n} against
/// a {m, n} (row broadcast, used for bias terms).
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr concat(Tape* tape, const std::vector<TensorPtr>& parts, int axis);
TensorPtr slice(Tape* tape, const TensorPtr& x, int axis, int start, int length);
TensorPtr sigmoid(Tape* tape, const TensorPtr& x);
TensorPtr tanh(Tape* tape, const TensorPtr& x);
TensorPtr relu(Tape* tape, const TensorPtr& x);
/// Softmax over all entries (the callers use vectors). With a mask, only
/// positions with mask > 0 participate; masked outputs are 0.
TensorPtr softmax(Tape* tape, const TensorPtr& x, const std::vector<double>* mask = nullptr);
/// Inverted dropout: scales kept values by 1/(1-rate) in train mode,
/// identity in infer mode or at rate 0. `rng` is required in train mode.
TensorPtr dropout(Tape* tape, const TensorPtr& x, double rate, EvalMode mode, Rng* rng);
/// 2-D convolution where every filter spans the full channel depth.
/// x: {h, w, c}; filters: {f, kh, kw, c}; bias: {f} or nullptr.
TensorPtr conv2d_full_depth(Tape* tape, const TensorPtr& x, const TensorPtr& filters,
                            const TensorPtr& bias, Padding padding);
/// {h, w, c} -> {1, c}: maximum over all spatial positions per channel.
TensorPtr global_maxpool_2d(Tape* tape, const TensorPtr& x);
/// {len, d} + mask -> {1, d}: per-column max over rows with mask > 0.
/// Masked rows can never win; an all-masked sequence is an error.
TensorPtr masked_maxpool_over_sequence(Tape* tape, const TensorPtr& x, const std::vector<double>& mask);
/// x * s where s is a one-element tensor; gradients reach both.
TensorPtr scalar_scale(Tape* tape, const TensorPtr& x, const TensorPtr& s);

// Auxiliary tape ops used by composite layers (not part of the OpKind
// dispatch set): shape-preserving copy and full reduction.
TensorPtr reshape(Tape* tape, const TensorPtr& x, std::vector<int> shape);
TensorPtr sum_all(Tape* tape, const TensorPtr& x);  // -> {1, 1}

}  // namespace ops

/// Generic dispatcher over the primitive op set.
TensorPtr primitive_forward(Tape* tape, OpKind kind, const std::vector<TensorPtr>& inputs,
                            const OpAttrs& attrs);

const char* op_kind_name(OpKind kind);

/// Result of a finite-difference gradient check.
struct GradCheckReport {
    double max_rel_error = 0.0;  // over non-kink coordinates
    bool pass = false;
    std::size_t coords_checked = 0;
    /// Coordinates where the one-sided slopes disagree (subgradient points,
    /// e.g. relu evaluated exactly at a kink). Excluded from pass/fail.
    std::vector<std::size_t> kink_coords;
};

/// Scalar-valued function of one tensor, run with an optional tape. The
/// function must be deterministic (dropout disabled).
using ScalarFn = std::function<TensorPtr(const TensorPtr& x, Tape* tape)>;

/// Compares the tape gradient of f at `point` against central finite
/// differences. Relative error uses max(|analytic|, |numeric|, 1e-3) as the
/// denominator so near-zero gradients are judged absolutely.
GradCheckReport finite_difference_check(const ScalarFn& f, const TensorPtr& point, double step,
                                        double tolerance);

}  // namespace mtr
