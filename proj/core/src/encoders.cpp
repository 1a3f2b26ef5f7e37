// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/encoders.hpp"

#include <cmath>

namespace mtr {

namespace {

TensorPtr glorot_tensor(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    const double limit = glorot_limit(fan_in, fan_out);
    auto n = static_cast<std::size_t>(shape_size(shape));
    std::vector<double> v(n);
    for (auto& x : v) x = uniform_real(rng, -limit, limit);
    return Tensor::make(std::move(shape), std::move(v), true);
}

void push(std::vector<Parameter>& out, const std::string& name, const TensorPtr& t) {
    out.push_back(Parameter{name, t, true});
}

/// {len, d} constant whose rows are mask values, for zeroing padded rows.
TensorPtr mask_matrix(const std::vector<double>& mask, int d) {
    const int len = static_cast<int>(mask.size());
    auto m = Tensor::zeros({len, d});
    for (int i = 0; i < len; ++i) {
        if (mask[static_cast<std::size_t>(i)] > 0.0) {
            double* row = m->values.data() + static_cast<std::size_t>(i) * d;
            std::fill(row, row + d, 1.0);
        }
    }
    return m;
}

int true_length_of(const std::vector<double>& mask) {
    int n = 0;
    for (double m : mask) n += m > 0.0 ? 1 : 0;
    return n;
}

}  // namespace

InputProjection InputProjection::init(int d_emb, int l, Rng& rng) {
    InputProjection p;
    p.weight = glorot_tensor({d_emb, l}, d_emb, l, rng);
    p.bias = Tensor::zeros({1, l}, true);
    return p;
}

void InputProjection::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".weight", weight);
    push(out, prefix + ".bias", bias);
}

LstmCell LstmCell::init(int input_dim, int hidden, int recurrent_proj_dim, Rng& rng) {
    LstmCell c;
    const int state = recurrent_proj_dim > 0 ? recurrent_proj_dim : hidden;
    for (TensorPtr* w : {&c.w_i, &c.w_f, &c.w_o, &c.w_g}) {
        *w = glorot_tensor({input_dim, hidden}, input_dim, hidden, rng);
    }
    for (TensorPtr* u : {&c.u_i, &c.u_f, &c.u_o, &c.u_g}) {
        *u = glorot_tensor({state, hidden}, state, hidden, rng);
    }
    c.b_i = Tensor::zeros({1, hidden}, true);
    c.b_f = Tensor::full({1, hidden}, 1.0, true);
    c.b_o = Tensor::zeros({1, hidden}, true);
    c.b_g = Tensor::zeros({1, hidden}, true);
    if (recurrent_proj_dim > 0) {
        c.recurrent_proj = glorot_tensor({hidden, recurrent_proj_dim}, hidden, recurrent_proj_dim, rng);
    }
    return c;
}

void LstmCell::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".w_i", w_i);
    push(out, prefix + ".w_f", w_f);
    push(out, prefix + ".w_o", w_o);
    push(out, prefix + ".w_g", w_g);
    push(out, prefix + ".u_i", u_i);
    push(out, prefix + ".u_f", u_f);
    push(out, prefix + ".u_o", u_o);
    push(out, prefix + ".u_g", u_g);
    push(out, prefix + ".b_i", b_i);
    push(out, prefix + ".b_f", b_f);
    push(out, prefix + ".b_o", b_o);
    push(out, prefix + ".b_g", b_g);
    if (recurrent_proj) push(out, prefix + ".recurrent_proj", recurrent_proj);
}

BiLstmEncoder BiLstmEncoder::init(int input_dim, int hidden, double dropout_rate, Rng& rng,
                                  int recurrent_proj_dim) {
    BiLstmEncoder e;
    e.forward = LstmCell::init(input_dim, hidden, recurrent_proj_dim, rng);
    e.backward = LstmCell::init(input_dim, hidden, recurrent_proj_dim, rng);
    e.hidden = hidden;
    e.dropout_rate = dropout_rate;
    return e;
}

void BiLstmEncoder::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    forward.append_parameters(prefix + ".forward", out);
    backward.append_parameters(prefix + ".backward", out);
}

CnnEncoder CnnEncoder::init(int input_dim, int out_dim, Rng& rng) {
    if (out_dim < 2) throw ValueError(msg("CnnEncoder: output dimension must be >= 2, got ", out_dim));
    CnnEncoder e;
    const int f1 = out_dim / 2;
    const int f3 = out_dim - f1;
    e.w1 = glorot_tensor({f1, 1, 1, input_dim}, input_dim, f1, rng);
    e.b1 = Tensor::zeros({f1}, true);
    e.w3 = glorot_tensor({f3, 3, 1, input_dim}, 3 * input_dim, f3, rng);
    e.b3 = Tensor::zeros({f3}, true);
    return e;
}

void CnnEncoder::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".w1", w1);
    push(out, prefix + ".b1", b1);
    push(out, prefix + ".w3", w3);
    push(out, prefix + ".b3", b3);
}

int encoder_output_dim(const Encoder& enc) {
    return std::visit([](const auto& e) { return e.output_dim(); }, enc);
}

void append_encoder_parameters(const Encoder& enc, const std::string& prefix,
                               std::vector<Parameter>& out) {
    std::visit([&](const auto& e) { e.append_parameters(prefix, out); }, enc);
}

StateProjection StateProjection::init(int in_dim, int k, Rng& rng) {
    StateProjection p;
    p.weight = glorot_tensor({in_dim, k}, in_dim, k, rng);
    return p;
}

void StateProjection::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".weight", weight);
}

namespace {

/// One LSTM step. x is {1, in}; state/cell are {1, h} (state is {1, p} with
/// a recurrent projection). Returns the new (state, cell).
std::pair<TensorPtr, TensorPtr> lstm_step(Tape* tape, const LstmCell& cell, const TensorPtr& x,
                                          const TensorPtr& state, const TensorPtr& c_prev) {
    auto gate = [&](const TensorPtr& w, const TensorPtr& u, const TensorPtr& b) {
        return ops::add(tape, ops::add(tape, ops::matmul(tape, x, w), ops::matmul(tape, state, u)), b);
    };
    auto i = ops::sigmoid(tape, gate(cell.w_i, cell.u_i, cell.b_i));
    auto f = ops::sigmoid(tape, gate(cell.w_f, cell.u_f, cell.b_f));
    auto o = ops::sigmoid(tape, gate(cell.w_o, cell.u_o, cell.b_o));
    auto g = ops::tanh(tape, gate(cell.w_g, cell.u_g, cell.b_g));
    auto c = ops::add(tape, ops::mul(tape, f, c_prev), ops::mul(tape, i, g));
    auto h = ops::mul(tape, o, ops::tanh(tape, c));
    if (cell.recurrent_proj) h = ops::matmul(tape, h, cell.recurrent_proj);
    return {h, c};
}

/// Runs one direction over positions [0, len) of `rows` in the order given
/// by `reversed`, producing per-position states (position-indexed, not
/// time-indexed).
std::vector<TensorPtr> run_direction(Tape* tape, const LstmCell& cell,
                                     const std::vector<TensorPtr>& rows, bool reversed) {
    const int len = static_cast<int>(rows.size());
    std::vector<TensorPtr> states(static_cast<std::size_t>(len));
    const int hidden = cell.b_i->shape[1];
    auto h = Tensor::zeros({1, cell.state_dim()});
    auto c = Tensor::zeros({1, hidden});
    for (int step = 0; step < len; ++step) {
        const int pos = reversed ? len - 1 - step : step;
        auto [h_new, c_new] = lstm_step(tape, cell, rows[static_cast<std::size_t>(pos)], h, c);
        h = h_new;
        c = c_new;
        states[static_cast<std::size_t>(pos)] = h;
    }
    return states;
}

TensorPtr run_bilstm(Tape* tape, const BiLstmEncoder& enc, const TensorPtr& projected, int true_len,
                     EvalMode mode, Rng* rng) {
    auto inputs = projected;
    if (mode == EvalMode::train && enc.dropout_rate > 0.0) {
        inputs = ops::dropout(tape, projected, enc.dropout_rate, mode, rng);
    }
    std::vector<TensorPtr> rows(static_cast<std::size_t>(true_len));
    for (int t = 0; t < true_len; ++t) rows[static_cast<std::size_t>(t)] = ops::slice(tape, inputs, 0, t, 1);

    auto fwd = run_direction(tape, enc.forward, rows, false);
    auto bwd = run_direction(tape, enc.backward, rows, true);

    std::vector<TensorPtr> out_rows(static_cast<std::size_t>(true_len));
    for (int t = 0; t < true_len; ++t) {
        out_rows[static_cast<std::size_t>(t)] =
            ops::concat(tape, {fwd[static_cast<std::size_t>(t)], bwd[static_cast<std::size_t>(t)]}, 1);
    }
    auto states = out_rows.size() == 1 ? out_rows[0] : ops::concat(tape, out_rows, 0);
    const int total_len = projected->shape[0];
    if (total_len > true_len) {
        auto pad = Tensor::zeros({total_len - true_len, enc.output_dim()});
        states = ops::concat(tape, {states, pad}, 0);
    }
    return states;
}

TensorPtr run_cnn(Tape* tape, const CnnEncoder& enc, const TensorPtr& projected,
                  const std::vector<double>& mask) {
    const int len = projected->shape[0];
    const int in_dim = projected->shape[1];
    // Zero padded rows so the same-padded window at a real position sees
    // zeros beyond the true length, then zero the outputs at padded rows.
    auto masked_in = ops::mul(tape, projected, mask_matrix(mask, in_dim));
    auto grid = ops::reshape(tape, masked_in, {len, 1, in_dim});
    auto c1 = ops::conv2d_full_depth(tape, grid, enc.w1, enc.b1, Padding::same);
    auto c3 = ops::conv2d_full_depth(tape, grid, enc.w3, enc.b3, Padding::same);
    auto both = ops::relu(tape, ops::concat(tape, {c1, c3}, 2));
    auto flat = ops::reshape(tape, both, {len, enc.output_dim()});
    return ops::mul(tape, flat, mask_matrix(mask, enc.output_dim()));
}

}  // namespace

TensorPtr encode_states(Tape* tape, const ProcessedText& text, const EmbeddingTable& table,
                        const InputProjection& proj, const Encoder& enc, EvalMode mode, Rng* rng) {
    if (text.true_length < 1) throw ValueError("encode_states: sequence has no unmasked tokens");
    if (table.dim != proj.weight->shape[0]) {
        throw ShapeError(msg("encode_states: embedding dim ", table.dim,
                             " vs input projection rows ", proj.weight->shape[0]));
    }
    auto embedded = lookup_embeddings(table, text);
    auto projected = ops::add(tape, ops::matmul(tape, embedded, proj.weight), proj.bias);
    if (const auto* lstm = std::get_if<BiLstmEncoder>(&enc)) {
        return run_bilstm(tape, *lstm, projected, text.true_length, mode, rng);
    }
    return run_cnn(tape, std::get<CnnEncoder>(enc), projected, text.mask);
}

TensorPtr encode(Tape* tape, const ProcessedText& text, const EmbeddingTable& table,
                 const InputProjection& proj, const Encoder& enc, const StateProjection& out_proj,
                 EvalMode mode, Rng* rng) {
    auto states = encode_states(tape, text, table, proj, enc, mode, rng);
    if (states->shape[1] != out_proj.weight->shape[0]) {
        throw ShapeError(msg("encode: state dim ", states->shape[1], " vs projection rows ",
                             out_proj.weight->shape[0]));
    }
    // No bias here, so masked zero rows stay zero.
    return ops::matmul(tape, states, out_proj.weight);
}

TensorPtr last_states(Tape* tape, const TensorPtr& states, const std::vector<double>& mask) {
    const int true_len = true_length_of(mask);
    if (true_len < 1) throw ValueError("last_states: all positions masked");
    const int dim = states->shape[1];
    if (dim % 2 != 0) {
        throw ShapeError(msg("last_states: state dim ", dim, " is not a forward/backward pair"));
    }
    const int h = dim / 2;
    auto fwd_last = ops::slice(tape, ops::slice(tape, states, 0, true_len - 1, 1), 1, 0, h);
    auto bwd_first = ops::slice(tape, ops::slice(tape, states, 0, 0, 1), 1, h, h);
    return ops::concat(tape, {fwd_last, bwd_first}, 1);
}

std::int64_t bilstm_parameter_count(int input_dim, int hidden) {
    const std::int64_t per_gate = static_cast<std::int64_t>(input_dim) * hidden +
                                  static_cast<std::int64_t>(hidden) * hidden + hidden;
    return 2 * 4 * per_gate;
}

}  // namespace mtr
