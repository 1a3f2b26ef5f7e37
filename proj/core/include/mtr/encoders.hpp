// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Sequence encoders: a shared input projection, bi-directional LSTMs,
/// the width-1/width-3 convolutional alternative, and the projection of
/// encoder states to the common match dimension.

#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "mtr/tensor.hpp"
#include "mtr/text.hpp"

namespace mtr {

/// d_emb x l projection applied to both query and document embeddings.
struct InputProjection {
    TensorPtr weight;  // {d_emb, l}
    TensorPtr bias;    // {1, l}

    static InputProjection init(int d_emb, int l, Rng& rng);
    int output_dim() const { return weight->shape[1]; }
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// One direction of an LSTM: per-gate input weights, recurrent weights and
/// biases. The forget-gate bias starts at 1.0, everything else at 0.
struct LstmCell {
    TensorPtr w_i, w_f, w_o, w_g;  // {input, hidden}
    TensorPtr u_i, u_f, u_o, u_g;  // {state, hidden}
    TensorPtr b_i, b_f, b_o, b_g;  // {1, hidden}
    // Optional recurrent projection (off by default in all tuned models):
    // hidden -> proj, applied to the emitted state and fed back recurrently.
    TensorPtr recurrent_proj;  // {hidden, proj} or null

    static LstmCell init(int input_dim, int hidden, int recurrent_proj_dim, Rng& rng);
    int state_dim() const { return recurrent_proj ? recurrent_proj->shape[1] : b_i->shape[1]; }
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

struct BiLstmEncoder {
    LstmCell forward;
    LstmCell backward;
    int hidden = 0;
    double dropout_rate = 0.0;  // non-recurrent connections only

    static BiLstmEncoder init(int input_dim, int hidden, double dropout_rate, Rng& rng,
                              int recurrent_proj_dim = 0);
    int output_dim() const { return forward.state_dim() + backward.state_dim(); }
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// Same-padded 1-D convolutions over the projected embeddings: the target
/// output dimension is split evenly between width-1 and width-3 filters,
/// followed by a ReLU. Per-position receptive field is at most 3 tokens.
struct CnnEncoder {
    TensorPtr w1, b1;  // {f1, 1, 1, input}, {f1}
    TensorPtr w3, b3;  // {f3, 3, 1, input}, {f3}

    static CnnEncoder init(int input_dim, int out_dim, Rng& rng);
    int output_dim() const { return w1->shape[0] + w3->shape[0]; }
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

using Encoder = std::variant<BiLstmEncoder, CnnEncoder>;

int encoder_output_dim(const Encoder& enc);
void append_encoder_parameters(const Encoder& enc, const std::string& prefix,
                               std::vector<Parameter>& out);

/// 2h x k map to the shared match dimension (no bias, no nonlinearity).
/// Query and document sides use separate instances.
struct StateProjection {
    TensorPtr weight;  // {in, k}

    static StateProjection init(int in_dim, int k, Rng& rng);
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// Runs embeddings -> input projection -> encoder. Returns {len, D} states
/// where D is the encoder output dimension; masked positions are zero rows.
/// Dropout (train mode only) applies to the LSTM inputs, i.e. the
/// non-recurrent connections; the CNN path uses no dropout.
TensorPtr encode_states(Tape* tape, const ProcessedText& text, const EmbeddingTable& table,
                        const InputProjection& proj, const Encoder& enc, EvalMode mode, Rng* rng);

/// encode_states followed by the state projection: {len, k} per-position
/// vectors with zero rows at masked positions.
TensorPtr encode(Tape* tape, const ProcessedText& text, const EmbeddingTable& table,
                 const InputProjection& proj, const Encoder& enc, const StateProjection& out_proj,
                 EvalMode mode, Rng* rng);

/// Concatenation of the forward state at the last unmasked position and the
/// backward state at position 0; {1, 2h}. Requires a bi-LSTM state layout.
TensorPtr last_states(Tape* tape, const TensorPtr& states, const std::vector<double>& mask);

/// Exact trainable-parameter count of a bi-LSTM: 2 * 4 * (in*h + h*h + h)
/// without the recurrent projection.
std::int64_t bilstm_parameter_count(int input_dim, int hidden);

}  // namespace mtr
