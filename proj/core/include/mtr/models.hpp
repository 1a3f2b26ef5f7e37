// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// The four scoring architectures: the match-tensor model, the siamese
/// semantic similarity model (SSM), and the two hybrids that combine a
/// match-tensor branch (exact-only or full depth) with an SSM branch over
/// shared encoders.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtr/encoders.hpp"
#include "mtr/tensor.hpp"
#include "mtr/text.hpp"

namespace mtr {

enum class Arch { match_tensor, ssm, mt_exact_ssm, mt_ssm };
enum class EncoderKind { bilstm, cnn };
enum class PoolingMode { max, attention };

Arch arch_from_string(const std::string& s);
const char* arch_name(Arch a);
EncoderKind encoder_kind_from_string(const std::string& s);
const char* encoder_kind_name(EncoderKind k);

/// Architecture hyperparameters. Defaults follow the tuned match-tensor
/// configuration; experiment configs override them per run.
struct ModelConfig {
    EncoderKind encoder = EncoderKind::bilstm;
    int projection_dim = 40;  // word-embedding projection l
    int query_hidden = 15;    // per-direction LSTM size; CNN output is 2x this
    int doc_hidden = 70;
    int state_dim = 40;       // match channels k
    int filters1 = 18;        // first-layer filters per height group
    int filters2 = 20;        // 1x1 second-layer filters
    int hidden_dim = 50;      // comparison-net hidden layer
    double dropout = 0.2;
    PoolingMode pooling = PoolingMode::max;
    int attention_dim = 0;  // 0: use hidden_dim
    bool use_recurrent_projection = false;
    int recurrent_projection_dim = 0;

    std::map<std::string, std::string> to_map() const;
    static ModelConfig from_map(const std::map<std::string, std::string>& m);
};

/// First conv layer (three full-depth filter groups of query-width 3 and
/// document-heights 3/4/5) plus the 1x1 second layer.
struct ConvStack {
    TensorPtr w3, b3;  // {f1, 3, 3, c}, {f1}
    TensorPtr w4, b4;  // {f1, 3, 4, c}
    TensorPtr w5, b5;  // {f1, 3, 5, c}
    TensorPtr w2, b2;  // {f2, 1, 1, 3*f1}

    static ConvStack init(int channels, int f1, int f2, Rng& rng);
    int out_features() const { return w2->shape[0]; }
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// Pooled features -> ReLU hidden layer -> sigmoid probability.
struct DenseHead {
    TensorPtr hidden_w, hidden_b;  // {in, h}, {1, h}
    TensorPtr out_w, out_b;        // {h, 1}, {1, 1}

    static DenseHead init(int in_dim, int hidden, Rng& rng);
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// ReLU-transformed query/document vectors compared by dot product and
/// softmax-normalized into pooling weights.
struct AttentionParams {
    TensorPtr q_transform;  // {q_dim, a}
    TensorPtr d_transform;  // {d_dim, a}

    static AttentionParams init(int q_dim, int d_dim, int a, Rng& rng);
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// SSM comparison network: linear projections of the pooled query/document
/// embeddings whose elementwise product is the hidden layer; its sum is the
/// dot product between the projected embeddings.
struct SsmBranch {
    TensorPtr q_proj_w, q_proj_b;  // {2hq, h}, {1, h}
    TensorPtr d_proj_w, d_proj_b;  // {2hd, h}, {1, h}
    PoolingMode pooling = PoolingMode::max;
    std::optional<AttentionParams> attention;

    static SsmBranch init(int q_dim, int d_dim, int hidden, PoolingMode pooling, int attention_dim,
                          Rng& rng);
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

struct HybridCombine {
    TensorPtr weight;  // {f2 + h, 1}
    TensorPtr bias;    // {1, 1}

    static HybridCombine init(int in_dim, Rng& rng);
    void append_parameters(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// Parameter bundle for any of the four architectures. Optional pieces are
/// present according to `arch`; hybrids share the input projection and
/// encoders between their two branches by construction.
struct RankingModel {
    Arch arch = Arch::match_tensor;
    ModelConfig config;
    int embedding_dim = 0;

    InputProjection input_proj;
    Encoder query_encoder;
    Encoder doc_encoder;
    std::optional<StateProjection> q_state_proj, d_state_proj;  // product-channel archs
    TensorPtr alpha;                                            // exact-match weight
    std::optional<ConvStack> conv;
    std::optional<DenseHead> head;      // match_tensor only
    std::optional<SsmBranch> ssm;       // ssm + hybrids
    TensorPtr ssm_out_bias;             // standalone ssm
    std::optional<HybridCombine> combine;

    static RankingModel create(Arch arch, const ModelConfig& config, int embedding_dim,
                               std::uint64_t seed);

    /// Named parameters in a fixed order. When `table` is given its frozen
    /// tensor is included (trainable = false).
    std::vector<Parameter> parameters(const EmbeddingTable* table = nullptr) const;

    /// Relevance probability on the tape (train path) or without one.
    TensorPtr score_on_tape(Tape* tape, const EmbeddingTable& table, const Vocabulary& vocab,
                            const ProcessedText& query, const ProcessedText& doc, EvalMode mode,
                            Rng* rng) const;
    double score(const EmbeddingTable& table, const Vocabulary& vocab, const ProcessedText& query,
                 const ProcessedText& doc) const;
};

/// m x n x (k+1) tensor: k elementwise-product channels from the projected
/// states plus the exact-match channel valued alpha at id-equal positions.
/// PAD and boundary tokens never match; two OOV tokens match only when
/// their raw strings are equal. Masked rows/columns are zero everywhere.
TensorPtr build_match_tensor(Tape* tape, const TensorPtr& q_states, const TensorPtr& d_states,
                             const ProcessedText& query, const ProcessedText& doc,
                             const Vocabulary& vocab, const TensorPtr& alpha);

/// Exact-match channel alone: {m, n, 1}.
TensorPtr build_exact_match_channel(Tape* tape, const ProcessedText& query, const ProcessedText& doc,
                                    const Vocabulary& vocab, const TensorPtr& alpha);

/// Convolves the match tensor (same padding), masking activations at padded
/// positions so pooling only sees real query/document cells: {1, f2}.
TensorPtr conv_stack_features(Tape* tape, const ConvStack& conv, const TensorPtr& match_tensor,
                              const std::vector<double>& qmask, const std::vector<double>& dmask);

/// Full scoring head over a built match tensor -> probability in (0,1).
TensorPtr score_match_tensor(Tape* tape, const TensorPtr& match_tensor, const ConvStack& conv,
                             const DenseHead& head, const std::vector<double>& qmask,
                             const std::vector<double>& dmask);

/// Attention pooling of document states against a query embedding: a convex
/// combination of the unmasked rows of d_states.
TensorPtr attention_pool(Tape* tape, const TensorPtr& d_states, const TensorPtr& q_embedding,
                         const AttentionParams& params, const std::vector<double>& dmask);

struct ParamCountReport {
    std::int64_t total = 0;
    std::vector<std::pair<std::string, std::int64_t>> by_component;

    std::string to_string() const;
};

/// Exact count of trainable scalars (frozen embeddings excluded), itemized
/// by top-level component.
ParamCountReport count_parameters(const RankingModel& model);

}  // namespace mtr
