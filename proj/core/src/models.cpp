// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/models.hpp"

#include <algorithm>
#include <cmath>

namespace mtr {

Arch arch_from_string(const std::string& s) {
    if (s == "match_tensor") return Arch::match_tensor;
    if (s == "ssm") return Arch::ssm;
    if (s == "mt_exact_ssm") return Arch::mt_exact_ssm;
    if (s == "mt_ssm") return Arch::mt_ssm;
    throw UsageError(msg("unknown architecture \"", s,
                         "\" (expected match_tensor | ssm | mt_exact_ssm | mt_ssm)"));
}

const char* arch_name(Arch a) {
    switch (a) {
        case Arch::match_tensor: return "match_tensor";
        case Arch::ssm: return "ssm";
        case Arch::mt_exact_ssm: return "mt_exact_ssm";
        case Arch::mt_ssm: return "mt_ssm";
    }
    return "match_tensor";
}

EncoderKind encoder_kind_from_string(const std::string& s) {
    if (s == "bilstm") return EncoderKind::bilstm;
    if (s == "cnn") return EncoderKind::cnn;
    throw UsageError(msg("unknown encoder \"", s, "\" (expected bilstm | cnn)"));
}

const char* encoder_kind_name(EncoderKind k) {
    return k == EncoderKind::bilstm ? "bilstm" : "cnn";
}

std::map<std::string, std::string> ModelConfig::to_map() const {
    std::map<std::string, std::string> m;
    m["encoder"] = encoder_kind_name(encoder);
    m["projection_dim"] = std::to_string(projection_dim);
    m["query_hidden"] = std::to_string(query_hidden);
    m["doc_hidden"] = std::to_string(doc_hidden);
    m["state_dim"] = std::to_string(state_dim);
    m["filters1"] = std::to_string(filters1);
    m["filters2"] = std::to_string(filters2);
    m["hidden_dim"] = std::to_string(hidden_dim);
    m["dropout"] = std::to_string(dropout);
    m["pooling"] = pooling == PoolingMode::max ? "max" : "attention";
    m["attention_dim"] = std::to_string(attention_dim);
    m["use_recurrent_projection"] = use_recurrent_projection ? "1" : "0";
    m["recurrent_projection_dim"] = std::to_string(recurrent_projection_dim);
    return m;
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& m) {
    ModelConfig c;
    auto get = [&m](const char* key, const std::string& fallback) {
        auto it = m.find(key);
        return it == m.end() ? fallback : it->second;
    };
    c.encoder = encoder_kind_from_string(get("encoder", "bilstm"));
    c.projection_dim = std::stoi(get("projection_dim", "40"));
    c.query_hidden = std::stoi(get("query_hidden", "15"));
    c.doc_hidden = std::stoi(get("doc_hidden", "70"));
    c.state_dim = std::stoi(get("state_dim", "40"));
    c.filters1 = std::stoi(get("filters1", "18"));
    c.filters2 = std::stoi(get("filters2", "20"));
    c.hidden_dim = std::stoi(get("hidden_dim", "50"));
    c.dropout = std::stod(get("dropout", "0.2"));
    const std::string pooling = get("pooling", "max");
    if (pooling == "max") {
        c.pooling = PoolingMode::max;
    } else if (pooling == "attention") {
        c.pooling = PoolingMode::attention;
    } else {
        throw UsageError(msg("unknown pooling mode \"", pooling, "\""));
    }
    c.attention_dim = std::stoi(get("attention_dim", "0"));
    c.use_recurrent_projection = get("use_recurrent_projection", "0") == "1";
    c.recurrent_projection_dim = std::stoi(get("recurrent_projection_dim", "0"));
    return c;
}

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

}  // namespace

ConvStack ConvStack::init(int channels, int f1, int f2, Rng& rng) {
    ConvStack s;
    s.w3 = glorot_tensor({f1, 3, 3, channels}, 3 * 3 * channels, f1, rng);
    s.b3 = Tensor::zeros({f1}, true);
    s.w4 = glorot_tensor({f1, 3, 4, channels}, 3 * 4 * channels, f1, rng);
    s.b4 = Tensor::zeros({f1}, true);
    s.w5 = glorot_tensor({f1, 3, 5, channels}, 3 * 5 * channels, f1, rng);
    s.b5 = Tensor::zeros({f1}, true);
    s.w2 = glorot_tensor({f2, 1, 1, 3 * f1}, 3 * f1, f2, rng);
    s.b2 = Tensor::zeros({f2}, true);
    return s;
}

void ConvStack::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".w3", w3);
    push(out, prefix + ".b3", b3);
    push(out, prefix + ".w4", w4);
    push(out, prefix + ".b4", b4);
    push(out, prefix + ".w5", w5);
    push(out, prefix + ".b5", b5);
    push(out, prefix + ".w2", w2);
    push(out, prefix + ".b2", b2);
}

DenseHead DenseHead::init(int in_dim, int hidden, Rng& rng) {
    DenseHead h;
    h.hidden_w = glorot_tensor({in_dim, hidden}, in_dim, hidden, rng);
    h.hidden_b = Tensor::zeros({1, hidden}, true);
    h.out_w = glorot_tensor({hidden, 1}, hidden, 1, rng);
    h.out_b = Tensor::zeros({1, 1}, true);
    return h;
}

void DenseHead::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".hidden_w", hidden_w);
    push(out, prefix + ".hidden_b", hidden_b);
    push(out, prefix + ".out_w", out_w);
    push(out, prefix + ".out_b", out_b);
}

AttentionParams AttentionParams::init(int q_dim, int d_dim, int a, Rng& rng) {
    AttentionParams p;
    p.q_transform = glorot_tensor({q_dim, a}, q_dim, a, rng);
    p.d_transform = glorot_tensor({d_dim, a}, d_dim, a, rng);
    return p;
}

void AttentionParams::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".q_transform", q_transform);
    push(out, prefix + ".d_transform", d_transform);
}

SsmBranch SsmBranch::init(int q_dim, int d_dim, int hidden, PoolingMode pooling, int attention_dim,
                          Rng& rng) {
    SsmBranch b;
    b.q_proj_w = glorot_tensor({q_dim, hidden}, q_dim, hidden, rng);
    b.q_proj_b = Tensor::zeros({1, hidden}, true);
    b.d_proj_w = glorot_tensor({d_dim, hidden}, d_dim, hidden, rng);
    b.d_proj_b = Tensor::zeros({1, hidden}, true);
    b.pooling = pooling;
    if (pooling == PoolingMode::attention) {
        b.attention = AttentionParams::init(q_dim, d_dim, attention_dim > 0 ? attention_dim : hidden, rng);
    }
    return b;
}

void SsmBranch::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".query_projection_w", q_proj_w);
    push(out, prefix + ".query_projection_b", q_proj_b);
    push(out, prefix + ".doc_projection_w", d_proj_w);
    push(out, prefix + ".doc_projection_b", d_proj_b);
    if (attention) attention->append_parameters(prefix + ".attention", out);
}

HybridCombine HybridCombine::init(int in_dim, Rng& rng) {
    HybridCombine c;
    c.weight = glorot_tensor({in_dim, 1}, in_dim, 1, rng);
    c.bias = Tensor::zeros({1, 1}, true);
    return c;
}

void HybridCombine::append_parameters(const std::string& prefix, std::vector<Parameter>& out) const {
    push(out, prefix + ".weight", weight);
    push(out, prefix + ".bias", bias);
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

Encoder make_encoder(const ModelConfig& cfg, int hidden, Rng& rng) {
    if (cfg.encoder == EncoderKind::bilstm) {
        return BiLstmEncoder::init(cfg.projection_dim, hidden, cfg.dropout, rng,
                                   cfg.use_recurrent_projection ? cfg.recurrent_projection_dim : 0);
    }
    // The CNN stands in for the bi-LSTM, so it emits the same dimension.
    return CnnEncoder::init(cfg.projection_dim, 2 * hidden, rng);
}

bool has_product_channels(Arch a) { return a == Arch::match_tensor || a == Arch::mt_ssm; }
bool has_exact_channel(Arch a) { return a != Arch::ssm; }
bool has_ssm_branch(Arch a) { return a != Arch::match_tensor; }
bool is_hybrid(Arch a) { return a == Arch::mt_exact_ssm || a == Arch::mt_ssm; }

}  // namespace

RankingModel RankingModel::create(Arch arch, const ModelConfig& config, int embedding_dim,
                                  std::uint64_t seed) {
    if (embedding_dim <= 0) throw ValueError("RankingModel: embedding dimension must be positive");
    Rng rng(seed);
    RankingModel m;
    m.arch = arch;
    m.config = config;
    m.embedding_dim = embedding_dim;
    m.input_proj = InputProjection::init(embedding_dim, config.projection_dim, rng);
    m.query_encoder = make_encoder(config, config.query_hidden, rng);
    m.doc_encoder = make_encoder(config, config.doc_hidden, rng);
    const int q_dim = encoder_output_dim(m.query_encoder);
    const int d_dim = encoder_output_dim(m.doc_encoder);

    if (has_product_channels(arch)) {
        m.q_state_proj = StateProjection::init(q_dim, config.state_dim, rng);
        m.d_state_proj = StateProjection::init(d_dim, config.state_dim, rng);
    }
    if (has_exact_channel(arch)) {
        m.alpha = Tensor::scalar(1.0, true);
        const int channels = has_product_channels(arch) ? config.state_dim + 1 : 1;
        m.conv = ConvStack::init(channels, config.filters1, config.filters2, rng);
    }
    if (arch == Arch::match_tensor) {
        m.head = DenseHead::init(config.filters2, config.hidden_dim, rng);
    }
    if (has_ssm_branch(arch)) {
        m.ssm = SsmBranch::init(q_dim, d_dim, config.hidden_dim, config.pooling,
                                config.attention_dim, rng);
        if (arch == Arch::ssm) m.ssm_out_bias = Tensor::zeros({1, 1}, true);
    }
    if (is_hybrid(arch)) {
        m.combine = HybridCombine::init(config.filters2 + config.hidden_dim, rng);
    }
    return m;
}

std::vector<Parameter> RankingModel::parameters(const EmbeddingTable* table) const {
    std::vector<Parameter> out;
    input_proj.append_parameters("input_projection", out);
    append_encoder_parameters(query_encoder,
                              config.encoder == EncoderKind::bilstm ? "query_lstm" : "query_cnn", out);
    append_encoder_parameters(doc_encoder,
                              config.encoder == EncoderKind::bilstm ? "doc_lstm" : "doc_cnn", out);
    if (q_state_proj) q_state_proj->append_parameters("query_state_projection", out);
    if (d_state_proj) d_state_proj->append_parameters("doc_state_projection", out);
    if (alpha) push(out, "exact_match.alpha", alpha);
    if (conv) conv->append_parameters("match_conv", out);
    if (head) head->append_parameters("head", out);
    if (ssm) ssm->append_parameters("ssm", out);
    if (ssm_out_bias) push(out, "ssm.output_bias", ssm_out_bias);
    if (combine) combine->append_parameters("combine", out);
    if (table != nullptr) out.push_back(table->as_parameter());
    return out;
}

// ---------------------------------------------------------------------------
// Match tensor assembly
// ---------------------------------------------------------------------------

namespace {

/// True when the position holds a real word usable for exact matching.
bool matchable(const ProcessedText& t, const Vocabulary& vocab, int pos) {
    const auto i = static_cast<std::size_t>(pos);
    if (t.mask[i] <= 0.0) return false;
    const int id = t.ids[i];
    return id == vocab.oov_id() || !vocab.is_reserved(id);
}

TensorPtr exact_match_indicator(const ProcessedText& q, const ProcessedText& d,
                                const Vocabulary& vocab) {
    const int m = q.length(), n = d.length();
    auto ind = Tensor::zeros({m, n, 1});
    for (int i = 0; i < m; ++i) {
        if (!matchable(q, vocab, i)) continue;
        const int qid = q.ids[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            if (!matchable(d, vocab, j)) continue;
            const int did = d.ids[static_cast<std::size_t>(j)];
            if (qid != did) continue;
            if (qid == vocab.oov_id() &&
                q.raw_tokens[static_cast<std::size_t>(i)] != d.raw_tokens[static_cast<std::size_t>(j)]) {
                continue;
            }
            ind->at3(i, j, 0) = 1.0;
        }
    }
    return ind;
}

/// Product channels: out(i,j,c) = q(i,c) * d(j,c) at unmasked (i,j), else 0.
TensorPtr match_product_channels(Tape* tape, const TensorPtr& q_states, const TensorPtr& d_states,
                                 const std::vector<double>& qmask, const std::vector<double>& dmask) {
    const int m = q_states->shape[0], n = d_states->shape[0], k = q_states->shape[1];
    q_states->ensure_finite("match_product_channels");
    d_states->ensure_finite("match_product_channels");
    auto out = Tensor::zeros({m, n, k});
    for (int i = 0; i < m; ++i) {
        if (qmask[static_cast<std::size_t>(i)] <= 0.0) continue;
        const double* qrow = q_states->values.data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            if (dmask[static_cast<std::size_t>(j)] <= 0.0) continue;
            const double* drow = d_states->values.data() + static_cast<std::size_t>(j) * k;
            double* orow = out->values.data() + (static_cast<std::size_t>(i) * n + j) * k;
            for (int c = 0; c < k; ++c) orow[c] = qrow[c] * drow[c];
        }
    }
    if (tape != nullptr && (q_states->requires_grad || d_states->requires_grad)) {
        out->set_requires_grad(true);
        tape->record({q_states, d_states}, out, [q_states, d_states, out, qmask, dmask, m, n, k]() {
            for (int i = 0; i < m; ++i) {
                if (qmask[static_cast<std::size_t>(i)] <= 0.0) continue;
                const double* qrow = q_states->values.data() + static_cast<std::size_t>(i) * k;
                double* dq = q_states->requires_grad
                                 ? q_states->grad.data() + static_cast<std::size_t>(i) * k
                                 : nullptr;
                for (int j = 0; j < n; ++j) {
                    if (dmask[static_cast<std::size_t>(j)] <= 0.0) continue;
                    const double* drow = d_states->values.data() + static_cast<std::size_t>(j) * k;
                    const double* grow = out->grad.data() + (static_cast<std::size_t>(i) * n + j) * k;
                    if (dq != nullptr) {
                        for (int c = 0; c < k; ++c) dq[c] += grow[c] * drow[c];
                    }
                    if (d_states->requires_grad) {
                        double* dd = d_states->grad.data() + static_cast<std::size_t>(j) * k;
                        for (int c = 0; c < k; ++c) dd[c] += grow[c] * qrow[c];
                    }
                }
            }
        });
    }
    return out;
}

/// {m, n, c} constant: 1 where both positions are unmasked.
TensorPtr pair_mask_grid(const std::vector<double>& qmask, const std::vector<double>& dmask, int c) {
    const int m = static_cast<int>(qmask.size()), n = static_cast<int>(dmask.size());
    auto grid = Tensor::zeros({m, n, c});
    for (int i = 0; i < m; ++i) {
        if (qmask[static_cast<std::size_t>(i)] <= 0.0) continue;
        for (int j = 0; j < n; ++j) {
            if (dmask[static_cast<std::size_t>(j)] <= 0.0) continue;
            double* cell = grid->values.data() + (static_cast<std::size_t>(i) * n + j) * c;
            std::fill(cell, cell + c, 1.0);
        }
    }
    return grid;
}

}  // namespace

TensorPtr build_exact_match_channel(Tape* tape, const ProcessedText& query, const ProcessedText& doc,
                                    const Vocabulary& vocab, const TensorPtr& alpha) {
    return ops::scalar_scale(tape, exact_match_indicator(query, doc, vocab), alpha);
}

TensorPtr build_match_tensor(Tape* tape, const TensorPtr& q_states, const TensorPtr& d_states,
                             const ProcessedText& query, const ProcessedText& doc,
                             const Vocabulary& vocab, const TensorPtr& alpha) {
    if (q_states->shape[1] != d_states->shape[1]) {
        throw ShapeError(msg("build_match_tensor: query state dim ", q_states->shape[1],
                             " vs document state dim ", d_states->shape[1]));
    }
    if (q_states->shape[0] != query.length() || d_states->shape[0] != doc.length()) {
        throw ShapeError("build_match_tensor: state rows do not match sequence lengths");
    }
    auto products = match_product_channels(tape, q_states, d_states, query.mask, doc.mask);
    auto exact = build_exact_match_channel(tape, query, doc, vocab, alpha);
    return ops::concat(tape, {products, exact}, 2);
}

TensorPtr conv_stack_features(Tape* tape, const ConvStack& conv, const TensorPtr& match_tensor,
                              const std::vector<double>& qmask, const std::vector<double>& dmask) {
    auto c3 = ops::conv2d_full_depth(tape, match_tensor, conv.w3, conv.b3, Padding::same);
    auto c4 = ops::conv2d_full_depth(tape, match_tensor, conv.w4, conv.b4, Padding::same);
    auto c5 = ops::conv2d_full_depth(tape, match_tensor, conv.w5, conv.b5, Padding::same);
    auto first = ops::relu(tape, ops::concat(tape, {c3, c4, c5}, 2));
    // Activations at padded cells are zeroed so global pooling ranges only
    // over real positions (plus the zero floor).
    first = ops::mul(tape, first, pair_mask_grid(qmask, dmask, first->shape[2]));
    auto second = ops::relu(tape, ops::conv2d_full_depth(tape, first, conv.w2, conv.b2, Padding::same));
    second = ops::mul(tape, second, pair_mask_grid(qmask, dmask, second->shape[2]));
    return ops::global_maxpool_2d(tape, second);
}

TensorPtr score_match_tensor(Tape* tape, const TensorPtr& match_tensor, const ConvStack& conv,
                             const DenseHead& head, const std::vector<double>& qmask,
                             const std::vector<double>& dmask) {
    auto feats = conv_stack_features(tape, conv, match_tensor, qmask, dmask);
    auto hidden = ops::relu(
        tape, ops::add(tape, ops::matmul(tape, feats, head.hidden_w), head.hidden_b));
    auto logit = ops::add(tape, ops::matmul(tape, hidden, head.out_w), head.out_b);
    return ops::sigmoid(tape, logit);
}

TensorPtr attention_pool(Tape* tape, const TensorPtr& d_states, const TensorPtr& q_embedding,
                         const AttentionParams& params, const std::vector<double>& dmask) {
    const int n = d_states->shape[0];
    auto tq = ops::relu(tape, ops::matmul(tape, q_embedding, params.q_transform));
    auto td = ops::relu(tape, ops::matmul(tape, d_states, params.d_transform));
    auto logits = ops::matmul(tape, td, ops::reshape(tape, tq, {tq->shape[1], 1}));
    auto weights = ops::softmax(tape, logits, &dmask);
    return ops::matmul(tape, ops::reshape(tape, weights, {1, n}), d_states);
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

namespace {

TensorPtr pooled_query_embedding(Tape* tape, const RankingModel& model, const TensorPtr& q_states,
                                 const ProcessedText& query) {
    if (model.config.encoder == EncoderKind::bilstm) {
        return last_states(tape, q_states, query.mask);
    }
    // CNN states have no notion of a last recurrent state; pool instead.
    return ops::masked_maxpool_over_sequence(tape, q_states, query.mask);
}

TensorPtr ssm_hidden_layer(Tape* tape, const RankingModel& model, const TensorPtr& q_states,
                           const TensorPtr& d_states, const ProcessedText& query,
                           const ProcessedText& doc) {
    const auto& branch = *model.ssm;
    auto q_emb = pooled_query_embedding(tape, model, q_states, query);
    TensorPtr d_emb;
    if (branch.pooling == PoolingMode::attention) {
        d_emb = attention_pool(tape, d_states, q_emb, *branch.attention, doc.mask);
    } else {
        d_emb = ops::masked_maxpool_over_sequence(tape, d_states, doc.mask);
    }
    auto pq = ops::add(tape, ops::matmul(tape, q_emb, branch.q_proj_w), branch.q_proj_b);
    auto pd = ops::add(tape, ops::matmul(tape, d_emb, branch.d_proj_w), branch.d_proj_b);
    return ops::mul(tape, pq, pd);
}

}  // namespace

TensorPtr RankingModel::score_on_tape(Tape* tape, const EmbeddingTable& table, const Vocabulary& vocab,
                                      const ProcessedText& query, const ProcessedText& doc,
                                      EvalMode mode, Rng* rng) const {
    if (query.true_length < 1 || doc.true_length < 1) {
        throw ValueError("score: query and document must each have at least one token");
    }
    auto q_states = encode_states(tape, query, table, input_proj, query_encoder, mode, rng);
    auto d_states = encode_states(tape, doc, table, input_proj, doc_encoder, mode, rng);

    if (arch == Arch::match_tensor) {
        auto q_k = ops::matmul(tape, q_states, q_state_proj->weight);
        auto d_k = ops::matmul(tape, d_states, d_state_proj->weight);
        auto mt = build_match_tensor(tape, q_k, d_k, query, doc, vocab, alpha);
        return score_match_tensor(tape, mt, *conv, *head, query.mask, doc.mask);
    }
    if (arch == Arch::ssm) {
        auto hidden = ssm_hidden_layer(tape, *this, q_states, d_states, query, doc);
        auto logit = ops::add(tape, ops::sum_all(tape, hidden), ssm_out_bias);
        return ops::sigmoid(tape, logit);
    }
    // Hybrids: a match-tensor branch and an SSM branch over shared encoders.
    TensorPtr mt;
    if (arch == Arch::mt_ssm) {
        auto q_k = ops::matmul(tape, q_states, q_state_proj->weight);
        auto d_k = ops::matmul(tape, d_states, d_state_proj->weight);
        mt = build_match_tensor(tape, q_k, d_k, query, doc, vocab, alpha);
    } else {
        mt = build_exact_match_channel(tape, query, doc, vocab, alpha);
    }
    auto feats = conv_stack_features(tape, *conv, mt, query.mask, doc.mask);
    auto hidden = ssm_hidden_layer(tape, *this, q_states, d_states, query, doc);
    auto joined = ops::concat(tape, {feats, hidden}, 1);
    auto logit = ops::add(tape, ops::matmul(tape, joined, combine->weight), combine->bias);
    return ops::sigmoid(tape, logit);
}

double RankingModel::score(const EmbeddingTable& table, const Vocabulary& vocab,
                           const ProcessedText& query, const ProcessedText& doc) const {
    return score_on_tape(nullptr, table, vocab, query, doc, EvalMode::infer, nullptr)->values[0];
}

ParamCountReport count_parameters(const RankingModel& model) {
    ParamCountReport report;
    std::map<std::string, std::int64_t> components;
    for (const auto& p : model.parameters()) {
        if (!p.trainable) continue;
        const auto dot = p.name.find('.');
        const std::string component = dot == std::string::npos ? p.name : p.name.substr(0, dot);
        components[component] += p.tensor->size();
        report.total += p.tensor->size();
    }
    report.by_component.assign(components.begin(), components.end());
    return report;
}

std::string ParamCountReport::to_string() const {
    std::string out = msg("total trainable parameters: ", total, "\n");
    for (const auto& [name, count] : by_component) {
        out += msg("  ", name, ": ", count, "\n");
    }
    return out;
}

}  // namespace mtr
