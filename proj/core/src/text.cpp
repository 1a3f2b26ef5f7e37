// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace mtr {

namespace {

const char* const kReservedNames[Vocabulary::kReservedCount] = {"<pad>", "<oov>", "<s>", "</s>",
                                                                "<field>"};

bool is_word_byte(unsigned char c) {
    if (c >= 0x80) return true;  // part of a multi-byte UTF-8 sequence
    return std::isalnum(c) != 0;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (is_word_byte(c)) {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : id_to_token_(std::move(tokens)) {
    for (const char* name : kReservedNames) id_to_token_.emplace_back(name);
    token_to_id_.reserve(id_to_token_.size());
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        token_to_id_.emplace(id_to_token_[i], static_cast<int>(i));
    }
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? oov_id() : it->second;
}

std::vector<int> Vocabulary::lookup_ids(const std::vector<std::string>& tokens, bool bigrams) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (bigrams && i + 1 < tokens.size()) {
            auto it = token_to_id_.find(tokens[i] + "_" + tokens[i + 1]);
            if (it != token_to_id_.end()) {
                ids.push_back(it->second);
                ++i;
                continue;
            }
        }
        ids.push_back(lookup(tokens[i]));
    }
    return ids;
}

std::pair<Vocabulary, EmbeddingTable> parse_embeddings(const std::string& content,
                                                       std::uint64_t reserved_seed) {
    std::istringstream in(content);
    std::string line;
    long lineno = 0;

    if (!std::getline(in, line)) throw ParseError("empty embedding file", 1);
    ++lineno;
    std::istringstream header(line);
    long long count = -1, dim = -1;
    std::string extra;
    if (!(header >> count >> dim) || (header >> extra) || count < 0 || dim <= 0) {
        throw ParseError(msg("malformed header, expected \"<vocab_size> <dim>\", got \"", line, "\""),
                         lineno);
    }

    std::vector<std::string> tokens;
    std::vector<double> rows;
    tokens.reserve(static_cast<std::size_t>(count));
    rows.reserve(static_cast<std::size_t>(count * dim));
    std::unordered_map<std::string, long> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        if (token.empty()) throw ParseError("missing token", lineno);
        if (!seen.emplace(token, lineno).second) {
            throw ParseError(msg("duplicate token \"", token, "\""), lineno);
        }
        std::vector<double> vec(static_cast<std::size_t>(dim));
        for (long long d = 0; d < dim; ++d) {
            if (!(ls >> vec[static_cast<std::size_t>(d)])) {
                throw ParseError(msg("token \"", token, "\": expected ", dim, " values"), lineno);
            }
        }
        double trailing;
        if (ls >> trailing) {
            throw ParseError(msg("token \"", token, "\": more than ", dim, " values"), lineno);
        }
        tokens.push_back(std::move(token));
        rows.insert(rows.end(), vec.begin(), vec.end());
    }
    if (static_cast<long long>(tokens.size()) != count) {
        throw ParseError(msg("header declared ", count, " tokens but file has ", tokens.size()),
                         lineno);
    }

    Vocabulary vocab(std::move(tokens));
    // Reserved rows: PAD stays zero, the rest get small seeded values.
    Rng rng(reserved_seed);
    rows.resize(static_cast<std::size_t>(vocab.size()) * static_cast<std::size_t>(dim), 0.0);
    for (int id = vocab.loaded_count(); id < vocab.size(); ++id) {
        if (id == vocab.pad_id()) continue;
        for (long long d = 0; d < dim; ++d) {
            rows[static_cast<std::size_t>(id) * static_cast<std::size_t>(dim) +
                 static_cast<std::size_t>(d)] = uniform_real(rng, -0.05, 0.05);
        }
    }

    EmbeddingTable table;
    table.dim = static_cast<int>(dim);
    table.table = Tensor::make({vocab.size(), table.dim}, std::move(rows), false);
    return {std::move(vocab), std::move(table)};
}

std::pair<Vocabulary, EmbeddingTable> load_embeddings(const std::string& path,
                                                      std::uint64_t reserved_seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(msg("cannot open embedding file: ", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_embeddings(buf.str(), reserved_seed);
}

ProcessedText ProcessedText::padded(const Vocabulary& vocab, int count) const {
    ProcessedText out = *this;
    for (int i = 0; i < count; ++i) {
        out.ids.push_back(vocab.pad_id());
        out.raw_tokens.push_back(vocab.token(vocab.pad_id()));
        out.mask.push_back(0.0);
    }
    return out;
}

namespace {

ProcessedText finalize_sequence(std::vector<int> ids, std::vector<std::string> raw, int cap,
                                TextKind kind) {
    if (static_cast<int>(ids.size()) > cap) {
        ids.resize(static_cast<std::size_t>(cap));
        raw.resize(static_cast<std::size_t>(cap));
    }
    ProcessedText out;
    out.true_length = static_cast<int>(ids.size());
    out.mask.assign(ids.size(), 1.0);
    out.ids = std::move(ids);
    out.raw_tokens = std::move(raw);
    out.kind = kind;
    return out;
}

}  // namespace

ProcessedText process_query(const std::string& text, const Vocabulary& vocab, bool bigrams) {
    auto tokens = tokenize(text);
    auto ids = vocab.lookup_ids(tokens, bigrams);
    // With bigram merging the raw token list shrinks to match the ids.
    std::vector<std::string> raw;
    raw.reserve(ids.size());
    std::size_t t = 0;
    for (int id : ids) {
        if (!vocab.is_reserved(id)) {
            raw.push_back(vocab.token(id));
            t += 1 + static_cast<std::size_t>(std::count(vocab.token(id).begin(),
                                                         vocab.token(id).end(), '_'));
        } else {
            raw.push_back(tokens[t]);
            ++t;
        }
    }
    return finalize_sequence(std::move(ids), std::move(raw), kQueryTokenCap, TextKind::query);
}

ProcessedText assemble_document(const std::vector<std::pair<std::string, std::string>>& fields,
                                const Vocabulary& vocab, bool bigrams) {
    if (fields.empty()) throw ValueError("assemble_document: at least one field required");
    std::vector<int> ids = {vocab.start_id()};
    std::vector<std::string> raw = {vocab.token(vocab.start_id())};
    bool first = true;
    for (const auto& [name, text] : fields) {
        (void)name;
        if (!first) {
            ids.push_back(vocab.boundary_id());
            raw.push_back(vocab.token(vocab.boundary_id()));
        }
        first = false;
        auto tokens = tokenize(text);
        auto field_ids = vocab.lookup_ids(tokens, bigrams);
        std::size_t t = 0;
        for (int id : field_ids) {
            ids.push_back(id);
            if (!vocab.is_reserved(id)) {
                raw.push_back(vocab.token(id));
                t += 1 + static_cast<std::size_t>(std::count(vocab.token(id).begin(),
                                                             vocab.token(id).end(), '_'));
            } else {
                raw.push_back(tokens[t]);
                ++t;
            }
        }
    }
    ids.push_back(vocab.end_id());
    raw.push_back(vocab.token(vocab.end_id()));
    return finalize_sequence(std::move(ids), std::move(raw), kDocumentTokenCap, TextKind::document);
}

TensorPtr lookup_embeddings(const EmbeddingTable& table, const ProcessedText& text) {
    const int len = text.length();
    const int dim = table.dim;
    if (len == 0) throw ValueError("lookup_embeddings: empty sequence");
    auto out = Tensor::zeros({len, dim});
    for (int i = 0; i < len; ++i) {
        const int id = text.ids[static_cast<std::size_t>(i)];
        const double* row = table.table->values.data() + static_cast<std::size_t>(id) * dim;
        std::copy(row, row + dim, out->values.data() + static_cast<std::size_t>(i) * dim);
    }
    return out;
}

}  // namespace mtr
