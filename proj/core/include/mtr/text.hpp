// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Text preprocessing: tokenization, vocabulary with reserved tokens,
/// fixed pretrained embedding tables, and conversion of queries/documents
/// into masked id sequences.

#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtr/common.hpp"
#include "mtr/tensor.hpp"

namespace mtr {

/// Lowercases and splits on anything that is not a letter, digit, or part
/// of a multi-byte UTF-8 sequence; punctuation therefore separates tokens
/// ("low-fat" -> ["low", "fat"]). Idempotent on its own space-joined output.
std::vector<std::string> tokenize(const std::string& text);

/// Token ids are dense in [0, size). Tokens from the embedding file occupy
/// [0, loaded_count); the five reserved tokens follow in the order
/// PAD, OOV, START, END, FIELD_BOUNDARY.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);  // appends reserved ids

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int loaded_count() const { return size() - kReservedCount; }

    int pad_id() const { return loaded_count() + 0; }
    int oov_id() const { return loaded_count() + 1; }
    int start_id() const { return loaded_count() + 2; }
    int end_id() const { return loaded_count() + 3; }
    int boundary_id() const { return loaded_count() + 4; }

    bool is_reserved(int id) const { return id >= loaded_count(); }

    /// OOV fallback: unknown tokens map to oov_id(), never fails.
    int lookup(const std::string& token) const;
    const std::string& token(int id) const { return id_to_token_[static_cast<std::size_t>(id)]; }

    /// Maps tokens to ids. With `bigrams`, adjacent pairs are greedily
    /// joined with '_' and matched against the vocabulary first.
    std::vector<int> lookup_ids(const std::vector<std::string>& tokens, bool bigrams = false) const;

    static constexpr int kReservedCount = 5;

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

/// vocab-size x dim matrix of fixed (non-trainable) embeddings. The PAD row
/// is all zeros; the other reserved rows are seeded uniform in
/// [-0.05, 0.05] and frozen like the pretrained rows.
struct EmbeddingTable {
    TensorPtr table;  // {vocab, dim}
    int dim = 0;

    Parameter as_parameter() const { return Parameter{"embeddings.table", table, false}; }
};

/// Parses the textual interchange format: a "<count> <dim>" header line,
/// then one "token v1 .. vdim" line per token. Reserved rows are appended
/// with `reserved_seed` driving their initialization.
std::pair<Vocabulary, EmbeddingTable> load_embeddings(const std::string& path,
                                                      std::uint64_t reserved_seed = 0x5eedULL);

/// Same parser over an in-memory string (used by tests and generators).
std::pair<Vocabulary, EmbeddingTable> parse_embeddings(const std::string& content,
                                                       std::uint64_t reserved_seed = 0x5eedULL);

enum class TextKind { query, document };

/// A tokenized, id-mapped, capped sequence. `mask[i]` is 1 for real tokens
/// (including START/END/FIELD_BOUNDARY) and 0 for PAD; pads are trailing.
/// `raw_tokens` keeps the surface forms so out-of-vocabulary tokens can
/// still be compared for exact matches.
struct ProcessedText {
    std::vector<int> ids;
    std::vector<std::string> raw_tokens;  // parallel to ids; reserved markers for special ids
    std::vector<double> mask;
    int true_length = 0;
    TextKind kind = TextKind::document;

    int length() const { return static_cast<int>(ids.size()); }

    /// Appends `count` PAD positions (tests use this to probe padding
    /// invariance; the normal pipeline emits unpadded sequences).
    ProcessedText padded(const Vocabulary& vocab, int count) const;
};

inline constexpr int kQueryTokenCap = 8;
inline constexpr int kDocumentTokenCap = 200;

/// Tokenizes and id-maps a query, truncated to kQueryTokenCap tokens.
ProcessedText process_query(const std::string& text, const Vocabulary& vocab, bool bigrams = false);

/// Builds START + field tokens with FIELD_BOUNDARY between fields + END,
/// truncated to kDocumentTokenCap positions.
ProcessedText assemble_document(const std::vector<std::pair<std::string, std::string>>& fields,
                                const Vocabulary& vocab, bool bigrams = false);

/// Copies embedding rows for a processed sequence into a {len, dim} tensor.
/// The result is constant (the table is frozen); PAD rows are zero.
TensorPtr lookup_embeddings(const EmbeddingTable& table, const ProcessedText& text);

}  // namespace mtr
