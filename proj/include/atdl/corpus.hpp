#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atdl/matrix.hpp"

namespace atdl {

// Ingestion settings. seq_len is the context length T; a document must
// tokenize to at least T + 1 tokens to yield a training row (inputs are
// tokens 1..T, targets are tokens 2..T+1).
struct CorpusConfig {
    index_t vocab_cap = 0;   // keep the most frequent tokens, at least 2
    index_t seq_len = 0;     // T, at least 1
    index_t max_samples = 0; // 0 means unlimited
    bool per_file = false;   // directory mode: one document per file
};

// Lowercasing word tokenizer. Rules, in order:
//   * ASCII letters are lowercased and grouped into maximal runs
//   * digit runs form single tokens ("12" stays one token)
//   * . , ! ? ; : ' " ( ) - are emitted as standalone one-char tokens
//   * whitespace separates; any other ASCII character is dropped
// Bytes >= 0x80 are treated as word characters so multi-byte UTF-8
// sequences stay inside one token.
std::vector<std::string> tokenize(std::string_view text);

// Token table in rank order: most frequent first, ties broken by byte-wise
// lexicographic order so identical corpora always produce identical tables.
class Vocab {
public:
    Vocab() = default;
    Vocab(std::vector<std::string> tokens, std::vector<std::uint64_t> counts);

    index_t size() const noexcept { return tokens_.size(); }
    const std::string& token(index_t id) const { return tokens_.at(id); }
    std::uint64_t count(index_t id) const { return counts_.at(id); }
    std::optional<std::uint32_t> id_of(std::string_view token) const;

    bool operator==(const Vocab& o) const {
        return tokens_ == o.tokens_ && counts_ == o.counts_;
    }

private:
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

// One-hot encodable id rows, each of length seq_len + 1. Row i is sample i;
// every id is strictly below vocab_size.
struct SequenceBatch {
    index_t vocab_size = 0;
    index_t seq_len = 0; // T
    std::vector<std::uint32_t> ids;

    index_t size() const noexcept {
        return seq_len == 0 ? 0 : ids.size() / (seq_len + 1);
    }
    std::span<const std::uint32_t> sample(index_t i) const {
        return {ids.data() + i * (seq_len + 1), seq_len + 1};
    }
};

// Read raw documents. A plain file yields one document per line; a
// directory yields one document per file, ordered by file name.
std::vector<std::string> read_documents(const std::string& path, bool per_file);

// Count tokens across all documents and keep the top vocab_cap by
// frequency. Throws value_error for an empty stream or a cap below 2.
Vocab build_vocab(const std::vector<std::vector<std::string>>& docs, index_t vocab_cap);

// Encode documents against a fixed vocabulary. A document qualifies only if
// every token is in the vocabulary and it has at least seq_len + 1 tokens;
// qualifying documents are truncated to the first seq_len + 1 tokens and
// kept in stream order up to max_samples. Throws value_error when nothing
// qualifies.
SequenceBatch encode_sequences(const std::vector<std::vector<std::string>>& docs,
                               const Vocab& vocab, index_t seq_len,
                               index_t max_samples = 0);

// Parse pre-tokenized id rows: ASCII decimal ids separated by spaces, one
// sequence per line. Ids at or above declared_vocab_size raise format_error;
// rows shorter than seq_len + 1 are skipped.
SequenceBatch load_pretokenized(const std::string& path, index_t declared_vocab_size,
                                index_t seq_len, index_t max_samples = 0);

// Text round trip: "token<TAB>count" per line in rank order, preceded by a
// single comment line carrying the producing run's config hash.
void save_vocab(const std::string& path, const Vocab& vocab, std::uint64_t config_hash = 0);
Vocab load_vocab(const std::string& path);

// Binary batch cache.
void save_batch(const std::string& path, const SequenceBatch& batch, std::uint64_t config_hash = 0);
SequenceBatch load_batch(const std::string& path, std::uint64_t* config_hash_out = nullptr);

} // namespace atdl
