#pragma once

#include <string>
#include <vector>

#include "atdl/corpus.hpp"
#include "atdl/stats.hpp"

namespace atdl {

// Which association matrix a query reads.
enum class Basis { bigram, interchangeability, context };

// Row reads the query token's row (successors for bigram, prefix tokens for
// context); column reads the transposed direction. Interchangeability is
// symmetric, so both agree there.
enum class Axis { row, column };

struct AssociationQuery {
    std::string token;
    Basis basis = Basis::bigram;
    index_t k = 30;
    Axis axis = Axis::row;
};

struct ScoredToken {
    std::string token;
    double score = 0.0;
};

const char* basis_name(Basis b);

// Top-k tokens by association score with the query token: scores sorted
// descending, ties broken by token bytes ascending, k clamped to |V|.
// The query token itself is eligible and not filtered out.
std::vector<ScoredToken> topk(const AssociationQuery& q, const BasisStats& stats,
                              const Vocab& vocab);

// Aligned text table with one column per (token, basis) pair and k ranked
// entries per column. Unknown tokens get an error marker in their columns;
// the rest of the table still renders. Deterministic output.
std::string dump_association_table(const std::vector<std::string>& tokens,
                                   const BasisStats& stats, const Vocab& vocab, index_t k);

} // namespace atdl
