#include "atdl/explore.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace atdl {

const char* basis_name(Basis b) {
    switch (b) {
        case Basis::bigram: return "bigram";
        case Basis::interchangeability: return "interchangeability";
        default: return "context";
    }
}

namespace {

const Matrix& basis_matrix(Basis b, const BasisStats& stats) {
    switch (b) {
        case Basis::bigram: return stats.bbar;
        case Basis::interchangeability: return stats.sigma;
        default: return stats.phibar;
    }
}

} // namespace

std::vector<ScoredToken> topk(const AssociationQuery& q, const BasisStats& stats,
                              const Vocab& vocab) {
    if (q.k < 1) throw value_error("topk: k must be at least 1");
    if (vocab.size() != stats.vocab_size)
        throw dimension_error("topk: vocabulary and statistics sizes disagree");
    const auto id = vocab.id_of(q.token);
    if (!id) throw value_error("topk: unknown token '" + q.token + "'");

    const Matrix& m = basis_matrix(q.basis, stats);
    const index_t v = stats.vocab_size;
    std::vector<index_t> ids(v);
    std::vector<double> scores(v);
    for (index_t j = 0; j < v; ++j) {
        ids[j] = j;
        scores[j] = q.axis == Axis::row ? m(*id, j) : m(j, *id);
    }
    std::sort(ids.begin(), ids.end(), [&](index_t a, index_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return vocab.token(a) < vocab.token(b);
    });

    const index_t take = std::min<index_t>(q.k, v);
    std::vector<ScoredToken> out;
    out.reserve(take);
    for (index_t j = 0; j < take; ++j) out.push_back({vocab.token(ids[j]), scores[ids[j]]});
    return out;
}

std::string dump_association_table(const std::vector<std::string>& tokens,
                                   const BasisStats& stats, const Vocab& vocab, index_t k) {
    if (k < 1) throw value_error("association table: k must be at least 1");
    constexpr Basis kBases[] = {Basis::bigram, Basis::interchangeability, Basis::context};

    // One column of pre-rendered cells per (token, basis) pair.
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> columns;
    index_t rows = 0;
    for (const auto& tok : tokens) {
        const bool known = vocab.id_of(tok).has_value();
        for (Basis b : kBases) {
            headers.push_back(tok + ":" + basis_name(b));
            std::vector<std::string> cells;
            if (!known) {
                cells.push_back("<unknown token>");
            } else {
                AssociationQuery q{tok, b, k, Axis::row};
                for (const auto& st : topk(q, stats, vocab)) {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%.4e", st.score);
                    cells.push_back(st.token + " " + buf);
                }
            }
            rows = std::max<index_t>(rows, cells.size());
            columns.push_back(std::move(cells));
        }
    }

    std::vector<index_t> widths(headers.size());
    for (index_t c = 0; c < headers.size(); ++c) {
        widths[c] = headers[c].size();
        for (const auto& cell : columns[c]) widths[c] = std::max<index_t>(widths[c], cell.size());
    }

    std::ostringstream os;
    auto emit_row = [&](auto cell_of) {
        for (index_t c = 0; c < headers.size(); ++c) {
            const std::string cell = cell_of(c);
            os << cell;
            if (c + 1 < headers.size())
                os << std::string(widths[c] - cell.size() + 2, ' ');
        }
        os << '\n';
    };
    emit_row([&](index_t c) { return headers[c]; });
    emit_row([&](index_t c) { return std::string(widths[c], '-'); });
    for (index_t r = 0; r < rows; ++r)
        emit_row([&](index_t c) {
            return r < columns[c].size() ? columns[c][r] : std::string();
        });
    return os.str();
}

} // namespace atdl
