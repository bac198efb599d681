#pragma once

#include <cstdint>
#include <string>

#include "atdl/corpus.hpp"
#include "atdl/matrix.hpp"

namespace atdl {

// Corpus basis statistics. All matrices are |V| x |V|; delta has length T.
//
//   bbar   centered bigram matrix: row j holds the next-token distribution
//          after token j, scaled by j's input-position frequency, minus the
//          uniform baseline. Rows sum to zero.
//   phibar centered context matrix: entry (i, j) measures how strongly
//          token j appears in the prefix when token i is the next token.
//          Columns sum to zero; operator norm is at most 2.
//   sigma  bbar^T bbar, the predecessor-profile Gram matrix. Symmetric PSD;
//          entry (i, j) is large when i and j follow the same tokens.
//   gbar   sigma * phibar, materialized once and reused by the quadratic
//          statistics below.
//   qbar   token-pair attention statistic, every entry in [-1, 1].
//   delta  relative-offset attention statistic, every entry in [-1, 1].
struct BasisStats {
    index_t vocab_size = 0;
    index_t seq_len = 0;   // T
    index_t n_samples = 0; // N
    Matrix bbar;
    Matrix phibar;
    Matrix sigma;
    Matrix gbar;
    Matrix qbar;
    PosVector delta;
    std::uint64_t config_hash = 0;
};

Matrix compute_bigram(const SequenceBatch& batch);
Matrix compute_context(const SequenceBatch& batch);
Matrix compute_interchangeability(const Matrix& bbar);

// Fills gbar, qbar and delta from the already-computed bbar/phibar/sigma.
// The per-sample inner computation uses the closed form for a uniform
// causal attention row: entries 1..t of the pair-score row are scaled by
// 1/t and centered to mean zero. The generic Jacobian path in linalg
// produces the same values and serves as the test oracle.
void compute_qbar(const SequenceBatch& batch, BasisStats& stats, index_t workers = 1);

BasisStats compute_all(const SequenceBatch& batch, index_t workers = 1,
                       std::uint64_t config_hash = 0);

// Numeric health of a stats bundle; all values should be near their
// documented invariants on any corpus.
struct StatsHealth {
    double max_row_sum_bbar = 0.0;   // ~0
    double max_col_sum_phibar = 0.0; // ~0
    double sigma_asymmetry = 0.0;    // exact 0 by construction
    double phibar_opnorm = 0.0;      // <= 2
    double max_abs_qbar = 0.0;       // <= 1
    double max_abs_delta = 0.0;      // <= 1
};
StatsHealth stats_health(const BasisStats& stats);

// Throws value_error when any invariant is violated beyond tolerance.
void ensure_valid(const BasisStats& stats, double sum_tol = 1e-10);

// Gradient-descent coefficient schedule after s full-batch steps at
// learning rate eta. Every layer shares the same schedule.
struct CoeffSchedule {
    double c_out = 0.0;  // s * eta
    double c_val = 0.0;  // C(s,2) * eta^2
    double c_attn = 0.0; // (3 C(s,4) + 2 C(s,3)) * eta^4
    double c_pos = 0.0;  // same as c_attn
};
CoeffSchedule coefficients(std::uint64_t s, double eta);

// Predicted weight directions scaled by the schedule. The same targets
// apply to every layer.
struct LeadingTerms {
    Matrix out;    // c_out  * bbar
    Matrix value;  // c_val  * phibar^T bbar^T
    Matrix attn;   // c_attn * qbar
    PosVector pos; // c_pos  * delta
};
LeadingTerms leading_terms(const BasisStats& stats, const CoeffSchedule& sched);

void save_stats(const std::string& path, const BasisStats& stats);
BasisStats load_stats(const std::string& path);

} // namespace atdl
