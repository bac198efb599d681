#pragma once

#include <optional>
#include <string>
#include <vector>

#include "atdl/trainer.hpp"

namespace atdl {

// Preconditions under which the deviation bounds are guaranteed. The
// comparison itself is always computed; bound fields are only filled in
// when every flag holds.
struct RegimeFlags {
    bool eta_ok = false;    // eta >= 1/T
    bool layers_ok = false; // L <= sqrt(T)/4
    bool seq_ok = false;    // T >= 60
    bool vocab_ok = false;  // |V| >= 500
    bool steps_ok = false;  // s <= step_cap
    double step_cap = 0.0;  // eta^-1 * min(5/(8 sqrt T), 1/(12 L))
    bool all() const { return eta_ok && layers_ok && seq_ok && vocab_ok && steps_ok; }
};

struct WeightComparison {
    std::string name;              // "W_O", "V[2]", "P[1]", ... (1-based layers)
    std::optional<double> cosine;  // vs the unscaled predicted direction; null
                                   // when either side is zero
    double deviation = 0.0;        // ||weight - coeff * direction||_F
    std::optional<double> bound;   // present only when the regime holds
    std::optional<bool> bound_ok;  // deviation <= bound
};

struct VerificationReport {
    std::uint64_t step = 0;
    double eta = 0.0;
    RegimeFlags regime;
    std::vector<WeightComparison> rows;
    // Per-class cosine means over layers (dispersion across layers is itself
    // a diagnostic, so rows keep the per-layer values too).
    std::optional<double> cos_out, cos_value_mean, cos_attn_mean, cos_pos_mean;
    // True only when the regime holds and every row's bound is satisfied.
    bool all_bounds_ok() const;
};

// Compares checkpoint weights against the predicted directions scaled by
// step-s coefficients. Pure function of its inputs.
VerificationReport compare(const Checkpoint& ckpt, const BasisStats& stats);

struct NormCheckRow {
    std::string name;
    double frobenius = 0.0;
    double fro_bound = 0.0; // 2v
    double opnorm = 0.0;    // power-iteration estimate (vector norm for P)
    double op_bound = 0.0;  // 3v / sqrt(|V|)
    bool ok = false;
};

struct InitCheckReport {
    std::vector<NormCheckRow> rows;
    bool all_ok = false;
};

// Checks the high-probability norm events for freshly drawn Gaussian
// parameters; a failure at |V| >= 500 indicates a bug rather than bad luck.
InitCheckReport check_gaussian_init(const ModelParams& params, const InitConfig& cfg);

struct InterventionRow {
    std::string target;       // "W_O", "V[1]", "V[*]" (all layers at once)...
    bool applied = false;
    std::string skip_reason;  // set when not applied
    double loss_after = 0.0;
    double delta = 0.0;       // loss_after - baseline
    // |<w', dir>| / (||w|| ||dir||) with w' the weight after removal and w
    // the weight before it: the direction component left behind, in units
    // of the original weight scale. ~1e-16 when removal worked. Normalizing
    // by ||w'|| instead would turn this into a cosine that degenerates to
    // O(1) exactly when the weight was parallel to the direction and the
    // residual is pure rounding noise.
    double residual_alignment = 0.0;
};

struct InterventionReport {
    double baseline = 0.0; // identical across rows by construction
    std::vector<InterventionRow> rows;
};

// Removes each weight's component along its predicted direction (per layer,
// plus an all-layers row per class) and reports the loss change on the
// batch. Directions are used unnormalized; projection removal is invariant
// to their scale, so no step coefficient is involved. The checkpoint is
// cloned per row, never mutated.
InterventionReport intervene(const Checkpoint& ckpt, const BasisStats& stats,
                             const SequenceBatch& batch, index_t workers = 1);

// Scale factors applied by cooperate_trace; defaults inspect the raw
// directions. Setting them to the step coefficients (score = c_attn,
// path = c_val * c_out, resid = c_out) makes the two paths sum to the
// logits of a one-layer model built from the leading terms.
struct PathScales {
    double score_scale = 1.0; // multiplies both token and offset scores
    double path_scale = 1.0;  // multiplies the attention-path logits
    double resid_scale = 1.0; // multiplies the residual-path logits
};

struct CooperateTrace {
    Matrix attention_path; // len x |V|: S(Mask(scores)) X Phi^T Sigma, scaled
    Matrix residual_path;  // len x |V|: X Bbar, scaled
    PathScales scales;     // factors that were applied, for the record
    Matrix total() const;  // elementwise sum of the two paths
};

// Splits the predicted one-layer computation into its attention path and
// residual path for a single token sequence (length 1..T).
CooperateTrace cooperate_trace(const BasisStats& stats, std::span<const std::uint32_t> x_ids,
                               PathScales scales = {});

} // namespace atdl
