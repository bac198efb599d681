#pragma once

#include <span>
#include <vector>

#include "atdl/corpus.hpp"
#include "atdl/model.hpp"

namespace atdl {

struct LossReport {
    double mean_nll = 0.0; // - average log-likelihood over all positions
    std::vector<double> per_sample; // filled on request, mean nll per row
};

// Gradients in the same layout as ModelParams, averaged over the batch.
// When tracing is on, the per-layer score sensitivities and upstream state
// gradients are kept as sums over the batch for inspection.
struct GradBundle {
    std::vector<Matrix> attn;   // d loss / d W per layer
    std::vector<Matrix> value;  // d loss / d V per layer
    std::vector<PosVector> pos; // d loss / d P per layer
    Matrix out;                 // d loss / d W_O

    bool has_trace = false;
    std::vector<Matrix> score_grad_sum; // sum over samples of S per layer, T x T
    std::vector<Matrix> state_grad_sum; // sum over samples of G per layer, T x |V|

    bool all_finite() const;
};

// Mean negative log-likelihood of the next-token targets. sample_idx
// selects a subset of the batch (empty means all rows).
LossReport loss(const ModelParams& params, const SequenceBatch& batch,
                std::span<const index_t> sample_idx = {}, index_t workers = 1,
                bool want_per_sample = false);

// Analytic gradients. The backward recurrence mirrors the residual
// structure of the forward pass:
//   G at the last layer is R W_O^T with R = targets - softmax(logits),
//   each layer adds A^T G V^T plus the two score paths S h W^T and S^T h W,
//   where S applies the attention-row softmax Jacobian to G V^T h^T.
// Gradients carry the -1/(N T) batch average factor, so a descent step is
// params += -eta * grad.
struct BackwardResult {
    GradBundle grads;
    LossReport loss;
};
BackwardResult backward(const ModelParams& params, const SequenceBatch& batch,
                        std::span<const index_t> sample_idx = {}, index_t workers = 1,
                        bool want_trace = false);

} // namespace atdl
