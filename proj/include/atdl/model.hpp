#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atdl/matrix.hpp"

namespace atdl {

struct InitConfig {
    enum class Kind { zero, gaussian };
    Kind kind = Kind::zero;
    double v = 0.0;   // scale; entries are N(0, v^2 / |V|^(2+2xi))
    double xi = 0.0;
    std::uint64_t seed = 0;
};

// Attention-only residual model. Layer l maps the running state h by
//   h <- h + S(mask(h W h^T + toeplitz(P))) h V
// where S is the causal row softmax, and logits are h W_O after the last
// layer. Inputs are one-hot token rows, so h starts as the indicator matrix
// of the sample.
struct ModelParams {
    index_t vocab_size = 0;
    index_t seq_len = 0; // T, fixes the length of each pos vector
    std::vector<Matrix> attn;   // W per layer, |V| x |V|
    std::vector<Matrix> value;  // V per layer, |V| x |V|
    std::vector<PosVector> pos; // P per layer, length T
    Matrix out;                 // W_O, |V| x |V|

    index_t layers() const noexcept { return attn.size(); }
    bool all_finite() const;
    // this += s * other, weight by weight
    void add_scaled_params(const ModelParams& other, double s);
};

ModelParams init(index_t layers, index_t vocab_size, index_t seq_len, const InitConfig& cfg);

// Everything the backward pass needs: the state before each layer, each
// attention matrix, and the logits.
struct ForwardTrace {
    std::vector<Matrix> h;      // layers + 1 states, T x |V|
    std::vector<Matrix> attn;   // per layer, T x T, rows sum to 1
    Matrix logits;              // T x |V|
};

// Runs the model on one sample (only the first seq_len ids are read, so a
// batch row of length T + 1 can be passed directly). Position 0 attends
// only to itself by construction of the causal mask.
ForwardTrace forward(const ModelParams& params, std::span<const std::uint32_t> x_ids);

} // namespace atdl
