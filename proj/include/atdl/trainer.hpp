#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "atdl/grad.hpp"
#include "atdl/stats.hpp"

namespace atdl {

struct TrainConfig {
    index_t layers = 1;
    double eta = 0.0;        // learning rate, must be positive
    index_t steps = 0;       // optimizer steps to run
    index_t batch_size = 0;  // 0 = full batch; otherwise minibatch size
    InitConfig init;         // zero by default
    std::uint64_t shuffle_seed = 0; // epoch shuffles in minibatch mode
    index_t workers = 1;
    std::uint64_t config_hash = 0;
    // checkpoints: every step up to this, then doubling (20, 40, 80, ...)
    index_t checkpoint_linear_until = 10;
};

struct Checkpoint {
    index_t step = 0;
    double eta = 0.0;
    ModelParams params;
    std::uint64_t config_hash = 0;
    double loss_at_save = 0.0; // full-batch loss at this step
};

// One run-log row per checkpoint. Cosines against the predicted weight
// directions are only present when statistics were supplied and the weight
// class is nonzero; a zero weight has no direction and stays null rather
// than reading as 0.
struct RunLogRow {
    index_t step = 0;
    double loss = 0.0;
    std::optional<double> cos_wo, cos_v_mean, cos_w_mean, cos_p_mean;
    std::optional<double> dev_wo, dev_v, dev_w, dev_p; // max over layers
};

struct RunLog {
    std::vector<RunLogRow> rows;
};

// CSV with a leading config-hash comment; null cosines render as empty
// cells.
void write_run_log(std::ostream& os, const RunLog& log, std::uint64_t config_hash);

struct StepReport {
    double loss_before = 0.0;
    double grad_out_norm = 0.0;
    double grad_value_norm = 0.0; // max over layers
    double grad_attn_norm = 0.0;  // max over layers
};

// One descent step on the selected samples (empty = full batch). Throws
// value_error on a nonfinite loss or gradient before touching the params.
StepReport step(ModelParams& params, const SequenceBatch& batch,
                std::span<const index_t> sample_idx, double eta, index_t workers = 1);

using CheckpointSink = std::function<void(const Checkpoint&)>;

// Full training loop. Full-batch mode visits every sample each step;
// minibatch mode reshuffles per epoch with the seeded generator and drops
// the trailing partial batch. The sink fires at step 0, at every checkpoint
// step, and at the final step; the run log gets matching rows.
Checkpoint train(const TrainConfig& cfg, const SequenceBatch& batch,
                 const BasisStats* stats, RunLog& log,
                 const CheckpointSink& sink = {});

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace atdl
