#include "atdl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "atdl/binio.hpp"
#include "atdl/linalg.hpp"

namespace atdl {

namespace {

bool is_checkpoint_step(index_t s, index_t linear_until) {
    if (s <= linear_until) return true;
    if (linear_until == 0) return false;
    index_t m = linear_until;
    while (m < s) m *= 2;
    return m == s;
}

// || w - c * dir ||_F without materializing the scaled target
double deviation_from(const Matrix& w, const Matrix& dir, double c) {
    double acc = 0.0;
    const double* a = w.data();
    const double* d = dir.data();
    for (index_t i = 0; i < w.size(); ++i) {
        const double diff = a[i] - c * d[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double deviation_from(const PosVector& w, const PosVector& dir, double c) {
    double acc = 0.0;
    for (index_t i = 0; i < w.size(); ++i) {
        const double diff = w[i] - c * dir[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

std::optional<double> cosine_or_null(const Matrix& a, const Matrix& b) {
    try {
        return cosine_flat(a, b);
    } catch (const value_error&) {
        return std::nullopt; // zero operand: similarity undefined
    }
}

std::optional<double> cosine_or_null(const PosVector& a, const PosVector& b) {
    try {
        return cosine_flat(a, b);
    } catch (const value_error&) {
        return std::nullopt;
    }
}

struct Directions {
    Matrix out;   // bbar
    Matrix value; // (bbar phibar)^T
    Matrix attn;  // qbar
    PosVector pos;
};

RunLogRow make_log_row(index_t s, double loss_value, const ModelParams& params,
                       const Directions* dirs, double eta) {
    RunLogRow row;
    row.step = s;
    row.loss = loss_value;
    if (!dirs) return row;
    const CoeffSchedule cs = coefficients(s, eta);
    row.cos_wo = cosine_or_null(params.out, dirs->out);
    row.dev_wo = deviation_from(params.out, dirs->out, cs.c_out);

    double cv = 0.0, cw = 0.0, cp = 0.0;
    index_t nv = 0, nw = 0, np = 0;
    double dv = 0.0, dw = 0.0, dp = 0.0;
    for (index_t l = 0; l < params.layers(); ++l) {
        if (auto c = cosine_or_null(params.value[l], dirs->value)) { cv += *c; ++nv; }
        if (auto c = cosine_or_null(params.attn[l], dirs->attn)) { cw += *c; ++nw; }
        if (auto c = cosine_or_null(params.pos[l], dirs->pos)) { cp += *c; ++np; }
        dv = std::max(dv, deviation_from(params.value[l], dirs->value, cs.c_val));
        dw = std::max(dw, deviation_from(params.attn[l], dirs->attn, cs.c_attn));
        dp = std::max(dp, deviation_from(params.pos[l], dirs->pos, cs.c_pos));
    }
    if (nv) row.cos_v_mean = cv / static_cast<double>(nv);
    if (nw) row.cos_w_mean = cw / static_cast<double>(nw);
    if (np) row.cos_p_mean = cp / static_cast<double>(np);
    row.dev_v = dv;
    row.dev_w = dw;
    row.dev_p = dp;
    return row;
}

void csv_cell(std::ostream& os, const std::optional<double>& v) {
    char buf[40];
    if (v) {
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        os << buf;
    }
    // null stays an empty cell
}

} // namespace

void write_run_log(std::ostream& os, const RunLog& log, std::uint64_t config_hash) {
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash));
    os << "# atdl-config " << hex << "\n";
    os << "step,loss,cos_WO,cos_V_mean,cos_W_mean,cos_P_mean,dev_WO,dev_V,dev_W,dev_P\n";
    char buf[40];
    for (const auto& r : log.rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.loss);
        os << r.step << ',' << buf << ',';
        csv_cell(os, r.cos_wo); os << ',';
        csv_cell(os, r.cos_v_mean); os << ',';
        csv_cell(os, r.cos_w_mean); os << ',';
        csv_cell(os, r.cos_p_mean); os << ',';
        csv_cell(os, r.dev_wo); os << ',';
        csv_cell(os, r.dev_v); os << ',';
        csv_cell(os, r.dev_w); os << ',';
        csv_cell(os, r.dev_p); os << '\n';
    }
}

StepReport step(ModelParams& params, const SequenceBatch& batch,
                std::span<const index_t> sample_idx, double eta, index_t workers) {
    if (!(eta > 0.0) || !std::isfinite(eta))
        throw value_error("step: learning rate must be positive and finite");
    BackwardResult bwd = backward(params, batch, sample_idx, workers);
    if (!bwd.grads.all_finite())
        throw value_error("step: nonfinite gradient at loss " +
                          std::to_string(bwd.loss.mean_nll));

    StepReport rep;
    rep.loss_before = bwd.loss.mean_nll;
    rep.grad_out_norm = bwd.grads.out.frobenius_norm();
    for (index_t l = 0; l < params.layers(); ++l) {
        rep.grad_value_norm = std::max(rep.grad_value_norm, bwd.grads.value[l].frobenius_norm());
        rep.grad_attn_norm = std::max(rep.grad_attn_norm, bwd.grads.attn[l].frobenius_norm());
        params.attn[l].add_scaled(bwd.grads.attn[l], -eta);
        params.value[l].add_scaled(bwd.grads.value[l], -eta);
        params.pos[l].add_scaled(bwd.grads.pos[l], -eta);
    }
    params.out.add_scaled(bwd.grads.out, -eta);
    return rep;
}

Checkpoint train(const TrainConfig& cfg, const SequenceBatch& batch, const BasisStats* stats,
                 RunLog& log, const CheckpointSink& sink) {
    if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta))
        throw value_error("train: learning rate must be positive and finite");
    if (batch.size() == 0) throw value_error("train: empty batch");

    ModelParams params = init(cfg.layers, batch.vocab_size, batch.seq_len, cfg.init);

    const index_t n = batch.size();
    const bool minibatch = cfg.batch_size > 0 && cfg.batch_size < n;
    const index_t bs = minibatch ? cfg.batch_size : n;
    const index_t batches_per_epoch = n / bs; // drop-last
    if (batches_per_epoch == 0) throw value_error("train: batch size exceeds corpus");

    std::optional<Directions> dirs;
    if (stats) {
        if (stats->vocab_size != batch.vocab_size || stats->seq_len != batch.seq_len)
            throw dimension_error("train: stats and batch shapes disagree");
        dirs.emplace();
        dirs->out = stats->bbar;
        dirs->value = matmul(stats->bbar, stats->phibar).transposed();
        dirs->attn = stats->qbar;
        dirs->pos = stats->delta;
    }
    const Directions* dptr = dirs ? &*dirs : nullptr;

    auto emit = [&](index_t s) {
        const double full_loss = loss(params, batch, {}, cfg.workers).mean_nll;
        log.rows.push_back(make_log_row(s, full_loss, params, dptr, cfg.eta));
        Checkpoint ckpt;
        ckpt.step = s;
        ckpt.eta = cfg.eta;
        ckpt.params = params;
        ckpt.config_hash = cfg.config_hash;
        ckpt.loss_at_save = full_loss;
        if (sink) sink(ckpt);
        return ckpt;
    };

    Checkpoint last = emit(0);

    std::mt19937_64 rng(cfg.shuffle_seed);
    std::vector<index_t> order(n);
    std::iota(order.begin(), order.end(), index_t{0});
    index_t batch_cursor = batches_per_epoch; // forces a shuffle on first use

    for (index_t s = 1; s <= cfg.steps; ++s) {
        std::span<const index_t> idx; // empty selects the full batch
        if (minibatch) {
            if (batch_cursor == batches_per_epoch) { // new epoch
                std::shuffle(order.begin(), order.end(), rng);
                batch_cursor = 0;
            }
            idx = std::span<const index_t>(order).subspan(batch_cursor * bs, bs);
            ++batch_cursor;
        }
        step(params, batch, idx, cfg.eta, cfg.workers);
        if (is_checkpoint_step(s, cfg.checkpoint_linear_until) || s == cfg.steps)
            last = emit(s);
    }
    return last;
}

namespace {
constexpr std::string_view kCkptMagic = "ATDL-CKPT1";
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    if (!ckpt.params.all_finite())
        throw value_error("save_checkpoint: refusing to write nonfinite parameters");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path + "'");
    binio::write_magic(out, kCkptMagic);
    binio::write_u32(out, 1); // format version
    binio::write_u32(out, static_cast<std::uint32_t>(ckpt.params.layers()));
    binio::write_u64(out, ckpt.params.seq_len);
    binio::write_u64(out, ckpt.params.vocab_size);
    binio::write_u64(out, ckpt.step);
    binio::write_f64(out, ckpt.eta);
    binio::write_u64(out, ckpt.config_hash);
    binio::write_f64(out, ckpt.loss_at_save);
    for (const auto& w : ckpt.params.attn) binio::write_f64_array(out, w.flat());
    for (const auto& v : ckpt.params.value) binio::write_f64_array(out, v.flat());
    for (const auto& p : ckpt.params.pos) binio::write_f64_array(out, p.flat());
    binio::write_f64_array(out, ckpt.params.out.flat());
    if (!out) throw io_error("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    binio::expect_magic(in, kCkptMagic);
    const std::uint32_t version = binio::read_u32(in);
    if (version != 1)
        throw format_error("checkpoint '" + path + "': unsupported version " +
                           std::to_string(version));
    const index_t layers = binio::read_u32(in);
    const index_t t_len = binio::read_u64(in);
    const index_t v = binio::read_u64(in);
    if (layers == 0 || t_len == 0 || v < 2)
        throw format_error("checkpoint '" + path + "' has degenerate header");

    Checkpoint ckpt;
    ckpt.step = binio::read_u64(in);
    ckpt.eta = binio::read_f64(in);
    ckpt.config_hash = binio::read_u64(in);
    ckpt.loss_at_save = binio::read_f64(in);
    ckpt.params.vocab_size = v;
    ckpt.params.seq_len = t_len;
    ckpt.params.attn.assign(layers, Matrix(v, v));
    ckpt.params.value.assign(layers, Matrix(v, v));
    ckpt.params.pos.assign(layers, PosVector(t_len));
    ckpt.params.out = Matrix(v, v);
    for (auto& w : ckpt.params.attn) binio::read_f64_array(in, w.flat());
    for (auto& vv : ckpt.params.value) binio::read_f64_array(in, vv.flat());
    for (auto& p : ckpt.params.pos) binio::read_f64_array(in, p.flat());
    binio::read_f64_array(in, ckpt.params.out.flat());
    return ckpt;
}

} // namespace atdl
