#include "atdl/verify.hpp"

#include <cmath>

#include "atdl/linalg.hpp"

namespace atdl {

namespace {

std::optional<double> cosine_or_null(const Matrix& a, const Matrix& b) {
    try {
        return cosine_flat(a, b);
    } catch (const value_error&) {
        return std::nullopt;
    }
}

std::optional<double> cosine_or_null(const PosVector& a, const PosVector& b) {
    try {
        return cosine_flat(a, b);
    } catch (const value_error&) {
        return std::nullopt;
    }
}

double dev_from(const Matrix& w, const Matrix& dir, double c) {
    double acc = 0.0;
    const double* a = w.data();
    const double* d = dir.data();
    for (index_t i = 0; i < w.size(); ++i) {
        const double diff = a[i] - c * d[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double dev_from(const PosVector& w, const PosVector& dir, double c) {
    double acc = 0.0;
    for (index_t i = 0; i < w.size(); ++i) {
        const double diff = w[i] - c * dir[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

void check_shapes(const ModelParams& params, const BasisStats& stats) {
    if (params.vocab_size != stats.vocab_size)
        throw dimension_error("verify: vocabulary sizes disagree (" +
                              std::to_string(params.vocab_size) + " vs " +
                              std::to_string(stats.vocab_size) + ")");
    if (params.seq_len != stats.seq_len)
        throw dimension_error("verify: sequence lengths disagree (" +
                              std::to_string(params.seq_len) + " vs " +
                              std::to_string(stats.seq_len) + ")");
}

} // namespace

bool VerificationReport::all_bounds_ok() const {
    if (!regime.all()) return false;
    for (const auto& r : rows)
        if (!r.bound_ok || !*r.bound_ok) return false;
    return true;
}

VerificationReport compare(const Checkpoint& ckpt, const BasisStats& stats) {
    check_shapes(ckpt.params, stats);
    const ModelParams& p = ckpt.params;
    const double eta = ckpt.eta;
    const auto s = static_cast<std::uint64_t>(ckpt.step);
    const auto layers = p.layers();
    const auto t_len = static_cast<double>(p.seq_len);

    VerificationReport rep;
    rep.step = s;
    rep.eta = eta;
    rep.regime.eta_ok = eta >= 1.0 / t_len;
    rep.regime.layers_ok = static_cast<double>(layers) <= std::sqrt(t_len) / 4.0;
    rep.regime.seq_ok = p.seq_len >= 60;
    rep.regime.vocab_ok = p.vocab_size >= 500;
    rep.regime.step_cap =
        (1.0 / eta) * std::min(5.0 / (8.0 * std::sqrt(t_len)),
                               1.0 / (12.0 * static_cast<double>(layers)));
    rep.regime.steps_ok = static_cast<double>(s) <= rep.regime.step_cap;
    const bool in_regime = rep.regime.all();

    const CoeffSchedule cs = coefficients(s, eta);
    const Matrix value_dir = matmul(stats.bbar, stats.phibar).transposed();

    const double bound_out = 3.0 * static_cast<double>(s) * static_cast<double>(s) * eta * eta;
    const double bound_value = 12.0 * std::pow(static_cast<double>(s), 3) * std::pow(eta, 3);
    const double bound_score = 13.0 * std::pow(static_cast<double>(s), 5) * std::pow(eta, 5) * t_len;

    auto push = [&](std::string name, std::optional<double> cosine, double deviation,
                    double bound) {
        WeightComparison row;
        row.name = std::move(name);
        row.cosine = cosine;
        row.deviation = deviation;
        if (in_regime) {
            row.bound = bound;
            row.bound_ok = deviation <= bound;
        }
        rep.rows.push_back(std::move(row));
    };

    rep.cos_out = cosine_or_null(p.out, stats.bbar);
    push("W_O", rep.cos_out, dev_from(p.out, stats.bbar, cs.c_out), bound_out);

    double cv = 0.0, cw = 0.0, cp = 0.0;
    index_t nv = 0, nw = 0, np = 0;
    for (index_t l = 0; l < layers; ++l) {
        const std::string tag = "[" + std::to_string(l + 1) + "]";
        auto c = cosine_or_null(p.value[l], value_dir);
        if (c) { cv += *c; ++nv; }
        push("V" + tag, c, dev_from(p.value[l], value_dir, cs.c_val), bound_value);
    }
    for (index_t l = 0; l < layers; ++l) {
        const std::string tag = "[" + std::to_string(l + 1) + "]";
        auto c = cosine_or_null(p.attn[l], stats.qbar);
        if (c) { cw += *c; ++nw; }
        push("W" + tag, c, dev_from(p.attn[l], stats.qbar, cs.c_attn), bound_score);
    }
    for (index_t l = 0; l < layers; ++l) {
        const std::string tag = "[" + std::to_string(l + 1) + "]";
        auto c = cosine_or_null(p.pos[l], stats.delta);
        if (c) { cp += *c; ++np; }
        push("P" + tag, c, dev_from(p.pos[l], stats.delta, cs.c_pos), bound_score);
    }
    if (nv) rep.cos_value_mean = cv / static_cast<double>(nv);
    if (nw) rep.cos_attn_mean = cw / static_cast<double>(nw);
    if (np) rep.cos_pos_mean = cp / static_cast<double>(np);
    return rep;
}

InitCheckReport check_gaussian_init(const ModelParams& params, const InitConfig& cfg) {
    if (!(cfg.v >= 0.0) || !std::isfinite(cfg.v))
        throw value_error("check_gaussian_init: scale must be nonnegative and finite");
    InitCheckReport rep;
    const double fro_bound = 2.0 * cfg.v;
    const double op_bound = 3.0 * cfg.v / std::sqrt(static_cast<double>(params.vocab_size));
    rep.all_ok = true;

    auto push_matrix = [&](std::string name, const Matrix& m) {
        NormCheckRow row;
        row.name = std::move(name);
        row.frobenius = m.frobenius_norm();
        row.fro_bound = fro_bound;
        row.opnorm = operator_norm_power(m, 300);
        row.op_bound = op_bound;
        row.ok = row.frobenius <= fro_bound && row.opnorm <= op_bound;
        rep.all_ok = rep.all_ok && row.ok;
        rep.rows.push_back(std::move(row));
    };
    auto push_vector = [&](std::string name, const PosVector& v) {
        NormCheckRow row;
        row.name = std::move(name);
        row.frobenius = v.norm();
        row.fro_bound = fro_bound;
        row.opnorm = row.frobenius; // a vector's operator norm is its 2-norm
        row.op_bound = op_bound;
        row.ok = row.frobenius <= fro_bound && row.opnorm <= op_bound;
        rep.all_ok = rep.all_ok && row.ok;
        rep.rows.push_back(std::move(row));
    };

    for (index_t l = 0; l < params.layers(); ++l) {
        const std::string tag = "[" + std::to_string(l + 1) + "]";
        push_matrix("W" + tag, params.attn[l]);
        push_matrix("V" + tag, params.value[l]);
        push_vector("P" + tag, params.pos[l]);
    }
    push_matrix("W_O", params.out);
    return rep;
}

InterventionReport intervene(const Checkpoint& ckpt, const BasisStats& stats,
                             const SequenceBatch& batch, index_t workers) {
    check_shapes(ckpt.params, stats);
    if (batch.vocab_size != ckpt.params.vocab_size || batch.seq_len != ckpt.params.seq_len)
        throw dimension_error("intervene: batch shape disagrees with checkpoint");

    InterventionReport rep;
    rep.baseline = loss(ckpt.params, batch, {}, workers).mean_nll;
    const Matrix value_dir = matmul(stats.bbar, stats.phibar).transposed();
    const index_t layers = ckpt.params.layers();

    enum class Kind { out, value, attn };
    auto weight_of = [&](ModelParams& p, Kind kind, index_t l) -> Matrix& {
        switch (kind) {
            case Kind::out: return p.out;
            case Kind::value: return p.value[l];
            default: return p.attn[l];
        }
    };

    auto run = [&](std::string target, Kind kind, const Matrix& dir,
                   std::vector<index_t> layer_ids) {
        InterventionRow row;
        row.target = std::move(target);
        if (dir.frobenius_norm() == 0.0) {
            row.skip_reason = "direction is zero";
            rep.rows.push_back(std::move(row));
            return;
        }
        ModelParams work = ckpt.params;
        const double dn = dir.frobenius_norm();
        for (index_t l : layer_ids) {
            Matrix& w = weight_of(work, kind, l);
            const double pre_n = w.frobenius_norm();
            w = remove_projection(w, dir);
            if (pre_n > 0.0) {
                double ip = 0.0;
                const double* a = w.data();
                const double* d = dir.data();
                for (index_t i = 0; i < w.size(); ++i) ip += a[i] * d[i];
                row.residual_alignment =
                    std::max(row.residual_alignment, std::abs(ip) / (pre_n * dn));
            }
        }
        row.applied = true;
        row.loss_after = loss(work, batch, {}, workers).mean_nll;
        row.delta = row.loss_after - rep.baseline;
        rep.rows.push_back(std::move(row));
    };

    run("W_O", Kind::out, stats.bbar, {0});
    std::vector<index_t> all(layers);
    for (index_t l = 0; l < layers; ++l) all[l] = l;
    for (index_t l = 0; l < layers; ++l)
        run("V[" + std::to_string(l + 1) + "]", Kind::value, value_dir, {l});
    run("V[*]", Kind::value, value_dir, all);
    for (index_t l = 0; l < layers; ++l)
        run("W[" + std::to_string(l + 1) + "]", Kind::attn, stats.qbar, {l});
    run("W[*]", Kind::attn, stats.qbar, all);
    return rep;
}

Matrix CooperateTrace::total() const {
    Matrix out = attention_path;
    out.add_scaled(residual_path, 1.0);
    return out;
}

CooperateTrace cooperate_trace(const BasisStats& stats, std::span<const std::uint32_t> x_ids,
                               PathScales scales) {
    const index_t len = x_ids.size();
    const index_t v = stats.vocab_size;
    if (len == 0) throw value_error("cooperate_trace: empty sequence");
    if (len > stats.seq_len)
        throw value_error("cooperate_trace: sequence longer than the statistics window");
    for (index_t t = 0; t < len; ++t)
        if (x_ids[t] >= v)
            throw value_error("cooperate_trace: token id " + std::to_string(x_ids[t]) +
                              " outside vocabulary of size " + std::to_string(v));

    // Token-pair scores plus offset scores on the causal support.
    Matrix scores(len, len);
    for (index_t r = 0; r < len; ++r) {
        double* sr = scores.row_data(r);
        for (index_t c = 0; c <= r; ++c)
            sr[c] = scales.score_scale *
                    (stats.qbar(x_ids[r], x_ids[c]) + stats.delta[r - c]);
    }
    const Matrix attn = softmax_rows(scores, /*causal=*/true);

    // Row t of X Phi^T is column x_t of Phi; push it through Sigma.
    Matrix gathered(len, v);
    for (index_t t = 0; t < len; ++t) {
        double* g = gathered.row_data(t);
        for (index_t j = 0; j < v; ++j) g[j] = stats.phibar(j, x_ids[t]);
    }
    Matrix mixed = matmul(gathered, stats.sigma);

    CooperateTrace trace;
    trace.scales = scales;
    trace.attention_path = matmul(attn, mixed);
    trace.attention_path.scale(scales.path_scale);
    trace.residual_path = Matrix(len, v);
    for (index_t t = 0; t < len; ++t) {
        double* r = trace.residual_path.row_data(t);
        const double* b = stats.bbar.row_data(x_ids[t]);
        for (index_t j = 0; j < v; ++j) r[j] = scales.resid_scale * b[j];
    }
    return trace;
}

} // namespace atdl
