#include "atdl/stats.hpp"

#include <cmath>
#include <fstream>

#include "atdl/binio.hpp"
#include "atdl/linalg.hpp"
#include "atdl/parallel.hpp"

namespace atdl {

namespace {

void require_nonempty(const SequenceBatch& batch, const char* what) {
    if (batch.size() == 0 || batch.seq_len == 0 || batch.vocab_size == 0)
        throw value_error(std::string(what) + ": empty batch");
    for (std::uint32_t id : batch.ids)
        if (id >= batch.vocab_size)
            throw value_error(std::string(what) + ": token id outside vocabulary");
}

} // namespace

Matrix compute_bigram(const SequenceBatch& batch) {
    require_nonempty(batch, "compute_bigram");
    const index_t v = batch.vocab_size, t_len = batch.seq_len, n = batch.size();
    Matrix counts(v, v);
    std::vector<double> occ(v, 0.0);
    for (index_t i = 0; i < n; ++i) {
        auto row = batch.sample(i);
        for (index_t t = 0; t < t_len; ++t) {
            counts(row[t], row[t + 1]) += 1.0;
            occ[row[t]] += 1.0;
        }
    }
    const double inv_nt = 1.0 / static_cast<double>(n * t_len);
    const double inv_v = 1.0 / static_cast<double>(v);
    Matrix bbar(v, v);
    for (index_t j = 0; j < v; ++j) {
        const double base = occ[j] * inv_nt * inv_v;
        const double* cj = counts.row_data(j);
        double* bj = bbar.row_data(j);
        for (index_t k = 0; k < v; ++k) bj[k] = cj[k] * inv_nt - base;
    }
    return bbar;
}

Matrix compute_context(const SequenceBatch& batch) {
    require_nonempty(batch, "compute_context");
    const index_t v = batch.vocab_size, t_len = batch.seq_len, n = batch.size();

    // phi_prime(j, k): average over positions of (count of j in the prefix)/t
    // joined with next token k. cvec mirrors its row sums and provides the
    // uniform correction.
    Matrix phi_prime(v, v);
    std::vector<double> cvec(v, 0.0);
    std::vector<double> cnt(v, 0.0);
    std::vector<std::uint32_t> touched;
    touched.reserve(t_len);
    for (index_t i = 0; i < n; ++i) {
        auto row = batch.sample(i);
        for (auto tok : touched) cnt[tok] = 0.0;
        touched.clear();
        for (index_t t = 1; t <= t_len; ++t) {
            const std::uint32_t tok = row[t - 1];
            if (cnt[tok] == 0.0) touched.push_back(tok);
            cnt[tok] += 1.0;
            const std::uint32_t target = row[t];
            const double inv_t = 1.0 / static_cast<double>(t);
            for (auto j : touched) {
                const double w = cnt[j] * inv_t;
                phi_prime(j, target) += w;
                cvec[j] += w;
            }
        }
    }

    const double inv_nt = 1.0 / static_cast<double>(n * t_len);
    const double inv_v = 1.0 / static_cast<double>(v);
    Matrix phibar(v, v); // transposed relative to phi_prime: row = next token
    for (index_t j = 0; j < v; ++j) {
        const double base = cvec[j] * inv_v;
        const double* pj = phi_prime.row_data(j);
        for (index_t i = 0; i < v; ++i) phibar(i, j) = (pj[i] - base) * inv_nt;
    }
    return phibar;
}

Matrix compute_interchangeability(const Matrix& bbar) {
    if (bbar.empty() || bbar.rows() != bbar.cols())
        throw dimension_error("compute_interchangeability: bbar must be square");
    Matrix sigma = matmul_tn(bbar, bbar);
    // mirror the upper triangle so symmetry is exact, not just numerical
    const index_t v = sigma.rows();
    for (index_t i = 0; i < v; ++i)
        for (index_t j = i + 1; j < v; ++j) sigma(j, i) = sigma(i, j);
    return sigma;
}

void compute_qbar(const SequenceBatch& batch, BasisStats& stats, index_t workers) {
    require_nonempty(batch, "compute_qbar");
    const index_t v = batch.vocab_size, t_len = batch.seq_len, n = batch.size();
    if (stats.sigma.rows() != v || stats.phibar.rows() != v)
        throw dimension_error("compute_qbar: sigma/phibar missing or misshapen");

    stats.gbar = matmul(stats.sigma, stats.phibar);
    std::vector<double> colsum_g(v, 0.0);
    for (index_t r = 0; r < v; ++r) {
        const double* g = stats.gbar.row_data(r);
        for (index_t c = 0; c < v; ++c) colsum_g[c] += g[c];
    }

    if (workers == 0) workers = 1;
    const index_t nw = std::min<index_t>(workers, n);
    std::vector<Matrix> qacc(nw), sq(nw);
    for (index_t w = 0; w < nw; ++w) {
        qacc[w] = Matrix(v, v);
        sq[w] = Matrix(t_len, t_len);
    }

    const double inv_v = 1.0 / static_cast<double>(v);
    parallel_chunks(n, nw, [&](index_t w, index_t begin, index_t end) {
        std::vector<double> mrow(t_len);
        Matrix& qa = qacc[w];
        Matrix& sw = sq[w];
        for (index_t i = begin; i < end; ++i) {
            auto row = batch.sample(i);
            for (index_t t = 0; t < t_len; ++t) {
                const index_t support = t + 1;
                const double* grow = stats.gbar.row_data(row[t + 1]);
                double mean = 0.0;
                for (index_t m = 0; m < support; ++m) {
                    const std::uint32_t xm = row[m];
                    mrow[m] = grow[xm] - colsum_g[xm] * inv_v;
                    mean += mrow[m];
                }
                mean /= static_cast<double>(support);
                const double scale = 1.0 / static_cast<double>(support);
                double* sq_t = sw.row_data(t);
                double* qa_t = qa.row_data(row[t]);
                for (index_t m = 0; m < support; ++m) {
                    const double q = scale * (mrow[m] - mean);
                    sq_t[m] += q;
                    qa_t[row[m]] += q;
                }
            }
        }
    });

    // merge partials in worker order
    for (index_t w = 1; w < nw; ++w) {
        qacc[0].add_scaled(qacc[w], 1.0);
        sq[0].add_scaled(sq[w], 1.0);
    }
    const double inv_nt = 1.0 / static_cast<double>(n * t_len);
    qacc[0].scale(inv_nt);
    stats.qbar = std::move(qacc[0]);
    stats.delta = dm_collapse(sq[0]);
    stats.delta.scale(inv_nt);
}

BasisStats compute_all(const SequenceBatch& batch, index_t workers, std::uint64_t config_hash) {
    BasisStats stats;
    stats.vocab_size = batch.vocab_size;
    stats.seq_len = batch.seq_len;
    stats.n_samples = batch.size();
    stats.config_hash = config_hash;
    stats.bbar = compute_bigram(batch);
    stats.phibar = compute_context(batch);
    stats.sigma = compute_interchangeability(stats.bbar);
    compute_qbar(batch, stats, workers);
    return stats;
}

StatsHealth stats_health(const BasisStats& stats) {
    StatsHealth h;
    const index_t v = stats.vocab_size;
    for (index_t j = 0; j < v; ++j) {
        double s = 0.0;
        const double* bj = stats.bbar.row_data(j);
        for (index_t k = 0; k < v; ++k) s += bj[k];
        h.max_row_sum_bbar = std::max(h.max_row_sum_bbar, std::fabs(s));
    }
    std::vector<double> col(v, 0.0);
    for (index_t i = 0; i < v; ++i) {
        const double* pi = stats.phibar.row_data(i);
        for (index_t j = 0; j < v; ++j) col[j] += pi[j];
    }
    for (index_t j = 0; j < v; ++j)
        h.max_col_sum_phibar = std::max(h.max_col_sum_phibar, std::fabs(col[j]));
    for (index_t i = 0; i < v; ++i)
        for (index_t j = i + 1; j < v; ++j)
            h.sigma_asymmetry =
                std::max(h.sigma_asymmetry, std::fabs(stats.sigma(i, j) - stats.sigma(j, i)));
    h.phibar_opnorm = operator_norm_power(stats.phibar, 150);
    h.max_abs_qbar = stats.qbar.max_abs();
    h.max_abs_delta = stats.delta.max_abs();
    return h;
}

void ensure_valid(const BasisStats& stats, double sum_tol) {
    const StatsHealth h = stats_health(stats);
    if (h.max_row_sum_bbar > sum_tol)
        throw value_error("stats: bigram rows do not sum to zero");
    if (h.max_col_sum_phibar > sum_tol)
        throw value_error("stats: context columns do not sum to zero");
    if (h.sigma_asymmetry > 0.0)
        throw value_error("stats: interchangeability matrix is not symmetric");
    if (h.phibar_opnorm > 2.0 + 1e-9)
        throw value_error("stats: context operator norm exceeds 2");
    if (h.max_abs_qbar > 1.0 + 1e-12 || h.max_abs_delta > 1.0 + 1e-12)
        throw value_error("stats: attention statistic exceeds unit range");
}

CoeffSchedule coefficients(std::uint64_t s, double eta) {
    if (eta < 0.0 || !std::isfinite(eta))
        throw value_error("coefficients: eta must be finite and nonnegative");
    const double sd = static_cast<double>(s);
    // staged binomials; every intermediate is an exact integer in f64 for
    // any step count reachable in practice
    const double c2 = sd * (sd - 1.0) / 2.0;
    const double c3 = c2 * (sd - 2.0) / 3.0;
    const double c4 = c3 * (sd - 3.0) / 4.0;
    CoeffSchedule cs;
    cs.c_out = sd * eta;
    cs.c_val = (s >= 2 ? c2 : 0.0) * eta * eta;
    const double eta4 = eta * eta * eta * eta;
    cs.c_attn = ((s >= 4 ? 3.0 * c4 : 0.0) + (s >= 3 ? 2.0 * c3 : 0.0)) * eta4;
    cs.c_pos = cs.c_attn;
    return cs;
}

LeadingTerms leading_terms(const BasisStats& stats, const CoeffSchedule& sched) {
    if (stats.bbar.empty()) throw value_error("leading_terms: stats are empty");
    LeadingTerms lt;
    lt.out = stats.bbar;
    lt.out.scale(sched.c_out);
    lt.value = matmul(stats.bbar, stats.phibar).transposed();
    lt.value.scale(sched.c_val);
    lt.attn = stats.qbar;
    lt.attn.scale(sched.c_attn);
    lt.pos = stats.delta;
    lt.pos.scale(sched.c_pos);
    return lt;
}

namespace {
constexpr std::string_view kStatsMagic = "ATDL-STATS1";

void write_matrix_raw(std::ostream& os, const Matrix& m) {
    binio::write_f64_array(os, m.flat());
}

void read_matrix_raw(std::istream& is, Matrix& m) {
    binio::read_f64_array(is, m.flat());
}
} // namespace

void save_stats(const std::string& path, const BasisStats& stats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path + "'");
    binio::write_magic(out, kStatsMagic);
    binio::write_u64(out, stats.vocab_size);
    binio::write_u64(out, stats.seq_len);
    binio::write_u64(out, stats.n_samples);
    binio::write_u64(out, 0); // flags, reserved
    binio::write_u64(out, stats.config_hash);
    write_matrix_raw(out, stats.bbar);
    write_matrix_raw(out, stats.phibar);
    write_matrix_raw(out, stats.sigma);
    write_matrix_raw(out, stats.gbar);
    write_matrix_raw(out, stats.qbar);
    binio::write_f64_array(out, stats.delta.flat());
    if (!out) throw io_error("write failed for '" + path + "'");
}

BasisStats load_stats(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    binio::expect_magic(in, kStatsMagic);
    BasisStats stats;
    stats.vocab_size = binio::read_u64(in);
    stats.seq_len = binio::read_u64(in);
    stats.n_samples = binio::read_u64(in);
    (void)binio::read_u64(in); // flags
    stats.config_hash = binio::read_u64(in);
    if (stats.vocab_size < 2 || stats.seq_len == 0)
        throw format_error("stats file '" + path + "' has degenerate header");
    const index_t v = stats.vocab_size;
    stats.bbar = Matrix(v, v);
    stats.phibar = Matrix(v, v);
    stats.sigma = Matrix(v, v);
    stats.gbar = Matrix(v, v);
    stats.qbar = Matrix(v, v);
    stats.delta = PosVector(stats.seq_len);
    read_matrix_raw(in, stats.bbar);
    read_matrix_raw(in, stats.phibar);
    read_matrix_raw(in, stats.sigma);
    read_matrix_raw(in, stats.gbar);
    read_matrix_raw(in, stats.qbar);
    binio::read_f64_array(in, stats.delta.flat());
    return stats;
}

} // namespace atdl
