// Command-line front end: corpus ingestion, statistics, training,
// verification, interventions, and association queries over one shared
// set of binary artifacts. Every artifact embeds the producing command's
// config hash so downstream steps can confirm provenance.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "atdl/binio.hpp"
#include "atdl/corpus.hpp"
#include "atdl/explore.hpp"
#include "atdl/grad.hpp"
#include "atdl/linalg.hpp"
#include "atdl/model.hpp"
#include "atdl/parallel.hpp"
#include "atdl/stats.hpp"
#include "atdl/trainer.hpp"
#include "atdl/verify.hpp"

namespace {

using nlohmann::json;

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string fmt_hash(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Prints the effective configuration and returns its hash; the hash is what
// gets embedded in artifacts written by the command.
std::uint64_t announce(const std::string& canonical) {
    const std::uint64_t h = atdl::binio::fnv1a64(canonical);
    std::cout << "config: " << canonical << "\n";
    std::cout << "config-hash: " << fmt_hash(h) << "\n";
    return h;
}

void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw atdl::io_error("cannot write '" + path + "'");
    out << body;
    if (!out) throw atdl::io_error("write failed for '" + path + "'");
}

void emit(const std::string& body, const std::string& out_path) {
    if (out_path.empty())
        std::cout << body;
    else
        write_text_file(out_path, body);
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
    std::string corpus;
    std::string out;
    atdl::index_t vocab_cap = 512;
    atdl::index_t seq_len = 64;
    atdl::index_t max_samples = 0;
    atdl::index_t declared_vocab = 0; // pretokenized mode
    bool per_file = false;
    bool pretokenized = false;
};

int cmd_ingest(const IngestArgs& a) {
    std::ostringstream c;
    c << "ingest|corpus=" << a.corpus << "|per_file=" << a.per_file
      << "|pretokenized=" << a.pretokenized << "|vocab_cap=" << a.vocab_cap
      << "|vocab_size=" << a.declared_vocab << "|seq_len=" << a.seq_len
      << "|max_samples=" << a.max_samples;
    const std::uint64_t hash = announce(c.str());

    atdl::SequenceBatch batch;
    if (a.pretokenized) {
        if (a.declared_vocab < 2)
            throw atdl::value_error("pretokenized input needs --vocab-size of at least 2");
        batch = atdl::load_pretokenized(a.corpus, a.declared_vocab, a.seq_len, a.max_samples);
    } else {
        const auto docs = atdl::read_documents(a.corpus, a.per_file);
        std::vector<std::vector<std::string>> toks;
        toks.reserve(docs.size());
        for (const auto& d : docs) toks.push_back(atdl::tokenize(d));
        const atdl::Vocab vocab = atdl::build_vocab(toks, a.vocab_cap);
        batch = atdl::encode_sequences(toks, vocab, a.seq_len, a.max_samples);
        atdl::save_vocab(a.out + ".vocab.txt", vocab, hash);
    }
    atdl::save_batch(a.out + ".batch.bin", batch, hash);
    std::cout << "ingest: samples=" << batch.size() << " seq_len=" << batch.seq_len
              << " vocab=" << batch.vocab_size << "\n";
    std::cout << "wrote " << a.out << ".batch.bin"
              << (a.pretokenized ? std::string() : " and " + a.out + ".vocab.txt") << "\n";
    return 0;
}

// ----------------------------------------------------------------- stats

struct StatsArgs {
    std::string data;
    std::string out;
    atdl::index_t workers = 1;
};

int cmd_stats(const StatsArgs& a) {
    std::uint64_t batch_hash = 0;
    const atdl::SequenceBatch batch = atdl::load_batch(a.data, &batch_hash);
    std::ostringstream c;
    c << "stats|data=" << a.data << "|input_hash=" << fmt_hash(batch_hash);
    const std::uint64_t hash = announce(c.str());

    atdl::BasisStats stats = atdl::compute_all(batch, a.workers, hash);
    atdl::ensure_valid(stats);
    atdl::save_stats(a.out, stats);

    const atdl::StatsHealth h = atdl::stats_health(stats);
    std::cout << "stats: samples=" << stats.n_samples << " seq_len=" << stats.seq_len
              << " vocab=" << stats.vocab_size << "\n";
    std::cout << "  max |row sum|  bigram  " << fmt(h.max_row_sum_bbar) << "\n";
    std::cout << "  max |col sum|  context " << fmt(h.max_col_sum_phibar) << "\n";
    std::cout << "  asymmetry      sigma   " << fmt(h.sigma_asymmetry) << "\n";
    std::cout << "  operator norm  context " << fmt(h.phibar_opnorm) << " (<= 2)\n";
    std::cout << "  max |entry|    pair    " << fmt(h.max_abs_qbar) << " (<= 1)\n";
    std::cout << "  max |entry|    offset  " << fmt(h.max_abs_delta) << " (<= 1)\n";
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string stats;
    std::string out;
    std::string batch_spec = "full";
    std::string init_kind = "zero";
    atdl::index_t layers = 1;
    double eta = 0.0;
    atdl::index_t steps = 0;
    double v = 0.0;
    double xi = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t shuffle_seed = 0;
    atdl::index_t workers = 1;
    bool save_checkpoints = false;
};

int cmd_train(const TrainArgs& a) {
    std::uint64_t batch_hash = 0;
    const atdl::SequenceBatch batch = atdl::load_batch(a.data, &batch_hash);

    atdl::TrainConfig cfg;
    cfg.layers = a.layers;
    cfg.eta = a.eta;
    cfg.steps = a.steps;
    if (a.batch_spec != "full") {
        std::size_t pos = 0;
        unsigned long long k = 0;
        try {
            k = std::stoull(a.batch_spec, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != a.batch_spec.size() || k == 0)
            throw atdl::value_error("--batch expects 'full' or a positive sample count, got '" +
                                    a.batch_spec + "'");
        cfg.batch_size = static_cast<atdl::index_t>(k);
    }
    if (a.init_kind == "zero") {
        cfg.init.kind = atdl::InitConfig::Kind::zero;
    } else if (a.init_kind == "gaussian") {
        cfg.init.kind = atdl::InitConfig::Kind::gaussian;
        cfg.init.v = a.v;
        cfg.init.xi = a.xi;
        cfg.init.seed = a.seed;
    } else {
        throw atdl::value_error("--init expects 'zero' or 'gaussian', got '" + a.init_kind + "'");
    }
    cfg.shuffle_seed = a.shuffle_seed;
    cfg.workers = a.workers;

    std::ostringstream c;
    c << "train|data=" << a.data << "|input_hash=" << fmt_hash(batch_hash)
      << "|layers=" << a.layers << "|eta=" << fmt(a.eta) << "|steps=" << a.steps
      << "|batch=" << a.batch_spec << "|init=" << a.init_kind << "|v=" << fmt(a.v)
      << "|xi=" << fmt(a.xi) << "|seed=" << a.seed << "|shuffle_seed=" << a.shuffle_seed;
    cfg.config_hash = announce(c.str());

    std::optional<atdl::BasisStats> stats;
    if (!a.stats.empty()) {
        stats = atdl::load_stats(a.stats);
        std::cout << "stats: " << a.stats << " (hash " << fmt_hash(stats->config_hash) << ")\n";
    }

    atdl::RunLog log;
    atdl::CheckpointSink sink;
    if (a.save_checkpoints) {
        sink = [&](const atdl::Checkpoint& ck) {
            atdl::save_checkpoint(a.out + ".step" + std::to_string(ck.step) + ".ckpt.bin", ck);
        };
    }
    const atdl::Checkpoint final_ckpt =
        atdl::train(cfg, batch, stats ? &*stats : nullptr, log, sink);

    atdl::save_checkpoint(a.out + ".ckpt.bin", final_ckpt);
    std::ostringstream csv;
    atdl::write_run_log(csv, log, cfg.config_hash);
    write_text_file(a.out + ".runlog.csv", csv.str());

    std::cout << "train: steps=" << final_ckpt.step << " final_loss=" << fmt(final_ckpt.loss_at_save)
              << " (ln|V|=" << fmt(std::log(static_cast<double>(batch.vocab_size))) << ")\n";
    std::cout << "wrote " << a.out << ".ckpt.bin and " << a.out << ".runlog.csv\n";
    return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
    std::string ckpt;
    std::string stats;
    std::string format = "text";
    std::string out;
};

std::string render_verify_text(const atdl::VerificationReport& r) {
    std::ostringstream os;
    os << "step " << r.step << "  eta " << fmt(r.eta) << "\n";
    os << "regime: eta>=1/T " << (r.regime.eta_ok ? "yes" : "no")
       << " | L<=sqrt(T)/4 " << (r.regime.layers_ok ? "yes" : "no")
       << " | T>=60 " << (r.regime.seq_ok ? "yes" : "no")
       << " | |V|>=500 " << (r.regime.vocab_ok ? "yes" : "no")
       << " | s<=" << fmt(r.regime.step_cap) << " " << (r.regime.steps_ok ? "yes" : "no")
       << " => " << (r.regime.all() ? "in regime" : "out of regime") << "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %12s %14s %14s %s\n", "weight", "cosine",
                  "deviation", "bound", "ok");
    os << line;
    for (const auto& row : r.rows) {
        char cosine[32] = "null";
        if (row.cosine) std::snprintf(cosine, sizeof cosine, "%.9f", *row.cosine);
        char bound[32] = "-";
        if (row.bound) std::snprintf(bound, sizeof bound, "%.6e", *row.bound);
        const char* ok = row.bound_ok ? (*row.bound_ok ? "yes" : "NO") : "-";
        char dev[32];
        std::snprintf(dev, sizeof dev, "%.6e", row.deviation);
        std::snprintf(line, sizeof line, "%-6s %12s %14s %14s %s\n", row.name.c_str(), cosine,
                      dev, bound, ok);
        os << line;
    }
    auto mean = [&](const char* name, const std::optional<double>& m) {
        os << "mean cosine " << name << ": " << (m ? fmt(*m) : std::string("null")) << "\n";
    };
    mean("W_O", r.cos_out);
    mean("V", r.cos_value_mean);
    mean("W", r.cos_attn_mean);
    mean("P", r.cos_pos_mean);
    os << "all bounds ok: " << (r.all_bounds_ok() ? "yes" : "no") << "\n";
    return os.str();
}

json verify_to_json(const atdl::VerificationReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json jr{{"name", row.name}, {"deviation", row.deviation}};
        jr["cosine"] = row.cosine ? json(*row.cosine) : json(nullptr);
        jr["bound"] = row.bound ? json(*row.bound) : json(nullptr);
        jr["bound_ok"] = row.bound_ok ? json(*row.bound_ok) : json(nullptr);
        rows.push_back(std::move(jr));
    }
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"step", r.step},
                {"eta", r.eta},
                {"regime",
                 {{"eta_ok", r.regime.eta_ok},
                  {"layers_ok", r.regime.layers_ok},
                  {"seq_ok", r.regime.seq_ok},
                  {"vocab_ok", r.regime.vocab_ok},
                  {"steps_ok", r.regime.steps_ok},
                  {"step_cap", r.regime.step_cap},
                  {"in_regime", r.regime.all()}}},
                {"rows", rows},
                {"cosine_means",
                 {{"W_O", opt(r.cos_out)},
                  {"V", opt(r.cos_value_mean)},
                  {"W", opt(r.cos_attn_mean)},
                  {"P", opt(r.cos_pos_mean)}}},
                {"all_bounds_ok", r.all_bounds_ok()}};
}

std::string render_verify_csv(const atdl::VerificationReport& r) {
    std::ostringstream os;
    os << "name,cosine,deviation,bound,bound_ok\n";
    for (const auto& row : r.rows) {
        os << row.name << ',';
        if (row.cosine) os << fmt(*row.cosine);
        os << ',' << fmt(row.deviation) << ',';
        if (row.bound) os << fmt(*row.bound);
        os << ',';
        if (row.bound_ok) os << (*row.bound_ok ? "true" : "false");
        os << '\n';
    }
    return os.str();
}

int cmd_verify(const VerifyArgs& a) {
    const atdl::Checkpoint ckpt = atdl::load_checkpoint(a.ckpt);
    const atdl::BasisStats stats = atdl::load_stats(a.stats);
    std::ostringstream c;
    c << "verify|ckpt=" << a.ckpt << "|ckpt_hash=" << fmt_hash(ckpt.config_hash)
      << "|stats=" << a.stats << "|stats_hash=" << fmt_hash(stats.config_hash);
    announce(c.str());

    const atdl::VerificationReport rep = atdl::compare(ckpt, stats);
    if (a.format == "json")
        emit(verify_to_json(rep).dump(2) + "\n", a.out);
    else if (a.format == "csv")
        emit(render_verify_csv(rep), a.out);
    else
        emit(render_verify_text(rep), a.out);
    return 0;
}

// ------------------------------------------------------------- intervene

struct InterveneArgs {
    std::string ckpt;
    std::string stats;
    std::string data;
    std::string format = "text";
    std::string out;
    atdl::index_t workers = 1;
};

int cmd_intervene(const InterveneArgs& a) {
    const atdl::Checkpoint ckpt = atdl::load_checkpoint(a.ckpt);
    const atdl::BasisStats stats = atdl::load_stats(a.stats);
    std::uint64_t batch_hash = 0;
    const atdl::SequenceBatch batch = atdl::load_batch(a.data, &batch_hash);
    std::ostringstream c;
    c << "intervene|ckpt=" << a.ckpt << "|ckpt_hash=" << fmt_hash(ckpt.config_hash)
      << "|stats=" << a.stats << "|data=" << a.data
      << "|input_hash=" << fmt_hash(batch_hash);
    announce(c.str());

    const atdl::InterventionReport rep = atdl::intervene(ckpt, stats, batch, a.workers);
    if (a.format == "json") {
        json rows = json::array();
        for (const auto& r : rep.rows) {
            json jr{{"target", r.target}, {"applied", r.applied}};
            if (r.applied) {
                jr["loss_after"] = r.loss_after;
                jr["delta"] = r.delta;
                jr["residual_alignment"] = r.residual_alignment;
            } else {
                jr["skip_reason"] = r.skip_reason;
            }
            rows.push_back(std::move(jr));
        }
        emit(json{{"baseline", rep.baseline}, {"rows", rows}}.dump(2) + "\n", a.out);
    } else {
        std::ostringstream os;
        os << "baseline loss: " << fmt(rep.baseline) << "\n";
        char line[160];
        std::snprintf(line, sizeof line, "%-6s %14s %14s %s\n", "target", "loss", "delta",
                      "note");
        os << line;
        for (const auto& r : rep.rows) {
            if (!r.applied) {
                std::snprintf(line, sizeof line, "%-6s %14s %14s skipped: %s\n",
                              r.target.c_str(), "-", "-", r.skip_reason.c_str());
            } else {
                std::snprintf(line, sizeof line, "%-6s %14s %14s alignment %.1e\n",
                              r.target.c_str(), fmt(r.loss_after).c_str(),
                              fmt(r.delta).c_str(), r.residual_alignment);
            }
            os << line;
        }
        emit(os.str(), a.out);
    }
    return 0;
}

// --------------------------------------------------------------- explore

struct ExploreArgs {
    std::string stats;
    std::string vocab;
    std::vector<std::string> tokens;
    std::string basis = "bigram";
    std::string axis = "row";
    std::string format = "text";
    std::string out;
    atdl::index_t k = 30;
};

int cmd_explore(const ExploreArgs& a) {
    const atdl::BasisStats stats = atdl::load_stats(a.stats);
    const atdl::Vocab vocab = atdl::load_vocab(a.vocab);
    std::ostringstream c;
    c << "explore|stats=" << a.stats << "|stats_hash=" << fmt_hash(stats.config_hash)
      << "|vocab=" << a.vocab << "|basis=" << a.basis << "|axis=" << a.axis << "|k=" << a.k;
    for (const auto& t : a.tokens) c << "|token=" << t;
    announce(c.str());

    if (a.tokens.empty()) throw atdl::value_error("explore needs at least one --token");

    if (a.basis == "all" || a.tokens.size() > 1) {
        emit(atdl::dump_association_table(a.tokens, stats, vocab, a.k), a.out);
        return 0;
    }

    atdl::AssociationQuery q;
    q.token = a.tokens.front();
    q.k = a.k;
    q.axis = a.axis == "column" ? atdl::Axis::column : atdl::Axis::row;
    if (a.basis == "bigram") q.basis = atdl::Basis::bigram;
    else if (a.basis == "interchangeability") q.basis = atdl::Basis::interchangeability;
    else if (a.basis == "context") q.basis = atdl::Basis::context;
    else throw atdl::value_error("--basis expects bigram|interchangeability|context|all, got '" +
                                 a.basis + "'");

    const auto ranked = atdl::topk(q, stats, vocab);
    if (a.format == "json") {
        json rows = json::array();
        for (const auto& st : ranked) rows.push_back({{"token", st.token}, {"score", st.score}});
        emit(json{{"token", q.token}, {"basis", a.basis}, {"rows", rows}}.dump(2) + "\n", a.out);
    } else {
        std::ostringstream os;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            char line[128];
            std::snprintf(line, sizeof line, "%3zu  %-16s %.6e\n", i + 1,
                          ranked[i].token.c_str(), ranked[i].score);
            os << line;
        }
        emit(os.str(), a.out);
    }
    return 0;
}

// -------------------------------------------------------------- selftest

int fail_count = 0;

void check(bool ok, const std::string& name, const std::string& detail = std::string()) {
    if (ok) {
        std::cout << "[ok]   " << name << "\n";
    } else {
        ++fail_count;
        std::cout << "[FAIL] " << name << (detail.empty() ? "" : ": " + detail) << "\n";
    }
}

atdl::SequenceBatch selftest_batch(atdl::index_t v, atdl::index_t t, atdl::index_t n,
                                   std::uint64_t seed) {
    atdl::SequenceBatch b;
    b.vocab_size = v;
    b.seq_len = t;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(v - 1));
    b.ids.resize(n * (t + 1));
    for (auto& id : b.ids) id = pick(rng);
    return b;
}

int cmd_selftest(atdl::index_t workers) {
    announce("selftest");

    { // causal softmax on a fixed score row: exp(ln 2) : exp(0) = 2 : 1
        atdl::Matrix s(2, 2);
        s(1, 0) = std::log(2.0);
        s(1, 1) = 0.0;
        const atdl::Matrix a = atdl::softmax_rows(s, true);
        check(std::abs(a(1, 0) - 2.0 / 3.0) < 1e-15 && std::abs(a(1, 1) - 1.0 / 3.0) < 1e-15 &&
                  a(0, 0) == 1.0,
              "softmax fixed point");
    }

    { // offset expansion round trip: collapse(expand(p))[m] = (T-m) p[m]
        atdl::PosVector p(3);
        p[0] = 3.0; p[1] = 2.0; p[2] = 1.0;
        const atdl::PosVector q = atdl::dm_collapse(atdl::dm_expand(p));
        check(q[0] == 9.0 && q[1] == 4.0 && q[2] == 1.0, "offset score round trip");
    }

    const atdl::SequenceBatch batch = selftest_batch(7, 5, 6, 12345);
    const atdl::BasisStats stats = atdl::compute_all(batch, workers, 0);
    { // statistics invariants on a random batch
        bool ok = true;
        std::string detail;
        try {
            atdl::ensure_valid(stats);
        } catch (const atdl::value_error& e) {
            ok = false;
            detail = e.what();
        }
        check(ok, "statistics invariants", detail);
    }

    { // one zero-init step makes the output weight an exact multiple of the
      // bigram statistic
        atdl::TrainConfig cfg;
        cfg.layers = 1;
        cfg.eta = 0.5;
        cfg.steps = 1;
        cfg.workers = workers;
        atdl::RunLog log;
        const atdl::Checkpoint ck = atdl::train(cfg, batch, &stats, log);
        double worst = 0.0;
        for (atdl::index_t i = 0; i < ck.params.out.size(); ++i)
            worst = std::max(worst,
                             std::abs(ck.params.out.data()[i] - 0.5 * stats.bbar.data()[i]));
        check(worst < 1e-14, "first-step output weight", "max err " + fmt(worst));
        check(log.rows.size() == 2 && log.rows[0].loss > log.rows[1].loss,
              "loss decreases on step one");
    }

    { // analytic gradient matches central finite differences
        atdl::InitConfig ic;
        ic.kind = atdl::InitConfig::Kind::gaussian;
        ic.v = 2.0;
        ic.xi = 0.0;
        ic.seed = 99;
        atdl::ModelParams params = atdl::init(2, 7, 5, ic);
        const atdl::BackwardResult bwd = atdl::backward(params, batch, {}, workers);
        const double h = 1e-6;
        double worst = 0.0;
        auto probe = [&](double* slot, double analytic) {
            const double saved = *slot;
            *slot = saved + h;
            const double up = atdl::loss(params, batch, {}, workers).mean_nll;
            *slot = saved - h;
            const double dn = atdl::loss(params, batch, {}, workers).mean_nll;
            *slot = saved;
            const double fd = (up - dn) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)));
        };
        for (atdl::index_t i : {atdl::index_t{0}, atdl::index_t{17}, atdl::index_t{33}}) {
            probe(params.attn[0].data() + i, bwd.grads.attn[0].data()[i]);
            probe(params.value[1].data() + i, bwd.grads.value[1].data()[i]);
            probe(params.out.data() + i, bwd.grads.out.data()[i]);
        }
        probe(&params.pos[0][2], bwd.grads.pos[0][2]);
        check(worst < 1e-6, "gradient finite differences", "max rel err " + fmt(worst));
    }

    { // artifact round trip through a temp directory
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "atdl-selftest";
        fs::create_directories(dir);
        const std::string sp = (dir / "stats.bin").string();
        atdl::save_stats(sp, stats);
        const atdl::BasisStats back = atdl::load_stats(sp);
        check(back.bbar.flat().size() == stats.bbar.flat().size() &&
                  std::equal(back.qbar.flat().begin(), back.qbar.flat().end(),
                             stats.qbar.flat().begin()),
              "statistics file round trip");
        fs::remove_all(dir);
    }

    std::cout << (fail_count == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return fail_count == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-only transformer training and theory-verification lab"};
    app.set_config("--config", "", "INI file with defaults; flags override it");
    app.require_subcommand(1);

    bool deterministic = false;
    app.add_flag("--deterministic", deterministic,
                 "bitwise-reproducible mode: fixed-order reference kernels");

    const atdl::index_t default_w = atdl::default_workers();

    IngestArgs ia;
    auto* ingest = app.add_subcommand("ingest", "tokenize a corpus into vocab and batch caches");
    ingest->add_option("--corpus", ia.corpus, "text file (or directory with --per-file)")
        ->required();
    ingest->add_option("--out", ia.out, "output path prefix")->required();
    ingest->add_option("--vocab-cap", ia.vocab_cap, "keep this many most-frequent tokens");
    ingest->add_option("--seq-len", ia.seq_len, "tokens per training row (T)");
    ingest->add_option("--max-samples", ia.max_samples, "cap on encoded rows (0 = all)");
    ingest->add_flag("--per-file", ia.per_file, "treat each file in a directory as a document");
    ingest->add_flag("--pretokenized", ia.pretokenized,
                     "input is space-separated token ids, one row per line");
    ingest->add_option("--vocab-size", ia.declared_vocab,
                       "declared vocabulary size for --pretokenized");

    StatsArgs sa;
    auto* stats_cmd = app.add_subcommand("stats", "compute association statistics from a batch");
    stats_cmd->add_option("--data", sa.data, "batch cache from ingest")->required();
    stats_cmd->add_option("--out", sa.out, "output statistics file")->required();
    stats_cmd->add_option("--workers", sa.workers, "worker threads")->default_val(default_w);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "gradient descent on the batch");
    train_cmd->add_option("--data", ta.data, "batch cache from ingest")->required();
    train_cmd->add_option("--stats", ta.stats, "statistics file for run-log comparisons");
    train_cmd->add_option("--out", ta.out, "output path prefix")->required();
    train_cmd->add_option("--layers", ta.layers, "model depth");
    train_cmd->add_option("--eta", ta.eta, "learning rate")->required();
    train_cmd->add_option("--steps", ta.steps, "gradient steps")->required();
    train_cmd->add_option("--batch", ta.batch_spec, "'full' or a minibatch size");
    train_cmd->add_option("--init", ta.init_kind, "'zero' or 'gaussian'");
    train_cmd->add_option("--v", ta.v, "gaussian scale");
    train_cmd->add_option("--xi", ta.xi, "gaussian exponent margin");
    train_cmd->add_option("--seed", ta.seed, "gaussian draw seed");
    train_cmd->add_option("--shuffle-seed", ta.shuffle_seed, "minibatch shuffle seed");
    train_cmd->add_option("--workers", ta.workers, "worker threads")->default_val(default_w);
    train_cmd->add_flag("--save-checkpoints", ta.save_checkpoints,
                        "write every logged checkpoint, not only the final one");

    VerifyArgs va;
    auto* verify_cmd = app.add_subcommand("verify", "compare a checkpoint with the theory");
    verify_cmd->add_option("--ckpt", va.ckpt, "checkpoint file")->required();
    verify_cmd->add_option("--stats", va.stats, "statistics file")->required();
    verify_cmd->add_option("--format", va.format, "text|json|csv");
    verify_cmd->add_option("--out", va.out, "write the report here instead of stdout");

    InterveneArgs na;
    auto* intervene_cmd =
        app.add_subcommand("intervene", "remove predicted components and measure the loss");
    intervene_cmd->add_option("--ckpt", na.ckpt, "checkpoint file")->required();
    intervene_cmd->add_option("--stats", na.stats, "statistics file")->required();
    intervene_cmd->add_option("--data", na.data, "batch cache to evaluate on")->required();
    intervene_cmd->add_option("--format", na.format, "text|json");
    intervene_cmd->add_option("--out", na.out, "write the report here instead of stdout");
    intervene_cmd->add_option("--workers", na.workers, "worker threads")->default_val(default_w);

    ExploreArgs ea;
    auto* explore_cmd = app.add_subcommand("explore", "top-k association queries");
    explore_cmd->add_option("--stats", ea.stats, "statistics file")->required();
    explore_cmd->add_option("--vocab", ea.vocab, "vocabulary file from ingest")->required();
    explore_cmd->add_option("--token", ea.tokens, "query token (repeatable)");
    explore_cmd->add_option("--basis", ea.basis, "bigram|interchangeability|context|all");
    explore_cmd->add_option("--axis", ea.axis, "row|column");
    explore_cmd->add_option("--k", ea.k, "entries per ranking");
    explore_cmd->add_option("--format", ea.format, "text|json");
    explore_cmd->add_option("--out", ea.out, "write the output here instead of stdout");

    atdl::index_t selftest_workers = default_w;
    auto* selftest_cmd = app.add_subcommand("selftest", "run built-in numeric checks");
    selftest_cmd->add_option("--workers", selftest_workers, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    atdl::set_strict_deterministic(deterministic);

    try {
        if (*ingest) return cmd_ingest(ia);
        if (*stats_cmd) return cmd_stats(sa);
        if (*train_cmd) return cmd_train(ta);
        if (*verify_cmd) return cmd_verify(va);
        if (*intervene_cmd) return cmd_intervene(na);
        if (*explore_cmd) return cmd_explore(ea);
        if (*selftest_cmd) return cmd_selftest(selftest_workers);
    } catch (const atdl::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const atdl::dimension_error& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return 4;
    } catch (const atdl::format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 5;
    } catch (const atdl::value_error& e) {
        std::cerr << "value error: " << e.what() << "\n";
        return 6;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
