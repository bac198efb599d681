#include "atdl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "atdl/binio.hpp"

namespace fs = std::filesystem;

namespace atdl {

namespace {

constexpr std::string_view kStandalonePunct = ".,!?;:'\"()-";

bool is_punct_token(char c) {
    return kStandalonePunct.find(c) != std::string_view::npos;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw io_error("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    enum class Run { none, word, digits } run = Run::none;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
        run = Run::none;
    };
    for (unsigned char uc : text) {
        const char c = static_cast<char>(uc);
        if (uc >= 0x80) { // keep multi-byte sequences inside the current word
            if (run == Run::digits) flush();
            cur.push_back(c);
            run = Run::word;
        } else if (std::isalpha(uc)) {
            if (run == Run::digits) flush();
            cur.push_back(static_cast<char>(std::tolower(uc)));
            run = Run::word;
        } else if (std::isdigit(uc)) {
            if (run == Run::word) flush();
            cur.push_back(c);
            run = Run::digits;
        } else if (is_punct_token(c)) {
            flush();
            out.emplace_back(1, c);
        } else { // whitespace and every other ASCII byte separate tokens
            flush();
        }
    }
    flush();
    return out;
}

Vocab::Vocab(std::vector<std::string> tokens, std::vector<std::uint64_t> counts)
    : tokens_(std::move(tokens)), counts_(std::move(counts)) {
    if (tokens_.size() != counts_.size())
        throw dimension_error("Vocab: tokens and counts disagree in length");
    index_.reserve(tokens_.size());
    for (index_t i = 0; i < tokens_.size(); ++i)
        index_.emplace(tokens_[i], static_cast<std::uint32_t>(i));
}

std::optional<std::uint32_t> Vocab::id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> read_documents(const std::string& path, bool per_file) {
    fs::path p(path);
    std::error_code ec;
    if (!fs::exists(p, ec)) throw io_error("no such path: '" + path + "'");
    std::vector<std::string> docs;
    if (per_file) {
        if (!fs::is_directory(p)) throw io_error("'" + path + "' is not a directory");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) docs.push_back(read_file(f));
    } else {
        if (fs::is_directory(p))
            throw io_error("'" + path + "' is a directory; pass per-file mode");
        std::ifstream in(p);
        if (!in) throw io_error("cannot open '" + path + "'");
        std::string line;
        while (std::getline(in, line)) docs.push_back(line);
    }
    return docs;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& docs, index_t vocab_cap) {
    if (vocab_cap < 2) throw value_error("build_vocab: vocab cap must be at least 2");
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const auto& doc : docs)
        for (const auto& tok : doc) ++freq[tok];
    if (freq.empty()) throw value_error("build_vocab: token stream is empty");

    std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > vocab_cap) ranked.resize(vocab_cap);

    std::vector<std::string> tokens;
    std::vector<std::uint64_t> counts;
    tokens.reserve(ranked.size());
    counts.reserve(ranked.size());
    for (auto& [tok, cnt] : ranked) {
        tokens.push_back(std::move(tok));
        counts.push_back(cnt);
    }
    return Vocab(std::move(tokens), std::move(counts));
}

SequenceBatch encode_sequences(const std::vector<std::vector<std::string>>& docs,
                               const Vocab& vocab, index_t seq_len, index_t max_samples) {
    if (seq_len == 0) throw value_error("encode_sequences: seq_len must be positive");
    SequenceBatch batch;
    batch.vocab_size = vocab.size();
    batch.seq_len = seq_len;
    const index_t row_len = seq_len + 1;
    std::vector<std::uint32_t> row;
    for (const auto& doc : docs) {
        if (max_samples != 0 && batch.size() >= max_samples) break;
        if (doc.size() < row_len) continue;
        row.clear();
        bool ok = true;
        for (const auto& tok : doc) {
            auto id = vocab.id_of(tok);
            if (!id) { // out-of-vocabulary token disqualifies the document
                ok = false;
                break;
            }
            row.push_back(*id);
            if (row.size() == row_len) break;
        }
        if (ok && row.size() == row_len)
            batch.ids.insert(batch.ids.end(), row.begin(), row.end());
    }
    if (batch.size() == 0)
        throw value_error("encode_sequences: no document qualifies (needs seq_len+1 in-vocabulary tokens)");
    return batch;
}

SequenceBatch load_pretokenized(const std::string& path, index_t declared_vocab_size,
                                index_t seq_len, index_t max_samples) {
    if (seq_len == 0) throw value_error("load_pretokenized: seq_len must be positive");
    if (declared_vocab_size < 2) throw value_error("load_pretokenized: vocab size must be at least 2");
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");

    SequenceBatch batch;
    batch.vocab_size = declared_vocab_size;
    batch.seq_len = seq_len;
    const index_t row_len = seq_len + 1;

    std::string line;
    std::vector<std::uint32_t> row;
    index_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (max_samples != 0 && batch.size() >= max_samples) break;
        row.clear();
        const char* p = line.data();
        const char* end = p + line.size();
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            std::uint32_t id = 0;
            auto [next, errc] = std::from_chars(p, end, id);
            if (errc != std::errc{})
                throw format_error("line " + std::to_string(lineno) + ": not a token id");
            if (id >= declared_vocab_size)
                throw format_error("line " + std::to_string(lineno) + ": id " +
                                   std::to_string(id) + " outside vocabulary of size " +
                                   std::to_string(declared_vocab_size));
            row.push_back(id);
            p = next;
        }
        if (row.size() < row_len) continue; // too short to form a sample
        batch.ids.insert(batch.ids.end(), row.begin(), row.begin() + row_len);
    }
    if (batch.size() == 0)
        throw value_error("load_pretokenized: no row long enough for seq_len " +
                          std::to_string(seq_len));
    return batch;
}

void save_vocab(const std::string& path, const Vocab& vocab, std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path + "'");
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash));
    out << "# atdl-config " << hex << "\n";
    for (index_t i = 0; i < vocab.size(); ++i)
        out << vocab.token(i) << '\t' << vocab.count(i) << '\n';
    if (!out) throw io_error("write failed for '" + path + "'");
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    std::vector<std::string> tokens;
    std::vector<std::uint64_t> counts;
    std::string line;
    index_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw format_error("vocab line " + std::to_string(lineno) + ": missing tab");
        std::uint64_t cnt = 0;
        const char* p = line.data() + tab + 1;
        auto [next, errc] = std::from_chars(p, line.data() + line.size(), cnt);
        if (errc != std::errc{} || next != line.data() + line.size())
            throw format_error("vocab line " + std::to_string(lineno) + ": bad count");
        tokens.push_back(line.substr(0, tab));
        counts.push_back(cnt);
    }
    if (tokens.empty()) throw format_error("vocab file '" + path + "' has no entries");
    return Vocab(std::move(tokens), std::move(counts));
}

namespace {
constexpr std::string_view kBatchMagic = "ATDL-BATCH1";
}

void save_batch(const std::string& path, const SequenceBatch& batch, std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path + "'");
    binio::write_magic(out, kBatchMagic);
    binio::write_u64(out, batch.vocab_size);
    binio::write_u64(out, batch.seq_len);
    binio::write_u64(out, batch.size());
    binio::write_u64(out, config_hash);
    for (std::uint32_t id : batch.ids) binio::write_u32(out, id);
    if (!out) throw io_error("write failed for '" + path + "'");
}

SequenceBatch load_batch(const std::string& path, std::uint64_t* config_hash_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    binio::expect_magic(in, kBatchMagic);
    SequenceBatch batch;
    batch.vocab_size = binio::read_u64(in);
    batch.seq_len = binio::read_u64(in);
    const index_t n = binio::read_u64(in);
    const std::uint64_t hash = binio::read_u64(in);
    if (config_hash_out) *config_hash_out = hash;
    if (batch.vocab_size < 2 || batch.seq_len == 0)
        throw format_error("batch file '" + path + "' has degenerate header");
    batch.ids.resize(n * (batch.seq_len + 1));
    for (auto& id : batch.ids) {
        id = binio::read_u32(in);
        if (id >= batch.vocab_size)
            throw format_error("batch file '" + path + "' has id outside vocabulary");
    }
    return batch;
}

} // namespace atdl
