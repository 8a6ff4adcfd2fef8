#include "saedit/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "saedit file formats assume a little-endian host");

namespace saedit {

std::vector<std::size_t> EmbeddingSequence::content_rows() const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < padding.size(); ++i)
        if (!padding[i]) rows.push_back(i);
    return rows;
}

void EmbeddingSequence::validate() const {
    if (padding.size() != n_tokens()) throw ShapeError("padding mask length != n_tokens");
    if (labels.size() != n_tokens()) throw ShapeError("label count != n_tokens");
    if (!embeddings.all_finite()) throw NumericError("embedding sequence contains non-finite values");
}

}  // namespace saedit

namespace saedit::dataio {

namespace {

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f32(double v) {
        const float f = static_cast<float>(v);
        raw(&f, sizeof f);
    }
    void f64(double v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    std::size_t offset() const noexcept { return pos_; }

    [[noreturn]] void fail(const std::string& msg) const { throw FormatError(std::string(what_) + ": " + msg, pos_); }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated data, need " + std::to_string(n) + " more bytes");
    }
    /// Checks that `count` fixed-size elements follow; on failure reports the offset of the
    /// first element that is incomplete.
    void need_elements(std::size_t count, std::size_t elem_size) const {
        const std::size_t avail = bytes_.size() - pos_;
        if (count > avail / elem_size) {
            throw FormatError(std::string(what_) + ": truncated data, " + std::to_string(count) +
                                  " elements of " + std::to_string(elem_size) + " bytes expected",
                              pos_ + (avail / elem_size) * elem_size);
        }
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint16_t u16() {
        std::uint16_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f32() {
        const std::size_t at = pos_;
        float f;
        raw(&f, sizeof f);
        if (!std::isfinite(f)) throw FormatError(std::string(what_) + ": non-finite value", at);
        return f;
    }
    double f64() {
        const std::size_t at = pos_;
        double d;
        raw(&d, sizeof d);
        if (!std::isfinite(d)) throw FormatError(std::string(what_) + ": non-finite value", at);
        return d;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void magic(const char (&expect)[4]) {
        char m[4];
        raw(m, 4);
        if (std::memcmp(m, expect, 4) != 0) {
            pos_ -= 4;
            fail("bad magic");
        }
    }
    void version() {
        const std::uint16_t v = u16();
        if (v != kFormatVersion) {
            pos_ -= 2;
            fail("unsupported version " + std::to_string(v));
        }
    }
    void dtype() {
        const std::uint8_t d = u8();
        if (d != kDtypeF32) {
            pos_ -= 1;
            fail("unsupported dtype code " + std::to_string(d));
        }
    }
    void finish() const {
        if (pos_ != bytes_.size()) fail("trailing bytes after payload");
    }

private:
    std::span<const std::uint8_t> bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void spit(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) throw DataError(std::string(what) + " exceeds the u32 range of the file format");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq) {
    seq.validate();
    ByteWriter w;
    w.raw(kEmbeddingMagic, 4);
    w.u16(kFormatVersion);
    w.u8(kDtypeF32);
    w.u32(checked_u32(seq.n_tokens(), "n_tokens"));
    w.u32(checked_u32(seq.d_model(), "d_model"));
    for (double v : seq.embeddings.values()) w.f32(v);
    for (bool p : seq.padding) w.u8(p ? 1 : 0);
    for (const auto& l : seq.labels) w.str(l);
    return w.take();
}

EmbeddingSequence decode_embedding(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "embedding file");
    r.magic(kEmbeddingMagic);
    r.version();
    r.dtype();
    const std::uint32_t n = r.u32();
    const std::uint32_t d = r.u32();
    r.need_elements(static_cast<std::size_t>(n) * d, 4);
    EmbeddingSequence seq;
    std::vector<double> data(static_cast<std::size_t>(n) * d);
    for (double& v : data) v = r.f32();
    seq.embeddings = Matrix(n, d, std::move(data));
    r.need_elements(n, 1);
    seq.padding.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t at = r.offset();
        const std::uint8_t m = r.u8();
        if (m > 1) throw FormatError("embedding file: padding mask byte must be 0 or 1", at);
        seq.padding[i] = m == 1;
    }
    seq.labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) seq.labels.push_back(r.str());
    r.finish();
    return seq;
}

void write_embedding(const fs::path& path, const EmbeddingSequence& seq) { spit(path, encode_embedding(seq)); }

EmbeddingSequence read_embedding(const fs::path& path) {
    try {
        return decode_embedding(slurp(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const sae::SaeModel& model) {
    model.validate();
    const auto& c = model.train_config;
    ByteWriter w;
    w.raw(kCheckpointMagic, 4);
    w.u16(kFormatVersion);
    w.u8(kDtypeF32);
    w.u8(model.theta ? 1 : 0);
    w.u32(checked_u32(model.d_model, "d_model"));
    w.u32(checked_u32(model.d_latent, "d_latent"));
    w.f64(model.theta.value_or(0.0));
    w.u64(c.k);
    w.f64(c.alpha);
    w.f64(c.lr);
    w.u64(c.steps);
    w.u64(c.batch_tokens);
    w.u64(c.aux_k);
    w.u64(c.dead_window);
    w.u8(static_cast<std::uint8_t>(c.sparsity));
    w.u64(c.seed);
    w.u64(c.log_every);
    w.u32(checked_u32(c.matryoshka_sizes.size(), "matryoshka level count"));
    for (auto m : c.matryoshka_sizes) w.u64(m);
    for (double v : model.encoder_weight.values()) w.f32(v);
    for (double v : model.encoder_bias) w.f32(v);
    // Decoder in its conventional d_model x d_latent row-major layout.
    for (std::size_t i = 0; i < model.d_model; ++i)
        for (std::size_t j = 0; j < model.d_latent; ++j) w.f32(model.decoder_atoms(j, i));
    for (double v : model.decoder_bias) w.f32(v);
    return w.take();
}

sae::SaeModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "checkpoint");
    r.magic(kCheckpointMagic);
    r.version();
    r.dtype();
    const std::uint8_t flags = r.u8();
    if (flags > 1) {
        r.fail("unknown flag bits");
    }
    sae::SaeModel m;
    m.d_model = r.u32();
    m.d_latent = r.u32();
    if (m.d_model == 0 || m.d_latent < m.d_model) r.fail("invalid widths");
    const std::size_t theta_at = r.offset();
    const double theta = r.f64();
    if (flags & 1) {
        if (theta < 0.0) throw FormatError("checkpoint: negative theta", theta_at);
        m.theta = theta;
    }
    auto& c = m.train_config;
    c.k = r.u64();
    c.alpha = r.f64();
    c.lr = r.f64();
    c.steps = r.u64();
    c.batch_tokens = r.u64();
    c.aux_k = r.u64();
    c.dead_window = r.u64();
    const std::uint8_t sparsity = r.u8();
    if (sparsity > 1) r.fail("unknown sparsity mode");
    c.sparsity = static_cast<sae::SparsityMode>(sparsity);
    c.seed = r.u64();
    c.log_every = r.u64();
    const std::uint32_t levels = r.u32();
    r.need_elements(levels, 8);
    for (std::uint32_t i = 0; i < levels; ++i) c.matryoshka_sizes.push_back(r.u64());

    const std::size_t dm = m.d_model, dl = m.d_latent;
    r.need_elements(2 * dl * dm + dl + dm, 4);
    std::vector<double> we(dl * dm);
    for (double& v : we) v = r.f32();
    m.encoder_weight = Matrix(dl, dm, std::move(we));
    m.encoder_bias.resize(dl);
    for (double& v : m.encoder_bias) v = r.f32();
    m.decoder_atoms = Matrix(dl, dm);
    for (std::size_t i = 0; i < dm; ++i)
        for (std::size_t j = 0; j < dl; ++j) m.decoder_atoms(j, i) = r.f32();
    m.decoder_bias.resize(dm);
    for (double& v : m.decoder_bias) v = r.f32();
    r.finish();
    return m;
}

void write_checkpoint(const fs::path& path, const sae::SaeModel& model) { spit(path, encode_checkpoint(model)); }

sae::SaeModel read_checkpoint(const fs::path& path) {
    try {
        return decode_checkpoint(slurp(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_direction(const directions::EditDirection& dir) {
    if (dir.d_edit.entries.empty()) throw DataError("direction file: refusing to write an empty support");
    dir.validate();
    ByteWriter w;
    w.raw(kDirectionMagic, 4);
    w.u16(kFormatVersion);
    w.u8(static_cast<std::uint8_t>(dir.method));
    w.u8(kDtypeF32);
    w.u32(checked_u32(dir.d_edit.dim, "direction dim"));
    w.u32(checked_u32(dir.d_edit.nnz(), "direction nnz"));
    w.f64(dir.rho);
    w.f64(dir.epsilon);
    w.f64(dir.max_ratio);
    w.f64(dir.self_ratio_baseline);
    for (const auto& e : dir.d_edit.entries) {
        w.u32(e.index);
        w.f32(e.value);
    }
    w.u32(checked_u32(dir.index_set.size(), "index set size"));
    for (auto i : dir.index_set) w.u32(i);
    w.u32(checked_u32(dir.sources.size(), "source count"));
    for (const auto& s : dir.sources) w.str(s);
    return w.take();
}

directions::EditDirection decode_direction(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "direction file");
    r.magic(kDirectionMagic);
    r.version();
    directions::EditDirection dir;
    const std::uint8_t method = r.u8();
    if (method > 1) {
        r.fail("unknown direction method " + std::to_string(method));
    }
    dir.method = static_cast<directions::DirectionMethod>(method);
    r.dtype();
    dir.d_edit.dim = r.u32();
    const std::uint32_t nnz = r.u32();
    dir.rho = r.f64();
    dir.epsilon = r.f64();
    dir.max_ratio = r.f64();
    dir.self_ratio_baseline = r.f64();
    if (nnz == 0) r.fail("empty support");
    r.need_elements(nnz, 8);
    dir.d_edit.entries.reserve(nnz);
    for (std::uint32_t i = 0; i < nnz; ++i) {
        const std::size_t at = r.offset();
        const std::uint32_t idx = r.u32();
        const double v = r.f32();
        if (idx >= dir.d_edit.dim) throw FormatError("direction file: index out of range", at);
        if (i > 0 && idx <= dir.d_edit.entries.back().index) {
            throw FormatError("direction file: indices not strictly increasing", at);
        }
        dir.d_edit.entries.push_back({idx, v});
    }
    const std::uint32_t m = r.u32();
    r.need_elements(m, 4);
    for (std::uint32_t i = 0; i < m; ++i) {
        const std::size_t at = r.offset();
        const std::uint32_t idx = r.u32();
        if (idx >= dir.d_edit.dim) throw FormatError("direction file: index set entry out of range", at);
        if (i > 0 && idx <= dir.index_set.back()) {
            throw FormatError("direction file: index set not strictly increasing", at);
        }
        dir.index_set.push_back(idx);
    }
    const std::uint32_t n_src = r.u32();
    for (std::uint32_t i = 0; i < n_src; ++i) dir.sources.push_back(r.str());
    r.finish();
    return dir;
}

void write_direction(const fs::path& path, const directions::EditDirection& dir) {
    spit(path, encode_direction(dir));
}

directions::EditDirection read_direction(const fs::path& path) {
    try {
        return decode_direction(slurp(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

// ---------------------------------------------------------------------------

void PairManifest::validate() const {
    std::set<std::string> ids;
    for (const auto& rec : records) {
        if (rec.pair_id.empty()) throw DataError("manifest: empty pair_id");
        if (!ids.insert(rec.pair_id).second) throw DataError("manifest: duplicate pair_id '" + rec.pair_id + "'");
    }
}

PairManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
    const fs::path base = path.parent_path();
    PairManifest manifest;
    std::string line;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            PairRecord rec;
            rec.pair_id = j.at("pair_id").get<std::string>();
            rec.src_embedding_path = j.at("src_embedding_path").get<std::string>();
            rec.tgt_embedding_path = j.at("tgt_embedding_path").get<std::string>();
            rec.src_prompt = j.value("src_prompt", "");
            rec.tgt_prompt = j.value("tgt_prompt", "");
            if (rec.src_embedding_path.is_relative()) rec.src_embedding_path = base / rec.src_embedding_path;
            if (rec.tgt_embedding_path.is_relative()) rec.tgt_embedding_path = base / rec.tgt_embedding_path;
            manifest.records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest '" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what(),
                              line_start);
        }
    }
    manifest.validate();
    for (const auto& rec : manifest.records) {
        for (const auto& p : {rec.src_embedding_path, rec.tgt_embedding_path}) {
            if (!fs::exists(p)) throw DataError("manifest: pair '" + rec.pair_id + "' path not found: " + p.string());
        }
    }
    return manifest;
}

void write_manifest(const fs::path& path, const PairManifest& manifest) {
    manifest.validate();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open manifest '" + path.string() + "' for writing");
    const fs::path base = fs::absolute(path).parent_path().lexically_normal();
    auto rel = [&base](const fs::path& p) {
        const auto r = fs::absolute(p).lexically_normal().lexically_relative(base);
        return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
    };
    for (const auto& rec : manifest.records) {
        nlohmann::ordered_json j;
        j["pair_id"] = rec.pair_id;
        j["src_embedding_path"] = rel(rec.src_embedding_path);
        j["tgt_embedding_path"] = rel(rec.tgt_embedding_path);
        j["src_prompt"] = rec.src_prompt;
        j["tgt_prompt"] = rec.tgt_prompt;
        out << j.dump() << '\n';
    }
}

void write_report_csv(const fs::path& path, const sae::TrainReport& report) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open report '" + path.string() + "' for writing");
    out << report.to_csv();
}

// ---------------------------------------------------------------------------

TokenBatcher::TokenBatcher(Matrix tokens, std::size_t batch_tokens, std::uint64_t seed)
    : tokens_(std::move(tokens)), batch_tokens_(batch_tokens), seed_(seed) {
    if (batch_tokens_ == 0) throw ConfigError("batch_tokens must be >= 1");
    start_epoch(0);
}

void TokenBatcher::start_epoch(std::uint64_t epoch) {
    order_.resize(tokens_.rows());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
}

std::optional<Matrix> TokenBatcher::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t n = std::min(batch_tokens_, order_.size() - cursor_);
    Matrix batch(n, tokens_.cols());
    for (std::size_t i = 0; i < n; ++i) {
        auto src = tokens_.row(order_[cursor_ + i]);
        std::copy(src.begin(), src.end(), batch.row(i).begin());
    }
    cursor_ += n;
    return batch;
}

Matrix stack_tokens(const std::vector<EmbeddingSequence>& seqs) {
    std::size_t n = 0, d = 0;
    for (const auto& s : seqs) {
        s.validate();
        if (d == 0) d = s.d_model();
        if (s.d_model() != d) throw ShapeError("corpus sequences disagree on d_model");
        n += s.content_rows().size();
    }
    Matrix out(n, d);
    std::size_t r = 0;
    for (const auto& s : seqs) {
        for (std::size_t i : s.content_rows()) {
            auto src = s.embeddings.row(i);
            std::copy(src.begin(), src.end(), out.row(r++).begin());
        }
    }
    return out;
}

std::vector<fs::path> list_corpus(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".saed") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<EmbeddingSequence> read_corpus(const fs::path& dir) {
    std::vector<EmbeddingSequence> seqs;
    for (const auto& f : list_corpus(dir)) seqs.push_back(read_embedding(f));
    return seqs;
}

TokenBatcher stream_batches(const fs::path& corpus_dir, std::size_t batch_tokens, std::uint64_t seed) {
    const auto seqs = read_corpus(corpus_dir);
    if (seqs.empty()) throw DataError("corpus directory has no .saed files: " + corpus_dir.string());
    Matrix tokens = stack_tokens(seqs);
    if (tokens.rows() == 0) throw DataError("corpus has no non-padding tokens: " + corpus_dir.string());
    return TokenBatcher(std::move(tokens), batch_tokens, seed);
}

}  // namespace saedit::dataio
