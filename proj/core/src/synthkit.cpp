#include "saedit/synthkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "json.hpp"

namespace saedit::synthkit {

namespace {

// Independent generator streams derived from the spec seed.
constexpr std::uint64_t kDictionaryStream = 0x0;
constexpr std::uint64_t kCorpusStream = 0x1;
constexpr std::uint64_t kPairStream = 0x2;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which, std::uint64_t extra = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(which), static_cast<std::uint32_t>(extra),
                      static_cast<std::uint32_t>(extra >> 32)};
    return std::mt19937_64(seq);
}

std::string numbered(const char* prefix, std::size_t i, const char* suffix = "") {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%06zu%s", prefix, i, suffix);
    return buf;
}

class TokenDrawer {
public:
    TokenDrawer(const SynthSpec& spec, const Matrix& dictionary, std::mt19937_64& rng,
                std::vector<std::uint32_t> allowed)
        : spec_(spec), dict_(dictionary), rng_(rng), allowed_(std::move(allowed)) {}

    /// k_true distinct features with Exp(1) magnitudes, sorted by index.
    sae::SparseCode draw_code() {
        std::uniform_int_distribution<std::size_t> pick(0, allowed_.size() - 1);
        std::exponential_distribution<double> mag(1.0);
        std::vector<std::uint32_t> feats;
        while (feats.size() < spec_.k_true) {
            const auto f = allowed_[pick(rng_)];
            if (std::find(feats.begin(), feats.end(), f) == feats.end()) feats.push_back(f);
        }
        std::sort(feats.begin(), feats.end());
        sae::SparseCode z;
        z.dim = spec_.n_true_features;
        for (auto f : feats) z.entries.push_back({f, mag(rng_)});
        return z;
    }

    Vector embed(const sae::SparseCode& z) {
        std::normal_distribution<double> noise(0.0, 1.0);
        Vector e(spec_.d_model, 0.0);
        for (const auto& c : z.entries) {
            auto a = dict_.row(c.index);
            for (std::size_t i = 0; i < e.size(); ++i) e[i] += c.value * a[i];
        }
        if (spec_.sigma > 0.0)
            for (double& x : e) x += spec_.sigma * noise(rng_);
        return e;
    }

    std::mt19937_64& rng() { return rng_; }

private:
    const SynthSpec& spec_;
    const Matrix& dict_;
    std::mt19937_64& rng_;
    std::vector<std::uint32_t> allowed_;
};

EmbeddingSequence make_sequence(const SynthSpec& spec, const std::vector<Vector>& rows, std::string prompt) {
    EmbeddingSequence seq;
    seq.prompt = std::move(prompt);
    const std::size_t n = rows.size() + spec.pad_tokens;
    seq.embeddings = Matrix(n, spec.d_model);
    seq.padding.assign(n, false);
    for (std::size_t t = 0; t < rows.size(); ++t) {
        std::copy(rows[t].begin(), rows[t].end(), seq.embeddings.row(t).begin());
        seq.labels.push_back("tok" + std::to_string(t));
    }
    for (std::size_t t = rows.size(); t < n; ++t) {
        seq.padding[t] = true;
        seq.labels.push_back("<pad>");
    }
    return seq;
}

std::vector<std::uint32_t> supports_of(const sae::SparseCode& z) {
    std::vector<std::uint32_t> s;
    for (const auto& e : z.entries) s.push_back(e.index);
    return s;
}

}  // namespace

void SynthSpec::validate() const {
    if (d_model == 0) throw ConfigError("synth: d_model must be > 0");
    if (n_true_features == 0) throw ConfigError("synth: n_true_features must be > 0");
    if (k_true == 0) throw ConfigError("synth: k_true must be >= 1");
    if (tokens_per_prompt == 0) throw ConfigError("synth: tokens_per_prompt must be >= 1");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("synth: sigma must be >= 0");
    if (!(attribute_min >= 0.0)) throw ConfigError("synth: attribute_min must be >= 0");
    for (auto a : attribute_ids)
        if (a >= n_true_features) throw ConfigError("synth: attribute id out of range");
    if (k_true + attribute_ids.size() > n_true_features) {
        throw ConfigError("synth: k_true too large for the non-attribute feature pool");
    }
}

Vector GroundTruth::atom(std::uint32_t f) const {
    if (f >= dictionary.rows()) throw UsageError("atom index out of range");
    auto r = dictionary.row(f);
    return Vector(r.begin(), r.end());
}

Matrix make_dictionary(const SynthSpec& spec) {
    auto rng = stream(spec.seed, kDictionaryStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix a(spec.n_true_features, spec.d_model);
    for (std::size_t f = 0; f < a.rows(); ++f) {
        auto row = a.row(f);
        for (double& x : row) x = normal(rng);
        const double n = linalg::norm(row);
        for (double& x : row) x /= n;
    }
    return a;
}

Corpus generate_corpus(const SynthSpec& spec) {
    spec.validate();
    Corpus corpus;
    corpus.truth.spec = spec;
    corpus.truth.dictionary = make_dictionary(spec);

    std::vector<std::uint32_t> all(spec.n_true_features);
    for (std::uint32_t f = 0; f < all.size(); ++f) all[f] = f;
    auto rng = stream(spec.seed, kCorpusStream);
    TokenDrawer draw(spec, corpus.truth.dictionary, rng, all);

    auto emit = [&](std::size_t count, std::vector<EmbeddingSequence>& out,
                    std::vector<std::vector<std::uint32_t>>& supports, const char* tag) {
        for (std::size_t p = 0; p < count; ++p) {
            std::vector<Vector> rows;
            for (std::size_t t = 0; t < spec.tokens_per_prompt; ++t) {
                const auto z = draw.draw_code();
                supports.push_back(supports_of(z));
                rows.push_back(draw.embed(z));
            }
            out.push_back(make_sequence(spec, rows, numbered(tag, p)));
        }
    };
    emit(spec.n_prompts, corpus.prompts, corpus.truth.corpus_supports, "synthetic prompt ");
    emit(spec.heldout_prompts, corpus.heldout, corpus.truth.heldout_supports, "synthetic heldout prompt ");
    return corpus;
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
    for (std::size_t p = 0; p < corpus.prompts.size(); ++p) {
        dataio::write_embedding(dir / "corpus" / numbered("prompt_", p, ".saed"), corpus.prompts[p]);
    }
    for (std::size_t p = 0; p < corpus.heldout.size(); ++p) {
        dataio::write_embedding(dir / "heldout" / numbered("prompt_", p, ".saed"), corpus.heldout[p]);
    }
    write_truth(dir / "truth.json", corpus.truth);
}

std::vector<PromptPair> generate_pairs(const SynthSpec& spec, std::uint32_t attribute, std::size_t n_pairs) {
    spec.validate();
    if (attribute >= spec.n_true_features) throw ConfigError("generate_pairs: attribute id out of range");
    const Matrix dict = make_dictionary(spec);

    std::vector<std::uint32_t> nuisance;
    for (std::uint32_t f = 0; f < spec.n_true_features; ++f) {
        const bool reserved = f == attribute || std::find(spec.attribute_ids.begin(), spec.attribute_ids.end(), f) !=
                                                    spec.attribute_ids.end();
        if (!reserved) nuisance.push_back(f);
    }
    if (nuisance.size() < spec.k_true) throw ConfigError("generate_pairs: not enough nuisance features");

    auto rng = stream(spec.seed, kPairStream, attribute);
    TokenDrawer draw(spec, dict, rng, nuisance);
    std::exponential_distribution<double> mag(1.0);
    std::uniform_int_distribution<std::size_t> which(0, spec.tokens_per_prompt - 1);

    std::vector<PromptPair> pairs;
    pairs.reserve(n_pairs);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        PromptPair pair;
        pair.pair_id = numbered("pair_", p);
        pair.attribute_token = which(rng);
        const double coeff = spec.attribute_min + mag(rng);
        std::vector<Vector> src_rows, tgt_rows;
        for (std::size_t t = 0; t < spec.tokens_per_prompt; ++t) {
            sae::SparseCode z = draw.draw_code();
            sae::SparseCode zt = z;
            if (t == pair.attribute_token) {
                zt.entries.push_back({attribute, coeff});
                std::sort(zt.entries.begin(), zt.entries.end(),
                          [](const auto& a, const auto& b) { return a.index < b.index; });
            }
            src_rows.push_back(draw.embed(z));
            tgt_rows.push_back(draw.embed(zt));
            pair.src_codes.push_back(std::move(z));
            pair.tgt_codes.push_back(std::move(zt));
        }
        pair.src = make_sequence(spec, src_rows, "synthetic pair " + std::to_string(p));
        pair.tgt = make_sequence(spec, tgt_rows, "synthetic pair " + std::to_string(p) + " + feature " +
                                                     std::to_string(attribute));
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

dataio::PairManifest write_pairs(const std::vector<PromptPair>& pairs, const fs::path& dir) {
    dataio::PairManifest manifest;
    for (const auto& p : pairs) {
        dataio::PairRecord rec;
        rec.pair_id = p.pair_id;
        rec.src_embedding_path = dir / "pairs" / (p.pair_id + ".src.saed");
        rec.tgt_embedding_path = dir / "pairs" / (p.pair_id + ".tgt.saed");
        rec.src_prompt = p.src.prompt;
        rec.tgt_prompt = p.tgt.prompt;
        dataio::write_embedding(rec.src_embedding_path, p.src);
        dataio::write_embedding(rec.tgt_embedding_path, p.tgt);
        manifest.records.push_back(std::move(rec));
    }
    dataio::write_manifest(dir / "pairs.jsonl", manifest);
    return manifest;
}

// ---------------------------------------------------------------------------

void write_truth(const fs::path& path, const GroundTruth& truth) {
    nlohmann::ordered_json j;
    const auto& s = truth.spec;
    j["spec"] = {{"d_model", s.d_model},
                 {"n_true_features", s.n_true_features},
                 {"k_true", s.k_true},
                 {"n_prompts", s.n_prompts},
                 {"tokens_per_prompt", s.tokens_per_prompt},
                 {"pad_tokens", s.pad_tokens},
                 {"heldout_prompts", s.heldout_prompts},
                 {"attribute_ids", s.attribute_ids},
                 {"sigma", s.sigma},
                 {"attribute_min", s.attribute_min},
                 {"seed", s.seed}};
    if (truth.pair_attribute) j["pair_attribute"] = *truth.pair_attribute;
    auto dict = nlohmann::json::array();
    for (std::size_t f = 0; f < truth.dictionary.rows(); ++f) {
        auto r = truth.dictionary.row(f);
        dict.push_back(std::vector<double>(r.begin(), r.end()));
    }
    j["dictionary"] = std::move(dict);
    j["corpus_supports"] = truth.corpus_supports;
    j["heldout_supports"] = truth.heldout_supports;

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << j.dump() << '\n';
}

GroundTruth read_truth(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open truth file '" + path.string() + "'");
    try {
        const auto j = nlohmann::json::parse(in);
        GroundTruth t;
        const auto& s = j.at("spec");
        t.spec.d_model = s.at("d_model").get<std::size_t>();
        t.spec.n_true_features = s.at("n_true_features").get<std::size_t>();
        t.spec.k_true = s.at("k_true").get<std::size_t>();
        t.spec.n_prompts = s.at("n_prompts").get<std::size_t>();
        t.spec.tokens_per_prompt = s.at("tokens_per_prompt").get<std::size_t>();
        t.spec.pad_tokens = s.at("pad_tokens").get<std::size_t>();
        t.spec.heldout_prompts = s.at("heldout_prompts").get<std::size_t>();
        t.spec.attribute_ids = s.at("attribute_ids").get<std::vector<std::uint32_t>>();
        t.spec.sigma = s.at("sigma").get<double>();
        t.spec.attribute_min = s.at("attribute_min").get<double>();
        t.spec.seed = s.at("seed").get<std::uint64_t>();
        if (j.contains("pair_attribute")) t.pair_attribute = j.at("pair_attribute").get<std::uint32_t>();
        const auto rows = j.at("dictionary").get<std::vector<std::vector<double>>>();
        t.dictionary = Matrix(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t f = 0; f < rows.size(); ++f) {
            if (rows[f].size() != t.dictionary.cols()) throw DataError("truth: ragged dictionary");
            std::copy(rows[f].begin(), rows[f].end(), t.dictionary.row(f).begin());
        }
        t.corpus_supports = j.at("corpus_supports").get<std::vector<std::vector<std::uint32_t>>>();
        t.heldout_supports = j.at("heldout_supports").get<std::vector<std::vector<std::uint32_t>>>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("truth file '" + path.string() + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------

std::vector<AtomMatch> match_latents(const sae::SaeModel& model, const Matrix& dictionary) {
    if (dictionary.cols() != model.d_model) throw ShapeError("match_latents: dictionary width != d_model");
    std::vector<AtomMatch> out(model.d_latent);
    for (std::size_t j = 0; j < model.d_latent; ++j) {
        AtomMatch best{0, -2.0};
        for (std::size_t f = 0; f < dictionary.rows(); ++f) {
            const double c = linalg::cosine(model.decoder_atoms.row(j), dictionary.row(f));
            if (c > best.cosine) best = {static_cast<std::uint32_t>(f), c};
        }
        out[j] = best;
    }
    return out;
}

RecoveryReport score_recovery(const directions::EditDirection& direction, const sae::SaeModel& model,
                              const GroundTruth& truth, std::uint32_t attribute) {
    if (direction.dim() != model.d_latent) throw ShapeError("score_recovery: direction width != d_latent");
    if (attribute >= truth.dictionary.rows()) throw UsageError("score_recovery: attribute id out of range");
    const auto matches = match_latents(model, truth.dictionary);

    RecoveryReport rep;
    rep.index_set = direction.index_set;
    if (rep.index_set.empty())
        for (const auto& e : direction.d_edit.entries) rep.index_set.push_back(e.index);
    std::size_t hits = 0;
    for (auto j : rep.index_set) {
        rep.matched_atoms.push_back(matches[j].atom);
        if (matches[j].atom == attribute) ++hits;
    }
    rep.precision = rep.index_set.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(rep.index_set.size());
    rep.recall = hits > 0 ? 1.0 : 0.0;

    const Vector img = sae::decode_without_bias(model, direction.d_edit);
    const Vector target = truth.atom(attribute);
    rep.atom_cosine = std::clamp(linalg::cosine(img, target), 0.0, 1.0);
    return rep;
}

}  // namespace saedit::synthkit
