#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "saedit/dataio.hpp"
#include "saedit/directions.hpp"
#include "saedit/embedding_sequence.hpp"
#include "saedit/sae.hpp"

namespace saedit::synthkit {

namespace fs = std::filesystem;
using linalg::Matrix;
using linalg::Vector;

/// Ground-truth generator settings. Embeddings are A z + N(0, sigma^2) with A a random
/// dictionary of unit-norm atoms and z a k_true-sparse code with Exp(1) magnitudes.
struct SynthSpec {
    std::size_t d_model = 32;
    std::size_t n_true_features = 128;
    std::size_t k_true = 4;
    std::size_t n_prompts = 6250;
    std::size_t tokens_per_prompt = 8;
    /// Zero rows appended to every prompt and flagged as padding.
    std::size_t pad_tokens = 0;
    /// Extra prompts drawn from the same dictionary and written to a separate split.
    std::size_t heldout_prompts = 0;
    /// Features reserved as edit attributes; pair prompts never use them as nuisance.
    std::vector<std::uint32_t> attribute_ids{7};
    double sigma = 0.01;
    /// The attribute coefficient added in a target prompt is attribute_min + Exp(1).
    double attribute_min = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruth {
    SynthSpec spec;
    Matrix dictionary;  // n_true_features x d_model, row f is atom f
    std::vector<std::vector<std::uint32_t>> corpus_supports;   // per non-padding token, corpus order
    std::vector<std::vector<std::uint32_t>> heldout_supports;
    std::optional<std::uint32_t> pair_attribute;

    Vector atom(std::uint32_t f) const;
};

struct Corpus {
    std::vector<EmbeddingSequence> prompts;
    std::vector<EmbeddingSequence> heldout;
    GroundTruth truth;
};

/// Seeded dictionary; depends only on (d_model, n_true_features, seed).
Matrix make_dictionary(const SynthSpec& spec);

Corpus generate_corpus(const SynthSpec& spec);

/// Writes <dir>/corpus/*.saed, <dir>/heldout/*.saed (when present) and <dir>/truth.json.
void write_corpus(const Corpus& corpus, const fs::path& dir);

struct PromptPair {
    std::string pair_id;
    EmbeddingSequence src;
    EmbeddingSequence tgt;
    std::vector<sae::SparseCode> src_codes;  // true codes of the non-padding tokens
    std::vector<sae::SparseCode> tgt_codes;
    std::size_t attribute_token = 0;
};

/// Each pair is a prompt without the attribute and the same prompt with the attribute
/// feature added to one token's code. Source and target draw independent noise.
std::vector<PromptPair> generate_pairs(const SynthSpec& spec, std::uint32_t attribute, std::size_t n_pairs);

/// Writes <dir>/pairs/<id>.src.saed, <id>.tgt.saed and the manifest <dir>/pairs.jsonl.
dataio::PairManifest write_pairs(const std::vector<PromptPair>& pairs, const fs::path& dir);

void write_truth(const fs::path& path, const GroundTruth& truth);
GroundTruth read_truth(const fs::path& path);

/// Greedy latent -> atom assignment by maximum decoder-column cosine.
struct AtomMatch {
    std::uint32_t atom = 0;
    double cosine = 0.0;
};
std::vector<AtomMatch> match_latents(const sae::SaeModel& model, const Matrix& dictionary);

struct RecoveryReport {
    double precision = 0.0;
    double recall = 0.0;
    double atom_cosine = 0.0;
    std::vector<std::uint32_t> index_set;
    std::vector<std::uint32_t> matched_atoms;  // per index_set entry
};

RecoveryReport score_recovery(const directions::EditDirection& direction, const sae::SaeModel& model,
                              const GroundTruth& truth, std::uint32_t attribute);

}  // namespace saedit::synthkit
