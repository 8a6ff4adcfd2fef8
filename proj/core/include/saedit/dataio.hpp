#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saedit/batch_source.hpp"
#include "saedit/directions.hpp"
#include "saedit/embedding_sequence.hpp"
#include "saedit/sae.hpp"

namespace saedit::dataio {

namespace fs = std::filesystem;
using linalg::Matrix;

// All binary formats are little-endian with f32 tensor payloads. Layouts are documented in
// docs/formats.md.

inline constexpr char kEmbeddingMagic[4] = {'S', 'A', 'E', 'D'};
inline constexpr char kCheckpointMagic[4] = {'S', 'A', 'E', 'C'};
inline constexpr char kDirectionMagic[4] = {'S', 'A', 'E', 'V'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

// Embedding files ---------------------------------------------------------------

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq);
EmbeddingSequence decode_embedding(std::span<const std::uint8_t> bytes);
void write_embedding(const fs::path& path, const EmbeddingSequence& seq);
EmbeddingSequence read_embedding(const fs::path& path);

// Checkpoints -------------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const sae::SaeModel& model);
sae::SaeModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const fs::path& path, const sae::SaeModel& model);
sae::SaeModel read_checkpoint(const fs::path& path);

// Direction files ---------------------------------------------------------------

std::vector<std::uint8_t> encode_direction(const directions::EditDirection& dir);
directions::EditDirection decode_direction(std::span<const std::uint8_t> bytes);
void write_direction(const fs::path& path, const directions::EditDirection& dir);
directions::EditDirection read_direction(const fs::path& path);

// Pair manifests (one JSON object per line) ---------------------------------------

struct PairRecord {
    std::string pair_id;
    fs::path src_embedding_path;
    fs::path tgt_embedding_path;
    std::string src_prompt;
    std::string tgt_prompt;

    friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

struct PairManifest {
    std::vector<PairRecord> records;

    void validate() const;
};

/// Relative paths in the file are resolved against the manifest's directory.
PairManifest read_manifest(const fs::path& path);
/// Paths are written relative to the manifest's directory when they live beneath it.
void write_manifest(const fs::path& path, const PairManifest& manifest);

// Training report ---------------------------------------------------------------

void write_report_csv(const fs::path& path, const sae::TrainReport& report);

// Token streaming ---------------------------------------------------------------

/// Shuffled fixed-size batches over an in-memory token matrix. Each epoch is a fresh
/// permutation derived from (seed, epoch); the final short batch is emitted.
class TokenBatcher final : public BatchSource {
public:
    TokenBatcher(Matrix tokens, std::size_t batch_tokens, std::uint64_t seed);

    std::optional<Matrix> next() override;
    void start_epoch(std::uint64_t epoch) override;

    std::size_t n_tokens() const noexcept { return tokens_.rows(); }
    std::size_t d_model() const noexcept { return tokens_.cols(); }
    const Matrix& tokens() const noexcept { return tokens_; }
    /// Token order of the current epoch.
    const std::vector<std::size_t>& order() const noexcept { return order_; }

private:
    Matrix tokens_;
    std::size_t batch_tokens_;
    std::uint64_t seed_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

/// Non-padding rows of every sequence, stacked in order.
Matrix stack_tokens(const std::vector<EmbeddingSequence>& seqs);

/// Embedding files (*.saed) of a corpus directory, sorted by file name.
std::vector<fs::path> list_corpus(const fs::path& dir);
std::vector<EmbeddingSequence> read_corpus(const fs::path& dir);

/// Loads every non-padding token of a corpus directory into a shuffled batch stream.
TokenBatcher stream_batches(const fs::path& corpus_dir, std::size_t batch_tokens, std::uint64_t seed);

}  // namespace saedit::dataio
