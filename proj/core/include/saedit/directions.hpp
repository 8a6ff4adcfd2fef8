#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saedit/embedding_sequence.hpp"
#include "saedit/linalg.hpp"
#include "saedit/sae.hpp"

namespace saedit::directions {

using linalg::SparseVector;
using linalg::Vector;
using sae::SparseCode;

inline constexpr double kDefaultEpsilon = 1e-9;
inline constexpr double kDefaultRho = 0.6;
/// Aggregated singular vectors drop entries at or below this magnitude.
inline constexpr double kSupportDust = 1e-12;

/// Max-pooled latent summary of one prompt.
struct PromptEncoding {
    std::string prompt_id;
    std::vector<SparseCode> token_codes;
    Vector pooled;  // pooled[i] = max over tokens of code[i]
};

struct RatioResult {
    Vector ratio;   // tgt / (src + epsilon)
    Vector r_norm;  // ratio / max(ratio)
    double epsilon = kDefaultEpsilon;
    double max_ratio = 0.0;
    /// Largest entry the ratio would reach if the target were compared with itself.
    double self_ratio_baseline = 0.0;
};

enum class DirectionMethod : std::uint8_t {
    SinglePair = 0,
    SvdAggregate = 1,
};

std::string to_string(DirectionMethod method);

struct EditDirection {
    SparseVector d_edit;
    /// Selected latent indices. For single-pair directions support(d_edit) is a subset;
    /// for aggregates it holds the entries with |value| > rho * max|value|.
    std::vector<std::uint32_t> index_set;
    double rho = kDefaultRho;
    double epsilon = kDefaultEpsilon;
    DirectionMethod method = DirectionMethod::SinglePair;
    std::vector<std::string> sources;  // contributing pair ids
    double max_ratio = 0.0;
    double self_ratio_baseline = 0.0;

    std::size_t dim() const noexcept { return d_edit.dim; }
    /// True when no latent grew beyond what comparing the target with itself gives.
    bool looks_degenerate() const noexcept { return max_ratio <= self_ratio_baseline; }
    void validate() const;

    friend bool operator==(const EditDirection&, const EditDirection&) = default;
};

PromptEncoding pool_prompt(std::vector<SparseCode> codes, std::string prompt_id = {});

RatioResult entry_ratio(const PromptEncoding& src, const PromptEncoding& tgt, double epsilon = kDefaultEpsilon);

/// M = { i | r_norm[i] > rho }.
std::vector<std::uint32_t> select_indices(const RatioResult& r, double rho);

EditDirection build_direction(const PromptEncoding& tgt, std::span<const std::uint32_t> m, double rho);

/// Manual curation of the selected index set, applied after thresholding.
struct IndexOverrides {
    std::vector<std::uint32_t> include;
    std::vector<std::uint32_t> exclude;
};

struct ExtractOptions {
    double epsilon = kDefaultEpsilon;
    double rho = kDefaultRho;
    IndexOverrides overrides;
};

/// pool -> ratio -> select -> build for one (source, target) prompt pair.
EditDirection extract_direction(const std::vector<SparseCode>& src_codes, const std::vector<SparseCode>& tgt_codes,
                                const ExtractOptions& opts = {}, const std::string& pair_id = {});

/// Unit-norm top right-singular vector of the stacked directions.
EditDirection aggregate_directions(std::span<const EditDirection> dirs, std::uint64_t seed = 0);

/// Encodes the non-padding tokens of a sequence with the model's inference threshold.
std::vector<SparseCode> encode_sequence(const sae::SaeModel& model, const EmbeddingSequence& seq);

}  // namespace saedit::directions
