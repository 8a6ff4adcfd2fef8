#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "saedit/linalg.hpp"

namespace saedit {

/// Token embeddings of one prompt. `padding[i]` marks row i as a padding token; padding rows
/// never reach training or pooling.
struct EmbeddingSequence {
    std::string prompt;               // optional, not part of the embedding file
    std::vector<std::string> labels;  // one per token
    linalg::Matrix embeddings;        // n_tokens x d_model
    std::vector<bool> padding;        // n_tokens

    std::size_t n_tokens() const noexcept { return embeddings.rows(); }
    std::size_t d_model() const noexcept { return embeddings.cols(); }
    /// Indices of non-padding rows, ascending.
    std::vector<std::size_t> content_rows() const;
    void validate() const;

    friend bool operator==(const EmbeddingSequence&, const EmbeddingSequence&) = default;
};

}  // namespace saedit
