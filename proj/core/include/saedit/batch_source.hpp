#pragma once

#include <cstdint>
#include <optional>

#include "saedit/linalg.hpp"

namespace saedit {

/// Single-consumer stream of token batches (rows are token embeddings).
class BatchSource {
public:
    virtual ~BatchSource() = default;

    /// Next batch of the current epoch, or nullopt once the epoch is exhausted.
    virtual std::optional<linalg::Matrix> next() = 0;
    /// Restart iteration at the given epoch; order depends only on the seed and epoch.
    virtual void start_epoch(std::uint64_t epoch) = 0;
};

}  // namespace saedit
