#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saedit/directions.hpp"
#include "saedit/embedding_sequence.hpp"
#include "saedit/sae.hpp"

namespace saedit::editing {

using linalg::Vector;

enum class TauRule {
    Explicit,      // tau as given
    Proportional,  // tau = tau_factor * omega
};

inline constexpr double kDefaultTauFactor = 15.0;

/// Exponential injection schedule: omega_t = min(exp(t * omega) - 1, tau), with t the
/// normalized progress step / (steps - 1) and t = 0 at the first denoising step.
struct ScheduleConfig {
    double omega = 0.0;
    double tau = 0.0;
    TauRule tau_rule = TauRule::Proportional;
    double tau_factor = kDefaultTauFactor;
    std::size_t steps = 1;

    double effective_tau() const;
    void validate() const;
};

double injection_scale(const ScheduleConfig& cfg, std::size_t step);
std::vector<double> injection_table(const ScheduleConfig& cfg);

struct ApplyOptions {
    /// At omega == 0 the embedding is returned untouched unless this is set, in which case
    /// it goes through decode(encode(e)).
    bool reconstruct_at_zero = false;
};

/// e' = decode(encode(e) + omega * d_edit).
Vector apply_direction(const sae::SaeModel& model, std::span<const double> e_tgt,
                       const directions::EditDirection& d, double omega, const ApplyOptions& opts = {});

struct EditedStep {
    std::size_t step = 0;
    double scale = 0.0;
    Vector embedding;  // replacement for the edited token
};

struct EditedSequence {
    EmbeddingSequence original;
    std::size_t token_index = 0;
    std::string direction_id;
    std::vector<EditedStep> steps;

    /// Full sequence at step i with the edited token swapped in.
    EmbeddingSequence sequence_at(std::size_t i) const;
};

/// Per-step replacement of one token under the injection schedule.
EditedSequence edit_sequence(const sae::SaeModel& model, const EmbeddingSequence& seq, std::size_t token_index,
                             const directions::EditDirection& d, const ScheduleConfig& cfg,
                             const ApplyOptions& opts = {}, std::string direction_id = {});

/// Single replacement at a constant scale.
EditedSequence edit_constant(const sae::SaeModel& model, const EmbeddingSequence& seq, std::size_t token_index,
                             const directions::EditDirection& d, double omega, const ApplyOptions& opts = {},
                             std::string direction_id = {});

}  // namespace saedit::editing
