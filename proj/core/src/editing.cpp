#include "saedit/editing.hpp"

#include <algorithm>
#include <cmath>

namespace saedit::editing {

double ScheduleConfig::effective_tau() const {
    return tau_rule == TauRule::Proportional ? tau_factor * omega : tau;
}

void ScheduleConfig::validate() const {
    if (!std::isfinite(omega) || omega < 0.0) throw ConfigError("schedule: omega must be finite and >= 0");
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    if (tau_rule == TauRule::Proportional && !(tau_factor > 0.0 && std::isfinite(tau_factor))) {
        throw ConfigError("schedule: tau factor must be > 0");
    }
    if (omega > 0.0 && !(effective_tau() > 0.0)) throw ConfigError("schedule: tau must be > 0 when omega > 0");
}

double injection_scale(const ScheduleConfig& cfg, std::size_t step) {
    cfg.validate();
    if (step >= cfg.steps) {
        throw ConfigError("injection_scale: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(cfg.steps) + ")");
    }
    const double t = cfg.steps == 1 ? 0.0 : static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
    return std::min(std::expm1(t * cfg.omega), cfg.effective_tau());
}

std::vector<double> injection_table(const ScheduleConfig& cfg) {
    std::vector<double> out(cfg.steps);
    for (std::size_t s = 0; s < cfg.steps; ++s) out[s] = injection_scale(cfg, s);
    return out;
}

Vector apply_direction(const sae::SaeModel& model, std::span<const double> e_tgt,
                       const directions::EditDirection& d, double omega, const ApplyOptions& opts) {
    if (e_tgt.size() != model.d_model) throw ShapeError("apply_direction: embedding width != d_model");
    if (d.dim() != model.d_latent) throw ShapeError("apply_direction: direction width != d_latent");
    if (!model.theta) throw StateError("apply_direction: model is not calibrated");
    if (!std::isfinite(omega)) throw NumericError("apply_direction: non-finite omega");
    if (omega == 0.0 && !opts.reconstruct_at_zero) return Vector(e_tgt.begin(), e_tgt.end());

    Vector z = sae::encode(model, e_tgt).to_dense();
    d.d_edit.add_scaled_to(z, omega);
    return sae::decode(model, std::span<const double>(z));
}

EmbeddingSequence EditedSequence::sequence_at(std::size_t i) const {
    if (i >= steps.size()) throw UsageError("edited sequence has no step " + std::to_string(i));
    EmbeddingSequence out = original;
    auto row = out.embeddings.row(token_index);
    std::copy(steps[i].embedding.begin(), steps[i].embedding.end(), row.begin());
    return out;
}

namespace {

void check_token(const sae::SaeModel& model, const EmbeddingSequence& seq, std::size_t token_index) {
    seq.validate();
    if (seq.d_model() != model.d_model) throw ShapeError("edit: sequence width != model d_model");
    if (token_index >= seq.n_tokens()) {
        throw UsageError("edit: token index " + std::to_string(token_index) + " out of range (sequence has " +
                         std::to_string(seq.n_tokens()) + " tokens)");
    }
    if (seq.padding[token_index]) {
        throw UsageError("edit: token index " + std::to_string(token_index) + " is a padding position");
    }
}

}  // namespace

EditedSequence edit_sequence(const sae::SaeModel& model, const EmbeddingSequence& seq, std::size_t token_index,
                             const directions::EditDirection& d, const ScheduleConfig& cfg,
                             const ApplyOptions& opts, std::string direction_id) {
    check_token(model, seq, token_index);
    cfg.validate();
    EditedSequence out;
    out.original = seq;
    out.token_index = token_index;
    out.direction_id = std::move(direction_id);
    const auto e_tgt = seq.embeddings.row(token_index);
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        const double scale = injection_scale(cfg, s);
        out.steps.push_back({s, scale, apply_direction(model, e_tgt, d, scale, opts)});
    }
    return out;
}

EditedSequence edit_constant(const sae::SaeModel& model, const EmbeddingSequence& seq, std::size_t token_index,
                             const directions::EditDirection& d, double omega, const ApplyOptions& opts,
                             std::string direction_id) {
    check_token(model, seq, token_index);
    if (!(omega >= 0.0)) throw ConfigError("edit_constant: omega must be >= 0");
    EditedSequence out;
    out.original = seq;
    out.token_index = token_index;
    out.direction_id = std::move(direction_id);
    out.steps.push_back({0, omega, apply_direction(model, seq.embeddings.row(token_index), d, omega, opts)});
    return out;
}

}  // namespace saedit::editing
