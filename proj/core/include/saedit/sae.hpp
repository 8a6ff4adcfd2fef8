#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saedit/batch_source.hpp"
#include "saedit/linalg.hpp"

namespace saedit::sae {

using linalg::Matrix;
using linalg::Vector;

/// Non-negative sparse latent vector: indices strictly increasing, values > 0.
using SparseCode = linalg::SparseVector;

/// Throws ShapeError/NumericError unless `code` satisfies the SparseCode invariants.
void validate_code(const SparseCode& code);

enum class SparsityMode : std::uint8_t {
    BatchTopK = 0,  // top B*k activations across the whole batch
    TopK = 1,       // top k activations per token
};

std::string to_string(SparsityMode mode);
SparsityMode sparsity_mode_from_string(const std::string& name);

struct TrainConfig {
    std::size_t k = 300;
    double alpha = 1.0 / 32.0;
    double lr = 0.003;
    std::uint64_t steps = 200000;
    std::size_t batch_tokens = 4096;
    std::size_t aux_k = 64;
    /// Tokens without a surviving activation before a latent counts as dead.
    std::uint64_t dead_window = 10000;
    /// Nested prefix sizes for the Matryoshka objective; empty means plain reconstruction.
    std::vector<std::size_t> matryoshka_sizes;
    SparsityMode sparsity = SparsityMode::BatchTopK;
    std::uint64_t seed = 0;
    /// Steps aggregated into one TrainReport record.
    std::uint64_t log_every = 100;

    void validate(std::size_t d_latent) const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Encoder/decoder pair. The decoder is stored atom-major: row j of `decoder_atoms` is
/// column j of the d_model x d_latent decoder matrix.
struct SaeModel {
    std::size_t d_model = 0;
    std::size_t d_latent = 0;
    Matrix encoder_weight;  // d_latent x d_model
    Vector encoder_bias;    // d_latent
    Matrix decoder_atoms;   // d_latent x d_model
    Vector decoder_bias;    // d_model
    std::optional<double> theta;
    TrainConfig train_config;

    /// The decoder in its conventional d_model x d_latent layout.
    Matrix decoder_matrix() const;
    void validate() const;

    friend bool operator==(const SaeModel&, const SaeModel&) = default;
};

/// Random unit-norm decoder atoms, encoder tied to the decoder transpose, zero biases.
SaeModel init_model(std::size_t d_model, std::size_t d_latent, std::uint64_t seed);

/// relu(W_enc e + b_enc)
Vector encode_pre(const SaeModel& model, std::span<const double> e);
/// Row-wise encode_pre over a batch (B x d_model) -> B x d_latent.
Matrix encode_pre_batch(const SaeModel& model, const Matrix& batch);

/// Keeps the min(B*k, #positive) largest entries of the whole batch. Ties at the cut are
/// broken by (row, column) order so the result is deterministic.
std::vector<SparseCode> batch_topk(const Matrix& pre_batch, std::size_t k);
/// Per-row top-k of the positive entries.
std::vector<SparseCode> row_topk(const Matrix& pre_batch, std::size_t k);

/// Inference encoding: entries of encode_pre strictly above the threshold. Uses `threshold`
/// when given, else the calibrated theta; throws StateError when neither exists.
SparseCode encode(const SaeModel& model, std::span<const double> e,
                  std::optional<double> threshold = std::nullopt);
SparseCode threshold_code(std::span<const double> pre, double theta);

Vector decode(const SaeModel& model, const SparseCode& z);
Vector decode(const SaeModel& model, std::span<const double> dense_latent);
/// Decoder applied without b_dec (the image of a latent-space direction).
Vector decode_without_bias(const SaeModel& model, const linalg::SparseVector& z);

double reconstruction_loss(std::span<const double> e, std::span<const double> e_hat);

/// Auxiliary dead-latent loss for one token: the aux_k largest pre-activations among dead
/// latents are decoded without bias and scored by MSE against the residual e - e_hat.
double aux_loss(const SaeModel& model, std::span<const double> e, std::span<const double> e_hat,
                std::span<const double> pre, const std::vector<bool>& dead_mask, std::size_t aux_k);

/// Sum over levels m of MSE(e, decode restricted to latent indices < m).
double matryoshka_loss(const SaeModel& model, std::span<const double> e, const SparseCode& z,
                       std::span<const std::size_t> sizes);

void validate_matryoshka_sizes(std::span<const std::size_t> sizes, std::size_t d_latent);

// ---------------------------------------------------------------------------
// Loss and gradients at a fixed support
// ---------------------------------------------------------------------------

/// Which latents carry signal for each token of a batch. Inside the loss the selected
/// latents take their linear pre-activation value, so the loss is smooth in the parameters
/// for a fixed support.
struct BatchSupport {
    std::vector<std::vector<std::uint32_t>> active;  // per token, sorted
    std::vector<std::vector<std::uint32_t>> aux;     // per token, dead latents for L_aux
    /// L_aux is evaluated only when some latent is dead (and aux_k > 0).
    bool aux_enabled = false;
};

struct LossBreakdown {
    double rec = 0.0;   // L_rec, or the Matryoshka sum when sizes are configured
    double aux = 0.0;   // L_aux
    double total = 0.0; // rec + alpha * aux
};

struct Gradients {
    Matrix encoder_weight;
    Vector encoder_bias;
    Matrix decoder_atoms;
    Vector decoder_bias;

    static Gradients zeros_like(const SaeModel& model);
};

struct LossSpec {
    double alpha = 0.0;
    std::vector<std::size_t> matryoshka_sizes;
};

BatchSupport select_support(const SaeModel& model, const Matrix& batch, const TrainConfig& cfg,
                            const std::vector<bool>& dead_mask);

/// Batch-mean loss. When `grads` is non-null it is overwritten with the analytic gradient.
LossBreakdown evaluate_loss(const SaeModel& model, const Matrix& batch, const BatchSupport& support,
                            const LossSpec& spec, Gradients* grads = nullptr);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainRecord {
    std::uint64_t step = 0;    // last step covered by the record (1-based)
    double rec_loss = 0.0;     // mean over the interval
    double aux_loss = 0.0;
    double dead_fraction = 0.0;  // at the end of the interval
    double mean_active = 0.0;    // mean surviving latents per token over the interval
};

struct TrainReport {
    std::vector<TrainRecord> records;
    /// Per-step total loss, kept for smoothing diagnostics.
    std::vector<double> step_loss;

    std::string to_csv() const;
};

struct TrainResult {
    SaeModel model;
    TrainReport report;
};

/// Called after every optimizer step with the 1-based step index.
using TrainObserver = std::function<void(std::uint64_t step, const SaeModel&, const LossBreakdown&)>;

TrainResult train(SaeModel model, BatchSource& data, const TrainConfig& cfg,
                  const TrainObserver& observer = {});

/// theta = mean over batches of the smallest batch_topk(k) survivor. Reads at most
/// `max_batches` batches from one pass of `data` (0 = all).
SaeModel calibrate_threshold(SaeModel model, BatchSource& data, std::size_t k,
                             std::size_t max_batches = 0);

/// Smallest surviving activation of one batch under batch_topk(k), if any survive.
std::optional<double> smallest_survivor(const Matrix& pre_batch, std::size_t k);

}  // namespace saedit::sae
