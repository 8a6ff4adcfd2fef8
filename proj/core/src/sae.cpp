#include "saedit/sae.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace saedit::sae {

namespace {

// Strict total order used everywhere a top-k cut is taken: larger value first, then the
// smaller position.
struct ByValueThenPosition {
    bool operator()(const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) const {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    }
};

void check_width(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw ShapeError(std::string(what) + ": width " + std::to_string(got) + " != expected " +
                         std::to_string(want));
    }
}

double mse(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace

void validate_code(const SparseCode& code) {
    code.validate();
    for (const auto& e : code.entries) {
        if (!(e.value > 0.0)) {
            throw NumericError("sparse code value at index " + std::to_string(e.index) + " is not positive");
        }
    }
}

std::string to_string(SparsityMode mode) {
    return mode == SparsityMode::BatchTopK ? "batch-topk" : "topk";
}

SparsityMode sparsity_mode_from_string(const std::string& name) {
    if (name == "batch-topk" || name == "batchtopk") return SparsityMode::BatchTopK;
    if (name == "topk") return SparsityMode::TopK;
    throw ConfigError("unknown sparsity mode '" + name + "' (expected batch-topk or topk)");
}

void validate_matryoshka_sizes(std::span<const std::size_t> sizes, std::size_t d_latent) {
    if (sizes.empty()) throw ConfigError("matryoshka sizes must not be empty");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] == 0) throw ConfigError("matryoshka sizes must be positive");
        if (i > 0 && sizes[i] <= sizes[i - 1]) throw ConfigError("matryoshka sizes must be strictly increasing");
    }
    if (sizes.back() != d_latent) {
        throw ConfigError("last matryoshka size " + std::to_string(sizes.back()) + " must equal d_latent " +
                          std::to_string(d_latent));
    }
}

void TrainConfig::validate(std::size_t d_latent) const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (batch_tokens < 1) throw ConfigError("batch_tokens must be >= 1");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (!matryoshka_sizes.empty()) validate_matryoshka_sizes(matryoshka_sizes, d_latent);
}

Matrix SaeModel::decoder_matrix() const { return linalg::transpose(decoder_atoms); }

void SaeModel::validate() const {
    if (d_model == 0 || d_latent == 0) throw ShapeError("model widths must be positive");
    if (d_latent < d_model) throw ShapeError("d_latent must be >= d_model");
    if (encoder_weight.rows() != d_latent || encoder_weight.cols() != d_model ||
        decoder_atoms.rows() != d_latent || decoder_atoms.cols() != d_model ||
        encoder_bias.size() != d_latent || decoder_bias.size() != d_model) {
        throw ShapeError("model parameter shapes disagree with d_model/d_latent");
    }
    if (!encoder_weight.all_finite() || !decoder_atoms.all_finite() || !linalg::all_finite(encoder_bias) ||
        !linalg::all_finite(decoder_bias)) {
        throw NumericError("model parameters contain non-finite values");
    }
    if (theta && !(*theta >= 0.0 && std::isfinite(*theta))) throw NumericError("theta must be finite and >= 0");
}

SaeModel init_model(std::size_t d_model, std::size_t d_latent, std::uint64_t seed) {
    if (d_model == 0 || d_latent < d_model) throw ConfigError("init_model: need 0 < d_model <= d_latent");
    SaeModel m;
    m.d_model = d_model;
    m.d_latent = d_latent;
    m.decoder_atoms = Matrix(d_latent, d_model);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t j = 0; j < d_latent; ++j) {
        auto atom = m.decoder_atoms.row(j);
        for (double& x : atom) x = normal(rng);
        const double n = linalg::norm(atom);
        for (double& x : atom) x /= n;
    }
    m.encoder_weight = m.decoder_atoms;
    m.encoder_bias.assign(d_latent, 0.0);
    m.decoder_bias.assign(d_model, 0.0);
    return m;
}

Vector encode_pre(const SaeModel& model, std::span<const double> e) {
    check_width(e.size(), model.d_model, "encode_pre");
    Vector out(model.d_latent);
    for (std::size_t j = 0; j < model.d_latent; ++j) {
        const double a = linalg::dot(model.encoder_weight.row(j), e) + model.encoder_bias[j];
        out[j] = a > 0.0 ? a : 0.0;
    }
    return out;
}

Matrix encode_pre_batch(const SaeModel& model, const Matrix& batch) {
    check_width(batch.cols(), model.d_model, "encode_pre_batch");
    // (B x d_model) * (d_model x d_latent), accumulated row-wise.
    Matrix pre(batch.rows(), model.d_latent);
    Matrix w_t = linalg::transpose(model.encoder_weight);
    for (std::size_t b = 0; b < batch.rows(); ++b) {
        auto out = pre.row(b);
        std::copy(model.encoder_bias.begin(), model.encoder_bias.end(), out.begin());
        auto e = batch.row(b);
        for (std::size_t m = 0; m < model.d_model; ++m) {
            if (e[m] != 0.0) axpy(e[m], w_t.row(m), out);
        }
        for (double& x : out) x = x > 0.0 ? x : 0.0;
    }
    return pre;
}

std::vector<SparseCode> batch_topk(const Matrix& pre_batch, std::size_t k) {
    if (pre_batch.rows() == 0) throw DataError("batch_topk: empty batch");
    if (k < 1) throw ConfigError("batch_topk: k must be >= 1");
    const std::size_t cols = pre_batch.cols();
    std::vector<std::pair<double, std::size_t>> positive;
    auto vals = pre_batch.values();
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (vals[i] > 0.0) positive.emplace_back(vals[i], i);

    const std::size_t budget = std::min(pre_batch.rows() * k, positive.size());
    if (budget < positive.size()) {
        std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(budget),
                         positive.end(), ByValueThenPosition{});
        positive.resize(budget);
    }
    std::sort(positive.begin(), positive.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });

    std::vector<SparseCode> codes(pre_batch.rows());
    for (auto& c : codes) c.dim = cols;
    for (const auto& [value, flat] : positive) {
        codes[flat / cols].entries.push_back({static_cast<std::uint32_t>(flat % cols), value});
    }
    return codes;
}

std::vector<SparseCode> row_topk(const Matrix& pre_batch, std::size_t k) {
    if (k < 1) throw ConfigError("row_topk: k must be >= 1");
    std::vector<SparseCode> codes(pre_batch.rows());
    std::vector<std::pair<double, std::size_t>> positive;
    for (std::size_t b = 0; b < pre_batch.rows(); ++b) {
        positive.clear();
        auto row = pre_batch.row(b);
        for (std::size_t j = 0; j < row.size(); ++j)
            if (row[j] > 0.0) positive.emplace_back(row[j], j);
        if (positive.size() > k) {
            std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(k), positive.end(),
                             ByValueThenPosition{});
            positive.resize(k);
        }
        std::sort(positive.begin(), positive.end(), [](const auto& a, const auto& c) { return a.second < c.second; });
        codes[b].dim = pre_batch.cols();
        for (const auto& [value, j] : positive) codes[b].entries.push_back({static_cast<std::uint32_t>(j), value});
    }
    return codes;
}

SparseCode threshold_code(std::span<const double> pre, double theta) {
    SparseCode code;
    code.dim = pre.size();
    for (std::size_t j = 0; j < pre.size(); ++j) {
        if (pre[j] > theta && pre[j] > 0.0) code.entries.push_back({static_cast<std::uint32_t>(j), pre[j]});
    }
    return code;
}

SparseCode encode(const SaeModel& model, std::span<const double> e, std::optional<double> threshold) {
    const std::optional<double> theta = threshold ? threshold : model.theta;
    if (!theta) throw StateError("encode: model has no calibrated threshold and none was supplied");
    return threshold_code(encode_pre(model, e), *theta);
}

Vector decode(const SaeModel& model, const SparseCode& z) {
    check_width(z.dim, model.d_latent, "decode");
    Vector out = model.decoder_bias;
    for (const auto& e : z.entries) {
        if (e.index >= model.d_latent) throw ShapeError("decode: latent index out of range");
        axpy(e.value, model.decoder_atoms.row(e.index), out);
    }
    return out;
}

Vector decode(const SaeModel& model, std::span<const double> dense_latent) {
    check_width(dense_latent.size(), model.d_latent, "decode");
    Vector out = model.decoder_bias;
    for (std::size_t j = 0; j < dense_latent.size(); ++j) {
        if (dense_latent[j] != 0.0) axpy(dense_latent[j], model.decoder_atoms.row(j), out);
    }
    return out;
}

Vector decode_without_bias(const SaeModel& model, const linalg::SparseVector& z) {
    check_width(z.dim, model.d_latent, "decode_without_bias");
    Vector out(model.d_model, 0.0);
    for (const auto& e : z.entries) axpy(e.value, model.decoder_atoms.row(e.index), out);
    return out;
}

double reconstruction_loss(std::span<const double> e, std::span<const double> e_hat) {
    check_width(e_hat.size(), e.size(), "reconstruction_loss");
    return mse(e, e_hat);
}

namespace {

std::vector<std::uint32_t> top_dead(std::span<const double> pre, const std::vector<bool>& dead_mask,
                                    std::size_t aux_k) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < pre.size(); ++j)
        if (dead_mask[j] && pre[j] > 0.0) cand.emplace_back(pre[j], j);
    if (cand.size() > aux_k) {
        std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(aux_k), cand.end(),
                         ByValueThenPosition{});
        cand.resize(aux_k);
    }
    std::vector<std::uint32_t> idx;
    idx.reserve(cand.size());
    for (const auto& c : cand) idx.push_back(static_cast<std::uint32_t>(c.second));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

double aux_loss(const SaeModel& model, std::span<const double> e, std::span<const double> e_hat,
                std::span<const double> pre, const std::vector<bool>& dead_mask, std::size_t aux_k) {
    check_width(e.size(), model.d_model, "aux_loss");
    check_width(e_hat.size(), model.d_model, "aux_loss");
    check_width(pre.size(), model.d_latent, "aux_loss");
    check_width(dead_mask.size(), model.d_latent, "aux_loss");
    if (aux_k == 0 || std::none_of(dead_mask.begin(), dead_mask.end(), [](bool b) { return b; })) return 0.0;

    Vector aux_recon(model.d_model, 0.0);
    for (std::uint32_t j : top_dead(pre, dead_mask, aux_k)) axpy(pre[j], model.decoder_atoms.row(j), aux_recon);
    Vector residual(model.d_model);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = e[i] - e_hat[i];
    return mse(aux_recon, residual);
}

double matryoshka_loss(const SaeModel& model, std::span<const double> e, const SparseCode& z,
                       std::span<const std::size_t> sizes) {
    validate_matryoshka_sizes(sizes, model.d_latent);
    check_width(e.size(), model.d_model, "matryoshka_loss");
    check_width(z.dim, model.d_latent, "matryoshka_loss");
    // Same accumulation order as decode(), so a single level reproduces it bit for bit.
    Vector running = model.decoder_bias;
    double total = 0.0;
    std::size_t pos = 0;
    for (std::size_t m : sizes) {
        while (pos < z.entries.size() && z.entries[pos].index < m) {
            axpy(z.entries[pos].value, model.decoder_atoms.row(z.entries[pos].index), running);
            ++pos;
        }
        total += mse(e, running);
    }
    return total;
}

// ---------------------------------------------------------------------------

Gradients Gradients::zeros_like(const SaeModel& model) {
    Gradients g;
    g.encoder_weight = Matrix(model.d_latent, model.d_model);
    g.encoder_bias.assign(model.d_latent, 0.0);
    g.decoder_atoms = Matrix(model.d_latent, model.d_model);
    g.decoder_bias.assign(model.d_model, 0.0);
    return g;
}

BatchSupport select_support(const SaeModel& model, const Matrix& batch, const TrainConfig& cfg,
                            const std::vector<bool>& dead_mask) {
    const Matrix pre = encode_pre_batch(model, batch);
    const auto codes = cfg.sparsity == SparsityMode::BatchTopK ? batch_topk(pre, cfg.k) : row_topk(pre, cfg.k);
    BatchSupport s;
    s.active.resize(batch.rows());
    s.aux.resize(batch.rows());
    for (std::size_t b = 0; b < batch.rows(); ++b) {
        for (const auto& e : codes[b].entries) s.active[b].push_back(e.index);
    }
    const bool any_dead = std::any_of(dead_mask.begin(), dead_mask.end(), [](bool d) { return d; });
    if (cfg.aux_k > 0 && any_dead) {
        check_width(dead_mask.size(), model.d_latent, "select_support dead mask");
        for (std::size_t b = 0; b < batch.rows(); ++b) s.aux[b] = top_dead(pre.row(b), dead_mask, cfg.aux_k);
        s.aux_enabled = true;
    }
    return s;
}

LossBreakdown evaluate_loss(const SaeModel& model, const Matrix& batch, const BatchSupport& support,
                            const LossSpec& spec, Gradients* grads) {
    check_width(batch.cols(), model.d_model, "evaluate_loss");
    if (support.active.size() != batch.rows() || support.aux.size() != batch.rows()) {
        throw ShapeError("evaluate_loss: support does not match batch size");
    }
    const std::size_t B = batch.rows();
    const std::size_t d = model.d_model;
    std::vector<std::size_t> levels = spec.matryoshka_sizes;
    if (levels.empty()) levels.push_back(model.d_latent);
    else validate_matryoshka_sizes(levels, model.d_latent);
    const std::size_t L = levels.size();

    if (grads) *grads = Gradients::zeros_like(model);
    const double scale = 2.0 / (static_cast<double>(B) * static_cast<double>(d));

    LossBreakdown out;
    Vector running(d), aux_recon(d), h(d), dz_dir(d);
    std::vector<Vector> level_grad(L, Vector(d));  // suffix sums of per-level dL/d e_hat
    std::vector<double> z;

    for (std::size_t b = 0; b < B; ++b) {
        const auto e = batch.row(b);
        const auto& act = support.active[b];
        z.resize(act.size());
        for (std::size_t i = 0; i < act.size(); ++i) {
            z[i] = linalg::dot(model.encoder_weight.row(act[i]), e) + model.encoder_bias[act[i]];
        }

        // Reconstruction at every level.
        std::copy(model.decoder_bias.begin(), model.decoder_bias.end(), running.begin());
        std::size_t pos = 0;
        for (std::size_t l = 0; l < L; ++l) {
            while (pos < act.size() && act[pos] < levels[l]) {
                axpy(z[pos], model.decoder_atoms.row(act[pos]), running);
                ++pos;
            }
            out.rec += mse(e, running) / static_cast<double>(B);
            for (std::size_t i = 0; i < d; ++i) level_grad[l][i] = scale * (running[i] - e[i]);
        }
        // `running` now holds the full reconstruction.

        bool has_aux = support.aux_enabled;
        std::fill(h.begin(), h.end(), 0.0);
        std::vector<double> z_aux(support.aux[b].size());
        if (has_aux) {
            std::fill(aux_recon.begin(), aux_recon.end(), 0.0);
            for (std::size_t i = 0; i < support.aux[b].size(); ++i) {
                const auto j = support.aux[b][i];
                z_aux[i] = linalg::dot(model.encoder_weight.row(j), e) + model.encoder_bias[j];
                axpy(z_aux[i], model.decoder_atoms.row(j), aux_recon);
            }
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = aux_recon[i] - (e[i] - running[i]);
                s += diff * diff;
                h[i] = spec.alpha * scale * diff;
            }
            out.aux += s / static_cast<double>(d) / static_cast<double>(B);
        }

        if (!grads) continue;

        // The aux residual depends on the full reconstruction: d/d e_hat of L_aux is +h.
        for (std::size_t i = 0; i < d; ++i) level_grad[L - 1][i] += h[i];
        for (std::size_t l = L - 1; l-- > 0;)
            for (std::size_t i = 0; i < d; ++i) level_grad[l][i] += level_grad[l + 1][i];
        for (std::size_t i = 0; i < d; ++i) grads->decoder_bias[i] += level_grad[0][i];

        std::size_t level = 0;
        for (std::size_t i = 0; i < act.size(); ++i) {
            const auto j = act[i];
            while (j >= levels[level]) ++level;
            const Vector& g = level_grad[level];
            axpy(z[i], g, grads->decoder_atoms.row(j));
            const double dz = linalg::dot(model.decoder_atoms.row(j), g);
            axpy(dz, e, grads->encoder_weight.row(j));
            grads->encoder_bias[j] += dz;
        }
        for (std::size_t i = 0; i < support.aux[b].size(); ++i) {
            const auto j = support.aux[b][i];
            axpy(z_aux[i], h, grads->decoder_atoms.row(j));
            const double dz = linalg::dot(model.decoder_atoms.row(j), h);
            axpy(dz, e, grads->encoder_weight.row(j));
            grads->encoder_bias[j] += dz;
        }
    }
    out.total = out.rec + spec.alpha * out.aux;
    return out;
}

// ---------------------------------------------------------------------------

std::string TrainReport::to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "step,L_rec,L_aux,dead_frac,mean_active\n";
    for (const auto& r : records) {
        os << r.step << ',' << r.rec_loss << ',' << r.aux_loss << ',' << r.dead_fraction << ',' << r.mean_active
           << '\n';
    }
    return os.str();
}

namespace {

void project_out_parallel(const Matrix& atoms, Matrix& grad) {
    for (std::size_t j = 0; j < atoms.rows(); ++j) {
        auto g = grad.row(j);
        const double c = linalg::dot(g, atoms.row(j));
        if (c != 0.0) axpy(-c, atoms.row(j), g);
    }
}

void renormalize_atoms(Matrix& atoms) {
    for (std::size_t j = 0; j < atoms.rows(); ++j) {
        auto a = atoms.row(j);
        const double n = linalg::norm(a);
        if (n > 0.0)
            for (double& x : a) x /= n;
    }
}

}  // namespace

TrainResult train(SaeModel model, BatchSource& data, const TrainConfig& cfg, const TrainObserver& observer) {
    model.validate();
    cfg.validate(model.d_latent);
    TrainResult result;
    if (cfg.steps == 0) {
        result.model = std::move(model);
        return result;
    }

    linalg::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    linalg::AdamState st_we(model.d_latent, model.d_model, adam_cfg);
    linalg::AdamState st_be(model.d_latent, 1, adam_cfg);
    linalg::AdamState st_wd(model.d_latent, model.d_model, adam_cfg);
    linalg::AdamState st_bd(model.d_model, 1, adam_cfg);

    const LossSpec spec{cfg.alpha, cfg.matryoshka_sizes};
    std::vector<std::uint64_t> idle(model.d_latent, 0);
    std::vector<bool> dead(model.d_latent, false);
    std::vector<bool> fired(model.d_latent, false);
    Gradients grads;

    std::uint64_t epoch = 0;
    std::uint64_t batch_in_epoch = 0;
    data.start_epoch(epoch);

    double acc_rec = 0.0, acc_aux = 0.0, acc_active = 0.0;
    std::uint64_t acc_steps = 0, acc_tokens = 0;
    result.report.step_loss.reserve(cfg.steps);

    for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
        auto batch = data.next();
        if (!batch) {
            data.start_epoch(++epoch);
            batch_in_epoch = 0;
            batch = data.next();
            if (!batch) throw DataError("train: data stream yielded no tokens");
        }
        ++batch_in_epoch;
        check_width(batch->cols(), model.d_model, "train batch");

        for (std::size_t j = 0; j < model.d_latent; ++j) dead[j] = idle[j] >= cfg.dead_window;
        const BatchSupport support = select_support(model, *batch, cfg, dead);
        const LossBreakdown loss = evaluate_loss(model, *batch, support, spec, &grads);
        if (!std::isfinite(loss.total)) {
            throw NumericError("train: non-finite loss at step " + std::to_string(step) + " (epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(batch_in_epoch) +
                               "): L_rec=" + std::to_string(loss.rec) + " L_aux=" + std::to_string(loss.aux));
        }

        project_out_parallel(model.decoder_atoms, grads.decoder_atoms);
        linalg::adam_update(model.encoder_weight, grads.encoder_weight, st_we);
        linalg::adam_update(model.encoder_bias, grads.encoder_bias, st_be);
        linalg::adam_update(model.decoder_atoms, grads.decoder_atoms, st_wd);
        linalg::adam_update(model.decoder_bias, grads.decoder_bias, st_bd);
        renormalize_atoms(model.decoder_atoms);

        std::fill(fired.begin(), fired.end(), false);
        std::size_t n_active = 0;
        for (const auto& a : support.active) {
            n_active += a.size();
            for (auto j : a) fired[j] = true;
        }
        std::size_t n_dead = 0;
        for (std::size_t j = 0; j < model.d_latent; ++j) {
            idle[j] = fired[j] ? 0 : idle[j] + batch->rows();
            if (idle[j] >= cfg.dead_window) ++n_dead;
        }

        result.report.step_loss.push_back(loss.total);
        acc_rec += loss.rec;
        acc_aux += loss.aux;
        acc_active += static_cast<double>(n_active);
        acc_tokens += batch->rows();
        ++acc_steps;
        if (step % cfg.log_every == 0 || step == cfg.steps) {
            TrainRecord rec;
            rec.step = step;
            rec.rec_loss = acc_rec / static_cast<double>(acc_steps);
            rec.aux_loss = acc_aux / static_cast<double>(acc_steps);
            rec.dead_fraction = static_cast<double>(n_dead) / static_cast<double>(model.d_latent);
            rec.mean_active = acc_active / static_cast<double>(acc_tokens);
            result.report.records.push_back(rec);
            acc_rec = acc_aux = acc_active = 0.0;
            acc_steps = acc_tokens = 0;
        }
        if (observer) observer(step, model, loss);
    }
    model.train_config = cfg;
    result.model = std::move(model);
    return result;
}

std::optional<double> smallest_survivor(const Matrix& pre_batch, std::size_t k) {
    std::optional<double> lo;
    for (const auto& code : batch_topk(pre_batch, k))
        for (const auto& e : code.entries)
            if (!lo || e.value < *lo) lo = e.value;
    return lo;
}

SaeModel calibrate_threshold(SaeModel model, BatchSource& data, std::size_t k, std::size_t max_batches) {
    model.validate();
    if (k < 1) throw ConfigError("calibrate_threshold: k must be >= 1");
    data.start_epoch(0);
    double sum = 0.0;
    std::size_t seen = 0, counted = 0;
    while (max_batches == 0 || seen < max_batches) {
        auto batch = data.next();
        if (!batch) break;
        ++seen;
        if (auto lo = smallest_survivor(encode_pre_batch(model, *batch), k)) {
            sum += *lo;
            ++counted;
        }
    }
    if (seen == 0) throw DataError("calibrate_threshold: empty calibration stream");
    model.theta = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
    return model;
}

}  // namespace saedit::sae
