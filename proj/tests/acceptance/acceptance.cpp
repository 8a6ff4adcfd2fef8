// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "saedit/dataio.hpp"
#include "saedit/directions.hpp"
#include "saedit/editing.hpp"
#include "saedit/synthkit.hpp"

using namespace saedit;
using Clock = std::chrono::steady_clock;
using Bytes = std::vector<std::uint8_t>;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared synthetic setup: d_model 32, 128 true features, k_true 4, sigma 0.01,
// 6250 prompts x 8 tokens = 50k training tokens, 2000 held-out tokens.

struct Setup {
    synthkit::SynthSpec spec;
    synthkit::Corpus corpus;
    linalg::Matrix train_tokens;
    linalg::Matrix heldout_tokens;
    sae::TrainConfig cfg;
    std::size_t d_latent = 256;
};

struct TrainedRun {
    sae::SaeModel model;  // calibrated
    sae::TrainReport report;
    double seconds = 0.0;
    double rel_mse = 0.0;
    double mean_active = 0.0;
};

Setup make_setup(std::uint64_t data_seed) {
    Setup s;
    s.spec.d_model = 32;
    s.spec.n_true_features = 128;
    s.spec.k_true = 4;
    s.spec.sigma = 0.01;
    s.spec.n_prompts = 6250;
    s.spec.tokens_per_prompt = 8;
    s.spec.heldout_prompts = 250;
    s.spec.attribute_ids = {7};
    s.spec.seed = data_seed;
    s.corpus = synthkit::generate_corpus(s.spec);
    s.train_tokens = dataio::stack_tokens(s.corpus.prompts);
    s.heldout_tokens = dataio::stack_tokens(s.corpus.heldout);

    s.cfg.k = 8;
    s.cfg.alpha = 1.0 / 32.0;
    s.cfg.lr = 0.003;
    s.cfg.steps = 20000;
    s.cfg.batch_tokens = 256;
    s.cfg.aux_k = 64;
    s.cfg.dead_window = 10000;
    s.cfg.log_every = 500;
    s.cfg.seed = 0;
    return s;
}

TrainedRun train_run(const Setup& s, const sae::TrainConfig& cfg) {
    TrainedRun r;
    const auto t0 = Clock::now();
    dataio::TokenBatcher batches(s.train_tokens, cfg.batch_tokens, cfg.seed);
    auto result = sae::train(sae::init_model(s.spec.d_model, s.d_latent, cfg.seed), batches, cfg);
    r.model = sae::calibrate_threshold(std::move(result.model), batches, cfg.k);
    r.report = std::move(result.report);
    r.seconds = seconds_since(t0);

    double err = 0.0, energy = 0.0, active = 0.0;
    for (std::size_t i = 0; i < s.heldout_tokens.rows(); ++i) {
        const auto e = s.heldout_tokens.row(i);
        const auto z = sae::encode(r.model, e);
        const auto e_hat = sae::decode(r.model, z);
        active += static_cast<double>(z.nnz());
        for (std::size_t j = 0; j < e.size(); ++j) {
            err += (e[j] - e_hat[j]) * (e[j] - e_hat[j]);
            energy += e[j] * e[j];
        }
    }
    r.rel_mse = err / energy;
    r.mean_active = active / static_cast<double>(s.heldout_tokens.rows());
    return r;
}

double final_dead_fraction(const TrainedRun& r) { return r.report.records.empty() ? 1.0 : r.report.records.back().dead_fraction; }

// Per-pair directions and their SVD aggregate for a generated pair set.
struct PairDirections {
    std::vector<directions::EditDirection> singles;
    std::size_t degenerate = 0;
    directions::EditDirection aggregate;
};

PairDirections extract_all(const sae::SaeModel& model, const std::vector<synthkit::PromptPair>& pairs) {
    PairDirections out;
    for (const auto& p : pairs) {
        try {
            out.singles.push_back(directions::extract_direction(directions::encode_sequence(model, p.src),
                                                                directions::encode_sequence(model, p.tgt), {},
                                                                p.pair_id));
        } catch (const DegenerateError&) {
            ++out.degenerate;
        }
    }
    if (out.singles.size() >= 2) out.aggregate = directions::aggregate_directions(out.singles);
    return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string where;
    std::size_t aux_seeds = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto model = oracle::toy_model(5, 10, seed);
        const auto batch = oracle::random_matrix(8, 5, 1000 + seed);
        sae::TrainConfig cfg;
        cfg.k = 3;
        cfg.aux_k = 2;
        cfg.sparsity = sae::SparsityMode::TopK;
        std::vector<bool> dead(10, false);
        for (std::size_t j = seed % 3; j < 10; j += 3) dead[j] = true;
        const auto support = sae::select_support(model, batch, cfg, dead);
        aux_seeds += support.aux_enabled ? 1 : 0;
        const auto r = oracle::check_gradients(model, batch, support, sae::LossSpec{1.0 / 32.0, {}});
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            where = "seed " + std::to_string(seed) + " " + r.worst;
        }
    }
    const double dt = seconds_since(t0);
    return {worst <= 1e-4 && dt < 10.0 && aux_seeds == 20,
            fmt("max rel err %.2e (limit 1e-4, %s), %zu/20 seeds with L_aux active, %.2f s (limit 10 s)", worst,
                where.c_str(), aux_seeds, dt)};
}

Outcome sparsity_invariant(const TrainedRun& run, std::size_t k) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> rows(1, 64), cols(4, 128), kk(1, 16);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t b = rows(rng), d = cols(rng), K = kk(rng);
        linalg::Matrix pre(b, d);
        std::size_t positives = 0;
        for (double& x : pre.values()) {
            x = trial % 2 ? std::round(val(rng) * 4.0) / 4.0 : val(rng);  // odd trials are tie-heavy
            x = std::max(x, 0.0);
            positives += x > 0.0;
        }
        std::size_t survivors = 0;
        for (const auto& z : sae::batch_topk(pre, K)) survivors += z.nnz();
        if (survivors != std::min(b * K, positives)) ++mismatches;
    }
    const double lo = 0.5 * static_cast<double>(k), hi = 2.0 * static_cast<double>(k);
    const bool in_range = run.mean_active >= lo && run.mean_active <= hi;
    return {mismatches == 0 && in_range,
            fmt("survivor count mismatches %zu/1000; held-out mean active %.2f with theta %.4f (range [%.1f, %.1f])",
                mismatches, run.mean_active, *run.model.theta, lo, hi)};
}

Outcome convergence(const TrainedRun& on, const TrainedRun& off) {
    const double dead_on = final_dead_fraction(on), dead_off = final_dead_fraction(off);
    const bool ok = on.rel_mse < 0.1 && dead_on < 0.2 && dead_off > dead_on && on.seconds < 600.0;
    return {ok, fmt("held-out MSE/E|e|^2 %.4f (limit 0.1); dead fraction %.3f aux on (limit 0.2) vs %.3f aux off; "
                    "%.1f s (limit 600 s)",
                    on.rel_mse, dead_on, dead_off, on.seconds)};
}

// Recovery is scored on an SAE whose K equals the true code sparsity. The K = 8 model of the
// convergence criterion is scored too and reported alongside.
Outcome direction_recovery(const Setup& s, const TrainedRun& matched, const TrainedRun& convergence_run) {
    const std::uint32_t attribute = s.spec.attribute_ids.front();
    const auto pairs = synthkit::generate_pairs(s.spec, attribute, 100);
    const auto clean = extract_all(matched.model, pairs);
    if (clean.singles.size() < 2) return {false, "fewer than two non-degenerate pairs"};
    const auto rep = synthkit::score_recovery(clean.aggregate, matched.model, s.corpus.truth, attribute);

    auto noisy_spec = s.spec;
    noisy_spec.sigma = 0.05;
    const auto noisy = extract_all(matched.model, synthkit::generate_pairs(noisy_spec, attribute, 100));
    if (noisy.singles.size() < 2) return {false, "fewer than two non-degenerate noisy pairs"};
    double single_mean = 0.0;
    for (const auto& d : noisy.singles)
        single_mean += synthkit::score_recovery(d, matched.model, s.corpus.truth, attribute).atom_cosine;
    single_mean /= static_cast<double>(noisy.singles.size());
    const double agg = synthkit::score_recovery(noisy.aggregate, matched.model, s.corpus.truth, attribute).atom_cosine;

    std::string k8 = "n/a";
    const auto wide = extract_all(convergence_run.model, pairs);
    if (wide.singles.size() >= 2) {
        const auto r8 = synthkit::score_recovery(wide.aggregate, convergence_run.model, s.corpus.truth, attribute);
        k8 = fmt("atom_cosine %.4f, precision %.3f", r8.atom_cosine, r8.precision);
    }

    const bool ok = rep.atom_cosine >= 0.9 && rep.precision >= 0.8 && rep.recall >= 0.8 && agg > single_mean;
    return {ok, fmt("K=%zu SAE, N=100: atom_cosine %.4f (>= 0.9), precision %.3f, recall %.3f (>= 0.8), |M| %zu, "
                    "%zu degenerate; sigma 0.05: aggregate %.4f vs single-pair mean %.4f (%zu pairs); "
                    "K=%zu SAE for reference: %s",
                    matched.model.train_config.k, rep.atom_cosine, rep.precision, rep.recall, rep.index_set.size(),
                    clean.degenerate, agg, single_mean, noisy.singles.size(), convergence_run.model.train_config.k,
                    k8.c_str())};
}

Outcome schedule_exactness() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> om(0.0, 6.0), ta(0.01, 60.0);
    std::uniform_int_distribution<std::size_t> st(1, 200);
    double worst = 0.0;
    std::size_t violations = 0, rows = 0, cases = 0;
    auto check = [&](const editing::ScheduleConfig& cfg, double tau) {
        const auto table = editing::injection_table(cfg);
        ++cases;
        for (std::size_t i = 0; i < table.size(); ++i, ++rows) {
            const double t = cfg.steps > 1 ? static_cast<double>(i) / static_cast<double>(cfg.steps - 1) : 0.0;
            const double ref = std::min(std::exp(t * cfg.omega) - 1.0, tau);
            worst = std::max(worst, std::abs(table[i] - ref));
            if (table[i] < 0.0 || table[i] > tau || (i > 0 && table[i] < table[i - 1])) ++violations;
        }
    };
    for (int i = 0; i < 500; ++i) {
        editing::ScheduleConfig cfg;
        cfg.omega = om(rng);
        cfg.steps = st(rng);
        if (i % 2) {
            cfg.tau_rule = editing::TauRule::Explicit;
            cfg.tau = ta(rng);
            check(cfg, cfg.tau);
        } else {
            check(cfg, 15.0 * cfg.omega);
        }
    }
    editing::ScheduleConfig fixed;
    fixed.omega = std::log(2.0);
    fixed.steps = 11;
    check(fixed, 15.0 * fixed.omega);
    const bool ends_at_one = std::abs(editing::injection_scale(fixed, 10) - 1.0) <= 1e-12;
    return {worst <= 1e-12 && violations == 0 && ends_at_one,
            fmt("max |diff| %.2e over %zu rows in %zu schedules (limit 1e-12); %zu monotonicity/clamp violations",
                worst, rows, cases, violations)};
}

Outcome edit_locality(const Setup& s, const TrainedRun& run, const directions::EditDirection& dir) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> om(0.0, 5.0);
    std::uniform_int_distribution<std::size_t> st(1, 30), prompt(0, s.corpus.heldout.size() - 1);
    std::size_t changed = 0, zero_changed = 0, trials = 0, comparisons = 0;
    for (int trial = 0; trial < 300; ++trial, ++trials) {
        const auto& seq = s.corpus.heldout[prompt(rng)];
        const std::size_t target = std::uniform_int_distribution<std::size_t>(0, seq.n_tokens() - 1)(rng);
        editing::ScheduleConfig cfg;
        cfg.omega = trial % 10 == 0 ? 0.0 : om(rng);
        cfg.steps = st(rng);
        const auto out = editing::edit_sequence(run.model, seq, target, dir, cfg);
        for (std::size_t step = 0; step < out.steps.size(); ++step) {
            const auto edited = out.sequence_at(step);
            if (cfg.omega == 0.0 && !(edited == seq)) ++zero_changed;
            for (std::size_t r = 0; r < seq.n_tokens(); ++r) {
                if (r == target) continue;
                ++comparisons;
                const auto a = edited.embeddings.row(r), b = seq.embeddings.row(r);
                if (!std::equal(a.begin(), a.end(), b.begin())) ++changed;
            }
        }
    }
    return {changed == 0 && zero_changed == 0,
            fmt("%zu of %zu non-target rows changed over %zu randomized edits; %zu omega=0 steps not bit-identical",
                changed, comparisons, trials, zero_changed)};
}

Outcome affinity(const Setup& s, const TrainedRun& run, const directions::EditDirection& dir) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> om(0.01, 10.0);
    std::uniform_int_distribution<std::size_t> tok(0, s.heldout_tokens.rows() - 1);
    const auto image = sae::decode_without_bias(run.model, dir.d_edit);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto e = s.heldout_tokens.row(tok(rng));
        const double w1 = om(rng), w2 = om(rng);
        const auto a = editing::apply_direction(run.model, e, dir, w1);
        const auto b = editing::apply_direction(run.model, e, dir, w2);
        for (std::size_t i = 0; i < e.size(); ++i) worst = std::max(worst, std::abs((b[i] - a[i]) - (w2 - w1) * image[i]));
    }
    return {worst <= 1e-6, fmt("max deviation %.2e over 500 (e, omega1, omega2) draws (limit 1e-6)", worst)};
}

// Format fixtures. Each returns an empty string on success or a description of the failure.
std::vector<std::pair<std::string, std::function<std::string()>>> format_fixtures(const Setup& s,
                                                                                  const TrainedRun& run,
                                                                                  const directions::EditDirection& dir) {
    auto expect_format_error = [](auto&& decode, const Bytes& bytes, std::optional<std::size_t> offset) -> std::string {
        try {
            decode(std::span<const std::uint8_t>(bytes));
        } catch (const FormatError& e) {
            if (offset && e.offset() != *offset)
                return "offset " + std::to_string(e.offset()) + " != " + std::to_string(*offset);
            return {};
        } catch (const std::exception& e) {
            return std::string("wrong error type: ") + e.what();
        }
        return "no error raised";
    };
    auto all_truncations = [expect_format_error](auto decode, const Bytes& bytes) -> std::string {
        for (std::size_t n = 0; n < bytes.size(); ++n) {
            const auto msg = expect_format_error(decode, Bytes(bytes.begin(), bytes.begin() + n), std::nullopt);
            if (!msg.empty()) return "prefix " + std::to_string(n) + ": " + msg;
        }
        return {};
    };
    const auto& seq = s.corpus.heldout.front();
    const auto seq_bytes = dataio::encode_embedding(seq);
    const auto ckpt_bytes = dataio::encode_checkpoint(run.model);
    const auto dir_bytes = dataio::encode_direction(dir);

    return {
        {"embedding round trip",
         [=] { return dataio::encode_embedding(dataio::decode_embedding(seq_bytes)) == seq_bytes ? "" : "bytes differ"; }},
        {"checkpoint round trip",
         [=] {
             const auto m = dataio::decode_checkpoint(ckpt_bytes);
             if (dataio::encode_checkpoint(m) != ckpt_bytes) return std::string("bytes differ");
             return m.theta == run.model.theta && m.train_config == run.model.train_config ? std::string()
                                                                                             : std::string("header");
         }},
        {"direction round trip",
         [=] {
             const auto d = dataio::decode_direction(dir_bytes);
             if (dataio::encode_direction(d) != dir_bytes) return std::string("bytes differ");
             return d.index_set == dir.index_set && d.sources == dir.sources ? std::string() : std::string("header");
         }},
        {"little-endian 2x2 fixture",
         [] {
             const Bytes fixture{'S', 'A', 'E', 'D', 1, 0, 1, 2, 0, 0, 0, 2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3F, 0x00, 0x00,
                                 0x00, 0x40, 0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x80, 0x40, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                                 0};
             return dataio::decode_embedding(fixture).embeddings == linalg::Matrix(2, 2, {1.0, 2.0, 3.0, 4.0})
                        ? ""
                        : "values differ";
         }},
        {"embedding truncations", [=] { return all_truncations(dataio::decode_embedding, seq_bytes); }},
        {"checkpoint truncations", [=] { return all_truncations(dataio::decode_checkpoint, ckpt_bytes); }},
        {"direction truncations", [=] { return all_truncations(dataio::decode_direction, dir_bytes); }},
        {"bad magic",
         [=] {
             auto b = ckpt_bytes;
             b[0] = 'X';
             return expect_format_error(dataio::decode_checkpoint, b, 0);
         }},
        {"bad version",
         [=] {
             auto b = seq_bytes;
             b[4] = 9;
             return expect_format_error(dataio::decode_embedding, b, 4);
         }},
        {"bad mask byte",
         [=] {
             auto b = seq_bytes;
             const std::size_t at = 15 + 4 * seq.n_tokens() * seq.d_model();
             b[at] = 2;
             return expect_format_error(dataio::decode_embedding, b, at);
         }},
        {"trailing bytes",
         [=] {
             auto b = dir_bytes;
             b.push_back(0);
             return expect_format_error(dataio::decode_direction, b, dir_bytes.size());
         }},
        {"unsorted direction indices",
         [=] {
             if (dir.d_edit.nnz() < 2) return std::string("direction has a single entry");
             auto b = dir_bytes;
             const std::size_t entries = 4 + 2 + 1 + 1 + 4 + 4 + 32;
             std::swap_ranges(b.begin() + entries, b.begin() + entries + 4, b.begin() + entries + 8);
             return expect_format_error(dataio::decode_direction, b, entries + 8);
         }},
        {"empty direction rejected on write",
         [] {
             directions::EditDirection d;
             d.d_edit.dim = 4;
             try {
                 dataio::encode_direction(d);
             } catch (const DataError&) {
                 return std::string();
             }
             return std::string("accepted");
         }},
    };
}

Outcome determinism_and_formats(const Setup& s, const TrainedRun& run, const directions::EditDirection& dir) {
    auto cfg = s.cfg;
    cfg.steps = 300;
    const auto a = dataio::encode_checkpoint(train_run(s, cfg).model);
    const auto b = dataio::encode_checkpoint(train_run(s, cfg).model);
    const std::uint32_t attribute = s.spec.attribute_ids.front();
    const auto d1 = dataio::encode_direction(extract_all(run.model, synthkit::generate_pairs(s.spec, attribute, 20)).aggregate);
    const auto d2 = dataio::encode_direction(extract_all(run.model, synthkit::generate_pairs(s.spec, attribute, 20)).aggregate);

    std::vector<std::string> failures;
    if (a != b) failures.push_back("checkpoints differ");
    if (d1 != d2) failures.push_back("direction files differ");
    std::size_t n = 0;
    for (const auto& [name, fixture] : format_fixtures(s, run, dir)) {
        ++n;
        std::string msg;
        try {
            msg = fixture();
        } catch (const std::exception& e) {
            msg = std::string("threw ") + e.what();
        }
        if (!msg.empty()) failures.push_back(name + ": " + msg);
    }
    std::string detail = fmt("checkpoint bytes %s (%zu B), direction bytes %s (%zu B), %zu/%zu format fixtures pass",
                             a == b ? "identical" : "DIFFER", a.size(), d1 == d2 ? "identical" : "DIFFER", d1.size(),
                             n - (failures.size() - (a != b) - (d1 != d2)), n);
    for (const auto& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    std::uint64_t data_seed = 1;
    app.add_option("--data-seed", data_seed, "Seed of the synthetic corpus")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    const auto t0 = Clock::now();
    std::cerr << "generating corpus (seed " << data_seed << ")\n";
    const Setup s = make_setup(data_seed);

    std::cerr << "training with aux loss\n";
    const TrainedRun on = train_run(s, s.cfg);
    std::cerr << "training without aux loss\n";
    auto off_cfg = s.cfg;
    off_cfg.aux_k = 0;
    const TrainedRun off = train_run(s, off_cfg);
    std::cerr << "training with K = k_true for direction recovery\n";
    auto matched_cfg = s.cfg;
    matched_cfg.k = s.spec.k_true;
    const TrainedRun matched = train_run(s, matched_cfg);

    const auto pairs = synthkit::generate_pairs(s.spec, s.spec.attribute_ids.front(), 100);
    const auto dir = extract_all(on.model, pairs).aggregate;

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient correctness", [] { return gradient_correctness(); }},
        {"sparsity invariant", [&] { return sparsity_invariant(on, s.cfg.k); }},
        {"SAE convergence", [&] { return convergence(on, off); }},
        {"direction recovery", [&] { return direction_recovery(s, matched, on); }},
        {"schedule exactness", [] { return schedule_exactness(); }},
        {"edit locality", [&] { return edit_locality(s, on, dir); }},
        {"affinity", [&] { return affinity(s, on, dir); }},
        {"determinism and formats", [&] { return determinism_and_formats(s, on, dir); }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - failed << '/' << criteria.size() << " in "
              << fmt("%.1f s", seconds_since(t0)) << std::endl;
    return failed ? 1 : 0;
}
