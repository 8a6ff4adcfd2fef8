#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "saedit/error.hpp"

using namespace saedit;
using namespace saedit::cli;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage:
        case ErrorKind::Config:
            return kExitUsage;
        case ErrorKind::Shape:
        case ErrorKind::State:
        case ErrorKind::Data:
        case ErrorKind::Format:
            return kExitData;
        case ErrorKind::Numeric:
        case ErrorKind::Convergence:
        case ErrorKind::Degenerate:
            return kExitNumeric;
    }
    return 1;
}

void add_train(CLI::App& app, TrainArgs& a) {
    auto* c = app.add_subcommand("train", "Train an SAE on a corpus directory and calibrate its threshold");
    auto& t = a.cfg;
    t.steps = 20000;
    t.batch_tokens = 256;
    t.k = 8;
    c->add_option("--corpus", a.corpus, "Directory of .saed embedding files")->required()->check(CLI::ExistingDirectory);
    c->add_option("-o,--out", a.out, "Output checkpoint path")->required();
    c->add_option("--report", a.report, "Training report CSV (default <out>.csv)");
    c->add_option("--d-latent", a.d_latent, "Latent width")->capture_default_str();
    c->add_option("-k,--k", t.k, "Active latents per token (batch budget B*k)")->capture_default_str();
    c->add_option("--alpha", t.alpha, "Weight of the auxiliary dead-latent loss")->capture_default_str();
    c->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
    c->add_option("--steps", t.steps, "Optimizer steps")->capture_default_str();
    c->add_option("--batch-tokens", t.batch_tokens, "Tokens per batch")->capture_default_str();
    c->add_option("--aux-k", t.aux_k, "Dead latents used by the auxiliary loss (0 disables it)")
        ->capture_default_str();
    c->add_option("--dead-window", t.dead_window, "Idle tokens before a latent counts as dead")
        ->capture_default_str();
    c->add_option("--matryoshka", t.matryoshka_sizes, "Nested prefix sizes, ascending, last = d-latent");
    c->add_option("--sparsity", a.sparsity, "Sparsity operator")
        ->check(CLI::IsMember({"batch-topk", "topk"}))
        ->capture_default_str();
    c->add_option("--seed", t.seed, "Seed for initialization and batch order")->capture_default_str();
    c->add_option("--log-every", t.log_every, "Steps per report row")->capture_default_str();
    c->add_option("--calib-batches", a.calib_batches, "Batches used to calibrate theta (0 = one full pass)")
        ->capture_default_str();
}

void add_extract(CLI::App& app, ExtractArgs& a) {
    auto* c = app.add_subcommand("extract", "Extract an edit direction from a pair manifest");
    c->add_option("--checkpoint", a.checkpoint, "Calibrated SAE checkpoint")->required();
    c->add_option("--manifest", a.manifest, "Pair manifest (.jsonl)")->required();
    c->add_option("-o,--out", a.out, "Output direction file")->required();
    c->add_option("--epsilon", a.epsilon, "Ratio stabilizer")->capture_default_str();
    c->add_option("--rho", a.rho, "Selection threshold on the normalized ratio, in [0, 1)")->capture_default_str();
    c->add_option("--include-index", a.include, "Force a latent index into M (repeatable)");
    c->add_option("--exclude-index", a.exclude, "Drop a latent index from M (repeatable)");
    c->add_option("--seed", a.seed, "Start vector seed for the aggregate power iteration")->capture_default_str();
}

void add_apply(CLI::App& app, ApplyArgs& a) {
    auto* c = app.add_subcommand("apply", "Apply a direction to one token of an embedding sequence");
    c->add_option("--checkpoint", a.checkpoint, "Calibrated SAE checkpoint")->required();
    c->add_option("--input", a.input, "Embedding sequence (.saed)")->required();
    c->add_option("--direction", a.direction, "Direction file")->required();
    c->add_option("--token-index", a.token_index, "Row of the token to edit")->required();
    c->add_option("-o,--out", a.out, "Output directory")->required();
    c->add_option("--omega", a.omegas, "Edit strength; repeat for a sweep")->capture_default_str();
    c->add_option("--tau", a.tau, "Explicit clamp (default: tau-factor * omega)");
    c->add_option("--tau-factor", a.tau_factor, "Proportional clamp factor")->capture_default_str();
    c->add_option("--steps", a.steps, "Denoising steps in the schedule")->capture_default_str();
    c->add_flag("--constant", a.constant, "Single edit at scale omega instead of the schedule");
    c->add_flag("--reconstruct-at-zero", a.reconstruct_at_zero,
                "At scale 0 write decode(encode(e)) instead of the input token");
}

void add_schedule(CLI::App& app, ScheduleArgs& a) {
    auto* c = app.add_subcommand("schedule", "Print the injection schedule as CSV");
    c->add_option("--omega", a.omega, "Edit strength")->capture_default_str();
    c->add_option("--tau", a.tau, "Explicit clamp (default: tau-factor * omega)");
    c->add_option("--tau-factor", a.tau_factor, "Proportional clamp factor")->capture_default_str();
    c->add_option("--steps", a.steps, "Denoising steps")->capture_default_str();
}

void add_synth(CLI::App& app, SynthArgs& a) {
    auto* c = app.add_subcommand("synth", "Generate a synthetic corpus, ground truth and prompt pairs");
    auto& s = a.spec;
    c->add_option("-o,--out", a.out, "Output directory")->required();
    c->add_option("--d-model", s.d_model, "Embedding width")->capture_default_str();
    c->add_option("--features", s.n_true_features, "True dictionary size")->capture_default_str();
    c->add_option("--k-true", s.k_true, "Active true features per token")->capture_default_str();
    c->add_option("--prompts", s.n_prompts, "Corpus prompts")->capture_default_str();
    c->add_option("--tokens", s.tokens_per_prompt, "Content tokens per prompt")->capture_default_str();
    c->add_option("--pad-tokens", s.pad_tokens, "Padding rows appended to every prompt")->capture_default_str();
    c->add_option("--heldout", s.heldout_prompts, "Held-out prompts")->capture_default_str();
    c->add_option("--attribute", s.attribute_ids, "Reserved attribute feature id; pairs use the first (repeatable)")
        ->capture_default_str();
    c->add_option("--pairs", a.n_pairs, "Prompt pairs to emit (0 = none)")->capture_default_str();
    c->add_option("--sigma", s.sigma, "Gaussian noise standard deviation")->capture_default_str();
    c->add_option("--attribute-min", s.attribute_min, "Minimum attribute coefficient")->capture_default_str();
    c->add_option("--seed", s.seed, "Generator seed")->capture_default_str();
}

void add_score(CLI::App& app, ScoreArgs& a) {
    auto* c = app.add_subcommand("score", "Score a direction against synthetic ground truth");
    c->add_option("--direction", a.direction, "Direction file")->required();
    c->add_option("--checkpoint", a.checkpoint, "SAE checkpoint the direction was extracted with")->required();
    c->add_option("--truth", a.truth, "truth.json written by synth")->required();
    c->add_option("--attribute", a.attribute, "Attribute feature id (default: the one recorded in truth)");
    c->add_option("--min-precision", a.min_precision, "Exit nonzero below this precision")->capture_default_str();
    c->add_option("--min-recall", a.min_recall, "Exit nonzero below this recall")->capture_default_str();
    c->add_option("--min-atom-cosine", a.min_atom_cosine, "Exit nonzero below this atom cosine")
        ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-autoencoder edit directions for token embeddings", "saedit"};
    app.set_config("--config", "", "TOML/INI run config; command-line flags override it");
    app.require_subcommand(1);
    app.fallthrough();

    TrainArgs train;
    ExtractArgs extract;
    ApplyArgs apply;
    ScheduleArgs schedule;
    SynthArgs synth;
    ScoreArgs score;
    add_train(app, train);
    add_extract(app, extract);
    add_apply(app, apply);
    add_schedule(app, schedule);
    add_synth(app, synth);
    add_score(app, score);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    const auto* sub = app.get_subcommands().front();
    std::cerr << "# effective config\n[" << sub->get_name() << "]\n" << sub->config_to_str(true, false) << std::flush;

    try {
        const std::string name = sub->get_name();
        if (name == "train") return run_train(train);
        if (name == "extract") return run_extract(extract);
        if (name == "apply") return run_apply(apply);
        if (name == "schedule") return run_schedule(schedule);
        if (name == "synth") return run_synth(synth);
        if (name == "score") return run_score(score);
    } catch (const Error& e) {
        std::cerr << "saedit: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "saedit: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
