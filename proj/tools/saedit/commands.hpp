#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "saedit/sae.hpp"
#include "saedit/synthkit.hpp"

namespace saedit::cli {

namespace fs = std::filesystem;

struct TrainArgs {
    fs::path corpus;
    fs::path out;
    fs::path report;  // defaults to <out>.csv
    std::size_t d_latent = 256;
    std::string sparsity = "batch-topk";
    std::size_t calib_batches = 0;
    sae::TrainConfig cfg;
};

struct ExtractArgs {
    fs::path checkpoint;
    fs::path manifest;
    fs::path out;
    double epsilon = 1e-9;
    double rho = 0.6;
    std::vector<std::uint32_t> include;
    std::vector<std::uint32_t> exclude;
    std::uint64_t seed = 0;
};

struct ApplyArgs {
    fs::path checkpoint;
    fs::path input;
    fs::path direction;
    fs::path out;
    std::size_t token_index = 0;
    std::vector<double> omegas{1.0};
    std::optional<double> tau;
    double tau_factor = 15.0;
    std::size_t steps = 50;
    bool constant = false;
    bool reconstruct_at_zero = false;
};

struct ScheduleArgs {
    double omega = 1.0;
    std::optional<double> tau;
    double tau_factor = 15.0;
    std::size_t steps = 50;
};

struct SynthArgs {
    fs::path out;
    synthkit::SynthSpec spec;
    std::size_t n_pairs = 100;
};

struct ScoreArgs {
    fs::path direction;
    fs::path checkpoint;
    fs::path truth;
    std::optional<std::uint32_t> attribute;
    double min_precision = 0.0;
    double min_recall = 0.0;
    double min_atom_cosine = 0.0;
};

/// Each returns the process exit code; library errors propagate as exceptions.
int run_train(const TrainArgs& a);
int run_extract(const ExtractArgs& a);
int run_apply(const ApplyArgs& a);
int run_schedule(const ScheduleArgs& a);
int run_synth(const SynthArgs& a);
int run_score(const ScoreArgs& a);

/// Shortest decimal form that round-trips, as used in output file names.
std::string format_scale(double v);

}  // namespace saedit::cli
