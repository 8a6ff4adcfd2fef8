#include "commands.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "json.hpp"
#include "saedit/dataio.hpp"
#include "saedit/directions.hpp"
#include "saedit/editing.hpp"
#include "saedit/error.hpp"

namespace saedit::cli {

namespace {

void print_indices(std::ostream& os, const std::vector<std::uint32_t>& xs) {
    os << '[';
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
    os << ']';
}

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string padded(std::size_t v, std::size_t width) {
    std::string s = std::to_string(v);
    if (s.size() < width) s.insert(0, width - s.size(), '0');
    return s;
}

}  // namespace

std::string format_scale(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

int run_train(const TrainArgs& a) {
    sae::TrainConfig cfg = a.cfg;
    cfg.sparsity = sae::sparsity_mode_from_string(a.sparsity);
    cfg.validate(a.d_latent);
    auto batches = dataio::stream_batches(a.corpus, cfg.batch_tokens, cfg.seed);
    std::cerr << "corpus: " << batches.n_tokens() << " tokens, d_model " << batches.d_model() << '\n';

    auto init = sae::init_model(batches.d_model(), a.d_latent, cfg.seed);
    auto result = sae::train(std::move(init), batches, cfg);
    auto model = sae::calibrate_threshold(std::move(result.model), batches, cfg.k, a.calib_batches);

    const fs::path report = a.report.empty() ? fs::path(a.out.string() + ".csv") : a.report;
    dataio::write_checkpoint(a.out, model);
    dataio::write_report_csv(report, result.report);

    std::cout << "checkpoint " << a.out.string() << "\nreport " << report.string() << "\nsteps " << cfg.steps
              << "\ntheta " << g17(*model.theta) << '\n';
    if (!result.report.records.empty()) {
        const auto& last = result.report.records.back();
        std::cout << "final L_rec " << g17(last.rec_loss) << "\nfinal dead_frac " << g17(last.dead_fraction) << '\n';
    }
    return 0;
}

int run_extract(const ExtractArgs& a) {
    const auto model = dataio::read_checkpoint(a.checkpoint);
    const auto manifest = dataio::read_manifest(a.manifest);
    if (manifest.records.empty()) throw DataError("manifest '" + a.manifest.string() + "' has no pairs");

    directions::ExtractOptions opts;
    opts.epsilon = a.epsilon;
    opts.rho = a.rho;
    opts.overrides.include = a.include;
    opts.overrides.exclude = a.exclude;

    std::vector<directions::EditDirection> dirs;
    for (const auto& rec : manifest.records) {
        try {
            const auto src = directions::encode_sequence(model, dataio::read_embedding(rec.src_embedding_path));
            const auto tgt = directions::encode_sequence(model, dataio::read_embedding(rec.tgt_embedding_path));
            dirs.push_back(directions::extract_direction(src, tgt, opts, rec.pair_id));
        } catch (const Error&) {
            std::cerr << "error while processing pair '" << rec.pair_id << "'\n";
            throw;
        }
        if (dirs.back().looks_degenerate()) {
            std::cerr << "warning: pair '" << rec.pair_id << "' looks degenerate (max ratio "
                      << g17(dirs.back().max_ratio) << " <= self baseline " << g17(dirs.back().self_ratio_baseline)
                      << ")\n";
        }
    }
    const auto dir = dirs.size() == 1 ? dirs.front() : directions::aggregate_directions(dirs, a.seed);
    dataio::write_direction(a.out, dir);

    std::cout << "direction " << a.out.string() << "\nmethod " << directions::to_string(dir.method) << "\npairs "
              << dirs.size() << "\nnnz " << dir.d_edit.nnz() << "\nindex_set ";
    print_indices(std::cout, dir.index_set);
    std::cout << '\n';
    return 0;
}

int run_apply(const ApplyArgs& a) {
    if (a.omegas.empty()) throw UsageError("apply: at least one --omega is required");
    if (std::set<double>(a.omegas.begin(), a.omegas.end()).size() != a.omegas.size())
        throw UsageError("apply: duplicate --omega values");
    const auto model = dataio::read_checkpoint(a.checkpoint);
    const auto seq = dataio::read_embedding(a.input);
    const auto dir = dataio::read_direction(a.direction);
    editing::ApplyOptions opts;
    opts.reconstruct_at_zero = a.reconstruct_at_zero;
    const std::string dir_id = a.direction.filename().string();

    fs::create_directories(a.out);
    std::ofstream manifest(a.out / "manifest.jsonl", std::ios::trunc);
    if (!manifest) throw DataError("cannot open '" + (a.out / "manifest.jsonl").string() + "' for writing");

    std::size_t files = 0;
    for (double omega : a.omegas) {
        editing::EditedSequence edited;
        if (a.constant) {
            edited = editing::edit_constant(model, seq, a.token_index, dir, omega, opts, dir_id);
        } else {
            editing::ScheduleConfig sc;
            sc.omega = omega;
            sc.steps = a.steps;
            sc.tau_factor = a.tau_factor;
            if (a.tau) {
                sc.tau_rule = editing::TauRule::Explicit;
                sc.tau = *a.tau;
            }
            edited = editing::edit_sequence(model, seq, a.token_index, dir, sc, opts, dir_id);
        }
        const std::size_t width = std::to_string(edited.steps.size() - 1).size();
        for (std::size_t s = 0; s < edited.steps.size(); ++s) {
            const std::string name = a.constant ? "omega_" + format_scale(omega) + ".saed"
                                                : "omega_" + format_scale(omega) + "_step_" + padded(s, width) + ".saed";
            dataio::write_embedding(a.out / name, edited.sequence_at(s));
            nlohmann::ordered_json j;
            j["file"] = name;
            j["omega"] = omega;
            j["step"] = edited.steps[s].step;
            j["scale"] = edited.steps[s].scale;
            j["token_index"] = a.token_index;
            j["direction"] = dir_id;
            j["input"] = a.input.filename().string();
            manifest << j.dump() << '\n';
            ++files;
        }
    }
    std::cout << "wrote " << files << " sequences to " << a.out.string() << '\n';
    return 0;
}

int run_schedule(const ScheduleArgs& a) {
    editing::ScheduleConfig sc;
    sc.omega = a.omega;
    sc.steps = a.steps;
    sc.tau_factor = a.tau_factor;
    if (a.tau) {
        sc.tau_rule = editing::TauRule::Explicit;
        sc.tau = *a.tau;
    }
    const auto table = editing::injection_table(sc);
    std::cout << "step,t,omega_t\n";
    for (std::size_t s = 0; s < table.size(); ++s) {
        const double t = a.steps > 1 ? static_cast<double>(s) / static_cast<double>(a.steps - 1) : 0.0;
        std::cout << s << ',' << g17(t) << ',' << g17(table[s]) << '\n';
    }
    return 0;
}

int run_synth(const SynthArgs& a) {
    a.spec.validate();
    auto corpus = synthkit::generate_corpus(a.spec);
    std::optional<std::uint32_t> attribute;
    if (a.n_pairs > 0) {
        if (a.spec.attribute_ids.empty()) throw UsageError("synth: --pairs needs at least one --attribute");
        attribute = a.spec.attribute_ids.front();
        corpus.truth.pair_attribute = attribute;
    }
    synthkit::write_corpus(corpus, a.out);
    std::cout << "corpus " << (a.out / "corpus").string() << " (" << corpus.prompts.size() << " prompts)\n";
    if (!corpus.heldout.empty())
        std::cout << "heldout " << (a.out / "heldout").string() << " (" << corpus.heldout.size() << " prompts)\n";
    std::cout << "truth " << (a.out / "truth.json").string() << '\n';
    if (attribute) {
        const auto pairs = synthkit::generate_pairs(a.spec, *attribute, a.n_pairs);
        synthkit::write_pairs(pairs, a.out);
        std::cout << "pairs " << (a.out / "pairs.jsonl").string() << " (" << pairs.size() << " pairs, attribute "
                  << *attribute << ")\n";
    }
    return 0;
}

int run_score(const ScoreArgs& a) {
    const auto dir = dataio::read_direction(a.direction);
    const auto model = dataio::read_checkpoint(a.checkpoint);
    const auto truth = synthkit::read_truth(a.truth);
    const auto attribute = a.attribute ? a.attribute : truth.pair_attribute;
    if (!attribute) throw UsageError("score: truth file names no pair attribute; pass --attribute");

    const auto rep = synthkit::score_recovery(dir, model, truth, *attribute);
    std::cout << "precision " << g17(rep.precision) << "\nrecall " << g17(rep.recall) << "\natom_cosine "
              << g17(rep.atom_cosine) << "\nindex_set ";
    print_indices(std::cout, rep.index_set);
    std::cout << "\nmatched_atoms ";
    print_indices(std::cout, rep.matched_atoms);
    std::cout << '\n';

    bool ok = true;
    auto gate = [&](const char* name, double v, double floor) {
        if (v < floor) {
            std::cerr << name << ' ' << g17(v) << " is below the floor " << g17(floor) << '\n';
            ok = false;
        }
    };
    gate("precision", rep.precision, a.min_precision);
    gate("recall", rep.recall, a.min_recall);
    gate("atom_cosine", rep.atom_cosine, a.min_atom_cosine);
    return ok ? 0 : 4;
}

}  // namespace saedit::cli
