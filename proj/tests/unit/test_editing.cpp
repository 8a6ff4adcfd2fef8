#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "saedit/editing.hpp"

using namespace saedit;
using namespace saedit::editing;

namespace {

ScheduleConfig schedule(double omega, std::size_t steps, std::optional<double> tau = std::nullopt) {
    ScheduleConfig c;
    c.omega = omega;
    c.steps = steps;
    if (tau) {
        c.tau_rule = TauRule::Explicit;
        c.tau = *tau;
    }
    return c;
}

sae::SaeModel calibrated_toy(std::uint64_t seed, double theta = 0.05) {
    sae::SaeModel m = oracle::toy_model(6, 12, seed);
    m.theta = theta;
    return m;
}

directions::EditDirection direction(std::size_t dim, std::vector<linalg::SparseEntry> e) {
    directions::EditDirection d;
    d.d_edit = sae::SparseCode{dim, std::move(e)};
    for (const auto& x : d.d_edit.entries) d.index_set.push_back(x.index);
    return d;
}

EmbeddingSequence random_sequence(std::size_t n, std::size_t d, std::uint64_t seed) {
    EmbeddingSequence s;
    s.embeddings = oracle::random_matrix(n, d, seed);
    s.padding.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) s.labels.push_back("t" + std::to_string(i));
    return s;
}

}  // namespace

TEST(Schedule, StepZeroIsZero) {
    for (double w : {0.0, 0.5, 3.0}) EXPECT_EQ(injection_scale(schedule(w, 10), 0), 0.0);
}

TEST(Schedule, ZeroOmegaIsZeroEverywhere) {
    for (double v : injection_table(schedule(0.0, 7))) EXPECT_EQ(v, 0.0);
}

TEST(Schedule, LnTwoAtEnd) {
    const double w = std::log(2.0);
    EXPECT_NEAR(injection_scale(schedule(w, 5), 4), 1.0, 1e-12);
}

TEST(Schedule, ClampsAtTau) {
    EXPECT_EQ(injection_scale(schedule(5.0, 3, 75.0), 2), 75.0);
    EXPECT_EQ(injection_scale(schedule(5.0, 3), 2), 75.0);  // proportional rule, 15 * 5
}

TEST(Schedule, FourSteps) {
    const auto t = injection_table(schedule(1.0, 4, 15.0));
    const std::vector<double> expect{0.0, std::exp(1.0 / 3.0) - 1.0, std::exp(2.0 / 3.0) - 1.0, std::exp(1.0) - 1.0};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(t[i], expect[i], 1e-12);
}

TEST(Schedule, SingleStepIsUnedited) {
    EXPECT_EQ(injection_table(schedule(2.0, 1)), (std::vector<double>{0.0}));
}

TEST(Schedule, DefaultTauRule) {
    ScheduleConfig c;
    c.omega = 0.4;
    EXPECT_DOUBLE_EQ(c.effective_tau(), 15.0 * 0.4);
}

TEST(Schedule, MonotoneAndBoundedSweep) {
    std::mt19937_64 rng(0);
    std::uniform_real_distribution<double> om(0.0, 8.0), ta(0.01, 50.0);
    std::uniform_int_distribution<std::size_t> st(1, 60);
    for (int i = 0; i < 500; ++i) {
        const auto cfg = i % 2 ? schedule(om(rng), st(rng), ta(rng)) : schedule(om(rng), st(rng));
        const auto t = injection_table(cfg);
        for (std::size_t s = 0; s < t.size(); ++s) {
            EXPECT_GE(t[s], 0.0);
            EXPECT_LE(t[s], cfg.effective_tau());
            if (s > 0) EXPECT_GE(t[s], t[s - 1]);
        }
    }
}

TEST(Schedule, Validation) {
    EXPECT_THROW(injection_scale(schedule(-1.0, 3), 0), ConfigError);
    EXPECT_THROW(injection_scale(schedule(1.0, 0), 0), ConfigError);
    EXPECT_THROW(injection_scale(schedule(1.0, 3, 0.0), 0), ConfigError);
    EXPECT_THROW(injection_scale(schedule(1.0, 3), 3), ConfigError);
    EXPECT_NO_THROW(injection_scale(schedule(0.0, 3, 0.0), 1));
}

// ---------------------------------------------------------------------------

TEST(Apply, ZeroOmegaIsBitIdentical) {
    const auto m = calibrated_toy(0);
    const Vector e = oracle::random_vector(6, 1);
    EXPECT_EQ(apply_direction(m, e, direction(12, {{3, 1.0}}), 0.0), e);
}

TEST(Apply, ReconstructAtZeroFlag) {
    const auto m = calibrated_toy(0);
    const Vector e = oracle::random_vector(6, 1);
    ApplyOptions opts;
    opts.reconstruct_at_zero = true;
    EXPECT_EQ(apply_direction(m, e, direction(12, {{3, 1.0}}), 0.0, opts), sae::decode(m, sae::encode(m, e)));
}

TEST(Apply, SingleEntryAddsColumn) {
    auto m = calibrated_toy(2);
    m.decoder_bias.assign(6, 0.0);
    const Vector e = oracle::random_vector(6, 3);
    const Vector out = apply_direction(m, e, direction(12, {{4, 0.7}}), 1.0);
    const Vector base = sae::decode(m, sae::encode(m, e));
    const Vector col = m.decoder_matrix().column(4);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out[i], base[i] + 0.7 * col[i], 1e-12);
}

TEST(Apply, MatchesDenseOracle) {
    const auto m = calibrated_toy(0);
    const Vector e = oracle::random_vector(6, 1);
    const auto d = direction(12, {{1, 0.3}, {5, 1.2}, {11, 0.8}});
    for (double w : {0.5, 1.0, 2.0}) {
        Vector z = sae::encode(m, e).to_dense();
        for (const auto& x : d.d_edit.entries) z[x.index] += w * x.value;
        const Vector ref = oracle::dense_decode(m, z);
        const Vector out = apply_direction(m, e, d, w);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out[i], ref[i], 1e-6);
    }
}

TEST(Apply, AffineInOmega) {
    const auto m = calibrated_toy(4);
    const Vector e = oracle::random_vector(6, 5);
    const auto d = direction(12, {{0, 0.9}, {7, -0.4}});
    const Vector img = sae::decode_without_bias(m, d.d_edit);
    const Vector a = apply_direction(m, e, d, 0.3), b = apply_direction(m, e, d, 2.1);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(b[i] - a[i], 1.8 * img[i], 1e-6);
}

TEST(Apply, DisjointDirectionsCommute) {
    const auto m = calibrated_toy(6);
    const Vector e = oracle::random_vector(6, 7);
    const auto d1 = direction(12, {{1, 0.5}, {2, 0.25}}), d2 = direction(12, {{8, 1.5}});
    using Step = std::pair<const directions::EditDirection*, double>;
    auto compose = [&](Step a, Step b) {
        Vector z = sae::encode(m, e).to_dense();
        a.first->d_edit.add_scaled_to(z, a.second);
        b.first->d_edit.add_scaled_to(z, b.second);
        return sae::decode(m, std::span<const double>(z));
    };
    EXPECT_EQ(compose({&d1, 0.7}, {&d2, 1.3}), compose({&d2, 1.3}, {&d1, 0.7}));
}

TEST(Apply, Errors) {
    auto m = calibrated_toy(0);
    const Vector e = oracle::random_vector(6, 1);
    EXPECT_THROW(apply_direction(m, Vector(5), direction(12, {{0, 1.0}}), 1.0), ShapeError);
    EXPECT_THROW(apply_direction(m, e, direction(11, {{0, 1.0}}), 1.0), ShapeError);
    m.theta.reset();
    EXPECT_THROW(apply_direction(m, e, direction(12, {{0, 1.0}}), 1.0), StateError);
}

// ---------------------------------------------------------------------------

TEST(EditSequence, ZeroOmegaKeepsEverything) {
    const auto m = calibrated_toy(0);
    const auto seq = random_sequence(5, 6, 2);
    const auto out = edit_sequence(m, seq, 2, direction(12, {{3, 1.0}}), schedule(0.0, 6));
    ASSERT_EQ(out.steps.size(), 6u);
    for (std::size_t s = 0; s < 6; ++s) EXPECT_EQ(out.sequence_at(s), seq);
}

TEST(EditSequence, PerStepScales) {
    const auto m = calibrated_toy(0);
    const auto seq = random_sequence(3, 6, 2);
    const auto d = direction(12, {{3, 1.0}});
    const auto cfg = schedule(1.0, 4, 15.0);
    const auto out = edit_sequence(m, seq, 1, d, cfg, {}, "dir");
    EXPECT_EQ(out.direction_id, "dir");
    for (std::size_t s = 0; s < 4; ++s) {
        EXPECT_EQ(out.steps[s].scale, injection_scale(cfg, s));
        EXPECT_EQ(out.steps[s].embedding, apply_direction(m, seq.embeddings.row(1), d, out.steps[s].scale));
    }
    // Step 0 has scale 0 and is bypassed.
    EXPECT_EQ(out.sequence_at(0), seq);
}

TEST(EditSequence, OnlyTargetTokenChanges) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> tok(0, 7);
    std::uniform_real_distribution<double> om(0.0, 4.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = calibrated_toy(trial);
        const auto seq = random_sequence(8, 6, 100 + trial);
        const std::size_t target = tok(rng);
        const auto out =
            edit_sequence(m, seq, target, direction(12, {{static_cast<std::uint32_t>(trial % 12), 1.0}}),
                          schedule(om(rng), 5));
        for (std::size_t s = 0; s < out.steps.size(); ++s) {
            const auto edited = out.sequence_at(s);
            for (std::size_t r = 0; r < 8; ++r) {
                if (r == target) continue;
                for (std::size_t c = 0; c < 6; ++c) ASSERT_EQ(edited.embeddings(r, c), seq.embeddings(r, c));
            }
        }
    }
}

TEST(EditSequence, RejectsPaddingAndOutOfRange) {
    const auto m = calibrated_toy(0);
    auto seq = random_sequence(3, 6, 2);
    seq.padding[2] = true;
    const auto d = direction(12, {{3, 1.0}});
    EXPECT_THROW(edit_sequence(m, seq, 2, d, schedule(1.0, 2)), UsageError);
    EXPECT_THROW(edit_sequence(m, seq, 3, d, schedule(1.0, 2)), UsageError);
}

TEST(EditConstant, SingleStep) {
    const auto m = calibrated_toy(0);
    const auto seq = random_sequence(3, 6, 2);
    const auto d = direction(12, {{3, 1.0}});
    const auto out = edit_constant(m, seq, 0, d, 1.5);
    ASSERT_EQ(out.steps.size(), 1u);
    EXPECT_EQ(out.steps[0].scale, 1.5);
    EXPECT_EQ(out.steps[0].embedding, apply_direction(m, seq.embeddings.row(0), d, 1.5));
}
