#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "bdan/report.hpp"
#include "bdan/train.hpp"
#include "checks.hpp"

using namespace bdan;

namespace {

EpochSet small_subject(std::uint64_t subject_seed, std::uint64_t data_seed, double gain_step = 0.1) {
    DriftConfig c;
    c.electrodes = 4;
    c.time_points = 100;
    c.sessions = 2;
    c.trials_per_session_per_class = 10;
    c.gain_step = gain_step;
    c.subject_seed = subject_seed;
    c.subject_id = "S" + std::to_string(subject_seed);
    Rng rng(data_seed);
    return synth_generate(c, rng).first;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 10;
    cfg.seed = 7;
    cfg.folds = 1;
    return cfg;
}

}  // namespace

TEST(Objective, Arithmetic) {
    EXPECT_DOUBLE_EQ(objective(0.7, 2, 3, 1, 1), 5.7);
    EXPECT_EQ(objective(0.7, 2, 3, 0, 0), 0.7);
    EXPECT_EQ(objective(0.7, 2, 3, 1, 1, false, true), objective(0.7, 99, 3, 1, 1, false, true));
    EXPECT_THROW(objective(1, 1, 1, -1, 1), std::invalid_argument);
}

TEST(LrSchedule, Milestones) {
    TrainConfig cfg;
    EXPECT_EQ(lr_schedule(0, cfg), 1e-3);
    EXPECT_EQ(lr_schedule(49, cfg), 1e-3);
    EXPECT_EQ(lr_schedule(50, cfg), 5e-4);
    EXPECT_DOUBLE_EQ(lr_schedule(499, cfg), 1e-3 * std::pow(0.5, 9));
}

TEST(TrainConfig, Defaults) {
    const TrainConfig cfg;
    EXPECT_EQ(cfg.epochs, 500u);
    EXPECT_EQ(cfg.batch_size, 40u);
    EXPECT_EQ(cfg.seed, 2024u);
    EXPECT_EQ(cfg.lr, 1e-3);
    EXPECT_EQ(cfg.lr_milestone_every, 50u);
    EXPECT_EQ(cfg.folds, 10u);
    EXPECT_TRUE(cfg.source_adapt && cfg.target_adapt && cfg.gaussian_perturb);
    EXPECT_EQ(cfg.stages, 2);
}

TEST(TrainConfig, ValidationNamesField) {
    TrainConfig cfg;
    cfg.batch_size = 1;
    try {
        cfg.validate();
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos);
    }
    cfg = TrainConfig{};
    cfg.lr_decay_factor = 1.5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.stages = 3;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ClassificationLoss, Examples) {
    EXPECT_NEAR(classification_loss(Tensor::zeros({3, 4}), {0, 1, 3}).item(), std::log(4.0), 1e-15);
    double prev = 1e9;
    for (Real margin : {1, 5, 20, 60}) {
        const double l = classification_loss(Tensor::from({1, 2}, {margin, 0}), {0}).item();
        EXPECT_LT(l, prev);
        prev = l;
    }
    EXPECT_LT(prev, 1e-20);
    EXPECT_THROW(classification_loss(Tensor::zeros({1, 2}), {2}), std::invalid_argument);
}

TEST(TrainStep, ZeroWeightsMatchSupervisedStep) {
    const EpochSet src = small_subject(1, 1);
    const TrainConfig base = [] {
        TrainConfig c = small_config();
        c.w_s = c.w_t = 0;
        return c;
    }();
    ModelParams a = ModelParams::init({4, 100, 2}, 3), b = ModelParams::init({4, 100, 2}, 3);
    Optimizer oa(base), ob(base);
    std::vector<std::size_t> idx(10);
    std::iota(idx.begin(), idx.end(), 0);
    const Tensor xs = make_batch(src, idx);
    std::vector<std::uint32_t> labels(src.labels().begin(), src.labels().begin() + 10);
    for (std::uint64_t step = 0; step < 3; ++step) {
        const LossReport r = train_step(xs, labels, Tensor(), a, oa, base, 1e-3, {7, 0, 0, step});
        EXPECT_FALSE(r.Ls1_enabled || r.Ls2_enabled || r.Lt1_enabled || r.Lt2_enabled);
        EXPECT_EQ(r.J, r.L_cls);

        // Plain supervised step with the same dropout stream.
        Rng drop = derive_rng(7, {0, 0, step, 1});
        const Tensor loss = cross_entropy(model_forward(xs, b, Mode::train, drop).logits, labels);
        ob.step(b, backward(loss), 1e-3);
        EXPECT_EQ(loss.item(), r.L_cls);
    }
    const auto na = a.trainable(), nb = b.trainable();
    for (std::size_t i = 0; i < na.size(); ++i) EXPECT_EQ(na[i].second->to_vector(), nb[i].second->to_vector()) << na[i].first;
}

TEST(TrainStep, ObjectiveIdentityEveryStep) {
    TrainConfig cfg = small_config();
    cfg.w_s = 0.7;
    cfg.w_t = 1.3;
    const FitResult fr = fit(small_subject(1, 1), small_subject(2, 2), cfg, 0, 0);
    ASSERT_FALSE(fr.steps.empty());
    for (const auto& r : fr.steps) {
        const double expect = r.L_cls + cfg.w_s * (r.Ls1 + r.Ls2) + cfg.w_t * (r.Lt1 + r.Lt2);
        EXPECT_LE(std::abs(r.J - expect), 2 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(expect)));
        EXPECT_TRUE(r.Ls1_enabled && r.Ls2_enabled && r.Lt1_enabled && r.Lt2_enabled);
        EXPECT_GT(r.Ls1, 0);
    }
}

TEST(Ablation, ToggleLattice) {
    const EpochSet src = small_subject(1, 1), tgt = small_subject(2, 2);
    TrainConfig full = small_config();
    full.epochs = 1;
    const LossReport f = fit(src, tgt, full, 0, 0).steps.front();

    auto first_step = [&](auto tweak) {
        TrainConfig c = full;
        tweak(c);
        return fit(src, tgt, c, 0, 0).steps.front();
    };

    const LossReport sda = first_step([](TrainConfig& c) { c.target_adapt = false; });
    EXPECT_FALSE(sda.Lt1_enabled || sda.Lt2_enabled);
    EXPECT_EQ(sda.Lt1, 0);
    EXPECT_EQ(sda.Lt2, 0);
    EXPECT_EQ(to_json(sda)["lambda"]["Ls1"], to_json(f)["lambda"]["Ls1"]);
    EXPECT_EQ(to_json(sda)["lambda"]["Ls2"], to_json(f)["lambda"]["Ls2"]);
    EXPECT_EQ(sda.L_cls, f.L_cls);

    const LossReport tda = first_step([](TrainConfig& c) { c.source_adapt = false; });
    EXPECT_FALSE(tda.Ls1_enabled || tda.Ls2_enabled);
    EXPECT_EQ(tda.Ls1, 0);
    EXPECT_EQ(tda.Ls2, 0);
    EXPECT_EQ(to_json(tda)["lambda"]["Lt1"], to_json(f)["lambda"]["Lt1"]);
    EXPECT_EQ(to_json(tda)["lambda"]["Lt2"], to_json(f)["lambda"]["Lt2"]);
    EXPECT_EQ(tda.L_cls, f.L_cls);

    const LossReport st1 = first_step([](TrainConfig& c) { c.stages = 1; });
    EXPECT_TRUE(st1.Ls1_enabled && st1.Lt1_enabled);
    EXPECT_FALSE(st1.Ls2_enabled || st1.Lt2_enabled);
    EXPECT_EQ(st1.Ls2, 0);
    EXPECT_EQ(st1.Lt2, 0);
    EXPECT_EQ(to_json(st1)["lambda"]["Ls1"], to_json(f)["lambda"]["Ls1"]);
    EXPECT_EQ(to_json(st1)["lambda"]["Lt1"], to_json(f)["lambda"]["Lt1"]);
    EXPECT_EQ(st1.L_cls, f.L_cls);

    const LossReport ngk = first_step([](TrainConfig& c) { c.gaussian_perturb = false; });
    EXPECT_TRUE(ngk.Ls1_enabled && ngk.Ls2_enabled && ngk.Lt1_enabled && ngk.Lt2_enabled);
    EXPECT_EQ(ngk.L_cls, f.L_cls);
    // stage features are unchanged; only the bridging samples lose their noise
    EXPECT_EQ(ngk.s1.lambda_aa, f.s1.lambda_aa);
    EXPECT_EQ(ngk.t2.lambda_aa, f.t2.lambda_aa);
    EXPECT_NE(ngk.s1.lambda_gg, f.s1.lambda_gg);
    EXPECT_NE(ngk.t1.lambda_gg, f.t1.lambda_gg);
}

TEST(Determinism, SameConfigSameOutputs) {
    const EpochSet src = small_subject(1, 1), tgt = small_subject(2, 2);
    TrainConfig cfg = small_config();
    cfg.folds = 2;
    const TaskResult a = run_sts_task(src, tgt, cfg), b = run_sts_task(src, tgt, cfg);
    EXPECT_EQ(results_csv({a}), results_csv({b}));
    EXPECT_EQ(loss_reports_jsonl(a), loss_reports_jsonl(b));
    EXPECT_EQ(a.fold_accuracies, b.fold_accuracies);
}

TEST(Unsupervised, TripwireNeverFiresOnTrainingPath) {
    const EpochSet src = small_subject(1, 1);
    EpochSet tgt = small_subject(2, 2);
    tgt.seal_labels();
    TrainConfig cfg = small_config();
    EXPECT_NO_THROW(fit(src, tgt, cfg, 0, 0));
    cfg.w_s = cfg.w_t = 0;
    EXPECT_NO_THROW(fit(src, tgt, cfg, 0, 0));
}

TEST(Unsupervised, SealedSourceTrips) {
    // The tripwire itself works: sealing the labeled domain must abort training.
    EpochSet src = small_subject(1, 1);
    src.seal_labels();
    EXPECT_THROW(fit(src, small_subject(2, 2), small_config(), 0, 0), LabelTripwire);
}

TEST(Unsupervised, TargetLabelsDoNotChangeTrajectory) {
    const EpochSet src = small_subject(1, 1);
    const EpochSet tgt = small_subject(2, 2);
    EpochSet flipped = tgt;
    std::vector<std::uint32_t> labels = tgt.labels();
    for (auto& l : labels) l = 1 - l;
    flipped.set_labels(labels);
    const TrainConfig cfg = small_config();
    const TaskResult a = run_sts_task(src, tgt, cfg), b = run_sts_task(src, flipped, cfg);
    EXPECT_EQ(loss_reports_jsonl(a), loss_reports_jsonl(b));
    EXPECT_DOUBLE_EQ(a.mean_accuracy + b.mean_accuracy, 1.0);
}

TEST(RunSts, TenFoldsOn280Trials) {
    DriftConfig c;
    c.electrodes = 3;
    c.time_points = 94;
    c.sessions = 2;
    c.trials_per_session_per_class = 70;  // 280 trials
    Rng rng(3);
    const EpochSet src = synth_generate(c, rng).first;
    c.subject_seed = 2;
    const EpochSet tgt = synth_generate(c, rng).first;
    ASSERT_EQ(tgt.size(), 280u);
    TrainConfig cfg;
    cfg.epochs = 1;
    const TaskResult r = run_sts_task(src, tgt, cfg);
    ASSERT_EQ(r.fold_accuracies.size(), 10u);
    double mean = 0;
    for (double a : r.fold_accuracies) {
        EXPECT_GE(a, 0);
        EXPECT_LE(a, 1);
        EXPECT_NEAR(a * 28, std::round(a * 28), 1e-9);
        mean += a / 10;
    }
    EXPECT_NEAR(r.mean_accuracy, mean, 1e-12);
    EXPECT_EQ(r.step_reports.size(), 10u);
}

TEST(RunSts, RejectsMismatchedSubjects) {
    const EpochSet src = small_subject(1, 1);
    DriftConfig c;
    c.electrodes = 5;
    c.time_points = 100;
    c.sessions = 2;
    c.trials_per_session_per_class = 10;
    Rng rng(4);
    const EpochSet other = synth_generate(c, rng).first;
    EXPECT_THROW(run_sts_task(src, other, small_config()), std::invalid_argument);
}

TEST(Training, EpochMeanObjectiveTrend) {
    TrainConfig cfg = small_config();
    cfg.epochs = 20;
    const FitResult fr = fit(small_subject(1, 1), small_subject(2, 2), cfg, 0, 0);
    ASSERT_EQ(fr.epochs.size(), 20u);
    std::size_t increases = 0;
    for (std::size_t i = 1; i < fr.epochs.size(); ++i) increases += fr.epochs[i].J > fr.epochs[i - 1].J;
    EXPECT_LT(increases, 20u);
    EXPECT_LT(fr.epochs.back().J, fr.epochs.front().J);
}

TEST(Training, SeparableSetReachesPerfectAccuracy) {
    DriftConfig c;
    c.electrodes = 4;
    c.time_points = 100;
    c.sessions = 1;
    c.trials_per_session_per_class = 20;
    c.gain_step = c.offset_step = 0;
    c.noise_std = 0.05;
    Rng rng(5);
    const EpochSet set = synth_generate(c, rng).first;
    TrainConfig cfg = small_config();
    cfg.epochs = 30;
    cfg.w_s = cfg.w_t = 0;
    cfg.lr = 3e-3;
    FitResult fr = fit(set, set, cfg, 0, 0);
    EXPECT_EQ(evaluate(fr.params, set), 1.0);
}
