#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bdan/bridge.hpp"
#include "bdan/data_io.hpp"
#include "bdan/model.hpp"

namespace bdan {

enum class OptimizerKind { adam, momentum };

struct TrainConfig {
    std::size_t epochs = 500;
    std::size_t batch_size = 40;
    std::uint64_t seed = 2024;
    double lr = 1e-3;
    std::size_t lr_milestone_every = 50;
    double lr_decay_factor = 0.5;
    double w_s = 1.0;
    double w_t = 1.0;

    bool source_adapt = true;    // off: BDAN-TDA
    bool target_adapt = true;    // off: BDAN-SDA
    int stages = 2;              // 1: BDAN-ST1
    bool gaussian_perturb = true;  // off: BDAN-NGK

    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double momentum = 0.9;

    std::size_t folds = 10;  // 1: transductive, all target trials adapted to and scored
    bool zscore = false;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    bool bridge_source() const { return source_adapt && w_s > 0; }
    bool bridge_target() const { return target_adapt && w_t > 0; }
    bool bridge_active() const { return bridge_source() || bridge_target(); }
};

/// One optimisation step's losses. Disabled terms are recorded as 0 with the
/// matching `*_enabled` flag cleared.
struct LossReport {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double L_cls = 0;
    double Ls1 = 0, Ls2 = 0, Lt1 = 0, Lt2 = 0;
    double J = 0;
    bool Ls1_enabled = false, Ls2_enabled = false, Lt1_enabled = false, Lt2_enabled = false;
    PairDistanceStat s1, s2, t1, t2;  // lambda components and denominators
    std::size_t clamp_hits = 0;
};

struct TaskResult {
    std::string source_subject;
    std::string target_subject;
    std::vector<double> fold_accuracies;
    double mean_accuracy = 0;
    /// fold -> epoch -> epoch-mean report (step = number of steps in that epoch)
    std::vector<std::vector<LossReport>> epoch_reports;
    /// fold -> per-step reports
    std::vector<std::vector<LossReport>> step_reports;
    double wall_seconds = 0;
};

Tensor classification_loss(const Tensor& logits, const std::vector<std::uint32_t>& labels);

/// J = L_cls + w_s L_s + w_t L_t; disabled terms contribute nothing.
double objective(double l_cls, double l_s, double l_t, double w_s, double w_t, bool source_on = true,
                 bool target_on = true);

double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// Parameter update rule keyed by the order of ModelParams::trainable().
class Optimizer {
public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
    void step(ModelParams& params, const Gradients& grads, double lr);
    std::size_t steps_taken() const { return t_; }

private:
    TrainConfig cfg_;
    std::vector<std::vector<Real>> m_, v_;
    std::size_t t_ = 0;
};

/// Input tensor (n, 1, electrodes, time) for the given trials.
Tensor make_batch(const EpochSet& set, const std::vector<std::size_t>& indices);

struct StepStreams {
    std::uint64_t seed = 0;
    std::uint64_t task = 0;
    std::uint64_t fold = 0;
    std::uint64_t step = 0;
};

/// Forward both domains, build the bridging domain, assemble J and take one
/// optimizer step. `source_labels` are the labels of the source batch; the
/// target batch is unlabeled by construction.
LossReport train_step(const Tensor& source_batch, const std::vector<std::uint32_t>& source_labels,
                      const Tensor& target_batch, ModelParams& params, Optimizer& opt, const TrainConfig& cfg,
                      double lr, const StepStreams& streams);

/// Trains one model on labeled source trials and unlabeled target trials.
/// `target` must not need its labels; the harness passes a sealed set.
struct FitResult {
    ModelParams params;
    std::vector<LossReport> steps;
    std::vector<LossReport> epochs;
};
FitResult fit(const EpochSet& source, const EpochSet& target, const TrainConfig& cfg, std::uint64_t task,
              std::uint64_t fold, const std::function<void(const LossReport&)>& on_epoch = {});

std::vector<std::uint32_t> predict(ModelParams& params, const EpochSet& set, std::size_t batch = 40);
double evaluate(ModelParams& params, const EpochSet& set);

/// Stratified k-fold over target trials: each fold trains on all source
/// trials plus the remaining target folds (labels sealed) and scores the
/// held-out fold in eval mode. With folds = 1 every target trial is both
/// adapted to (unlabeled) and scored.
TaskResult run_sts_task(const EpochSet& source, const EpochSet& target, const TrainConfig& cfg,
                        std::uint64_t task = 0, std::vector<ModelParams>* fold_params = nullptr);

}  // namespace bdan
