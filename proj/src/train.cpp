#include "bdan/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bdan {

void TrainConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument(key + ": " + why);
    };
    if (epochs < 1) fail("epochs", "must be at least 1");
    if (batch_size < 2) fail("batch_size", "must be at least 2");
    if (!(lr > 0)) fail("lr", "must be positive");
    if (lr_milestone_every < 1) fail("lr_milestone_every", "must be at least 1");
    if (!(lr_decay_factor > 0 && lr_decay_factor <= 1)) fail("lr_decay_factor", "must be in (0, 1]");
    if (!(w_s >= 0)) fail("w_s", "must be non-negative");
    if (!(w_t >= 0)) fail("w_t", "must be non-negative");
    if (stages != 1 && stages != 2) fail("stages", "must be 1 or 2");
    if (!(beta1 >= 0 && beta1 < 1)) fail("beta1", "must be in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) fail("beta2", "must be in [0, 1)");
    if (!(adam_eps > 0)) fail("adam_eps", "must be positive");
    if (!(momentum >= 0 && momentum < 1)) fail("momentum", "must be in [0, 1)");
    if (folds < 1) fail("folds", "must be at least 1");
}

Tensor classification_loss(const Tensor& logits, const std::vector<std::uint32_t>& labels) {
    return cross_entropy(logits, labels);
}

double objective(double l_cls, double l_s, double l_t, double w_s, double w_t, bool source_on, bool target_on) {
    if (w_s < 0 || w_t < 0) throw std::invalid_argument("objective: weights must be non-negative");
    double j = l_cls;
    if (source_on) j += w_s * l_s;
    if (target_on) j += w_t * l_t;
    return j;
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    return cfg.lr * std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_milestone_every));
}

void Optimizer::step(ModelParams& params, const Gradients& grads, double lr) {
    auto named = params.trainable();
    if (m_.empty()) {
        m_.resize(named.size());
        v_.resize(named.size());
        for (std::size_t i = 0; i < named.size(); ++i) {
            m_[i].assign(named[i].second->size(), Real(0));
            v_[i].assign(named[i].second->size(), Real(0));
        }
    }
    ++t_;
    const Real b1 = static_cast<Real>(cfg_.beta1), b2 = static_cast<Real>(cfg_.beta2);
    const Real bc1 = Real(1) - std::pow(b1, static_cast<Real>(t_));
    const Real bc2 = Real(1) - std::pow(b2, static_cast<Real>(t_));
    const Real eta = static_cast<Real>(lr);
    const Real eps = static_cast<Real>(cfg_.adam_eps);
    const Real mu = static_cast<Real>(cfg_.momentum);

    for (std::size_t i = 0; i < named.size(); ++i) {
        Tensor& p = *named[i].second;
        const auto g = grads.of(p);
        std::vector<Real> w = p.to_vector();
        auto& m = m_[i];
        auto& v = v_[i];
        const std::span<const Real> gv = g ? g->data() : std::span<const Real>{};
        for (std::size_t k = 0; k < w.size(); ++k) {
            const Real gk = g ? gv[k] : Real(0);
            if (cfg_.optimizer == OptimizerKind::adam) {
                m[k] = b1 * m[k] + (1 - b1) * gk;
                v[k] = b2 * v[k] + (1 - b2) * gk * gk;
                w[k] -= eta * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
            } else {
                m[k] = mu * m[k] + gk;
                w[k] -= eta * m[k];
            }
        }
        p = Tensor::from(p.shape(), std::move(w), true);
    }
}

Tensor make_batch(const EpochSet& set, const std::vector<std::size_t>& indices) {
    const std::size_t stride = set.electrodes * set.time_points;
    std::vector<Real> v(indices.size() * stride);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const float* src = set.trial(indices[b]);
        std::copy(src, src + stride, v.begin() + static_cast<std::ptrdiff_t>(b * stride));
    }
    return Tensor::from({indices.size(), 1, set.electrodes, set.time_points}, std::move(v));
}

namespace {

enum StreamPurpose : std::uint64_t {
    kSourceDropout = 1,
    kTargetDropout = 2,
    kBridgeSource = 3,
    kBridgeTarget = 4,
    kSourceOrder = 10,
    kTargetOrder = 11,
    kInit = 20,
};

void record_stage(const PairDistanceStat& st, double& value, bool& enabled, PairDistanceStat& slot,
                  std::size_t& clamp_hits) {
    value = st.loss;
    enabled = true;
    slot = st;
    slot.loss_tensor = Tensor();
    if (st.clamped) ++clamp_hits;
}

// Cycles through a reshuffled index order; restarts when fewer than `batch` remain.
class BatchStream {
public:
    BatchStream(std::size_t n, std::size_t batch) : order_(n), batch_(batch) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
    }
    void reshuffle(Rng& rng) {
        std::sort(order_.begin(), order_.end());
        std::shuffle(order_.begin(), order_.end(), rng);
        pos_ = 0;
    }
    std::vector<std::size_t> next(Rng& rng) {
        if (pos_ + batch_ > order_.size()) reshuffle(rng);
        std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
        pos_ += batch_;
        return out;
    }
    std::size_t full_batches() const { return order_.size() / batch_; }

private:
    std::vector<std::size_t> order_;
    std::size_t batch_;
    std::size_t pos_ = 0;
};

LossReport epoch_mean(const std::vector<LossReport>& steps, std::size_t epoch) {
    LossReport r;
    r.epoch = epoch;
    r.step = steps.size();
    if (steps.empty()) return r;
    const double inv = 1.0 / static_cast<double>(steps.size());
    auto avg_stat = [&](PairDistanceStat LossReport::*field) {
        PairDistanceStat s;
        for (const auto& x : steps) {
            const auto& v = x.*field;
            s.lambda_aa += v.lambda_aa * inv;
            s.lambda_gg += v.lambda_gg * inv;
            s.lambda_ag += v.lambda_ag * inv;
            s.bracket += v.bracket * inv;
            s.denom += v.denom * inv;
            s.loss += v.loss * inv;
            s.clamped = s.clamped || v.clamped;
        }
        return s;
    };
    for (const auto& x : steps) {
        r.L_cls += x.L_cls * inv;
        r.Ls1 += x.Ls1 * inv;
        r.Ls2 += x.Ls2 * inv;
        r.Lt1 += x.Lt1 * inv;
        r.Lt2 += x.Lt2 * inv;
        r.J += x.J * inv;
        r.clamp_hits += x.clamp_hits;
    }
    r.Ls1_enabled = steps.front().Ls1_enabled;
    r.Ls2_enabled = steps.front().Ls2_enabled;
    r.Lt1_enabled = steps.front().Lt1_enabled;
    r.Lt2_enabled = steps.front().Lt2_enabled;
    r.s1 = avg_stat(&LossReport::s1);
    r.s2 = avg_stat(&LossReport::s2);
    r.t1 = avg_stat(&LossReport::t1);
    r.t2 = avg_stat(&LossReport::t2);
    return r;
}

}  // namespace

LossReport train_step(const Tensor& source_batch, const std::vector<std::uint32_t>& source_labels,
                      const Tensor& target_batch, ModelParams& params, Optimizer& opt, const TrainConfig& cfg,
                      double lr, const StepStreams& streams) {
    auto stream = [&](std::uint64_t purpose) {
        return derive_rng(streams.seed, {streams.task, streams.fold, streams.step, purpose});
    };
    LossReport rep;
    rep.step = streams.step;

    Rng source_drop = stream(kSourceDropout);
    const ForwardActivations src = model_forward(source_batch, params, Mode::train, source_drop);
    const Tensor l_cls = classification_loss(src.logits, source_labels);
    rep.L_cls = l_cls.item();
    Tensor j = l_cls;

    if (cfg.bridge_active()) {
        if (target_batch.dim(0) != source_batch.dim(0))
            throw std::invalid_argument("train_step: source and target batches differ in size");
        Rng target_drop = stream(kTargetDropout);
        const ForwardActivations tgt = model_forward(target_batch, params, Mode::train, target_drop);
        Rng bridge_s = stream(kBridgeSource);
        Rng bridge_t = stream(kBridgeTarget);
        const BridgingDomain dom =
            build_bridging_domain(src.z0, tgt.z0, source_batch.dim(0), cfg.gaussian_perturb, bridge_s, bridge_t);

        if (cfg.bridge_source()) {
            const DomainLoss ls = domain_bridging_loss(src.z1, src.z2, dom.samples_for_source, cfg.stages);
            record_stage(ls.stage1, rep.Ls1, rep.Ls1_enabled, rep.s1, rep.clamp_hits);
            if (ls.stage2) record_stage(*ls.stage2, rep.Ls2, rep.Ls2_enabled, rep.s2, rep.clamp_hits);
            j = add(j, scale(ls.total, static_cast<Real>(cfg.w_s)));
        }
        if (cfg.bridge_target()) {
            const DomainLoss lt = domain_bridging_loss(tgt.z1, tgt.z2, dom.samples_for_target, cfg.stages);
            record_stage(lt.stage1, rep.Lt1, rep.Lt1_enabled, rep.t1, rep.clamp_hits);
            if (lt.stage2) record_stage(*lt.stage2, rep.Lt2, rep.Lt2_enabled, rep.t2, rep.clamp_hits);
            j = add(j, scale(lt.total, static_cast<Real>(cfg.w_t)));
        }
    }
    rep.J = j.item();
    opt.step(params, backward(j), lr);
    return rep;
}

FitResult fit(const EpochSet& source, const EpochSet& target, const TrainConfig& cfg, std::uint64_t task,
              std::uint64_t fold, const std::function<void(const LossReport&)>& on_epoch) {
    cfg.validate();
    if (source.electrodes != target.electrodes || source.time_points != target.time_points)
        throw std::invalid_argument("fit: source and target trial shapes differ");
    const std::size_t b = cfg.batch_size;
    if (source.size() < b || target.size() < b)
        throw std::invalid_argument("fit: each domain needs at least one full batch of " + std::to_string(b));

    ModelDims dims{source.electrodes, source.time_points, source.class_count};
    Rng init_rng = derive_rng(cfg.seed, {task, fold, kInit});
    FitResult out{ModelParams::init(dims, init_rng()), {}, {}};
    Optimizer opt(cfg);

    BatchStream src_stream(source.size(), b), tgt_stream(target.size(), b);
    const std::size_t steps_per_epoch = std::max(src_stream.full_batches(), tgt_stream.full_batches());
    const auto& src_labels = source.labels();

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        Rng src_order = derive_rng(cfg.seed, {task, fold, epoch, kSourceOrder});
        Rng tgt_order = derive_rng(cfg.seed, {task, fold, epoch, kTargetOrder});
        src_stream.reshuffle(src_order);
        tgt_stream.reshuffle(tgt_order);

        std::vector<LossReport> epoch_steps;
        epoch_steps.reserve(steps_per_epoch);
        for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
            const auto si = src_stream.next(src_order);
            const auto ti = tgt_stream.next(tgt_order);
            std::vector<std::uint32_t> labels(si.size());
            for (std::size_t k = 0; k < si.size(); ++k) labels[k] = src_labels[si[k]];
            const Tensor xs = make_batch(source, si);
            const Tensor xt = cfg.bridge_active() ? make_batch(target, ti) : Tensor();
            LossReport rep = train_step(xs, labels, xt, out.params, opt, cfg, lr, {cfg.seed, task, fold, step});
            rep.epoch = epoch;
            epoch_steps.push_back(rep);
        }
        out.steps.insert(out.steps.end(), epoch_steps.begin(), epoch_steps.end());
        out.epochs.push_back(epoch_mean(epoch_steps, epoch));
        if (on_epoch) on_epoch(out.epochs.back());
    }
    return out;
}

std::vector<std::uint32_t> predict(ModelParams& params, const EpochSet& set, std::size_t batch) {
    std::vector<std::uint32_t> out;
    out.reserve(set.size());
    Rng unused(0);
    for (std::size_t lo = 0; lo < set.size(); lo += batch) {
        const std::size_t hi = std::min(set.size(), lo + batch);
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        const auto act = model_forward(make_batch(set, idx), params, Mode::eval, unused);
        const std::size_t c = act.logits.dim(1);
        auto z = act.logits.data();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const Real* row = z.data() + i * c;
            out.push_back(static_cast<std::uint32_t>(std::max_element(row, row + c) - row));
        }
    }
    return out;
}

double evaluate(ModelParams& params, const EpochSet& set) {
    if (set.size() == 0) throw std::invalid_argument("evaluate: empty set");
    const auto pred = predict(params, set);
    const auto& labels = set.labels();
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

TaskResult run_sts_task(const EpochSet& source_in, const EpochSet& target_in, const TrainConfig& cfg,
                        std::uint64_t task, std::vector<ModelParams>* fold_params) {
    cfg.validate();
    if (source_in.electrodes != target_in.electrodes)
        throw std::invalid_argument("run_sts_task: electrode counts differ (" + std::to_string(source_in.electrodes) +
                                    " vs " + std::to_string(target_in.electrodes) + ")");
    if (source_in.class_count != target_in.class_count)
        throw std::invalid_argument("run_sts_task: class counts differ");
    if (source_in.time_points != target_in.time_points)
        throw std::invalid_argument("run_sts_task: trial lengths differ");

    const auto t0 = std::chrono::steady_clock::now();
    const EpochSet source = cfg.zscore ? zscore_normalize(source_in) : source_in;
    const EpochSet target = cfg.zscore ? zscore_normalize(target_in) : target_in;

    TaskResult res;
    res.source_subject = source.subject_id;
    res.target_subject = target.subject_id;
    std::vector<Fold> folds;
    if (cfg.folds == 1) {
        // Transductive: adapt to every target trial (unlabeled), then score them all.
        Fold all;
        all.train.resize(target.size());
        std::iota(all.train.begin(), all.train.end(), std::size_t{0});
        all.test = all.train;
        folds.push_back(std::move(all));
    } else {
        folds = kfold_split(target, cfg.folds, derive_rng(cfg.seed, {task, 0xf01d})());
    }

    EpochSet sealed = target;
    sealed.seal_labels();
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const EpochSet unlabeled = sealed.subset(folds[f].train);
        FitResult fr = fit(source, unlabeled, cfg, task, f);
        const EpochSet held_out = target.subset(folds[f].test);
        res.fold_accuracies.push_back(evaluate(fr.params, held_out));
        res.epoch_reports.push_back(std::move(fr.epochs));
        res.step_reports.push_back(std::move(fr.steps));
        if (fold_params) fold_params->push_back(std::move(fr.params));
    }
    res.mean_accuracy = std::accumulate(res.fold_accuracies.begin(), res.fold_accuracies.end(), 0.0) /
                        static_cast<double>(res.fold_accuracies.size());
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace bdan
