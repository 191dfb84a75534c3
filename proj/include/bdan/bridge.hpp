#pragma once

#include <cstddef>
#include <optional>

#include "bdan/random.hpp"
#include "bdan/tensor.hpp"

namespace bdan {

inline constexpr Real kExponentClamp = 50;
inline constexpr Real kDenominatorFloor = Real(1e-8);

/// A feature tensor (n, f, e, p) rearranged electrode-first: base is
/// (e, n, f*p) and expanded is the same data as (1, e, n, f*p).
struct ElectrodeView {
    Tensor base;
    Tensor expanded;
};

ElectrodeView to_electrode_view(const Tensor& z);

/// Per-(f, e, p) sample mean of each domain, blended with weights
/// n_s / (n_s + n_t) and n_t / (n_s + n_t). Constant-marked.
Tensor global_mean(const Tensor& source_z0, const Tensor& target_z0);

/// Population standard deviation over all elements (stop-gradient).
Real feature_std(const Tensor& z);

/// n_g rows of mean + sigma_w * sigma_g * N(0, 1), constant-marked.
Tensor generate_bridging(const Tensor& mean, Real sigma_g, Real sigma_w, std::size_t n_g, Rng& rng);

struct BridgingDomain {
    Tensor mean;  // (f, e, p)
    Real sigma_g = 0;
    Real sigma_s = 0;
    Real sigma_t = 0;
    Tensor samples_for_source;  // (n_g, f, e, p), perturbed with w_G = sigma_s
    Tensor samples_for_target;  // (n_g, f, e, p), perturbed with w_G = sigma_t
    std::size_t n_g = 0;
};

/// With `perturb` off every sigma is forced to zero and both sample sets
/// equal the replicated mean.
BridgingDomain build_bridging_domain(const Tensor& source_z0, const Tensor& target_z0, std::size_t n_g, bool perturb,
                                     Rng& source_rng, Rng& target_rng);

/// Reference Lambda statistic by explicit traversal of all electrode pairs:
/// sum_{e1, e2, i, k} (a[e1, i, k] - b[0, e2, i, k])^2.
/// `b` may be given expanded (1, e, n, t) or as a base (e, n, t).
Real lambda_naive(const Tensor& a, const Tensor& b);

/// Same statistic from squared norms and a Gram sum:
/// e_b * ||a||^2 + e_a * ||b||^2 - 2 * sum_{e1, e2} <a[e1], b[e2]>. Differentiable.
Tensor lambda_fast(const Tensor& a, const Tensor& b);

struct PairDistanceStat {
    Real lambda_aa = 0;
    Real lambda_gg = 0;
    Real lambda_ag = 0;
    Real bracket = 0;
    Real denom = 0;
    Real loss = 0;
    bool clamped = false;
    Tensor loss_tensor;  // differentiable w.r.t. the stage features only
};

/// exp(clamp((L_aa + L_gg - 2 L_ag) / Md(z_stage + z_g), -50, 50)).
/// Requires z_stage and z_g to have identical shapes.
PairDistanceStat stage_loss(const Tensor& z_stage, const Tensor& z_g);

struct DomainLoss {
    Tensor total;
    PairDistanceStat stage1;
    std::optional<PairDistanceStat> stage2;
};

/// stage_loss(z1, z_g) + stage_loss(z2, z_g); `stages == 1` keeps the first term only.
DomainLoss domain_bridging_loss(const Tensor& z1, const Tensor& z2, const Tensor& z_g, int stages = 2);

}  // namespace bdan
