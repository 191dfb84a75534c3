#pragma once

// Oracles shared by the unit tests and the acceptance runner.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bdan/bridge.hpp"
#include "bdan/data_io.hpp"
#include "bdan/model.hpp"
#include "bdan/tensor.hpp"

namespace bdan::testing {

Tensor random_tensor(const Shape& shape, Rng& rng, Real lo = -1, Real hi = 1, bool requires_grad = false);

/// Same as random_tensor but every element keeps |x - k| >= margin for each kink k.
Tensor random_away_from(const Shape& shape, Rng& rng, const std::vector<Real>& kinks, Real margin, Real lo = -1,
                        Real hi = 1);

Shape random_shape(Rng& rng, std::size_t rank, std::size_t max_dim);

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Max over all input elements of |analytic - numeric| / max(1, |analytic|, |numeric|), with central
/// differences at h = cbrt(eps) * max(1, |x|). `numeric_fn` defaults to `fn`.
double gradient_error(const ScalarFn& fn, const std::vector<Tensor>& inputs, const ScalarFn& numeric_fn = {});

/// Contracts every element of `y` with fixed random weights so a vector-valued op becomes a scalar test function.
Tensor contract(const Tensor& y, std::uint64_t weight_seed);

struct PrimitiveReport {
    std::string name;
    std::size_t instances = 0;
    double max_error = 0;
};

/// Gradient checks for every differentiable primitive and the composed stage loss.
std::vector<PrimitiveReport> gradient_suite(std::size_t instances, std::uint64_t seed);

/// Stage loss evaluated from the hand formula (explicit electrode-pair loops) with a caller-fixed denominator.
Real stage_loss_oracle(const Tensor& z_stage, const Tensor& z_g, Real denom);

/// Explicit 4-deep loop over the Lambda definition.
double lambda_loops(const Tensor& a_base, const Tensor& b_base);

struct LambdaAgreement {
    std::size_t instances = 0;
    double max_rel = 0;
    bool canonical_ok = false;
};

/// Random (e <= 8, n <= 6, t <= 10) instances comparing lambda_fast with lambda_naive.
LambdaAgreement lambda_agreement(std::size_t instances, std::uint64_t seed);

/// Random labeled set with contiguous sessions.
EpochSet random_epoch_set(Rng& rng, std::size_t max_n = 12, std::size_t max_e = 5, std::size_t max_t = 16);

/// Two-subject drift pair used by the adaptation acceptance check.
struct SubjectPair {
    EpochSet source, target;
};
SubjectPair drift_pair(double gain_step, std::size_t time_points, std::uint64_t seed);

}  // namespace bdan::testing
