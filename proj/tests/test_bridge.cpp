#include <gtest/gtest.h>

#include <cmath>

#include "checks.hpp"

using namespace bdan;
using bdan::testing::lambda_loops;
using bdan::testing::random_tensor;

TEST(GlobalMean, EqualWeightBlend) {
    const Tensor m = global_mean(Tensor::full({2, 3, 4, 5}, 1), Tensor::full({2, 3, 4, 5}, 3));
    EXPECT_EQ(m.shape(), (Shape{3, 4, 5}));
    for (Real v : m.data()) EXPECT_EQ(v, 2);
}

TEST(GlobalMean, WeightedBlend) {
    const Tensor m = global_mean(Tensor::full({3, 1, 2, 2}, 1), Tensor::full({1, 1, 2, 2}, 5));
    for (Real v : m.data()) EXPECT_EQ(v, 2);
}

TEST(GlobalMean, SameDomainsGiveTheirMean) {
    Rng rng(1);
    const Tensor z = random_tensor({4, 2, 3, 2}, rng);
    const Tensor m = global_mean(z, z);
    for (std::size_t k = 0; k < 12; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < 4; ++i) s += z.data()[i * 12 + k];
        EXPECT_NEAR(m.data()[k], s / 4, 1e-15);
    }
    EXPECT_THROW(global_mean(z, Tensor::zeros({4, 2, 3, 3})), std::invalid_argument);
}

TEST(FeatureStd, Examples) {
    EXPECT_EQ(feature_std(Tensor::full({5}, 3)), 0);
    EXPECT_EQ(feature_std(Tensor::from({2}, {1, 3})), 1);
    EXPECT_THROW(feature_std(Tensor::scalar(1)), std::invalid_argument);
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor z = random_tensor({3, 4, 5}, rng, -5, 9);
        double mean = 0;
        for (Real v : z.data()) mean += v;
        mean /= z.size();
        double var = 0;
        for (Real v : z.data()) var += (v - mean) * (v - mean);
        const double two_pass = std::sqrt(var / z.size());
        EXPECT_NEAR(feature_std(z), two_pass, 1e-12 * two_pass);
    }
}

TEST(Generator, ZeroPerturbationReplicatesMean) {
    Rng rng(3);
    const Tensor mean = random_tensor({2, 3, 4}, rng);
    const Tensor g = generate_bridging(mean, 1.7, 0, 6, rng);
    EXPECT_EQ(g.shape(), (Shape{6, 2, 3, 4}));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t k = 0; k < mean.size(); ++k) EXPECT_EQ(g.data()[i * 24 + k], mean.data()[k]);
    EXPECT_FALSE(g.requires_grad());
}

TEST(Generator, MonteCarloMean) {
    Rng rng(4);
    const Tensor mean = random_tensor({2, 4, 5}, rng, -3, 3);
    const std::size_t n = 10000, m = mean.size();
    const Tensor g = generate_bridging(mean, 2, 0.5, n, rng);
    std::size_t within = 0;
    for (std::size_t k = 0; k < m; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += g.data()[i * m + k];
        within += std::abs(s / n - mean.data()[k]) <= 0.05;
    }
    EXPECT_GE(within, static_cast<std::size_t>(std::ceil(0.99 * m)));
}

TEST(Generator, SeedDeterminism) {
    const Tensor mean = Tensor::zeros({3, 2, 2});
    Rng a(9), b(9);
    EXPECT_EQ(generate_bridging(mean, 1, 1, 5, a).to_vector(), generate_bridging(mean, 1, 1, 5, b).to_vector());
}

TEST(BridgingDomain, PerturbOffForcesZeroSigmas) {
    Rng rng(5), s1(1), s2(2);
    const Tensor zs = random_tensor({4, 2, 3, 2}, rng), zt = random_tensor({4, 2, 3, 2}, rng);
    const BridgingDomain d = build_bridging_domain(zs, zt, 4, false, s1, s2);
    EXPECT_EQ(d.sigma_g, 0);
    EXPECT_EQ(d.sigma_s, 0);
    EXPECT_EQ(d.sigma_t, 0);
    EXPECT_EQ(d.samples_for_source.shape(), (Shape{4, 2, 3, 2}));
    EXPECT_EQ(d.samples_for_source.to_vector(), d.samples_for_target.to_vector());

    Rng s3(1), s4(2);
    const BridgingDomain on = build_bridging_domain(zs, zt, 4, true, s3, s4);
    EXPECT_GT(on.sigma_s, 0);
    EXPECT_NEAR(on.sigma_s, feature_std(zs), 0);
    EXPECT_NE(on.samples_for_source.to_vector(), on.samples_for_target.to_vector());
}

TEST(ElectrodeView, Shapes) {
    Rng rng(6);
    const ElectrodeView v = to_electrode_view(random_tensor({2, 3, 4, 5}, rng));
    EXPECT_EQ(v.base.shape(), (Shape{4, 2, 15}));
    EXPECT_EQ(v.expanded.shape(), (Shape{1, 4, 2, 15}));
    const ElectrodeView one = to_electrode_view(Tensor::from({1, 1, 1, 1}, {7}));
    EXPECT_EQ(one.base.shape(), (Shape{1, 1, 1}));
    EXPECT_EQ(one.base.item(), 7);
}

TEST(ElectrodeView, PreservesElements) {
    Rng rng(7);
    const Tensor z = random_tensor({3, 2, 4, 2}, rng);
    auto a = z.to_vector(), b = to_electrode_view(z).base.to_vector();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
}

TEST(Lambda, CanonicalFixture) {
    const Tensor a = Tensor::from({2, 1, 1}, {1, 3});
    EXPECT_EQ(lambda_naive(a, expand(a)), 8);
    EXPECT_EQ(lambda_fast(a, expand(a)).item(), 8);
}

TEST(Lambda, DegenerateCases) {
    Rng rng(8);
    const Tensor a = random_tensor({1, 3, 4}, rng);
    EXPECT_EQ(lambda_naive(a, expand(a)), 0);
    const Tensor b = random_tensor({5, 3, 4}, rng);
    const double expect = 5 * sq_sum(b).item();
    EXPECT_NEAR(lambda_fast(b, expand(Tensor::zeros({5, 3, 4}))).item(), expect, 1e-12 * expect);
    EXPECT_THROW(lambda_naive(b, expand(Tensor::zeros({5, 3, 5}))), std::invalid_argument);
    EXPECT_THROW(lambda_fast(b, expand(Tensor::zeros({5, 2, 4}))), std::invalid_argument);
}

TEST(Lambda, NaiveMatchesLoopOracle) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 4, t = 1 + rng() % 5;
        const Tensor a = random_tensor({1 + rng() % 5, n, t}, rng), b = random_tensor({1 + rng() % 5, n, t}, rng);
        const double oracle = lambda_loops(a, b);
        EXPECT_NEAR(lambda_naive(a, expand(b)), oracle, 1e-12 * std::max(1.0, oracle));
    }
}

TEST(Lambda, FastMatchesNaiveOnRandomInstances) {
    const auto r = bdan::testing::lambda_agreement(200, 11);
    EXPECT_TRUE(r.canonical_ok);
    EXPECT_LE(r.max_rel, 1e-12);
}

TEST(Lambda, SymmetryAndNonnegativity) {
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = random_tensor({4, 3, 2}, rng), b = random_tensor({4, 3, 2}, rng);
        const double ab = lambda_naive(a, expand(b)), ba = lambda_naive(b, expand(a));
        EXPECT_NEAR(ab, ba, 1e-12 * ab);
        EXPECT_NEAR(lambda_fast(a, expand(b)).item(), lambda_fast(b, expand(a)).item(), 1e-12 * ab);
        EXPECT_GE(ab, 0);
        EXPECT_GE(lambda_fast(a, expand(a)).item(), -1e-12);
    }
}

TEST(Lambda, TranslationInvariance) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = random_tensor({3, 2, 4}, rng), b = random_tensor({3, 2, 4}, rng);
        const Real c = std::uniform_real_distribution<Real>(-5, 5)(rng);
        const double base = lambda_naive(a, expand(b));
        EXPECT_NEAR(lambda_naive(add_scalar(a, c), expand(add_scalar(b, c))), base, 1e-12 * std::max(1.0, base));
        EXPECT_NEAR(lambda_fast(add_scalar(a, c), expand(add_scalar(b, c))).item(), base, 1e-9 * std::max(1.0, base));
    }
}

TEST(StageLoss, IdentityFixedPoint) {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor z = random_tensor(bdan::testing::random_shape(rng, 4, 4), rng, -2, 2);
        const PairDistanceStat st = stage_loss(z, z);
        EXPECT_EQ(st.bracket, 0);
        EXPECT_EQ(st.loss, 1.0);
    }
    const Tensor single = Tensor::from({2, 1, 1, 3}, {1, 2, 3, 4, 5, 6});
    const PairDistanceStat st = stage_loss(single, single);
    EXPECT_EQ(st.lambda_aa, 0);
    EXPECT_EQ(st.loss, 1.0);
}

TEST(StageLoss, SmallHandInstance) {
    const Tensor z = Tensor::from({1, 1, 2, 1}, {1, 3});
    const Tensor g = Tensor::from({1, 1, 2, 1}, {2, 2});
    const PairDistanceStat st = stage_loss(z, g);
    EXPECT_EQ(st.lambda_aa, 8);
    EXPECT_EQ(st.lambda_gg, 0);
    EXPECT_EQ(st.lambda_ag, 4);
    EXPECT_EQ(st.bracket, 0);
    EXPECT_EQ(st.denom, 4);
    EXPECT_EQ(st.loss, 1);
}

TEST(StageLoss, BracketIsMinusTwiceSquaredElectrodeSumDifference) {
    // All-pairs Lambda algebra: bracket = -2 * || sum_e (A_e - G_e) ||^2.
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const Shape s = bdan::testing::random_shape(rng, 4, 3);
        const Tensor z = random_tensor(s, rng), g = random_tensor(s, rng);
        const PairDistanceStat st = stage_loss(z, g);
        const Tensor a = to_electrode_view(z).base, b = to_electrode_view(g).base;
        const std::size_t e = a.dim(0), m = a.size() / e;
        double sq = 0;
        for (std::size_t k = 0; k < m; ++k) {
            double d = 0;
            for (std::size_t el = 0; el < e; ++el) d += a.data()[el * m + k] - b.data()[el * m + k];
            sq += d * d;
        }
        EXPECT_NEAR(st.bracket, -2 * sq, 1e-10 * std::max(1.0, sq));
        EXPECT_LE(st.bracket, 1e-12);
        EXPECT_GT(st.loss, 0);
    }
}

TEST(StageLoss, MatchesHandOracle) {
    Rng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const Shape s = bdan::testing::random_shape(rng, 4, 3);
        const Tensor z = random_tensor(s, rng, -1, 3), g = random_tensor(s, rng, -1, 3);
        std::vector<Real> sum(z.size());
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = z.data()[i] + g.data()[i];
        std::sort(sum.begin(), sum.end());
        const std::size_t m = sum.size() / 2;
        Real md = sum.size() % 2 ? sum[m] : (sum[m - 1] + sum[m]) / 2;
        if (std::abs(md) < 1e-8) md = md < 0 ? Real(-1e-8) : Real(1e-8);
        const PairDistanceStat st = stage_loss(z, g);
        EXPECT_EQ(st.denom, md);
        const double oracle = bdan::testing::stage_loss_oracle(z, g, md);
        EXPECT_NEAR(st.loss, oracle, 1e-9 * std::max(1.0, oracle));
    }
}

TEST(StageLoss, ClampSaturation) {
    const Tensor z = Tensor::from({1, 1, 2, 1}, {10, 10});
    const Tensor g = Tensor::from({1, 1, 2, 1}, {0, 0});
    const PairDistanceStat st = stage_loss(z, g);
    EXPECT_TRUE(st.clamped);
    EXPECT_EQ(st.loss, std::exp(Real(-50)));
    const Tensor zl = z.as_leaf();
    const auto grad = backward(stage_loss(zl, g).loss_tensor).of(zl);
    ASSERT_TRUE(grad);
    for (Real v : grad->data()) EXPECT_EQ(v, 0);
}

TEST(StageLoss, ZeroMedianUsesFloor) {
    const Tensor z = Tensor::from({1, 1, 2, 1}, {1, -1});
    const Tensor g = Tensor::from({1, 1, 2, 1}, {0, 0});
    EXPECT_EQ(stage_loss(z, g).denom, Real(1e-8));
}

TEST(StageLoss, RejectsShapeMismatch) {
    EXPECT_THROW(stage_loss(Tensor::zeros({2, 1, 2, 1}), Tensor::zeros({3, 1, 2, 1})), std::invalid_argument);
    EXPECT_THROW(stage_loss(Tensor::zeros({2, 2, 1}), Tensor::zeros({2, 2, 1})), std::invalid_argument);
}

TEST(DomainLoss, IdenticalInputsGiveTwo) {
    Rng rng(15);
    const Tensor z = random_tensor({3, 2, 2, 2}, rng);
    EXPECT_EQ(domain_bridging_loss(z, z, z).total.item(), 2);
}

TEST(DomainLoss, StageOneOnly) {
    Rng rng(16);
    const Tensor z1 = random_tensor({3, 2, 2, 2}, rng, 1, 2), z2 = random_tensor({3, 2, 2, 2}, rng, 1, 2);
    const Tensor g = random_tensor({3, 2, 2, 2}, rng, 1, 2);
    const DomainLoss one = domain_bridging_loss(z1, z2, g, 1);
    EXPECT_FALSE(one.stage2.has_value());
    EXPECT_EQ(one.total.item(), stage_loss(z1, g).loss);
    const DomainLoss two = domain_bridging_loss(z1, z2, g, 2);
    EXPECT_EQ(two.total.item(), stage_loss(z1, g).loss + stage_loss(z2, g).loss);
    EXPECT_THROW(domain_bridging_loss(z1, z2, g, 3), std::invalid_argument);
}

TEST(DomainLoss, EqualStagesGiveEqualTerms) {
    Rng rng(17);
    const Tensor z = random_tensor({3, 2, 2, 2}, rng, 1, 2), g = random_tensor({3, 2, 2, 2}, rng, 1, 2);
    const DomainLoss d = domain_bridging_loss(z, z, g);
    EXPECT_EQ(d.stage1.loss, d.stage2->loss);
}
