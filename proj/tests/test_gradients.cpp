#include <gtest/gtest.h>

#include <set>

#include "checks.hpp"

using namespace bdan;

namespace {

constexpr double kTolerance = sizeof(Real) == 8 ? 1e-6 : 1e-4;

class GradientSuite : public ::testing::Test {
protected:
    static void SetUpTestSuite() { reports_ = new auto(bdan::testing::gradient_suite(50, 2024)); }
    static void TearDownTestSuite() {
        delete reports_;
        reports_ = nullptr;
    }
    static const std::vector<bdan::testing::PrimitiveReport>* reports_;
};

const std::vector<bdan::testing::PrimitiveReport>* GradientSuite::reports_ = nullptr;

}  // namespace

TEST_F(GradientSuite, EveryPrimitiveWithinTolerance) {
    ASSERT_FALSE(reports_->empty());
    for (const auto& r : *reports_) {
        EXPECT_GE(r.instances, 50u) << r.name;
        EXPECT_LE(r.max_error, kTolerance) << r.name;
    }
}

TEST_F(GradientSuite, CoversTheLayerSet) {
    std::set<std::string> names;
    for (const auto& r : *reports_) names.insert(r.name);
    for (const char* want : {"permute", "reshape", "expand", "broadcast_sub", "reduce_std", "gram_sum",
                             "conv2d_valid", "conv2d_same", "batch_norm_train", "avg_pool_time", "dropout",
                             "linear_lastdim", "linear_flat", "cross_entropy", "heads_forward", "stage_loss"})
        EXPECT_TRUE(names.count(want)) << want;
}

TEST(GradientCheck, DetectsAWrongGradient) {
    // A function whose numeric side differs from the analytic side must be flagged.
    const Tensor x = Tensor::from({3}, {0.5, -1, 2});
    const double err = bdan::testing::gradient_error(
        [](const std::vector<Tensor>& v) { return sq_sum(v[0]); }, {x},
        [](const std::vector<Tensor>& v) { return scale(sq_sum(v[0]), Real(1.5)); });
    EXPECT_GT(err, 0.1);
}

TEST(StageLossGradient, NoGradientReachesBridgingSamples) {
    Rng rng(3);
    const Tensor z = bdan::testing::random_tensor({2, 1, 3, 2}, rng, 1, 2, true);
    const Tensor zg = bdan::testing::random_tensor({2, 1, 3, 2}, rng, 1, 2, true);
    const Gradients g = backward(stage_loss(z, zg).loss_tensor);
    EXPECT_TRUE(g.contains(z));
    EXPECT_FALSE(g.contains(zg));
}

TEST(StageLossGradient, FrozenMedianOracleMatchesValue) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor zg = bdan::testing::random_tensor({2, 2, 2, 2}, rng, 1, 2);
        const Tensor z = add(zg, bdan::testing::random_tensor({2, 2, 2, 2}, rng, Real(-0.1), Real(0.1)));
        const PairDistanceStat st = stage_loss(z, zg);
        EXPECT_NEAR(st.loss, bdan::testing::stage_loss_oracle(z, zg, st.denom), 1e-12);
    }
}
