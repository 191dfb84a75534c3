#include <gtest/gtest.h>

#include <cmath>

#include "bdan/kernels.hpp"
#include "checks.hpp"

using namespace bdan;
namespace k = bdan::kernels;

namespace {

std::vector<Real> random_vec(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<Real> u(-1, 1);
    std::vector<Real> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

k::ConvGeometry random_geometry(Rng& rng, bool same) {
    k::ConvGeometry g;
    g.batch = 1 + rng() % 3;
    g.in_channels = 1 + rng() % 4;
    g.out_channels = 1 + rng() % 5;
    g.kernel_rows = same ? 3 : 1 + rng() % 2;
    g.kernel_cols = same ? 1 : 1 + rng() % 6;
    g.pad_rows = same ? 1 : 0;
    g.in_rows = (same ? 1 : g.kernel_rows) + rng() % 6;
    g.in_cols = g.kernel_cols + rng() % 20;
    return g;
}

std::size_t in_size(const k::ConvGeometry& g) { return g.batch * g.in_channels * g.in_rows * g.in_cols; }
std::size_t out_size(const k::ConvGeometry& g) { return g.batch * g.out_channels * g.out_rows() * g.out_cols(); }
std::size_t w_size(const k::ConvGeometry& g) {
    return g.out_channels * g.in_channels * g.kernel_rows * g.kernel_cols;
}

double max_abs_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(static_cast<double>(a[i]) - b[i]));
    return d;
}

}  // namespace

TEST(Reductions, OmpMatchesSerial) {
    Rng rng(1);
    for (std::size_t n : {1u, 7u, 4096u, 4097u, 50000u}) {
        const auto x = random_vec(n, rng), y = random_vec(n, rng);
        EXPECT_NEAR(k::omp::sum(x), k::serial::sum(x), 1e-12 * n);
        EXPECT_NEAR(k::omp::sq_sum(x), k::serial::sq_sum(x), 1e-12 * n);
        EXPECT_NEAR(k::omp::dot(x, y), k::serial::dot(x, y), 1e-12 * n);
    }
}

TEST(Reductions, OmpIsRepeatable) {
    Rng rng(2);
    const auto x = random_vec(123457, rng);
    EXPECT_EQ(k::omp::sum(x), k::omp::sum(x));
    EXPECT_EQ(k::omp::sq_sum(x), k::omp::sq_sum(x));
}

TEST(PairwiseDistance, MatchesLoopOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t ra = 1 + rng() % 6, rb = 1 + rng() % 6, cols = 1 + rng() % 30;
        const auto a = random_vec(ra * cols, rng), b = random_vec(rb * cols, rng);
        double s = 0;
        for (std::size_t i = 0; i < ra; ++i)
            for (std::size_t j = 0; j < rb; ++j)
                for (std::size_t c = 0; c < cols; ++c) {
                    const double d = a[i * cols + c] - b[j * cols + c];
                    s += d * d;
                }
        EXPECT_NEAR(k::serial::pairwise_sq_dist_sum(a.data(), ra, b.data(), rb, cols), s, 1e-12 * std::max(1.0, s));
        EXPECT_NEAR(k::omp::pairwise_sq_dist_sum(a.data(), ra, b.data(), rb, cols), s, 1e-12 * std::max(1.0, s));
    }
}

TEST(Gemm, MatchesLoopOracleAndOmpBitExactly) {
    Rng rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        const bool ta = rng() % 2, tb = rng() % 2, acc = rng() % 2;
        const std::size_t m = 1 + rng() % 9, n = 1 + rng() % 9, kk = 1 + rng() % 9;
        const auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng), c0 = random_vec(m * n, rng);
        std::vector<Real> expect = acc ? c0 : std::vector<Real>(m * n, 0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t p = 0; p < kk; ++p)
                    expect[i * n + j] += (ta ? a[p * m + i] : a[i * kk + p]) * (tb ? b[j * kk + p] : b[p * n + j]);
        auto cs = c0, co = c0;
        k::serial::gemm(ta, tb, m, n, kk, a.data(), b.data(), cs.data(), acc);
        k::omp::gemm(ta, tb, m, n, kk, a.data(), b.data(), co.data(), acc);
        EXPECT_LE(max_abs_diff(cs, expect), 1e-12);
        EXPECT_EQ(cs, co);
    }
}

class ConvPaths : public ::testing::TestWithParam<bool> {};

TEST_P(ConvPaths, ForwardMatchesReferenceAndOmp) {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const auto g = random_geometry(rng, GetParam());
        const auto x = random_vec(in_size(g), rng), w = random_vec(w_size(g), rng), b = random_vec(g.out_channels, rng);
        std::vector<Real> ys(out_size(g)), yo(out_size(g)), yr(out_size(g));
        k::serial::conv2d_forward(g, x.data(), w.data(), b.data(), ys.data());
        k::omp::conv2d_forward(g, x.data(), w.data(), b.data(), yo.data());
        k::reference::conv2d_forward(g, x.data(), w.data(), b.data(), yr.data());
        EXPECT_EQ(ys, yo);
        EXPECT_LE(max_abs_diff(ys, yr), 1e-12);
    }
}

TEST_P(ConvPaths, BackwardMatchesReferenceAndOmp) {
    Rng rng(6);
    for (int trial = 0; trial < 40; ++trial) {
        const auto g = random_geometry(rng, GetParam());
        const auto x = random_vec(in_size(g), rng), w = random_vec(w_size(g), rng);
        const auto gy = random_vec(out_size(g), rng);
        std::vector<Real> gxs(in_size(g), 0), gxo(in_size(g), 0), gxr(in_size(g), 0);
        k::serial::conv2d_backward_input(g, gy.data(), w.data(), gxs.data());
        k::omp::conv2d_backward_input(g, gy.data(), w.data(), gxo.data());
        k::reference::conv2d_backward_input(g, gy.data(), w.data(), gxr.data());
        EXPECT_EQ(gxs, gxo);
        EXPECT_LE(max_abs_diff(gxs, gxr), 1e-12);

        std::vector<Real> gws(w_size(g), 0), gwo(w_size(g), 0), gwr(w_size(g), 0);
        std::vector<Real> gbs(g.out_channels, 0), gbo(g.out_channels, 0), gbr(g.out_channels, 0);
        k::serial::conv2d_backward_weight(g, gy.data(), x.data(), gws.data(), gbs.data());
        k::omp::conv2d_backward_weight(g, gy.data(), x.data(), gwo.data(), gbo.data());
        k::reference::conv2d_backward_weight(g, gy.data(), x.data(), gwr.data(), gbr.data());
        EXPECT_EQ(gws, gwo);
        EXPECT_EQ(gbs, gbo);
        EXPECT_LE(max_abs_diff(gws, gwr), 1e-11);
        EXPECT_LE(max_abs_diff(gbs, gbr), 1e-11);
    }
}

INSTANTIATE_TEST_SUITE_P(Padding, ConvPaths, ::testing::Values(false, true));

TEST(ConvReference, MatchesDefinition) {
    // Direct evaluation of the cross-correlation sum with zero padding on rows.
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = random_geometry(rng, trial % 2);
        const auto x = random_vec(in_size(g), rng), w = random_vec(w_size(g), rng), b = random_vec(g.out_channels, rng);
        std::vector<Real> y(out_size(g));
        k::reference::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
        const std::size_t oh = g.out_rows(), ow = g.out_cols();
        for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t o = 0; o < g.out_channels; ++o)
                for (std::size_t r = 0; r < oh; ++r)
                    for (std::size_t c = 0; c < ow; ++c) {
                        double s = b[o];
                        for (std::size_t i = 0; i < g.in_channels; ++i)
                            for (std::size_t kr = 0; kr < g.kernel_rows; ++kr)
                                for (std::size_t kc = 0; kc < g.kernel_cols; ++kc) {
                                    const long row = static_cast<long>(r + kr) - static_cast<long>(g.pad_rows);
                                    if (row < 0 || row >= static_cast<long>(g.in_rows)) continue;
                                    s += w[((o * g.in_channels + i) * g.kernel_rows + kr) * g.kernel_cols + kc] *
                                         x[((n * g.in_channels + i) * g.in_rows + row) * g.in_cols + c + kc];
                                }
                        EXPECT_NEAR(y[((n * g.out_channels + o) * oh + r) * ow + c], s, 1e-12);
                    }
    }
}

TEST(Dispatch, ScopedExecutionRestores) {
    const auto before = k::execution();
    {
        k::ScopedExecution s(k::Exec::parallel);
        EXPECT_EQ(k::execution(), k::Exec::parallel);
    }
    EXPECT_EQ(k::execution(), before);
}

TEST(Dispatch, ModelForwardIdenticalUnderBothModes) {
    ModelParams p = ModelParams::init({4, 120, 2}, 3);
    Rng rng(8);
    const Tensor x = bdan::testing::random_tensor({3, 1, 4, 120}, rng);
    Rng r1(1), r2(1);
    const auto serial_out = model_forward(x, p, Mode::eval, r1).logits.to_vector();
    k::ScopedExecution s(k::Exec::parallel);
    EXPECT_EQ(model_forward(x, p, Mode::eval, r2).logits.to_vector(), serial_out);
}
