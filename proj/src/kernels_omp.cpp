#include <algorithm>
#include <vector>

#include "bdan/kernels.hpp"
#include "conv_planes.hpp"

namespace bdan::kernels::omp {

namespace {

template <class BlockFn>
Real blocked_reduce(std::size_t n, BlockFn&& block) {
    const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<Real> partial(blocks, Real(0));
    const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < nb; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t hi = std::min(n, lo + kReduceBlock);
        partial[static_cast<std::size_t>(b)] = block(lo, hi);
    }
    Real total = 0;
    for (Real p : partial) total += p;
    return total;
}

}  // namespace

Real sum(std::span<const Real> x) {
    return blocked_reduce(x.size(), [&](std::size_t lo, std::size_t hi) {
        Real acc = 0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i];
        return acc;
    });
}

Real sq_sum(std::span<const Real> x) {
    return blocked_reduce(x.size(), [&](std::size_t lo, std::size_t hi) {
        Real acc = 0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i] * x[i];
        return acc;
    });
}

Real dot(std::span<const Real> x, std::span<const Real> y) {
    return blocked_reduce(std::min(x.size(), y.size()), [&](std::size_t lo, std::size_t hi) {
        Real acc = 0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i] * y[i];
        return acc;
    });
}

Real pairwise_sq_dist_sum(const Real* a, std::size_t rows_a, const Real* b, std::size_t rows_b,
                          std::size_t cols) {
    std::vector<Real> per_row(rows_a, Real(0));
    const auto na = static_cast<std::ptrdiff_t>(rows_a);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < na; ++i) {
        const Real* ar = a + static_cast<std::size_t>(i) * cols;
        Real acc = 0;
        for (std::size_t j = 0; j < rows_b; ++j) {
            const Real* br = b + j * cols;
            for (std::size_t k = 0; k < cols; ++k) {
                const Real d = ar[k] - br[k];
                acc += d * d;
            }
        }
        per_row[static_cast<std::size_t>(i)] = acc;
    }
    Real total = 0;
    for (Real v : per_row) total += v;
    return total;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        // One output row per iteration; same accumulation order as the serial kernel.
        const auto ui = static_cast<std::size_t>(i);
        Real* crow = c + ui * n;
        if (!accumulate) std::fill(crow, crow + n, Real(0));
        if (!trans_b) {
            for (std::size_t p = 0; p < k; ++p) {
                const Real av = trans_a ? a[p * m + ui] : a[ui * k + p];
                const Real* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                const Real* brow = b + j * k;
                Real acc = 0;
                for (std::size_t p = 0; p < k; ++p)
                    acc += (trans_a ? a[p * m + ui] : a[ui * k + p]) * brow[p];
                crow[j] += acc;
            }
        }
    }
}

void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out) {
    const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
    {
        detail::ConvScratch scratch;
#pragma omp for schedule(static)
        for (std::ptrdiff_t s = 0; s < batch; ++s)
            detail::conv2d_forward_sample(g, static_cast<std::size_t>(s), in, weight, bias, out, scratch);
    }
}

void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in) {
    const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
    {
        detail::ConvScratch scratch;
#pragma omp for schedule(static)
        for (std::ptrdiff_t s = 0; s < batch; ++s)
            detail::conv2d_backward_input_sample(g, static_cast<std::size_t>(s), grad_out, weight, grad_in,
                                                 scratch);
    }
}

void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias) {
    // Per-sample partials, then summed in sample order like the serial kernel.
    const std::size_t wsize = g.out_channels * g.in_channels * g.kernel_rows * g.kernel_cols;
    std::vector<std::vector<Real>> pw(g.batch, std::vector<Real>(wsize));
    std::vector<std::vector<Real>> pb(g.batch, std::vector<Real>(g.out_channels));
    const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
    {
        detail::ConvScratch scratch;
#pragma omp for schedule(static)
        for (std::ptrdiff_t s = 0; s < batch; ++s) {
            const auto us = static_cast<std::size_t>(s);
            detail::conv2d_backward_weight_sample(g, us, grad_out, in, pw[us].data(), pb[us].data(), scratch);
        }
    }
    for (std::size_t s = 0; s < g.batch; ++s) {
        detail::accumulate(pw[s], grad_weight);
        if (grad_bias) detail::accumulate(pb[s], grad_bias);
    }
}

}  // namespace bdan::kernels::omp
