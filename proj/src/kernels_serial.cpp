#include <algorithm>
#include <atomic>

#include "bdan/kernels.hpp"
#include <vector>

#include "conv_planes.hpp"

namespace bdan::kernels {

namespace {
std::atomic<Exec> g_execution{Exec::serial};
}

Exec execution() { return g_execution.load(std::memory_order_relaxed); }

void set_execution(Exec mode) { g_execution.store(mode, std::memory_order_relaxed); }

bool parallel_available() {
#ifdef BDAN_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

namespace serial {

Real sum(std::span<const Real> x) {
    Real acc = 0;
    for (Real v : x) acc += v;
    return acc;
}

Real sq_sum(std::span<const Real> x) {
    Real acc = 0;
    for (Real v : x) acc += v * v;
    return acc;
}

Real dot(std::span<const Real> x, std::span<const Real> y) {
    Real acc = 0;
    const std::size_t n = std::min(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

Real pairwise_sq_dist_sum(const Real* a, std::size_t rows_a, const Real* b, std::size_t rows_b,
                          std::size_t cols) {
    Real total = 0;
    for (std::size_t i = 0; i < rows_a; ++i) {
        const Real* ar = a + i * cols;
        for (std::size_t j = 0; j < rows_b; ++j) {
            const Real* br = b + j * cols;
            for (std::size_t k = 0; k < cols; ++k) {
                const Real d = ar[k] - br[k];
                total += d * d;
            }
        }
    }
    return total;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, Real(0));
        if (!trans_b) {
            for (std::size_t p = 0; p < k; ++p) {
                const Real av = trans_a ? a[p * m + i] : a[i * k + p];
                const Real* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                const Real* brow = b + j * k;
                Real acc = 0;
                if (!trans_a) {
                    const Real* arow = a + i * k;
                    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                } else {
                    for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
                }
                crow[j] += acc;
            }
        }
    }
}

// The per-(sample, filter) bodies are shared with the OpenMP variant so both
// flavours accumulate in the same order for a given output element.

void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out) {
    detail::ConvScratch scratch;
    for (std::size_t s = 0; s < g.batch; ++s) detail::conv2d_forward_sample(g, s, in, weight, bias, out, scratch);
}

void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in) {
    detail::ConvScratch scratch;
    for (std::size_t s = 0; s < g.batch; ++s)
        detail::conv2d_backward_input_sample(g, s, grad_out, weight, grad_in, scratch);
}

void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias) {
    detail::ConvScratch scratch;
    std::vector<Real> partial_w(g.out_channels * g.in_channels * g.kernel_rows * g.kernel_cols);
    std::vector<Real> partial_b(g.out_channels);
    for (std::size_t s = 0; s < g.batch; ++s) {
        detail::conv2d_backward_weight_sample(g, s, grad_out, in, partial_w.data(), partial_b.data(), scratch);
        detail::accumulate(partial_w, grad_weight);
        if (grad_bias) detail::accumulate(partial_b, grad_bias);
    }
}

}  // namespace serial

Real sum(std::span<const Real> x) {
    return execution() == Exec::parallel ? omp::sum(x) : serial::sum(x);
}
Real sq_sum(std::span<const Real> x) {
    return execution() == Exec::parallel ? omp::sq_sum(x) : serial::sq_sum(x);
}
Real dot(std::span<const Real> x, std::span<const Real> y) {
    return execution() == Exec::parallel ? omp::dot(x, y) : serial::dot(x, y);
}
Real pairwise_sq_dist_sum(const Real* a, std::size_t rows_a, const Real* b, std::size_t rows_b,
                          std::size_t cols) {
    return execution() == Exec::parallel ? omp::pairwise_sq_dist_sum(a, rows_a, b, rows_b, cols)
                                         : serial::pairwise_sq_dist_sum(a, rows_a, b, rows_b, cols);
}
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate) {
    if (execution() == Exec::parallel)
        omp::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
    else
        serial::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out) {
    if (execution() == Exec::parallel)
        omp::conv2d_forward(g, in, weight, bias, out);
    else
        serial::conv2d_forward(g, in, weight, bias, out);
}
void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in) {
    if (execution() == Exec::parallel)
        omp::conv2d_backward_input(g, grad_out, weight, grad_in);
    else
        serial::conv2d_backward_input(g, grad_out, weight, grad_in);
}
void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias) {
    if (execution() == Exec::parallel)
        omp::conv2d_backward_weight(g, grad_out, in, grad_weight, grad_bias);
    else
        serial::conv2d_backward_weight(g, grad_out, in, grad_weight, grad_bias);
}

}  // namespace bdan::kernels
