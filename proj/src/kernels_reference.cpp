#include <algorithm>

#include "bdan/kernels.hpp"

// Direct convolution loops. Slow but simple; tests use them as the oracle for
// the GEMM-based kernels.

namespace bdan::kernels::reference {

namespace {

constexpr std::size_t kTile = 32;

std::ptrdiff_t source_row(const ConvGeometry& g, std::size_t y, std::size_t i) {
    return static_cast<std::ptrdiff_t>(y + i) - static_cast<std::ptrdiff_t>(g.pad_rows);
}

// acc[tt] += sum over (c, i, j) of w * in[row, t0 + tt + j]
template <bool Full>
void forward_tile(const ConvGeometry& g, std::size_t y, std::size_t t0, std::size_t len, const Real* src0,
                  const Real* w0, Real* __restrict out) {
    Real acc[kTile];
    std::copy(out, out + kTile, acc);
    const std::size_t plane_in = g.in_rows * g.in_cols, kk = g.kernel_rows * g.kernel_cols;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        const Real* src = src0 + c * plane_in;
        const Real* w = w0 + c * kk;
        for (std::size_t i = 0; i < g.kernel_rows; ++i) {
            const std::ptrdiff_t r = source_row(g, y, i);
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.in_rows)) continue;
            const Real* irow = src + static_cast<std::size_t>(r) * g.in_cols + t0;
            for (std::size_t j = 0; j < g.kernel_cols; ++j) {
                const Real wv = w[i * g.kernel_cols + j];
                const Real* ip = irow + j;
                if constexpr (Full) {
                    for (std::size_t tt = 0; tt < kTile; ++tt) acc[tt] += wv * ip[tt];
                } else {
                    for (std::size_t tt = 0; tt < len; ++tt) acc[tt] += wv * ip[tt];
                }
            }
        }
    }
    std::copy(acc, acc + kTile, out);
}

// acc[tt] += sum over (o, i, j) of w * grad_out[y, u0 + tt - j], skipping out-of-range terms
template <bool Interior>
void backward_input_tile(const ConvGeometry& g, std::size_t r, std::size_t u0, std::size_t len, const Real* grad0,
                         const Real* w0, Real* __restrict out) {
    Real acc[kTile];
    std::copy(out, out + kTile, acc);
    const std::size_t er = g.out_rows(), tc = g.out_cols();
    const std::size_t kk = g.kernel_rows * g.kernel_cols;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
        const Real* gplane = grad0 + o * er * tc;
        const Real* w = w0 + o * g.in_channels * kk;
        for (std::size_t i = 0; i < g.kernel_rows; ++i) {
            const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(r + g.pad_rows) - static_cast<std::ptrdiff_t>(i);
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(er)) continue;
            const Real* grow = gplane + static_cast<std::size_t>(y) * tc;
            for (std::size_t j = 0; j < g.kernel_cols; ++j) {
                const Real wv = w[i * g.kernel_cols + j];
                if constexpr (Interior) {
                    const Real* gp = grow + u0 - j;
                    for (std::size_t tt = 0; tt < kTile; ++tt) acc[tt] += wv * gp[tt];
                } else {
                    // valid tt: j <= u0 + tt < tc + j
                    const std::size_t lo = j > u0 ? j - u0 : 0;
                    const std::size_t hi = std::min(len, tc + j > u0 ? tc + j - u0 : 0);
                    for (std::size_t tt = lo; tt < hi; ++tt) acc[tt] += wv * grow[u0 + tt - j];
                }
            }
        }
    }
    std::copy(acc, acc + kTile, out);
}

void conv2d_forward_plane(const ConvGeometry& g, std::size_t s, std::size_t o, const Real* in,
                          const Real* weight, const Real* bias, Real* out) {
    const std::size_t er = g.out_rows(), tc = g.out_cols();
    Real* plane = out + (s * g.out_channels + o) * er * tc;
    const Real* src = in + s * g.in_channels * g.in_rows * g.in_cols;
    const Real* w = weight + o * g.in_channels * g.kernel_rows * g.kernel_cols;
    const Real b = bias ? bias[o] : Real(0);
    Real acc[kTile];
    for (std::size_t y = 0; y < er; ++y) {
        for (std::size_t t0 = 0; t0 < tc; t0 += kTile) {
            const std::size_t len = std::min(kTile, tc - t0);
            std::fill(acc, acc + kTile, b);
            if (len == kTile)
                forward_tile<true>(g, y, t0, len, src, w, acc);
            else
                forward_tile<false>(g, y, t0, len, src, w, acc);
            std::copy(acc, acc + len, plane + y * tc + t0);
        }
    }
}

void conv2d_backward_input_plane(const ConvGeometry& g, std::size_t s, std::size_t c,
                                 const Real* grad_out, const Real* weight, Real* grad_in) {
    const std::size_t er = g.out_rows(), tc = g.out_cols();
    Real* dst = grad_in + (s * g.in_channels + c) * g.in_rows * g.in_cols;
    const Real* grad0 = grad_out + s * g.out_channels * er * tc;
    const Real* w0 = weight + c * g.kernel_rows * g.kernel_cols;
    Real acc[kTile];
    for (std::size_t r = 0; r < g.in_rows; ++r) {
        Real* drow = dst + r * g.in_cols;
        for (std::size_t u0 = 0; u0 < g.in_cols; u0 += kTile) {
            const std::size_t len = std::min(kTile, g.in_cols - u0);
            std::copy(drow + u0, drow + u0 + len, acc);
            const bool interior = len == kTile && u0 + 1 >= g.kernel_cols && u0 + kTile <= tc;
            if (interior)
                backward_input_tile<true>(g, r, u0, len, grad0, w0, acc);
            else
                backward_input_tile<false>(g, r, u0, len, grad0, w0, acc);
            std::copy(acc, acc + len, drow + u0);
        }
    }
}

void conv2d_backward_weight_filter(const ConvGeometry& g, std::size_t o, const Real* grad_out,
                                   const Real* in, Real* grad_weight, Real* grad_bias) {
    const std::size_t er = g.out_rows(), tc = g.out_cols();
    const std::size_t kk = g.kernel_rows * g.kernel_cols;
    for (std::size_t s = 0; s < g.batch; ++s) {
        const Real* gplane = grad_out + (s * g.out_channels + o) * er * tc;
        if (grad_bias) {
            Real acc = 0;
#pragma omp simd reduction(+ : acc)
            for (std::size_t q = 0; q < er * tc; ++q) acc += gplane[q];
            grad_bias[o] += acc;
        }
        for (std::size_t c = 0; c < g.in_channels; ++c) {
            const Real* src = in + (s * g.in_channels + c) * g.in_rows * g.in_cols;
            Real* dw = grad_weight + (o * g.in_channels + c) * kk;
            for (std::size_t y = 0; y < er; ++y) {
                const Real* grow = gplane + y * tc;
                for (std::size_t i = 0; i < g.kernel_rows; ++i) {
                    const std::ptrdiff_t r = source_row(g, y, i);
                    if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.in_rows)) continue;
                    const Real* irow = src + static_cast<std::size_t>(r) * g.in_cols;
                    for (std::size_t j = 0; j < g.kernel_cols; ++j) {
                        const Real* ip = irow + j;
                        Real acc = 0;
#pragma omp simd reduction(+ : acc)
                        for (std::size_t t = 0; t < tc; ++t) acc += grow[t] * ip[t];
                        dw[i * g.kernel_cols + j] += acc;
                    }
                }
            }
        }
    }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out) {
    for (std::size_t s = 0; s < g.batch; ++s)
        for (std::size_t o = 0; o < g.out_channels; ++o) conv2d_forward_plane(g, s, o, in, weight, bias, out);
}

void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in) {
    for (std::size_t s = 0; s < g.batch; ++s)
        for (std::size_t c = 0; c < g.in_channels; ++c)
            conv2d_backward_input_plane(g, s, c, grad_out, weight, grad_in);
}

void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias) {
    for (std::size_t o = 0; o < g.out_channels; ++o)
        conv2d_backward_weight_filter(g, o, grad_out, in, grad_weight, grad_bias);
}

}  // namespace bdan::kernels::reference
