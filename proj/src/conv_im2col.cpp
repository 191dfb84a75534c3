#include <Eigen/Core>

#include <algorithm>

#include "conv_planes.hpp"

namespace bdan::kernels::detail {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

std::size_t patch_size(const ConvGeometry& g) { return g.in_channels * g.kernel_rows * g.kernel_cols; }

// cols[(c, i, j), (y, t)] = in[s, c, y + i - pad, t + j], zero outside the rows
void im2col(const ConvGeometry& g, std::size_t s, const Real* in, std::vector<Real>& cols) {
    const std::size_t er = g.out_rows(), tc = g.out_cols(), n = er * tc;
    if (g.pad_rows == 0)
        cols.resize(patch_size(g) * n);  // every entry is written below
    else
        cols.assign(patch_size(g) * n, Real(0));
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        const Real* src = in + (s * g.in_channels + c) * g.in_rows * g.in_cols;
        for (std::size_t i = 0; i < g.kernel_rows; ++i)
            for (std::size_t j = 0; j < g.kernel_cols; ++j) {
                Real* row = cols.data() + ((c * g.kernel_rows + i) * g.kernel_cols + j) * n;
                for (std::size_t y = 0; y < er; ++y) {
                    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(y + i) - static_cast<std::ptrdiff_t>(g.pad_rows);
                    if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.in_rows)) continue;
                    const Real* ip = src + static_cast<std::size_t>(r) * g.in_cols + j;
                    std::copy(ip, ip + tc, row + y * tc);
                }
            }
    }
}

void col2im_add(const ConvGeometry& g, std::size_t s, const std::vector<Real>& cols, Real* grad_in) {
    const std::size_t er = g.out_rows(), tc = g.out_cols(), n = er * tc;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        Real* dst = grad_in + (s * g.in_channels + c) * g.in_rows * g.in_cols;
        for (std::size_t i = 0; i < g.kernel_rows; ++i)
            for (std::size_t j = 0; j < g.kernel_cols; ++j) {
                const Real* row = cols.data() + ((c * g.kernel_rows + i) * g.kernel_cols + j) * n;
                for (std::size_t y = 0; y < er; ++y) {
                    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(y + i) - static_cast<std::ptrdiff_t>(g.pad_rows);
                    if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.in_rows)) continue;
                    Real* dp = dst + static_cast<std::size_t>(r) * g.in_cols + j;
                    const Real* cp = row + y * tc;
                    for (std::size_t t = 0; t < tc; ++t) dp[t] += cp[t];
                }
            }
    }
}

}  // namespace

void conv2d_forward_sample(const ConvGeometry& g, std::size_t s, const Real* in, const Real* weight,
                           const Real* bias, Real* out, ConvScratch& scratch) {
    const auto k = static_cast<Eigen::Index>(patch_size(g));
    const auto n = static_cast<Eigen::Index>(g.out_rows() * g.out_cols());
    const auto o = static_cast<Eigen::Index>(g.out_channels);
    im2col(g, s, in, scratch.cols);
    Map y(out + s * g.out_channels * static_cast<std::size_t>(n), o, n);
    y.noalias() = MapC(weight, o, k) * MapC(scratch.cols.data(), k, n);
    if (bias)
        for (Eigen::Index r = 0; r < o; ++r) y.row(r).array() += bias[r];
}

void conv2d_backward_input_sample(const ConvGeometry& g, std::size_t s, const Real* grad_out,
                                  const Real* weight, Real* grad_in, ConvScratch& scratch) {
    const auto k = static_cast<Eigen::Index>(patch_size(g));
    const auto n = static_cast<Eigen::Index>(g.out_rows() * g.out_cols());
    const auto o = static_cast<Eigen::Index>(g.out_channels);
    scratch.cols.resize(static_cast<std::size_t>(k * n));
    Map cols(scratch.cols.data(), k, n);
    cols.noalias() = MapC(weight, o, k).transpose() * MapC(grad_out + s * g.out_channels * static_cast<std::size_t>(n), o, n);
    col2im_add(g, s, scratch.cols, grad_in);
}

void conv2d_backward_weight_sample(const ConvGeometry& g, std::size_t s, const Real* grad_out,
                                   const Real* in, Real* partial_w, Real* partial_b,
                                   ConvScratch& scratch) {
    const auto k = static_cast<Eigen::Index>(patch_size(g));
    const auto n = static_cast<Eigen::Index>(g.out_rows() * g.out_cols());
    const auto o = static_cast<Eigen::Index>(g.out_channels);
    im2col(g, s, in, scratch.cols);
    const MapC gy(grad_out + s * g.out_channels * static_cast<std::size_t>(n), o, n);
    Map(partial_w, o, k).noalias() = gy * MapC(scratch.cols.data(), k, n).transpose();
    // Plain loop: Eigen's vectorised redux peels by address, so its rounding would depend on alignment.
    for (Eigen::Index r = 0; r < o; ++r) {
        const Real* row = grad_out + (s * g.out_channels + static_cast<std::size_t>(r)) * static_cast<std::size_t>(n);
        Real acc = 0;
        for (Eigen::Index t = 0; t < n; ++t) acc += row[t];
        partial_b[r] = acc;
    }
}

}  // namespace bdan::kernels::detail
