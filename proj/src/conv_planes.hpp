#pragma once

// Per-sample im2col convolution steps shared by the serial and OpenMP kernels.
// Each call touches only sample `s` of its outputs, so both variants produce
// identical bits.

#include <vector>

#include "bdan/kernels.hpp"

namespace bdan::kernels::detail {

struct ConvScratch {
    std::vector<Real> cols;  // (in_channels * kernel_rows * kernel_cols) x (out_rows * out_cols)
};

void conv2d_forward_sample(const ConvGeometry& g, std::size_t s, const Real* in, const Real* weight,
                           const Real* bias, Real* out, ConvScratch& scratch);

/// Adds sample s's input gradient into grad_in.
void conv2d_backward_input_sample(const ConvGeometry& g, std::size_t s, const Real* grad_out,
                                  const Real* weight, Real* grad_in, ConvScratch& scratch);

/// Overwrites partial_w / partial_b with sample s's contribution.
void conv2d_backward_weight_sample(const ConvGeometry& g, std::size_t s, const Real* grad_out,
                                   const Real* in, Real* partial_w, Real* partial_b,
                                   ConvScratch& scratch);

inline void accumulate(const std::vector<Real>& src, Real* dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace bdan::kernels::detail
