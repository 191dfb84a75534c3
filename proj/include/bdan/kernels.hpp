#pragma once

// Hot loops in two flavours: serial and OpenMP. The OpenMP reductions use a
// fixed block decomposition, so results do not depend on the thread count.
// sum/sq_sum/dot/pairwise may differ from serial in the last bits; gemm and
// the convolutions split work by output row or sample and match serial exactly.
// `reference` holds direct convolution loops used as a test oracle.

#include <cstddef>
#include <span>

#include "bdan/tensor.hpp"

namespace bdan::kernels {

enum class Exec { serial, parallel };

/// Process-wide kernel selection. Defaults to serial.
Exec execution();
void set_execution(Exec mode);
bool parallel_available();

class ScopedExecution {
public:
    explicit ScopedExecution(Exec mode) : saved_(execution()) { set_execution(mode); }
    ~ScopedExecution() { set_execution(saved_); }
    ScopedExecution(const ScopedExecution&) = delete;
    ScopedExecution& operator=(const ScopedExecution&) = delete;

private:
    Exec saved_;
};

struct ConvGeometry {
    std::size_t batch = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t in_rows = 0;   // electrodes
    std::size_t in_cols = 0;   // time
    std::size_t kernel_rows = 1;
    std::size_t kernel_cols = 1;
    std::size_t pad_rows = 0;  // symmetric zero padding on the electrode axis

    std::size_t out_rows() const { return in_rows + 2 * pad_rows - kernel_rows + 1; }
    std::size_t out_cols() const { return in_cols - kernel_cols + 1; }
};

// Fixed block length for deterministic parallel reductions.
inline constexpr std::size_t kReduceBlock = 4096;

namespace serial {

Real sum(std::span<const Real> x);
Real sq_sum(std::span<const Real> x);
Real dot(std::span<const Real> x, std::span<const Real> y);

/// sum_{i<rows_a} sum_{j<rows_b} ||a[i,:] - b[j,:]||^2 by explicit traversal.
Real pairwise_sq_dist_sum(const Real* a, std::size_t rows_a, const Real* b, std::size_t rows_b,
                          std::size_t cols);

/// C[m,n] (+)= op(A) * op(B), row-major. op(A) is m x k, op(B) is k x n.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate);

void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out);
void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in);
void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias);

}  // namespace serial

namespace reference {

void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out);
void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in);
void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias);

}  // namespace reference

namespace omp {

Real sum(std::span<const Real> x);
Real sq_sum(std::span<const Real> x);
Real dot(std::span<const Real> x, std::span<const Real> y);
Real pairwise_sq_dist_sum(const Real* a, std::size_t rows_a, const Real* b, std::size_t rows_b,
                          std::size_t cols);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate);
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out);
void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in);
void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias);

}  // namespace omp

// Dispatch on execution().
Real sum(std::span<const Real> x);
Real sq_sum(std::span<const Real> x);
Real dot(std::span<const Real> x, std::span<const Real> y);
Real pairwise_sq_dist_sum(const Real* a, std::size_t rows_a, const Real* b, std::size_t rows_b,
                          std::size_t cols);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          const Real* b, Real* c, bool accumulate);
void conv2d_forward(const ConvGeometry& g, const Real* in, const Real* weight, const Real* bias,
                    Real* out);
void conv2d_backward_input(const ConvGeometry& g, const Real* grad_out, const Real* weight,
                           Real* grad_in);
void conv2d_backward_weight(const ConvGeometry& g, const Real* grad_out, const Real* in,
                            Real* grad_weight, Real* grad_bias);

}  // namespace bdan::kernels
