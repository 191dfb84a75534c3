#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bdan/random.hpp"
#include "bdan/tensor.hpp"

namespace bdan {

enum class Mode { train, eval };
enum class Padding { valid, same_rows };

struct Conv2dParams {
    Tensor weight;  // (out, in, kernel_rows, kernel_cols)
    Tensor bias;    // (out)
};

struct BatchNormParams {
    Tensor gamma;
    Tensor beta;
    std::vector<Real> running_mean;
    std::vector<Real> running_var;
    Real momentum = Real(0.9);  // retention weight of the running statistics
    Real eps = Real(1e-5);
};

struct LinearParams {
    Tensor weight;  // (in, out)
    Tensor bias;    // (out)
};

// Layers. Inputs are (batch, channels, electrodes, time) unless noted.

Tensor conv2d(const Tensor& x, const Conv2dParams& p, Padding padding);

/// Train mode normalizes with the batch statistics and folds them into the
/// running estimates: running <- momentum * running + (1 - momentum) * batch.
Tensor batch_norm(const Tensor& x, BatchNormParams& p, Mode mode);

/// Non-overlapping mean over the time axis; a trailing remainder is dropped.
Tensor avg_pool_time(const Tensor& x, std::size_t window);

/// Inverted dropout. The mask comes from `rng` and is replayed in backward.
Tensor dropout(const Tensor& x, Real rate, Mode mode, Rng& rng);

/// One (p x p) map shared across (batch, filter, electrode): y = x W + b on the last axis.
Tensor linear_lastdim(const Tensor& x, const LinearParams& p);

/// Row-major flatten of everything after the batch axis, then an affine map.
Tensor linear_flat(const Tensor& x, const LinearParams& p);

/// Softmax cross-entropy averaged over the batch.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::uint32_t>& labels);

// Spatial feature extractor and heads.

inline constexpr std::size_t kConv1Filters = 8;
inline constexpr std::size_t kConv1Width = 25;
inline constexpr std::size_t kConv2Filters = 16;
inline constexpr std::size_t kConv2Height = 3;
inline constexpr std::size_t kConv3Filters = 32;
inline constexpr std::size_t kConv3Width = 10;
inline constexpr std::size_t kPoolWindow = 5;
inline constexpr Real kDropoutRate = Real(0.1);

/// Length of the feature-point axis for an input of `time_points` samples,
/// or 0 when the input is too short for the layer chain.
std::size_t feature_points(std::size_t time_points);

/// Shortest input that leaves at least one feature point.
std::size_t min_time_points();

struct ModelDims {
    std::size_t electrodes = 0;
    std::size_t time_points = 0;
    std::size_t classes = 0;

    std::size_t features() const { return feature_points(time_points); }
    std::size_t flat_features() const { return kConv3Filters * electrodes * features(); }
};

struct ModelParams {
    ModelDims dims;
    Conv2dParams conv1, conv2, conv3;
    BatchNormParams bn1, bn2, bn3;
    LinearParams fc3d_1, fc3d_2, fc2d;
    Real dropout_rate = kDropoutRate;

    /// Uniform(+-sqrt(1/fan_in)) weights and biases, unit/zero batch-norm affine.
    static ModelParams init(const ModelDims& dims, std::uint64_t seed);

    /// Named trainable tensors in a fixed order.
    std::vector<std::pair<std::string, Tensor*>> trainable();
    std::vector<std::pair<std::string, const Tensor*>> trainable() const;
};

struct ForwardActivations {
    Tensor z0, z1, z2;  // (n, 32, e, p)
    Tensor logits;      // (n, classes)
};

/// conv1 -> bn1 -> conv2 -> bn2 -> relu -> pool -> dropout -> conv3 -> bn3 -> relu -> pool -> dropout
Tensor extractor_forward(const Tensor& x, ModelParams& params, Mode mode, Rng& rng);

ForwardActivations heads_forward(const Tensor& z0, const ModelParams& params);

ForwardActivations model_forward(const Tensor& x, ModelParams& params, Mode mode, Rng& rng);

// Checkpoints: binary header + JSON manifest + little-endian float64 payload.

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace bdan
