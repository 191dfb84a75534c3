#include "bdan/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bdan/kernels.hpp"

namespace bdan {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_string(t.shape()));
}

Tensor uniform_tensor(Shape shape, Real bound, Rng& rng) {
    std::uniform_real_distribution<Real> dist(-bound, bound);
    std::vector<Real> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Conv2dParams init_conv(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw, Rng& rng) {
    const Real bound = std::sqrt(Real(1) / static_cast<Real>(in * kh * kw));
    Conv2dParams p;
    p.weight = uniform_tensor({out, in, kh, kw}, bound, rng);
    p.bias = uniform_tensor({out}, bound, rng);
    return p;
}

LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng) {
    const Real bound = std::sqrt(Real(1) / static_cast<Real>(in));
    LinearParams p;
    p.weight = uniform_tensor({in, out}, bound, rng);
    p.bias = uniform_tensor({out}, bound, rng);
    return p;
}

BatchNormParams init_bn(std::size_t channels) {
    BatchNormParams p;
    p.gamma = Tensor::from({channels}, std::vector<Real>(channels, Real(1)), true);
    p.beta = Tensor::from({channels}, std::vector<Real>(channels, Real(0)), true);
    p.running_mean.assign(channels, Real(0));
    p.running_var.assign(channels, Real(1));
    return p;
}

// y = X W + b with X viewed as (rows x in).
Tensor affine_rows(const Tensor& x, std::size_t rows, std::size_t in, const LinearParams& p, Shape out_shape) {
    const std::size_t out = p.weight.dim(1);
    std::vector<Real> y(rows * out);
    kernels::gemm(false, false, rows, out, in, x.data().data(), p.weight.data().data(), y.data(), false);
    auto b = p.bias.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out; ++j) y[r * out + j] += b[j];

    const Tensor w = p.weight;
    return detail::make_result(std::move(out_shape), std::move(y), {x, p.weight, p.bias},
                               [x, w, rows, in, out](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   if (gin[0])
                                       kernels::gemm(false, true, rows, in, out, g.data(), w.data().data(),
                                                     gin[0]->data(), true);
                                   if (gin[1])
                                       kernels::gemm(true, false, in, out, rows, x.data().data(), g.data(),
                                                     gin[1]->data(), true);
                                   if (gin[2]) {
                                       auto& db = *gin[2];
                                       for (std::size_t r = 0; r < rows; ++r)
                                           for (std::size_t j = 0; j < out; ++j) db[j] += g[r * out + j];
                                   }
                               });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Conv2dParams& p, Padding padding) {
    require_rank(x, 4, "conv2d");
    require_rank(p.weight, 4, "conv2d weight");
    kernels::ConvGeometry g;
    g.batch = x.dim(0);
    g.in_channels = x.dim(1);
    g.in_rows = x.dim(2);
    g.in_cols = x.dim(3);
    g.out_channels = p.weight.dim(0);
    g.kernel_rows = p.weight.dim(2);
    g.kernel_cols = p.weight.dim(3);
    if (p.weight.dim(1) != g.in_channels)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(p.weight.dim(1)) +
                                    " input channels, got " + std::to_string(g.in_channels));
    if (p.bias.valid() && p.bias.size() != g.out_channels)
        throw std::invalid_argument("conv2d: bias length does not match filter count");
    if (padding == Padding::same_rows) {
        if (g.kernel_rows % 2 == 0) throw std::invalid_argument("conv2d: 'same' padding needs an odd kernel height");
        g.pad_rows = (g.kernel_rows - 1) / 2;
    }
    if (g.in_rows + 2 * g.pad_rows < g.kernel_rows || g.in_cols < g.kernel_cols)
        throw std::invalid_argument("conv2d: kernel " + shape_string(p.weight.shape()) + " larger than input " +
                                    shape_string(x.shape()));

    Shape out_shape{g.batch, g.out_channels, g.out_rows(), g.out_cols()};
    std::vector<Real> out(numel(out_shape));
    kernels::conv2d_forward(g, x.data().data(), p.weight.data().data(),
                            p.bias.valid() ? p.bias.data().data() : nullptr, out.data());

    std::vector<Tensor> parents{x, p.weight};
    if (p.bias.valid()) parents.push_back(p.bias);
    const Tensor w = p.weight;
    return detail::make_result(std::move(out_shape), std::move(out), std::move(parents),
                               [x, w, g](std::span<const Real> gout, std::span<std::vector<Real>* const> gin) {
                                   if (gin[0]) kernels::conv2d_backward_input(g, gout.data(), w.data().data(), gin[0]->data());
                                   Real* dbias = gin.size() > 2 && gin[2] ? gin[2]->data() : nullptr;
                                   if (gin[1] || dbias) {
                                       std::vector<Real> scratch;
                                       Real* dw = nullptr;
                                       if (gin[1]) {
                                           dw = gin[1]->data();
                                       } else {
                                           scratch.assign(w.size(), Real(0));
                                           dw = scratch.data();
                                       }
                                       kernels::conv2d_backward_weight(g, gout.data(), x.data().data(), dw, dbias);
                                   }
                               });
}

Tensor batch_norm(const Tensor& x, BatchNormParams& p, Mode mode) {
    require_rank(x, 4, "batch_norm");
    const std::size_t n = x.dim(0), c = x.dim(1), inner = x.dim(2) * x.dim(3);
    if (x.size() == 0) throw std::invalid_argument("batch_norm: empty batch");
    if (p.gamma.size() != c) throw std::invalid_argument("batch_norm: channel count mismatch");
    const std::size_t count = n * inner;
    auto xv = x.data();
    auto gamma = p.gamma.data();
    auto beta = p.beta.data();

    auto mean = std::make_shared<std::vector<Real>>(c);
    auto inv_std = std::make_shared<std::vector<Real>>(c);
    if (mode == Mode::train) {
        if (count < 2) throw std::invalid_argument("batch_norm: need at least 2 values per channel in train mode");
        for (std::size_t ch = 0; ch < c; ++ch) {
            Real s = 0;
            for (std::size_t b = 0; b < n; ++b) {
                const Real* row = xv.data() + (b * c + ch) * inner;
#pragma omp simd reduction(+ : s)
                for (std::size_t k = 0; k < inner; ++k) s += row[k];
            }
            const Real mu = s / static_cast<Real>(count);
            Real ss = 0;
            for (std::size_t b = 0; b < n; ++b) {
                const Real* row = xv.data() + (b * c + ch) * inner;
#pragma omp simd reduction(+ : ss)
                for (std::size_t k = 0; k < inner; ++k) ss += (row[k] - mu) * (row[k] - mu);
            }
            const Real var = ss / static_cast<Real>(count);
            (*mean)[ch] = mu;
            (*inv_std)[ch] = Real(1) / std::sqrt(var + p.eps);
            p.running_mean[ch] = p.momentum * p.running_mean[ch] + (1 - p.momentum) * mu;
            p.running_var[ch] = p.momentum * p.running_var[ch] + (1 - p.momentum) * var;
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            (*mean)[ch] = p.running_mean[ch];
            (*inv_std)[ch] = Real(1) / std::sqrt(p.running_var[ch] + p.eps);
        }
    }

    auto xhat = std::make_shared<std::vector<Real>>(x.size());
    std::vector<Real> y(x.size());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * inner;
            const Real mu = (*mean)[ch], is = (*inv_std)[ch], ga = gamma[ch], be = beta[ch];
            const Real* src = xv.data() + off;
            Real* h = xhat->data() + off;
            Real* out = y.data() + off;
            for (std::size_t k = 0; k < inner; ++k) {
                h[k] = (src[k] - mu) * is;
                out[k] = ga * h[k] + be;
            }
        }

    const Tensor gamma_t = p.gamma;
    const bool batch_stats = mode == Mode::train;
    return detail::make_result(
        x.shape(), std::move(y), {x, p.gamma, p.beta},
        [=](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
            auto gm = gamma_t.data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                Real sum_g = 0, sum_gh = 0;
                const Real* hx = xhat->data();
                for (std::size_t b = 0; b < n; ++b) {
                    const Real* gp = g.data() + (b * c + ch) * inner;
                    const Real* hp = hx + (b * c + ch) * inner;
#pragma omp simd reduction(+ : sum_g, sum_gh)
                    for (std::size_t k = 0; k < inner; ++k) {
                        sum_g += gp[k];
                        sum_gh += gp[k] * hp[k];
                    }
                }
                if (gin[1]) (*gin[1])[ch] += sum_gh;
                if (gin[2]) (*gin[2])[ch] += sum_g;
                if (!gin[0]) continue;
                auto& dx = *gin[0];
                const Real s = gm[ch] * (*inv_std)[ch];
                if (batch_stats) {
                    const Real mg = sum_g / static_cast<Real>(count);
                    const Real mgh = sum_gh / static_cast<Real>(count);
                    for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t off = (b * c + ch) * inner;
                        const Real* gp = g.data() + off;
                        const Real* hp = hx + off;
                        Real* dp = dx.data() + off;
                        for (std::size_t k = 0; k < inner; ++k) dp[k] += s * (gp[k] - mg - hp[k] * mgh);
                    }
                } else {
                    for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t off = (b * c + ch) * inner;
                        for (std::size_t k = 0; k < inner; ++k) dx[off + k] += s * g[off + k];
                    }
                }
            }
        });
}

Tensor avg_pool_time(const Tensor& x, std::size_t window) {
    if (window == 0) throw std::invalid_argument("avg_pool_time: zero window");
    if (x.rank() < 1) throw std::invalid_argument("avg_pool_time: empty tensor");
    const std::size_t t_in = x.shape().back();
    if (t_in < window)
        throw std::invalid_argument("avg_pool_time: time axis " + std::to_string(t_in) + " shorter than window " +
                                    std::to_string(window));
    const std::size_t t_out = t_in / window;
    const std::size_t rows = x.size() / t_in;
    Shape out_shape = x.shape();
    out_shape.back() = t_out;
    const Real* xv = x.data().data();
    std::vector<Real> y(rows * t_out);
    const Real inv = Real(1) / static_cast<Real>(window);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* src = xv + r * t_in;
        Real* dst = y.data() + r * t_out;
        for (std::size_t j = 0; j < t_out; ++j) {
            Real s = 0;
            for (std::size_t k = 0; k < window; ++k) s += src[j * window + k];
            dst[j] = s * inv;
        }
    }
    return detail::make_result(std::move(out_shape), std::move(y), {x},
                               [=](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   Real* dx = gin[0]->data();
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       const Real* gr = g.data() + r * t_out;
                                       Real* dr = dx + r * t_in;
                                       for (std::size_t j = 0; j < t_out; ++j) {
                                           const Real v = gr[j] * inv;
                                           for (std::size_t k = 0; k < window; ++k) dr[j * window + k] += v;
                                       }
                                   }
                               });
}

Tensor dropout(const Tensor& x, Real rate, Mode mode, Rng& rng) {
    if (!(rate >= 0 && rate < 1)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (mode == Mode::eval || rate == 0) return x;
    // Keep when the top 53 bits of one engine draw, read as a uniform in [0, 1), fall below 1 - rate.
    const auto threshold = static_cast<std::uint64_t>(std::ldexp(1.0 - static_cast<double>(rate), 53));
    const Real scale_up = Real(1) / (Real(1) - rate);
    auto mask = std::make_shared<std::vector<Real>>(x.size());
    for (auto& m : *mask) m = (rng() >> 11) < threshold ? scale_up : Real(0);
    const Real* xv = x.data().data();
    const Real* mv = mask->data();
    std::vector<Real> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mv[i];
    return detail::make_result(x.shape(), std::move(y), {x},
                               [mask](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   Real* dx = gin[0]->data();
                                   const Real* mv = mask->data();
                                   for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mv[i];
                               });
}

Tensor linear_lastdim(const Tensor& x, const LinearParams& p) {
    require_rank(p.weight, 2, "linear_lastdim weight");
    if (x.rank() < 1 || x.shape().back() != p.weight.dim(0))
        throw std::invalid_argument("linear_lastdim: last axis of " + shape_string(x.shape()) +
                                    " does not match weight " + shape_string(p.weight.shape()));
    if (p.bias.size() != p.weight.dim(1)) throw std::invalid_argument("linear_lastdim: bias length mismatch");
    const std::size_t in = p.weight.dim(0);
    Shape out_shape = x.shape();
    out_shape.back() = p.weight.dim(1);
    return affine_rows(x, x.size() / in, in, p, std::move(out_shape));
}

Tensor linear_flat(const Tensor& x, const LinearParams& p) {
    require_rank(p.weight, 2, "linear_flat weight");
    if (x.rank() < 2) throw std::invalid_argument("linear_flat: input needs a batch axis");
    const std::size_t n = x.dim(0);
    const std::size_t in = x.size() / n;
    if (in != p.weight.dim(0))
        throw std::invalid_argument("linear_flat: flattened length " + std::to_string(in) + " does not match weight " +
                                    shape_string(p.weight.shape()));
    if (p.bias.size() != p.weight.dim(1)) throw std::invalid_argument("linear_flat: bias length mismatch");
    return affine_rows(x, n, in, p, {n, p.weight.dim(1)});
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::uint32_t>& labels) {
    require_rank(logits, 2, "cross_entropy");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count does not match batch");
    for (auto l : labels)
        if (l >= c) throw std::invalid_argument("cross_entropy: label " + std::to_string(l) + " out of range");
    auto z = logits.data();
    auto prob = std::make_shared<std::vector<Real>>(n * c);
    Real loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Real* row = z.data() + i * c;
        const Real mx = *std::max_element(row, row + c);
        Real s = 0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
        const Real lse = mx + std::log(s);
        for (std::size_t j = 0; j < c; ++j) (*prob)[i * c + j] = std::exp(row[j] - lse);
        loss += lse - row[labels[i]];
    }
    loss /= static_cast<Real>(n);
    return detail::make_result({1}, {loss}, {logits},
                               [prob, labels, n, c](std::span<const Real> g, std::span<std::vector<Real>* const> gin) {
                                   auto& d = *gin[0];
                                   const Real s = g[0] / static_cast<Real>(n);
                                   for (std::size_t i = 0; i < n; ++i)
                                       for (std::size_t j = 0; j < c; ++j)
                                           d[i * c + j] += s * ((*prob)[i * c + j] - (j == labels[i] ? Real(1) : Real(0)));
                               });
}

std::size_t feature_points(std::size_t time_points) {
    if (time_points < kConv1Width) return 0;
    const std::size_t after_pool1 = (time_points - kConv1Width + 1) / kPoolWindow;
    if (after_pool1 < kConv3Width) return 0;
    return (after_pool1 - kConv3Width + 1) / kPoolWindow;
}

std::size_t min_time_points() {
    std::size_t t = kConv1Width;
    while (feature_points(t) == 0) ++t;
    return t;
}

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
    if (dims.electrodes == 0 || dims.classes < 2)
        throw std::invalid_argument("ModelParams::init: need electrodes >= 1 and classes >= 2");
    const std::size_t p = dims.features();
    if (p == 0)
        throw std::invalid_argument("ModelParams::init: time_points " + std::to_string(dims.time_points) +
                                    " is below the minimum " + std::to_string(min_time_points()));
    Rng rng = derive_rng(seed, {0x1417});
    ModelParams m;
    m.dims = dims;
    m.conv1 = init_conv(kConv1Filters, 1, 1, kConv1Width, rng);
    m.bn1 = init_bn(kConv1Filters);
    m.conv2 = init_conv(kConv2Filters, kConv1Filters, kConv2Height, 1, rng);
    m.bn2 = init_bn(kConv2Filters);
    m.conv3 = init_conv(kConv3Filters, kConv2Filters, 1, kConv3Width, rng);
    m.bn3 = init_bn(kConv3Filters);
    m.fc3d_1 = init_linear(p, p, rng);
    m.fc3d_2 = init_linear(p, p, rng);
    m.fc2d = init_linear(dims.flat_features(), dims.classes, rng);
    return m;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::trainable() {
    return {{"conv1.weight", &conv1.weight}, {"conv1.bias", &conv1.bias},   {"bn1.gamma", &bn1.gamma},
            {"bn1.beta", &bn1.beta},         {"conv2.weight", &conv2.weight}, {"conv2.bias", &conv2.bias},
            {"bn2.gamma", &bn2.gamma},       {"bn2.beta", &bn2.beta},         {"conv3.weight", &conv3.weight},
            {"conv3.bias", &conv3.bias},     {"bn3.gamma", &bn3.gamma},       {"bn3.beta", &bn3.beta},
            {"fc3d_1.weight", &fc3d_1.weight}, {"fc3d_1.bias", &fc3d_1.bias}, {"fc3d_2.weight", &fc3d_2.weight},
            {"fc3d_2.bias", &fc3d_2.bias},   {"fc2d.weight", &fc2d.weight},   {"fc2d.bias", &fc2d.bias}};
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::trainable() const {
    auto named = const_cast<ModelParams*>(this)->trainable();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.emplace_back(name, t);
    return out;
}

Tensor extractor_forward(const Tensor& x, ModelParams& params, Mode mode, Rng& rng) {
    require_rank(x, 4, "extractor_forward");
    if (x.dim(1) != 1) throw std::invalid_argument("extractor_forward: expected a single input channel");
    if (x.dim(2) < kConv2Height)
        throw std::invalid_argument("extractor_forward: need at least 3 electrodes");
    if (feature_points(x.dim(3)) == 0)
        throw std::invalid_argument("extractor_forward: time axis " + std::to_string(x.dim(3)) +
                                    " too short (minimum " + std::to_string(min_time_points()) + ")");

    Tensor h = conv2d(x, params.conv1, Padding::valid);
    h = batch_norm(h, params.bn1, mode);

    h = conv2d(h, params.conv2, Padding::same_rows);
    h = batch_norm(h, params.bn2, mode);
    h = relu(h);
    h = avg_pool_time(h, kPoolWindow);
    h = dropout(h, params.dropout_rate, mode, rng);

    h = conv2d(h, params.conv3, Padding::valid);
    h = batch_norm(h, params.bn3, mode);
    h = relu(h);
    h = avg_pool_time(h, kPoolWindow);
    h = dropout(h, params.dropout_rate, mode, rng);
    return h;
}

ForwardActivations heads_forward(const Tensor& z0, const ModelParams& params) {
    ForwardActivations out;
    out.z0 = z0;
    out.z1 = linear_lastdim(z0, params.fc3d_1);
    out.z2 = linear_lastdim(out.z1, params.fc3d_2);
    out.logits = linear_flat(out.z2, params.fc2d);
    return out;
}

ForwardActivations model_forward(const Tensor& x, ModelParams& params, Mode mode, Rng& rng) {
    return heads_forward(extractor_forward(x, params, mode, rng), params);
}

}  // namespace bdan
