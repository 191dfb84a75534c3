#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "bdan/data_io.hpp"

namespace bdan {

std::vector<float> resample_window(const std::vector<float>& x, std::size_t electrodes, std::size_t raw_len,
                                   double raw_hz, double window_s, double target_hz) {
    if (!(raw_hz > 0) || !(window_s > 0) || !(target_hz > 0))
        throw std::invalid_argument("resample_window: rates and window must be positive");
    if (x.size() != electrodes * raw_len) throw std::invalid_argument("resample_window: buffer size mismatch");
    const auto crop = static_cast<std::size_t>(std::llround(window_s * raw_hz));
    const auto out_len = static_cast<std::size_t>(std::llround(window_s * target_hz));
    if (raw_len < crop)
        throw std::invalid_argument("resample_window: recording of " + std::to_string(raw_len) +
                                    " samples is shorter than the " + std::to_string(crop) + "-sample window");
    if (crop < 2 || out_len < 2) throw std::invalid_argument("resample_window: window too short");

    std::vector<float> out(electrodes * out_len);
    const double step = static_cast<double>(crop - 1) / static_cast<double>(out_len - 1);
    for (std::size_t e = 0; e < electrodes; ++e) {
        const float* src = x.data() + e * raw_len;
        float* dst = out.data() + e * out_len;
        for (std::size_t j = 0; j < out_len; ++j) {
            const double u = static_cast<double>(j) * step;
            auto i0 = static_cast<std::size_t>(u);
            if (i0 >= crop - 1) {
                dst[j] = src[crop - 1];
                continue;
            }
            const double frac = u - static_cast<double>(i0);
            dst[j] = frac == 0.0 ? src[i0]
                                 : static_cast<float>((1.0 - frac) * src[i0] + frac * src[i0 + 1]);
        }
    }
    return out;
}

EpochSet zscore_normalize(const EpochSet& set) {
    EpochSet out = set;
    const std::size_t t = set.time_points;
    const std::size_t rows = set.size() * set.electrodes;
    for (std::size_t r = 0; r < rows; ++r) {
        float* row = out.data.data() + r * t;
        double mu = 0;
        for (std::size_t k = 0; k < t; ++k) mu += row[k];
        mu /= static_cast<double>(t);
        double ss = 0;
        for (std::size_t k = 0; k < t; ++k) ss += (row[k] - mu) * (row[k] - mu);
        const double sd = std::sqrt(ss / static_cast<double>(t));
        for (std::size_t k = 0; k < t; ++k) row[k] = static_cast<float>((row[k] - mu) / (sd + 1e-8));
    }
    return out;
}

std::vector<Fold> kfold_split(const EpochSet& set, std::size_t k, std::uint64_t seed) {
    const std::size_t n = set.size();
    if (k < 2) throw std::invalid_argument("kfold_split: k must be at least 2");
    if (n < k) throw std::invalid_argument("kfold_split: " + std::to_string(n) + " trials for " + std::to_string(k) + " folds");

    std::map<std::uint32_t, std::vector<std::size_t>> by_class;
    const auto& labels = set.labels();
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

    // Shuffle within each class, concatenate, then deal positions round-robin:
    // fold sizes differ by at most one and every class spreads evenly.
    Rng rng = derive_rng(seed, {0xf01d});
    std::vector<std::size_t> order;
    order.reserve(n);
    for (auto& [label, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        order.insert(order.end(), idx.begin(), idx.end());
    }
    std::vector<std::vector<std::size_t>> test(k);
    for (std::size_t j = 0; j < n; ++j) test[j % k].push_back(order[j]);

    std::vector<Fold> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(test[f].begin(), test[f].end());
        folds[f].test = test[f];
        std::vector<bool> held(n, false);
        for (auto i : test[f]) held[i] = true;
        for (std::size_t i = 0; i < n; ++i)
            if (!held[i]) folds[f].train.push_back(i);
    }
    return folds;
}

}  // namespace bdan
