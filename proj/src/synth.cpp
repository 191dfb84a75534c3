#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bdan/data_io.hpp"
#include "bdan/model.hpp"

namespace bdan {

void DriftConfig::validate() const {
    if (electrodes < 3) throw std::invalid_argument("electrodes must be at least 3");
    if (feature_points(time_points) == 0)
        throw std::invalid_argument("time_points must be at least " + std::to_string(min_time_points()));
    if (!(sample_rate_hz > 0)) throw std::invalid_argument("sample_rate_hz must be positive");
    if (sessions < 1) throw std::invalid_argument("sessions must be at least 1");
    if (trials_per_session_per_class < 1) throw std::invalid_argument("trials_per_session_per_class must be at least 1");
    if (classes < 2) throw std::invalid_argument("classes must be at least 2");
    if (rhythm_freqs.empty()) throw std::invalid_argument("rhythm_freqs must not be empty");
    for (double f : rhythm_freqs)
        if (!(f > 0)) throw std::invalid_argument("rhythm_freqs must be positive");
    if (!(gain_step >= 0) || !(offset_step >= 0) || !(noise_std >= 0))
        throw std::invalid_argument("gain_step, offset_step and noise_std must be non-negative");
    if (!class_amplitudes.empty()) {
        if (class_amplitudes.size() != classes) throw std::invalid_argument("class_amplitudes needs one row per class");
        for (const auto& row : class_amplitudes)
            if (row.size() != rhythm_freqs.size())
                throw std::invalid_argument("class_amplitudes rows need one entry per rhythm");
    }
}

std::vector<std::vector<double>> DriftConfig::amplitudes() const {
    if (!class_amplitudes.empty()) return class_amplitudes;
    const std::size_t k = rhythm_freqs.size();
    std::vector<std::vector<double>> a(classes, std::vector<double>(k, 0.25));
    for (std::size_t c = 0; c < classes; ++c) a[c][c % k] = 1.0 + 0.5 * static_cast<double>(c / k);
    return a;
}

std::pair<EpochSet, DriftRecord> synth_generate(const DriftConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t e_count = cfg.electrodes, t_count = cfg.time_points, k_count = cfg.rhythm_freqs.size();
    const auto amp = cfg.amplitudes();

    DriftRecord rec;
    Rng subject_rng = derive_rng(cfg.subject_seed, {0x5b1});
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    rec.mixing.assign(e_count, std::vector<double>(k_count));
    for (auto& row : rec.mixing)
        for (auto& m : row) m = sym(subject_rng);

    rec.gains.assign(cfg.sessions, std::vector<double>(e_count, 1.0));
    rec.offsets.assign(cfg.sessions, std::vector<double>(e_count, 0.0));
    for (std::size_t s = 1; s < cfg.sessions; ++s)
        for (std::size_t e = 0; e < e_count; ++e) {
            const double xi = sym(subject_rng);
            const double zeta = sym(subject_rng);
            rec.gains[s][e] = rec.gains[s - 1][e] * (1.0 + cfg.gain_step * xi);
            rec.offsets[s][e] = rec.offsets[s - 1][e] + cfg.offset_step * zeta;
        }

    const std::size_t n = cfg.sessions * cfg.classes * cfg.trials_per_session_per_class;
    EpochSet set;
    set.electrodes = e_count;
    set.time_points = t_count;
    set.class_count = static_cast<std::uint32_t>(cfg.classes);
    set.sample_rate_hz = static_cast<float>(cfg.sample_rate_hz);
    set.subject_id = cfg.subject_id;
    set.data.resize(n * e_count * t_count);
    set.session_ids.reserve(n);
    std::vector<std::uint32_t> labels;
    labels.reserve(n);

    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> phi(k_count), rhythm(k_count * t_count);
    std::size_t i = 0;
    for (std::size_t s = 0; s < cfg.sessions; ++s)
        for (std::size_t c = 0; c < cfg.classes; ++c)
            for (std::size_t j = 0; j < cfg.trials_per_session_per_class; ++j, ++i) {
                for (auto& p : phi) p = phase(rng);
                for (std::size_t k = 0; k < k_count; ++k)
                    for (std::size_t tau = 0; tau < t_count; ++tau)
                        rhythm[k * t_count + tau] =
                            amp[c][k] * std::sin(2.0 * std::numbers::pi * cfg.rhythm_freqs[k] *
                                                     static_cast<double>(tau) / cfg.sample_rate_hz +
                                                 phi[k]);
                float* trial = set.data.data() + i * e_count * t_count;
                for (std::size_t e = 0; e < e_count; ++e)
                    for (std::size_t tau = 0; tau < t_count; ++tau) {
                        double mixed = 0;
                        for (std::size_t k = 0; k < k_count; ++k) mixed += rec.mixing[e][k] * rhythm[k * t_count + tau];
                        double v = rec.gains[s][e] * mixed + rec.offsets[s][e];
                        if (cfg.noise_std > 0) v += cfg.noise_std * noise(rng);
                        trial[e * t_count + tau] = static_cast<float>(v);
                    }
                labels.push_back(static_cast<std::uint32_t>(c));
                set.session_ids.push_back(static_cast<std::uint32_t>(s));
            }
    set.set_labels(std::move(labels));
    return {std::move(set), std::move(rec)};
}

}  // namespace bdan
