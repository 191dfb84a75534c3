#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bdan/errors.hpp"
#include "bdan/random.hpp"

namespace bdan {

/// Labeled EEG trials stored trial-major as (n, electrodes, time).
///
/// Labels can be sealed: after `seal_labels()` every read through `labels()`
/// or `label()` throws LabelTripwire. The training path seals the target
/// domain so an accidental read fails loudly.
class EpochSet {
public:
    std::vector<float> data;
    std::vector<std::uint32_t> session_ids;
    std::string subject_id;
    float sample_rate_hz = 100.0f;
    std::uint32_t class_count = 2;
    std::size_t electrodes = 0;
    std::size_t time_points = 0;

    std::size_t size() const { return session_ids.size(); }

    const std::vector<std::uint32_t>& labels() const;
    std::uint32_t label(std::size_t i) const { return labels().at(i); }
    void set_labels(std::vector<std::uint32_t> labels);

    void seal_labels() { sealed_ = true; }
    bool labels_sealed() const { return sealed_; }

    /// Trials at `indices`, in that order. Sealing carries over.
    EpochSet subset(const std::vector<std::size_t>& indices) const;

    const float* trial(std::size_t i) const { return data.data() + i * electrodes * time_points; }

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;

private:
    std::vector<std::uint32_t> labels_;
    bool sealed_ = false;
};

// EEGC container (version 1, little-endian).
inline constexpr std::uint32_t kContainerVersion = 1;

std::vector<unsigned char> encode_container(const EpochSet& set);
EpochSet decode_container(const std::vector<unsigned char>& bytes);
void save_container(const EpochSet& set, const std::filesystem::path& path);
EpochSet load_container(const std::filesystem::path& path);

// Preprocessing.

/// Crops the first `window_s` seconds of an (electrodes x raw_len) recording
/// and linearly interpolates onto `round(window_s * target_hz)` points whose
/// first and last samples coincide with the crop's endpoints.
std::vector<float> resample_window(const std::vector<float>& x, std::size_t electrodes, std::size_t raw_len,
                                   double raw_hz, double window_s = 3.5, double target_hz = 100.0);

/// Per trial and electrode: (x - mean) / (std + 1e-8) over time.
EpochSet zscore_normalize(const EpochSet& set);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified k-fold split; deterministic in `seed`.
std::vector<Fold> kfold_split(const EpochSet& set, std::size_t k, std::uint64_t seed);

// Synthetic drift generator.

struct DriftConfig {
    std::size_t electrodes = 16;
    std::size_t time_points = 350;
    double sample_rate_hz = 100.0;
    std::size_t sessions = 4;
    std::size_t trials_per_session_per_class = 40;
    std::size_t classes = 2;
    std::vector<double> rhythm_freqs{10.0, 20.0};
    /// classes x rhythms; empty selects a default with one dominant rhythm per class.
    std::vector<std::vector<double>> class_amplitudes;
    double gain_step = 0.1;
    double offset_step = 0.05;
    double noise_std = 0.5;
    std::uint64_t subject_seed = 1;
    std::string subject_id = "S1";

    void validate() const;
    std::vector<std::vector<double>> amplitudes() const;
};

/// Per-session gains and offsets actually applied (sessions x electrodes),
/// plus the electrode x rhythm mixing matrix.
struct DriftRecord {
    std::vector<std::vector<double>> gains;
    std::vector<std::vector<double>> offsets;
    std::vector<std::vector<double>> mixing;
};

/// Mixing and the drift walk come from `cfg.subject_seed`; trial phases and
/// noise come from `rng`.
std::pair<EpochSet, DriftRecord> synth_generate(const DriftConfig& cfg, Rng& rng);

}  // namespace bdan
