#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "eegcsr/signal.hpp"
#include "eegcsr/tensor.hpp"

namespace eegcsr::features {

struct FeatureSequence {
    Tensor frames; // [T x D]
    double frame_rate_hz = 0.0;
    std::vector<std::string> names;

    std::size_t length() const { return frames.rows(); }
    std::size_t dim() const { return frames.cols(); }
    void validate() const;
};

struct WindowConfig {
    std::size_t window_samples = 0;
    std::size_t hop_samples = 0;
};

struct WindowStats {
    double rms = 0.0;
    double zcr = 0.0;
    double mwa = 0.0;
    double kurtosis = 0.0;
    double pse = 0.0;
};

// rms, strict-sign-change rate, window mean, Pearson kurtosis m4/m2^2
// (0 when m2 < 1e-12), and power spectral entropy of the one-sided
// periodogram normalized to [0,1] by ln(bins). Window must have >= 4 samples.
WindowStats window_stats(const std::vector<double>& window, double fs);

// Windowed statistics for every channel at a 100 Hz frame rate
// (sample_rate / hop must equal 100). Feature order is channel-major,
// stat-minor; names like "T7.rms".
FeatureSequence extract_eeg_features(const signal::RawRecording& recording,
                                     const WindowConfig& cfg);

// Mel-frequency cepstral coefficients of a single-channel recording:
// pre-emphasis 0.97, Hamming window, power spectrum (FFT size = next power of
// two >= window), 26 triangular mel filters spanning 0..fs/2, log floored at
// 1e-10, orthonormal DCT-II, coefficients 0..n_coeffs-1. Frame rate 100 Hz.
FeatureSequence extract_mfcc(const signal::RawRecording& speech, std::size_t n_coeffs,
                             const WindowConfig& cfg);

// Restrict and reorder recording rows to the requested channel labels.
signal::RawRecording select_channels(const signal::RawRecording& recording,
                                     const std::vector<std::string>& labels);

// Column-concatenate two frame-aligned target streams (first columns first).
// Frame rates must match; lengths may differ by at most 2 frames and are
// trimmed to the shorter.
FeatureSequence concat_targets(const FeatureSequence& mfcc, const FeatureSequence& artic);

} // namespace eegcsr::features
