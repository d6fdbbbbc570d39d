#include "eegcsr/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace eegcsr::features {

namespace {

constexpr double kPi = std::numbers::pi;

// One-sided periodogram entropy support: precomputed DFT tables for a fixed
// window length, reused across every window of an extraction run.
struct PeriodogramPlan {
    explicit PeriodogramPlan(std::size_t n)
        : n_(n), bins_(n / 2 + 1), cos_(bins_ * n), sin_(bins_ * n) {
        for (std::size_t k = 0; k < bins_; ++k) {
            for (std::size_t t = 0; t < n; ++t) {
                const double a = 2.0 * kPi * static_cast<double>(k) * static_cast<double>(t) /
                                 static_cast<double>(n);
                cos_[k * n + t] = std::cos(a);
                sin_[k * n + t] = std::sin(a);
            }
        }
    }

    // Shannon entropy of the normalized one-sided periodogram, scaled to
    // [0,1] by ln(bins); 0 for an all-zero window.
    double entropy(const double* x) const {
        std::vector<double> power(bins_);
        double total = 0.0;
        for (std::size_t k = 0; k < bins_; ++k) {
            double re = 0.0, im = 0.0;
            const double* c = &cos_[k * n_];
            const double* s = &sin_[k * n_];
            for (std::size_t t = 0; t < n_; ++t) {
                re += x[t] * c[t];
                im -= x[t] * s[t];
            }
            power[k] = re * re + im * im;
            total += power[k];
        }
        if (total <= 0.0) return 0.0;
        double h = 0.0;
        for (std::size_t k = 0; k < bins_; ++k) {
            const double p = power[k] / total;
            if (p > 0.0) h -= p * std::log(p);
        }
        return h / std::log(static_cast<double>(bins_));
    }

    std::size_t n_, bins_;
    std::vector<double> cos_, sin_;
};

WindowStats stats_with_plan(const double* x, std::size_t n, const PeriodogramPlan& plan) {
    WindowStats s;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += x[i];
        sum_sq += x[i] * x[i];
    }
    const double dn = static_cast<double>(n);
    s.rms = std::sqrt(sum_sq / dn);
    s.mwa = sum / dn;

    std::size_t changes = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (x[i] * x[i + 1] < 0.0) ++changes;
    }
    s.zcr = static_cast<double>(changes) / (dn - 1.0);

    double m2 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - s.mwa;
        const double d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= dn;
    m4 /= dn;
    s.kurtosis = (m2 < 1e-12) ? 0.0 : m4 / (m2 * m2);

    s.pse = plan.entropy(x);
    return s;
}

// In-place iterative radix-2 FFT; length must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void validate_window_config(const WindowConfig& cfg) {
    if (cfg.window_samples == 0 || cfg.hop_samples == 0)
        throw std::invalid_argument("window and hop must be positive");
    if (cfg.hop_samples > cfg.window_samples)
        throw std::invalid_argument("hop (" + std::to_string(cfg.hop_samples) +
                                    ") must not exceed window (" +
                                    std::to_string(cfg.window_samples) + ")");
}

void require_100hz(double fs, std::size_t hop, const char* who) {
    const double rate = fs / static_cast<double>(hop);
    if (std::abs(rate - 100.0) > 1e-9)
        throw std::invalid_argument(std::string(who) + ": sample_rate/hop must be 100 Hz, got " +
                                    std::to_string(rate));
}

} // namespace

void FeatureSequence::validate() const {
    if (frames.rank() != 2)
        throw std::invalid_argument("feature frames must be [T x D], got rank " +
                                    std::to_string(frames.rank()));
    if (!(frame_rate_hz > 0.0)) throw std::invalid_argument("frame rate must be positive");
    if (names.size() != frames.cols())
        throw std::invalid_argument("feature names count " + std::to_string(names.size()) +
                                    " does not match dimension " + std::to_string(frames.cols()));
    for (double v : frames.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument("feature values must be finite");
    }
}

WindowStats window_stats(const std::vector<double>& window, double fs) {
    if (window.size() < 4)
        throw std::invalid_argument("window_stats needs at least 4 samples, got " +
                                    std::to_string(window.size()));
    if (!(fs > 0.0)) throw std::invalid_argument("sample rate must be positive");
    PeriodogramPlan plan(window.size());
    return stats_with_plan(window.data(), window.size(), plan);
}

FeatureSequence extract_eeg_features(const signal::RawRecording& recording,
                                     const WindowConfig& cfg) {
    recording.validate();
    validate_window_config(cfg);
    if (cfg.window_samples < 4)
        throw std::invalid_argument("eeg feature window must have at least 4 samples");
    require_100hz(recording.sample_rate_hz, cfg.hop_samples, "extract_eeg_features");

    const std::size_t n = recording.samples.cols();
    if (n < cfg.window_samples)
        throw std::invalid_argument("recording has " + std::to_string(n) +
                                    " samples, shorter than one window of " +
                                    std::to_string(cfg.window_samples));
    const std::size_t channels = recording.samples.rows();
    const std::size_t frames = (n - cfg.window_samples) / cfg.hop_samples + 1;

    static const char* kStatNames[5] = {"rms", "zcr", "mwa", "kurtosis", "pse"};
    FeatureSequence out;
    out.frame_rate_hz = 100.0;
    out.frames = Tensor({frames, channels * 5});
    for (std::size_t c = 0; c < channels; ++c) {
        for (const char* stat : kStatNames)
            out.names.push_back(recording.channel_labels[c] + "." + stat);
    }

    PeriodogramPlan plan(cfg.window_samples);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* row = recording.samples.row_ptr(c);
        for (std::size_t f = 0; f < frames; ++f) {
            const WindowStats s =
                stats_with_plan(row + f * cfg.hop_samples, cfg.window_samples, plan);
            double* dst = out.frames.row_ptr(f) + c * 5;
            dst[0] = s.rms;
            dst[1] = s.zcr;
            dst[2] = s.mwa;
            dst[3] = s.kurtosis;
            dst[4] = s.pse;
        }
    }
    return out;
}

FeatureSequence extract_mfcc(const signal::RawRecording& speech, std::size_t n_coeffs,
                             const WindowConfig& cfg) {
    speech.validate();
    if (speech.samples.rows() != 1)
        throw std::invalid_argument("extract_mfcc expects a single-channel recording, got " +
                                    std::to_string(speech.samples.rows()) + " channels");
    validate_window_config(cfg);
    require_100hz(speech.sample_rate_hz, cfg.hop_samples, "extract_mfcc");
    constexpr std::size_t kNumFilters = 26;
    if (n_coeffs == 0 || n_coeffs > kNumFilters)
        throw std::invalid_argument("n_coeffs must lie in [1, " + std::to_string(kNumFilters) +
                                    "], got " + std::to_string(n_coeffs));

    const std::size_t n = speech.samples.cols();
    if (n < cfg.window_samples)
        throw std::invalid_argument("speech has " + std::to_string(n) +
                                    " samples, shorter than one window of " +
                                    std::to_string(cfg.window_samples));
    const std::size_t frames = (n - cfg.window_samples) / cfg.hop_samples + 1;

    // Whole-signal pre-emphasis.
    const double* raw = speech.samples.row_ptr(0);
    std::vector<double> pre(n);
    pre[0] = raw[0];
    for (std::size_t i = 1; i < n; ++i) pre[i] = raw[i] - 0.97 * raw[i - 1];

    std::size_t nfft = 1;
    while (nfft < cfg.window_samples) nfft <<= 1;
    const std::size_t bins = nfft / 2 + 1;

    std::vector<double> hamming(cfg.window_samples);
    for (std::size_t i = 0; i < cfg.window_samples; ++i)
        hamming[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                            static_cast<double>(cfg.window_samples - 1));

    // Triangular mel filterbank over nfft/2+1 power bins spanning 0..fs/2.
    const double fs = speech.sample_rate_hz;
    std::vector<double> mel_points(kNumFilters + 2);
    const double mel_hi = hz_to_mel(fs / 2.0);
    for (std::size_t i = 0; i < mel_points.size(); ++i)
        mel_points[i] = static_cast<double>(i) * mel_hi / static_cast<double>(kNumFilters + 1);
    std::vector<std::size_t> bin_of(mel_points.size());
    for (std::size_t i = 0; i < mel_points.size(); ++i)
        bin_of[i] = static_cast<std::size_t>(
            std::floor((static_cast<double>(nfft) + 1.0) * mel_to_hz(mel_points[i]) / fs));
    Tensor fbank({kNumFilters, bins});
    for (std::size_t j = 0; j < kNumFilters; ++j) {
        for (std::size_t k = bin_of[j]; k < bin_of[j + 1]; ++k)
            fbank.at(j, k) = static_cast<double>(k - bin_of[j]) /
                             static_cast<double>(bin_of[j + 1] - bin_of[j]);
        for (std::size_t k = bin_of[j + 1]; k < bin_of[j + 2]; ++k)
            fbank.at(j, k) = static_cast<double>(bin_of[j + 2] - k) /
                             static_cast<double>(bin_of[j + 2] - bin_of[j + 1]);
    }

    // Orthonormal DCT-II table [n_coeffs x kNumFilters].
    Tensor dct({n_coeffs, kNumFilters});
    for (std::size_t i = 0; i < n_coeffs; ++i) {
        const double scale =
            std::sqrt((i == 0 ? 1.0 : 2.0) / static_cast<double>(kNumFilters));
        for (std::size_t j = 0; j < kNumFilters; ++j)
            dct.at(i, j) = scale * std::cos(kPi * static_cast<double>(i) *
                                            (2.0 * static_cast<double>(j) + 1.0) /
                                            (2.0 * static_cast<double>(kNumFilters)));
    }

    FeatureSequence out;
    out.frame_rate_hz = 100.0;
    out.frames = Tensor({frames, n_coeffs});
    for (std::size_t i = 0; i < n_coeffs; ++i) out.names.push_back("mfcc" + std::to_string(i));

    std::vector<std::complex<double>> spectrum(nfft);
    std::vector<double> log_energy(kNumFilters);
    for (std::size_t f = 0; f < frames; ++f) {
        const double* seg = pre.data() + f * cfg.hop_samples;
        for (std::size_t i = 0; i < nfft; ++i) {
            spectrum[i] = (i < cfg.window_samples)
                              ? std::complex<double>(seg[i] * hamming[i], 0.0)
                              : std::complex<double>(0.0, 0.0);
        }
        fft_pow2(spectrum);
        for (std::size_t j = 0; j < kNumFilters; ++j) {
            double e = 0.0;
            const double* fb = fbank.row_ptr(j);
            for (std::size_t k = 0; k < bins; ++k) {
                if (fb[k] == 0.0) continue;
                e += fb[k] * std::norm(spectrum[k]) / static_cast<double>(nfft);
            }
            log_energy[j] = std::log(std::max(e, 1e-10));
        }
        double* dst = out.frames.row_ptr(f);
        for (std::size_t i = 0; i < n_coeffs; ++i) {
            double acc = 0.0;
            const double* dr = dct.row_ptr(i);
            for (std::size_t j = 0; j < kNumFilters; ++j) acc += dr[j] * log_energy[j];
            dst[i] = acc;
        }
    }
    return out;
}

signal::RawRecording select_channels(const signal::RawRecording& recording,
                                     const std::vector<std::string>& labels) {
    recording.validate();
    if (labels.empty()) throw std::invalid_argument("select_channels needs at least one label");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            if (labels[i] == labels[j])
                throw std::invalid_argument("duplicate channel label '" + labels[i] +
                                            "' in selection");
        }
    }
    signal::RawRecording out;
    out.sample_rate_hz = recording.sample_rate_hz;
    out.channel_labels = labels;
    out.samples = Tensor({labels.size(), recording.samples.cols()});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::find(recording.channel_labels.begin(), recording.channel_labels.end(),
                            labels[i]);
        if (it == recording.channel_labels.end())
            throw std::out_of_range("channel '" + labels[i] + "' not present in the recording");
        const std::size_t src = static_cast<std::size_t>(it - recording.channel_labels.begin());
        const double* from = recording.samples.row_ptr(src);
        double* to = out.samples.row_ptr(i);
        std::copy(from, from + recording.samples.cols(), to);
    }
    return out;
}

FeatureSequence concat_targets(const FeatureSequence& mfcc, const FeatureSequence& artic) {
    mfcc.validate();
    artic.validate();
    if (std::abs(mfcc.frame_rate_hz - artic.frame_rate_hz) > 1e-9)
        throw std::invalid_argument("concat_targets frame-rate mismatch: " +
                                    std::to_string(mfcc.frame_rate_hz) + " vs " +
                                    std::to_string(artic.frame_rate_hz));
    const std::size_t t1 = mfcc.length(), t2 = artic.length();
    const std::size_t lo = std::min(t1, t2), hi = std::max(t1, t2);
    if (hi - lo > 2)
        throw std::invalid_argument("concat_targets length mismatch beyond trim rule: " +
                                    std::to_string(t1) + " vs " + std::to_string(t2));
    FeatureSequence out;
    out.frame_rate_hz = mfcc.frame_rate_hz;
    const std::size_t d1 = mfcc.dim(), d2 = artic.dim();
    out.frames = Tensor({lo, d1 + d2});
    for (std::size_t t = 0; t < lo; ++t) {
        double* dst = out.frames.row_ptr(t);
        const double* a = mfcc.frames.row_ptr(t);
        const double* b = artic.frames.row_ptr(t);
        std::copy(a, a + d1, dst);
        std::copy(b, b + d2, dst + d1);
    }
    out.names = mfcc.names;
    out.names.insert(out.names.end(), artic.names.begin(), artic.names.end());
    return out;
}

} // namespace eegcsr::features
