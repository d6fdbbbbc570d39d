#pragma once

#include "eegcsr/tensor.hpp"

#include <complex>
#include <string>
#include <vector>

namespace eegcsr::signal {

// Multichannel time-domain signal. samples is [channels x time].
struct RawRecording {
    Tensor samples;
    double sample_rate_hz = 0.0;
    std::vector<std::string> channel_labels;

    std::size_t channels() const { return samples.rows(); }
    std::size_t length() const { return samples.cols(); }

    void validate() const;
};

// One second-order section, direct form II transposed:
//   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Sos {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

// Immutable cascade of stable second-order sections.
class IirFilter {
public:
    IirFilter(std::vector<Sos> sections, double sample_rate_hz);

    const std::vector<Sos>& sections() const { return sections_; }
    double sample_rate_hz() const { return sample_rate_hz_; }

private:
    std::vector<Sos> sections_;
    double sample_rate_hz_;
};

// Butterworth bandpass of the stated order (= pole count, even) via the
// analog prototype and bilinear transform. -3 dB at both edges.
IirFilter design_bandpass(double low_hz, double high_hz, int order, double fs);

// Second-order notch with an exact null at f0_hz and unity gain at DC/Nyquist.
IirFilter design_notch(double f0_hz, double quality, double fs);

// Per-channel filtering with zero initial state.
RawRecording apply_filter(const IirFilter& filter, const RawRecording& recording);

// Complex gain of the cascade at freq_hz (0 <= freq_hz <= fs/2).
std::complex<double> frequency_response(const IirFilter& filter, double freq_hz);

} // namespace eegcsr::signal
