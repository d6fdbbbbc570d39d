#include "eegcsr/signal.hpp"

#include <cmath>
#include <stdexcept>

namespace eegcsr::signal {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Roots of z^2 + a1 z + a2 must lie strictly inside the unit circle.
bool section_stable(const Sos& s) {
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
    const std::complex<double> r1 = (-s.a1 + disc) / 2.0;
    const std::complex<double> r2 = (-s.a1 - disc) / 2.0;
    return std::abs(r1) < 1.0 && std::abs(r2) < 1.0;
}

std::complex<double> section_response(const Sos& s, double omega) {
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = std::polar(1.0, -2.0 * omega);
    return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

// Biquad from a pole pair and a zero pair; coefficients are real because
// pairs are either conjugate or both real.
Sos sos_from_pairs(std::complex<double> p1, std::complex<double> p2,
                   std::complex<double> z1, std::complex<double> z2) {
    Sos s;
    s.b0 = 1.0;
    s.b1 = -(z1 + z2).real();
    s.b2 = (z1 * z2).real();
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    return s;
}

} // namespace

void RawRecording::validate() const {
    if (samples.rank() != 2)
        throw std::invalid_argument("RawRecording: samples must be [channels x time]");
    if (channels() != channel_labels.size())
        throw std::invalid_argument("RawRecording: channel count does not match labels");
    if (!(sample_rate_hz > 0.0))
        throw std::invalid_argument("RawRecording: sample rate must be positive");
    for (double v : samples.values())
        if (!std::isfinite(v))
            throw std::invalid_argument("RawRecording: non-finite sample");
}

IirFilter::IirFilter(std::vector<Sos> sections, double sample_rate_hz)
    : sections_(std::move(sections)), sample_rate_hz_(sample_rate_hz) {
    if (sections_.empty())
        throw std::invalid_argument("IirFilter: empty section list");
    if (!(sample_rate_hz_ > 0.0))
        throw std::invalid_argument("IirFilter: sample rate must be positive");
    for (const Sos& s : sections_)
        if (!section_stable(s))
            throw std::invalid_argument("IirFilter: unstable section");
}

IirFilter design_bandpass(double low_hz, double high_hz, int order, double fs) {
    if (!(fs > 0.0))
        throw std::invalid_argument("design_bandpass: sample rate must be positive");
    if (!(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0))
        throw std::invalid_argument("design_bandpass: need 0 < low < high < fs/2");
    if (order < 2 || order % 2 != 0)
        throw std::invalid_argument("design_bandpass: order must be even and >= 2");

    const int m = order / 2; // analog lowpass prototype order
    const double warped_lo = 2.0 * fs * std::tan(kPi * low_hz / fs);
    const double warped_hi = 2.0 * fs * std::tan(kPi * high_hz / fs);
    const double w0 = std::sqrt(warped_lo * warped_hi);
    const double bw = warped_hi - warped_lo;

    // Butterworth prototype poles on the left unit semicircle.
    std::vector<std::complex<double>> analog_poles;
    analog_poles.reserve(static_cast<std::size_t>(2 * m));
    for (int k = 0; k < m; ++k) {
        const double theta = kPi * (2.0 * k + m + 1.0) / (2.0 * m);
        const std::complex<double> p(std::cos(theta), std::sin(theta));
        // Lowpass-to-bandpass: each prototype pole spawns two.
        const std::complex<double> bp = bw * p / 2.0;
        const std::complex<double> d = std::sqrt(bp * bp - w0 * w0);
        analog_poles.push_back(bp + d);
        analog_poles.push_back(bp - d);
    }

    // Bilinear transform; m zeros at z=1 (from s=0) and m at z=-1 (from s=inf).
    std::vector<std::complex<double>> poles;
    poles.reserve(analog_poles.size());
    for (const auto& s : analog_poles)
        poles.push_back((2.0 * fs + s) / (2.0 * fs - s));

    // Pair conjugates: poles arrive as (p, conj-ish partner) per prototype pole
    // only when m's pole is complex; re-pair explicitly by matching conjugates.
    std::vector<std::complex<double>> complex_poles, real_poles;
    for (const auto& p : poles) {
        if (std::abs(p.imag()) > 1e-12)
            complex_poles.push_back(p);
        else
            real_poles.push_back(p);
    }
    std::vector<Sos> sections;
    std::vector<bool> used(complex_poles.size(), false);
    for (std::size_t i = 0; i < complex_poles.size(); ++i) {
        if (used[i] || complex_poles[i].imag() < 0.0) continue;
        // find the matching conjugate
        std::size_t best = complex_poles.size();
        double best_d = 1e30;
        for (std::size_t j = 0; j < complex_poles.size(); ++j) {
            if (used[j] || j == i || complex_poles[j].imag() > 0.0) continue;
            const double d = std::abs(complex_poles[j] - std::conj(complex_poles[i]));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best == complex_poles.size())
            throw std::runtime_error("design_bandpass: unpaired complex pole");
        used[i] = used[best] = true;
        sections.push_back(sos_from_pairs(complex_poles[i], complex_poles[best],
                                          {1.0, 0.0}, {-1.0, 0.0}));
    }
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2)
        sections.push_back(sos_from_pairs(real_poles[i], real_poles[i + 1],
                                          {1.0, 0.0}, {-1.0, 0.0}));
    if (static_cast<int>(sections.size()) != m)
        throw std::runtime_error("design_bandpass: section pairing failed");

    // Normalize each section to unit gain at the (warped) center frequency.
    const double f_center = fs / kPi * std::atan(w0 / (2.0 * fs));
    const double omega_c = 2.0 * kPi * f_center / fs;
    for (Sos& s : sections) {
        const double g = std::abs(section_response(s, omega_c));
        if (!(g > 0.0))
            throw std::runtime_error("design_bandpass: zero section gain at center");
        s.b0 /= g;
        s.b1 /= g;
        s.b2 /= g;
    }
    return IirFilter(std::move(sections), fs);
}

IirFilter design_notch(double f0_hz, double quality, double fs) {
    if (!(fs > 0.0))
        throw std::invalid_argument("design_notch: sample rate must be positive");
    if (!(0.0 < f0_hz && f0_hz < fs / 2.0))
        throw std::invalid_argument("design_notch: need 0 < f0 < fs/2");
    if (!(quality > 0.0))
        throw std::invalid_argument("design_notch: quality must be positive");

    const double w0 = 2.0 * kPi * f0_hz / fs;
    const double alpha = std::sin(w0) / (2.0 * quality);
    const double a0 = 1.0 + alpha;
    Sos s;
    s.b0 = 1.0 / a0;
    s.b1 = -2.0 * std::cos(w0) / a0;
    s.b2 = 1.0 / a0;
    s.a1 = -2.0 * std::cos(w0) / a0;
    s.a2 = (1.0 - alpha) / a0;
    return IirFilter({s}, fs);
}

RawRecording apply_filter(const IirFilter& filter, const RawRecording& recording) {
    if (filter.sample_rate_hz() != recording.sample_rate_hz)
        throw std::invalid_argument("apply_filter: sample rate mismatch");
    RawRecording out = recording;
    const std::size_t n = recording.length();
    for (std::size_t ch = 0; ch < recording.channels(); ++ch) {
        double* x = out.samples.row_ptr(ch);
        for (const Sos& s : filter.sections()) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double in = x[i];
                const double y = s.b0 * in + s1;
                s1 = s.b1 * in - s.a1 * y + s2;
                s2 = s.b2 * in - s.a2 * y;
                x[i] = y;
            }
        }
    }
    return out;
}

std::complex<double> frequency_response(const IirFilter& filter, double freq_hz) {
    const double fs = filter.sample_rate_hz();
    if (!(freq_hz >= 0.0 && freq_hz <= fs / 2.0))
        throw std::invalid_argument("frequency_response: frequency outside [0, fs/2]");
    const double omega = 2.0 * kPi * freq_hz / fs;
    std::complex<double> h(1.0, 0.0);
    for (const Sos& s : filter.sections())
        h *= section_response(s, omega);
    return h;
}

} // namespace eegcsr::signal
