#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "eegcsr/features.hpp"
#include "eegcsr/rng.hpp"

using namespace eegcsr;
using namespace eegcsr::features;

namespace {

signal::RawRecording make_recording(std::size_t channels, std::size_t samples, double fs,
                                    Rng* rng = nullptr) {
    signal::RawRecording r;
    r.sample_rate_hz = fs;
    r.samples = Tensor({channels, samples});
    for (std::size_t c = 0; c < channels; ++c) {
        r.channel_labels.push_back("ch" + std::to_string(c));
        if (rng) {
            double* row = r.samples.row_ptr(c);
            for (std::size_t i = 0; i < samples; ++i) row[i] = rng->gaussian();
        }
    }
    return r;
}

} // namespace

TEST_CASE("window statistics on an alternating window") {
    // [1,-1,1,-1]: unit power, every adjacent pair flips sign, zero mean,
    // two-point distribution (kurtosis 1), all spectral power at Nyquist.
    WindowStats s = window_stats({1.0, -1.0, 1.0, -1.0}, 100.0);
    CHECK(s.rms == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.zcr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.mwa == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.kurtosis == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.pse == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("window statistics on a constant window") {
    WindowStats s = window_stats({2.0, 2.0, 2.0, 2.0}, 100.0);
    CHECK(s.rms == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.zcr == 0.0);
    CHECK(s.mwa == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.kurtosis == 0.0); // degenerate variance maps to 0
    CHECK(s.pse == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("all-zero window has zero entropy by convention") {
    WindowStats s = window_stats(std::vector<double>(16, 0.0), 100.0);
    CHECK(s.pse == 0.0);
    CHECK(s.rms == 0.0);
    CHECK(s.kurtosis == 0.0);
}

TEST_CASE("spectral entropy separates noise from tones") {
    Rng rng(11);
    std::vector<double> noise(1024);
    for (double& v : noise) v = rng.gaussian();
    CHECK(window_stats(noise, 1000.0).pse > 0.9);
    CHECK(window_stats(noise, 1000.0).pse < 1.0);

    std::vector<double> tone(64);
    for (std::size_t i = 0; i < tone.size(); ++i)
        tone[i] = std::sin(2.0 * M_PI * 16.0 * static_cast<double>(i) / 64.0);
    CHECK(window_stats(tone, 1000.0).pse < 0.01);
}

TEST_CASE("window statistics scale behavior") {
    Rng rng(13);
    std::vector<double> x(64);
    for (double& v : x) v = rng.gaussian();
    std::vector<double> y = x;
    for (double& v : y) v *= 7.5;
    WindowStats a = window_stats(x, 100.0);
    WindowStats b = window_stats(y, 100.0);
    CHECK(b.rms == doctest::Approx(7.5 * a.rms).epsilon(1e-12));
    CHECK(b.mwa == doctest::Approx(7.5 * a.mwa).epsilon(1e-12));
    CHECK(b.zcr == a.zcr);
    CHECK(b.kurtosis == doctest::Approx(a.kurtosis).epsilon(1e-10));
    CHECK(b.pse == doctest::Approx(a.pse).epsilon(1e-10));
}

TEST_CASE("window statistics validation") {
    CHECK_THROWS_AS(window_stats({1.0, 2.0, 3.0}, 100.0), std::invalid_argument);
    CHECK_THROWS_AS(window_stats({1.0, 2.0, 3.0, 4.0}, 0.0), std::invalid_argument);
}

TEST_CASE("eeg feature grid: frame count, order, and names") {
    Rng rng(17);
    signal::RawRecording r = make_recording(31, 10000, 1000.0, &rng);
    FeatureSequence f = extract_eeg_features(r, {100, 10});
    f.validate();
    CHECK(f.length() == 991); // (10000 - 100) / 10 + 1
    CHECK(f.dim() == 155);    // 31 channels x 5 statistics
    CHECK(f.frame_rate_hz == 100.0);
    CHECK(f.names[0] == "ch0.rms");
    CHECK(f.names[1] == "ch0.zcr");
    CHECK(f.names[2] == "ch0.mwa");
    CHECK(f.names[3] == "ch0.kurtosis");
    CHECK(f.names[4] == "ch0.pse");
    CHECK(f.names[5] == "ch1.rms");
    CHECK(f.names.back() == "ch30.pse");

    // First frame of channel 2 must equal direct window statistics.
    std::vector<double> w(r.samples.row_ptr(2), r.samples.row_ptr(2) + 100);
    WindowStats s = window_stats(w, 1000.0);
    CHECK(f.frames.at(0, 2 * 5 + 0) == doctest::Approx(s.rms).epsilon(1e-12));
    CHECK(f.frames.at(0, 2 * 5 + 4) == doctest::Approx(s.pse).epsilon(1e-12));

    // Second frame starts one hop later.
    std::vector<double> w2(r.samples.row_ptr(2) + 10, r.samples.row_ptr(2) + 110);
    CHECK(f.frames.at(1, 2 * 5 + 0) ==
          doctest::Approx(window_stats(w2, 1000.0).rms).epsilon(1e-12));
}

TEST_CASE("eeg feature extraction rejects non-100Hz framing") {
    Rng rng(19);
    signal::RawRecording r = make_recording(2, 2000, 1000.0, &rng);
    CHECK_THROWS_AS(extract_eeg_features(r, {100, 20}), std::invalid_argument); // 50 Hz
    CHECK_THROWS_AS(extract_eeg_features(r, {100, 0}), std::invalid_argument);
    CHECK_THROWS_AS(extract_eeg_features(r, {0, 10}), std::invalid_argument);
    CHECK_THROWS_AS(extract_eeg_features(r, {3, 10}), std::invalid_argument);   // window < 4
    CHECK_THROWS_AS(extract_eeg_features(r, {8, 10}), std::invalid_argument); // hop > window
    signal::RawRecording tiny = make_recording(2, 50, 1000.0, &rng);
    CHECK_THROWS_AS(extract_eeg_features(tiny, {100, 10}), std::invalid_argument);
}

TEST_CASE("channel selection restricts and reorders") {
    Rng rng(23);
    signal::RawRecording r = make_recording(4, 600, 1000.0, &rng);
    signal::RawRecording sub = select_channels(r, {"ch2", "ch0"});
    CHECK(sub.channels() == 2);
    CHECK(sub.channel_labels == std::vector<std::string>{"ch2", "ch0"});
    for (std::size_t i = 0; i < 600; ++i) {
        CHECK(sub.samples.at(0, i) == r.samples.at(2, i));
        CHECK(sub.samples.at(1, i) == r.samples.at(0, i));
    }
    CHECK_THROWS_AS(select_channels(r, {"ch0", "ch0"}), std::invalid_argument);
    CHECK_THROWS_AS(select_channels(r, {"nope"}), std::out_of_range);
    CHECK_THROWS_AS(select_channels(r, {}), std::invalid_argument);
}

TEST_CASE("feature extraction commutes with channel selection") {
    Rng rng(29);
    signal::RawRecording r = make_recording(4, 800, 1000.0, &rng);
    FeatureSequence full = extract_eeg_features(r, {64, 10});
    FeatureSequence sub = extract_eeg_features(select_channels(r, {"ch3", "ch1"}), {64, 10});
    CHECK(sub.dim() == 10);
    CHECK(sub.length() == full.length());
    for (std::size_t t = 0; t < sub.length(); ++t) {
        for (std::size_t s = 0; s < 5; ++s) {
            CHECK(sub.frames.at(t, s) == full.frames.at(t, 3 * 5 + s));
            CHECK(sub.frames.at(t, 5 + s) == full.frames.at(t, 1 * 5 + s));
        }
    }
    CHECK(sub.names[0] == "ch3.rms");
    CHECK(sub.names[5] == "ch1.rms");
}

TEST_CASE("mfcc of one second of speech-rate audio") {
    Rng rng(37);
    signal::RawRecording speech = make_recording(1, 16000, 16000.0, &rng);
    FeatureSequence f = extract_mfcc(speech, 13, {400, 160});
    f.validate();
    CHECK(f.length() == 98); // (16000 - 400) / 160 + 1
    CHECK(f.dim() == 13);
    CHECK(f.frame_rate_hz == 100.0);
    CHECK(f.names[0] == "mfcc0");
    CHECK(f.names[12] == "mfcc12");
}

TEST_CASE("mfcc of silence hits the log floor exactly") {
    signal::RawRecording silence = make_recording(1, 1600, 16000.0);
    FeatureSequence f = extract_mfcc(silence, 13, {400, 160});
    // All 26 filter energies floor at 1e-10; the orthonormal DCT turns that
    // constant vector into sqrt(26)*ln(1e-10) in coefficient 0 and exact
    // zeros elsewhere.
    const double c0 = std::sqrt(26.0) * std::log(1e-10);
    for (std::size_t t = 0; t < f.length(); ++t) {
        CHECK(f.frames.at(t, 0) == doctest::Approx(c0).epsilon(1e-12));
        for (std::size_t i = 1; i < 13; ++i)
            CHECK(std::abs(f.frames.at(t, i)) < 1e-9);
    }
}

TEST_CASE("scaling speech shifts only the zeroth cepstral coefficient") {
    Rng rng(41);
    signal::RawRecording speech = make_recording(1, 4800, 16000.0, &rng);
    // Keep the signal loud so no filter energy falls to the floor.
    for (double& v : speech.samples.values()) v *= 100.0;
    signal::RawRecording scaled = speech;
    const double factor = std::exp(1.0);
    for (double& v : scaled.samples.values()) v *= factor;

    FeatureSequence a = extract_mfcc(speech, 13, {400, 160});
    FeatureSequence b = extract_mfcc(scaled, 13, {400, 160});
    const double c0_shift = 2.0 * std::sqrt(26.0); // power scales by e^2
    for (std::size_t t = 0; t < a.length(); ++t) {
        CHECK(b.frames.at(t, 0) - a.frames.at(t, 0) ==
              doctest::Approx(c0_shift).epsilon(1e-9));
        for (std::size_t i = 1; i < 13; ++i)
            CHECK(b.frames.at(t, i) == doctest::Approx(a.frames.at(t, i)).epsilon(1e-9));
    }
}

TEST_CASE("mfcc validation") {
    Rng rng(43);
    signal::RawRecording stereo = make_recording(2, 2000, 16000.0, &rng);
    CHECK_THROWS_AS(extract_mfcc(stereo, 13, {400, 160}), std::invalid_argument);
    signal::RawRecording mono = make_recording(1, 2000, 16000.0, &rng);
    CHECK_THROWS_AS(extract_mfcc(mono, 0, {400, 160}), std::invalid_argument);
    CHECK_THROWS_AS(extract_mfcc(mono, 27, {400, 160}), std::invalid_argument);
    CHECK_THROWS_AS(extract_mfcc(mono, 13, {400, 100}), std::invalid_argument); // 160 Hz
    signal::RawRecording tiny = make_recording(1, 300, 16000.0, &rng);
    CHECK_THROWS_AS(extract_mfcc(tiny, 13, {400, 160}), std::invalid_argument);
}

TEST_CASE("target concatenation trims small length mismatches") {
    FeatureSequence a;
    a.frames = Tensor({5, 2});
    a.frame_rate_hz = 100.0;
    a.names = {"m0", "m1"};
    FeatureSequence b;
    b.frames = Tensor({7, 1});
    b.frame_rate_hz = 100.0;
    b.names = {"art0"};
    for (std::size_t t = 0; t < 5; ++t) {
        a.frames.at(t, 0) = static_cast<double>(t);
        a.frames.at(t, 1) = 10.0 + static_cast<double>(t);
    }
    for (std::size_t t = 0; t < 7; ++t) b.frames.at(t, 0) = 100.0 + static_cast<double>(t);

    FeatureSequence joined = concat_targets(a, b);
    CHECK(joined.length() == 5);
    CHECK(joined.dim() == 3);
    CHECK(joined.names == std::vector<std::string>{"m0", "m1", "art0"});
    CHECK(joined.frame_rate_hz == 100.0);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(joined.frames.at(t, 0) == a.frames.at(t, 0));
        CHECK(joined.frames.at(t, 1) == a.frames.at(t, 1));
        CHECK(joined.frames.at(t, 2) == b.frames.at(t, 0));
    }

    FeatureSequence c = b;
    c.frames = Tensor({9, 1}); // gap of 4 > 2
    CHECK_THROWS_AS(concat_targets(a, c), std::invalid_argument);

    FeatureSequence d = b;
    d.frame_rate_hz = 50.0;
    CHECK_THROWS_AS(concat_targets(a, d), std::invalid_argument);
}
