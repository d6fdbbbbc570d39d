#include "eegcsr/pipeline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "eegcsr/ctc.hpp"
#include "eegcsr/rng.hpp"

namespace eegcsr::pipeline {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Per-character dwell bounds (milliseconds) and the smoothing span that turns
// the piecewise-constant code sequence into a continuous trajectory.
constexpr int kDwellMinMs = 80;
constexpr int kDwellMaxMs = 160;
constexpr double kSmoothSeconds = 0.05;

std::string format_id(std::size_t subject, std::size_t sentence, std::size_t rep) {
    std::ostringstream os;
    os << 's' << (subject < 9 ? "0" : "") << subject + 1;
    os << "_t" << (sentence < 9 ? "0" : "") << sentence + 1;
    os << "_r" << rep + 1;
    return os.str();
}

// 6-dim latent code per alphabet character, drawn once per dataset.
std::vector<std::vector<double>> draw_codebook(Rng& rng, const std::string& chars) {
    std::vector<std::vector<double>> book(chars.size(), std::vector<double>(6));
    for (auto& code : book)
        for (double& v : code) v = rng.uniform(-1.0, 1.0);
    return book;
}

// Centered moving average over ±half samples with edge-shrinking windows.
Tensor smooth_rows(const Tensor& x, std::size_t half) {
    const std::size_t rows = x.rows(), n = x.cols();
    Tensor out({rows, n});
    std::vector<double> pref(n + 1);
    for (std::size_t r = 0; r < rows; ++r) {
        pref[0] = 0.0;
        for (std::size_t i = 0; i < n; ++i) pref[i + 1] = pref[i] + x.at(r, i);
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t lo = t > half ? t - half : 0;
            const std::size_t hi = std::min(n - 1, t + half);
            out.at(r, t) = (pref[hi + 1] - pref[lo]) / static_cast<double>(hi - lo + 1);
        }
    }
    return out;
}

// Paul Kellet's 1/f filter: feeds white noise through a fixed pole stack.
struct PinkNoise {
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;

    double next(double white) {
        b0 = 0.99886 * b0 + white * 0.0555179;
        b1 = 0.99332 * b1 + white * 0.0750759;
        b2 = 0.96900 * b2 + white * 0.1538520;
        b3 = 0.86650 * b3 + white * 0.3104856;
        b4 = 0.55000 * b4 + white * 0.5329522;
        b5 = -0.7616 * b5 - white * 0.0168980;
        const double pink = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
        b6 = white * 0.115926;
        return 0.11 * pink; // roughly unit variance
    }
};

} // namespace

const std::vector<std::string>& default_sentences() {
    static const std::vector<std::string> sentences = {
        "the birch canoe slid on the smooth planks",
        "glue the sheet to the dark blue background",
        "it's easy to tell the depth of a well",
        "these days a chicken leg is a rare dish",
        "rice is often served in round bowls",
        "the juice of lemons makes fine punch",
        "the box was thrown beside the parked truck",
        "the hogs were fed chopped corn and garbage",
        "four hours of steady work faced us",
        "a large size in stockings is hard to sell",
        "the boy was there when the sun rose",
        "a rod is used to catch pink salmon",
        "the source of the huge river is the clear spring",
        "kick the ball straight and follow through",
        "help the woman get back to her feet",
        "a pot of tea helps to pass the evening",
        "smoky fires lack flame and heat",
        "the soft cushion broke the man's fall",
        "the salt breeze came across from the sea",
        "the girl at the booth sold fifty bonds",
        "the small pup gnawed a hole in the sock",
        "the fish twisted and turned on the bent hook",
        "press the pants and sew a button on the vest",
        "the swan dive was far short of perfect",
        "the beauty of the view stunned the young boy",
        "two blue fish swam in the tank",
        "her purse was full of useless trash",
        "the colt reared and threw the tall rider",
        "it snowed rained and hailed the same morning",
        "read verse out loud for pleasure",
    };
    return sentences;
}

const std::vector<std::string>& eeg_channel_labels() {
    static const std::vector<std::string> labels = {
        "Fp1", "Fp2", "F3",  "F4",  "F7",  "F8",  "FC1", "FC2", "FC5", "FT9", "FT10",
        "Fz",  "T7",  "T8",  "TP9", "TP10", "C3", "C4",  "Cz",  "CP1", "CP2", "CP5",
        "CP6", "P3",  "P4",  "P7",  "P8",  "Pz",  "O1",  "O2",  "Oz",
    };
    return labels;
}

const std::vector<std::string>& articulatory_names() {
    static const std::vector<std::string> names = {"LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD"};
    return names;
}

void SynthSpec::validate() const {
    if (channels != 31)
        throw std::invalid_argument("synth spec: the montage is fixed at 31 channels, got " +
                                    std::to_string(channels));
    if (!(eeg_rate_hz > 0.0) || !(speech_rate_hz > 0.0))
        throw std::invalid_argument("synth spec: sample rates must be positive");
    if (subjects < 1 || repetitions < 1)
        throw std::invalid_argument("synth spec: subjects and repetitions must be >= 1");
    if (noise_level < 0.0)
        throw std::invalid_argument("synth spec: noise level must be >= 0");
    const ctc::Alphabet& alphabet = ctc::Alphabet::standard();
    for (const std::string& s : sentences) {
        if (s.empty()) throw std::invalid_argument("synth spec: empty sentence");
        for (char c : s)
            if (alphabet.chars().find(c) == std::string::npos)
                throw std::invalid_argument("synth spec: sentence character '" +
                                            std::string(1, c) + "' is outside the alphabet");
    }
}

void synth_dataset(const SynthSpec& spec_in, std::uint64_t seed, const std::string& out_dir) {
    SynthSpec spec = spec_in;
    if (spec.sentences.empty()) spec.sentences = default_sentences();
    spec.validate();

    const ctc::Alphabet& alphabet = ctc::Alphabet::standard();
    Rng root(seed);
    Rng codebook_rng = root.fork(1);
    Rng mixing_rng = root.fork(2);

    const std::vector<std::vector<double>> codebook =
        draw_codebook(codebook_rng, alphabet.chars());
    Tensor mixing({spec.channels, 6});
    for (double& v : mixing.values()) v = mixing_rng.uniform(-1.0, 1.0);

    const std::size_t smooth_half =
        static_cast<std::size_t>(std::llround(kSmoothSeconds * spec.eeg_rate_hz / 2.0));
    const std::size_t artic_block =
        static_cast<std::size_t>(std::llround(spec.eeg_rate_hz / 100.0));
    if (artic_block == 0)
        throw std::invalid_argument("synth spec: EEG rate too low for 100 Hz targets");

    std::vector<UtteranceRecord> records;
    std::size_t utterance_index = 0;
    for (std::size_t subj = 0; subj < spec.subjects; ++subj) {
        for (std::size_t sent = 0; sent < spec.sentences.size(); ++sent) {
            for (std::size_t rep = 0; rep < spec.repetitions; ++rep, ++utterance_index) {
                const std::string& transcript = spec.sentences[sent];
                Rng urng = root.fork(1000 + utterance_index);

                // Piecewise-constant latent codes with per-character dwells.
                std::vector<std::size_t> dwell_samples;
                std::size_t n = 0;
                for (std::size_t k = 0; k < transcript.size(); ++k) {
                    const int ms =
                        kDwellMinMs + static_cast<int>(urng.uniform_int(
                                          static_cast<std::uint64_t>(kDwellMaxMs - kDwellMinMs + 1)));
                    const std::size_t samples = static_cast<std::size_t>(
                        std::llround(ms * spec.eeg_rate_hz / 1000.0));
                    dwell_samples.push_back(std::max<std::size_t>(1, samples));
                    n += dwell_samples.back();
                }
                Tensor raw({6, n});
                std::size_t pos = 0;
                for (std::size_t k = 0; k < transcript.size(); ++k) {
                    const std::vector<double>& code =
                        codebook[static_cast<std::size_t>(alphabet.index_of(transcript[k]))];
                    for (std::size_t i = 0; i < dwell_samples[k]; ++i, ++pos)
                        for (std::size_t d = 0; d < 6; ++d) raw.at(d, pos) = code[d];
                }
                const Tensor latent = smooth_rows(raw, smooth_half);

                // EEG: fixed linear mixture of the latents plus pink noise.
                Tensor eeg({spec.channels, n});
                for (std::size_t c = 0; c < spec.channels; ++c) {
                    PinkNoise pink;
                    for (std::size_t t = 0; t < n; ++t) {
                        double v = 0.0;
                        for (std::size_t d = 0; d < 6; ++d)
                            v += mixing.at(c, d) * latent.at(d, t);
                        if (spec.noise_level > 0.0)
                            v += spec.noise_level * pink.next(urng.gaussian());
                        eeg.at(c, t) = v;
                    }
                }

                // 100 Hz articulatory targets: block means of the latents.
                const std::size_t frames = n / artic_block;
                Tensor artic({frames, 6});
                for (std::size_t t = 0; t < frames; ++t) {
                    for (std::size_t d = 0; d < 6; ++d) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < artic_block; ++i)
                            acc += latent.at(d, t * artic_block + i);
                        artic.at(t, d) = acc / static_cast<double>(artic_block);
                    }
                }

                // Speech: five-harmonic tone stack; the fundamental tracks
                // latent 0, harmonic amplitudes track latents 1..5.
                const std::size_t n16 = static_cast<std::size_t>(
                    std::llround(static_cast<double>(n) * spec.speech_rate_hz / spec.eeg_rate_hz));
                Tensor speech({1, n16});
                double phase[5] = {0, 0, 0, 0, 0};
                for (std::size_t s = 0; s < n16; ++s) {
                    const std::size_t li = std::min(
                        n - 1, static_cast<std::size_t>(static_cast<double>(s) *
                                                        spec.eeg_rate_hz / spec.speech_rate_hz));
                    const double f0 = 110.0 + 40.0 * latent.at(0, li);
                    double v = 0.0;
                    for (int h = 0; h < 5; ++h) {
                        phase[h] += kTwoPi * (h + 1) * f0 / spec.speech_rate_hz;
                        if (phase[h] > kTwoPi) phase[h] -= kTwoPi;
                        const double amp =
                            (0.3 / (h + 1)) * (1.0 + 0.8 * latent.at(1 + static_cast<std::size_t>(h) % 5, li));
                        v += amp * std::sin(phase[h]);
                    }
                    speech.at(0, s) = v;
                }

                const std::string id = format_id(subj, sent, rep);
                UtteranceRecord rec;
                rec.id = id;
                rec.subject = "subj" + std::string(subj < 9 ? "0" : "") + std::to_string(subj + 1);
                rec.session = static_cast<int>(rep + 1);
                rec.transcript = transcript;
                rec.eeg_path = "eeg/" + id + ".ndx";
                rec.speech_path = "speech/" + id + ".ndx";
                rec.artic_path = "artic/" + id + ".ndx";
                records.push_back(rec);

                write_ndx(out_dir + "/" + rec.eeg_path, eeg);
                write_ndx(out_dir + "/" + rec.speech_path, speech);
                write_ndx(out_dir + "/" + rec.artic_path, artic);
            }
        }
    }

    write_manifest(out_dir + "/manifest.tsv", records);

    std::ostringstream labels;
    const std::vector<std::string>& montage = eeg_channel_labels();
    for (std::size_t i = 0; i < montage.size(); ++i) {
        if (i) labels << ',';
        labels << montage[i];
    }
    std::ostringstream artic_names_csv;
    for (std::size_t i = 0; i < articulatory_names().size(); ++i) {
        if (i) artic_names_csv << ',';
        artic_names_csv << articulatory_names()[i];
    }
    std::ostringstream noise;
    noise << spec.noise_level;
    KvPairs meta;
    meta.emplace_back("eeg_rate_hz", std::to_string(static_cast<long long>(spec.eeg_rate_hz)));
    meta.emplace_back("speech_rate_hz",
                      std::to_string(static_cast<long long>(spec.speech_rate_hz)));
    meta.emplace_back("artic_rate_hz", "100");
    meta.emplace_back("channels", std::to_string(spec.channels));
    meta.emplace_back("channel_labels", labels.str());
    meta.emplace_back("artic_names", artic_names_csv.str());
    meta.emplace_back("noise_level", noise.str());
    meta.emplace_back("seed", std::to_string(seed));
    meta.emplace_back("subjects", std::to_string(spec.subjects));
    meta.emplace_back("repetitions", std::to_string(spec.repetitions));
    meta.emplace_back("sentences", std::to_string(spec.sentences.size()));
    write_kv(out_dir + "/dataset.meta", meta);
}

SplitResult split_dataset(const std::vector<UtteranceRecord>& records, double fraction,
                          std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split fraction must lie strictly inside (0, 1)");
    const std::size_t n = records.size();
    if (n < 2) throw std::invalid_argument("split needs at least two utterances");

    std::size_t n_train = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::set<std::string> unique;
    for (const UtteranceRecord& r : records) unique.insert(r.transcript);
    if (unique.size() > n_train)
        throw std::runtime_error(
            "vocabulary coverage unattainable: " + std::to_string(unique.size()) +
            " unique sentences exceed the training capacity of " + std::to_string(n_train));

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    constexpr int kMaxAttempts = 200;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        rng.shuffle(order);
        std::set<std::string> covered;
        for (std::size_t i = 0; i < n_train; ++i) covered.insert(records[order[i]].transcript);
        if (covered.size() == unique.size()) {
            SplitResult out;
            for (std::size_t i = 0; i < n_train; ++i) out.train.push_back(records[order[i]]);
            for (std::size_t i = n_train; i < n; ++i) out.test.push_back(records[order[i]]);
            return out;
        }
    }
    throw std::runtime_error("vocabulary coverage unattainable after " +
                             std::to_string(kMaxAttempts) + " shuffles");
}

} // namespace eegcsr::pipeline
