#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eegcsr/pipeline/io.hpp"

namespace eegcsr::pipeline {

// Recipe for a synthetic read-speech corpus. Each utterance is driven by a
// 6-dimensional latent "articulatory" trajectory derived from its transcript;
// the EEG channels are a fixed linear mixture of those latents plus pink
// noise, and the speech waveform is a harmonic tone stack modulated by them.
struct SynthSpec {
    std::vector<std::string> sentences; // empty = the default 30-sentence list
    std::size_t subjects = 7;
    std::size_t repetitions = 3;
    std::size_t channels = 31; // must stay 31 (the montage is fixed)
    double eeg_rate_hz = 1000.0;
    double speech_rate_hz = 16000.0;
    double noise_level = 0.5; // 0 = EEG is an exact linear image of the latents

    void validate() const;
};

// The 30 fixed prompts utterances are drawn from.
const std::vector<std::string>& default_sentences();

// The fixed 31-electrode montage labels.
const std::vector<std::string>& eeg_channel_labels();

// Names of the six articulatory target dimensions.
const std::vector<std::string>& articulatory_names();

// Generate a dataset directory: dataset.meta, manifest.tsv, and per-utterance
// eeg/, speech/, artic/ matrices. Same (spec, seed) produces byte-identical
// output.
void synth_dataset(const SynthSpec& spec, std::uint64_t seed, const std::string& out_dir);

struct SplitResult {
    std::vector<UtteranceRecord> train;
    std::vector<UtteranceRecord> test;
};

// Seeded utterance-level shuffle-and-cut. Re-shuffles (bounded) until every
// unique transcript appears in the training side, so downstream vocabulary
// and language-model estimates cover the test set.
SplitResult split_dataset(const std::vector<UtteranceRecord>& records, double fraction,
                          std::uint64_t seed);

} // namespace eegcsr::pipeline
