#pragma once

#include "eegcsr/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace eegcsr::metrics {

// Minimal insertions + deletions + substitutions (unit costs).
std::size_t edit_distance(const std::vector<std::string>& ref,
                          const std::vector<std::string>& hyp);

// Whitespace tokenization, case-folded.
std::vector<std::string> words(const std::string& sentence);

struct WerResult {
    double percent = 0.0;
    std::size_t total_edits = 0;
    std::size_t total_ref_words = 0;
    std::vector<double> per_utterance; // percent per utterance (ref words > 0)
};

// Corpus WER: pooled edit operations over pooled reference words, x100.
// Can exceed 100 when hypotheses are longer than references.
WerResult wer(const std::vector<std::string>& refs,
              const std::vector<std::string>& hyps);

struct RegressionResult {
    std::vector<double> per_dim;
    double mean = 0.0;
};

// Per-dimension sqrt(mean squared error) over time, plus the mean across dims.
RegressionResult rmse(const Tensor& pred, const Tensor& truth);

// RMSE divided by the ground-truth range (max - min) per dimension.
RegressionResult nrmse(const Tensor& pred, const Tensor& truth);

struct EvalReport {
    // ASR side
    std::vector<double> per_utterance_wer;
    double corpus_wer = 0.0;
    std::size_t total_edits = 0;
    std::size_t total_ref_words = 0;
    std::size_t utterance_count = 0;
    // Regression side
    std::vector<double> rmse_per_dim;
    double rmse_mean = 0.0;
    std::vector<double> nrmse_per_dim;
    double nrmse_mean = 0.0;
};

} // namespace eegcsr::metrics
