#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eegcsr::pipeline {

// Every hyperparameter of an experiment run in one place. Defaults are the
// full-scale training schedule; the "desk" preset shrinks epoch counts for
// quick turnarounds on a workstation.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    double split_fraction = 0.8;

    // Kernel PCA (gamma 0 means 1/D at fit time).
    std::size_t kpca_components = 30;
    double kpca_gamma = 0.0;
    double kpca_coef0 = 1.0;
    int kpca_degree = 3;
    std::size_t kpca_fit_cap = 1000; // max pooled training frames for the fit

    std::size_t epochs_regression = 500;
    std::size_t epochs_ctc = 120;
    std::size_t epochs_articulatory = 1000;

    std::size_t batch_regression = 1;
    std::size_t batch_ctc = 32;
    std::size_t batch_articulatory = 1;

    // The dropout rates are part of the published network definitions (the
    // builders hard-wire them); the config records them so reports and
    // checkpoints are self-describing, and validate() rejects other values.
    double dropout_gru = 0.1;
    double dropout_articulatory = 0.2;

    bool batchnorm = false;
    std::string init_mode = "random"; // random | pretrained
    std::string variant = "base";     // base | extended

    int beam_width = 25;
    double lm_weight = 1.0;

    std::size_t vocabulary_limit = 0; // 0 = all unique sentences
    std::vector<std::string> channel_subset; // empty = all channels

    void validate() const; // std::invalid_argument on violations
};

// "full" is the schedule above; "desk" shrinks epochs for fast runs.
ExperimentConfig preset_config(const std::string& name);

// Line-oriented `key = value` text; '#' starts a comment. An optional
// `preset = desk|full` line must come before any other setting. Unknown keys
// and malformed values are errors naming <source>:<line>.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name);
ExperimentConfig load_config(const std::string& path);

// Canonical text rendering (stable field order); parsing it back yields an
// equal config.
std::string render_config(const ExperimentConfig& cfg);

} // namespace eegcsr::pipeline
