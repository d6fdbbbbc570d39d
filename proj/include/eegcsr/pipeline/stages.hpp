#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eegcsr/metrics.hpp"
#include "eegcsr/nn.hpp"
#include "eegcsr/pipeline/config.hpp"
#include "eegcsr/pipeline/io.hpp"
#include "eegcsr/pipeline/synth.hpp"
#include "eegcsr/tensor.hpp"

namespace eegcsr::pipeline {

// A run is anchored by two directories: the immutable dataset (manifest,
// dataset.meta, raw matrices) and a work directory that accumulates stage
// outputs (splits/, filtered/, feat_*/, checkpoints, reports/).
struct Workspace {
    std::string dataset_dir;
    std::string work_dir;

    std::string manifest_path() const { return dataset_dir + "/manifest.tsv"; }
    std::string dataset_file(const std::string& rel) const { return dataset_dir + "/" + rel; }
    std::string work_file(const std::string& rel) const { return work_dir + "/" + rel; }
};

// ---------------------------------------------------------------------------
// Shared helpers.

// Exact log-softmax per row (max-shifted), turning raw scores into normalized
// log-probabilities suitable for the decoders.
Tensor log_softmax_rows(const Tensor& logits);

// Forward/backward through the model's layer stack excluding a terminal
// softmax layer, so sequence-loss gradients flow against raw scores. Models
// without a terminal softmax run in full.
Tensor forward_logits(nn::Model& model, const Tensor& x, const nn::RunContext& ctx);
Tensor backward_logits(nn::Model& model, const Tensor& grad_logits);

// Throws when any path is absent, listing the missing ones.
void require_files(const std::vector<std::string>& paths, const std::string& what);

// ---------------------------------------------------------------------------
// Stages. Each reads its inputs from the workspace, writes its outputs there,
// and is deterministic given (workspace contents, config). Stage randomness
// comes from per-stage forks of cfg.seed, so stages can be re-run in
// isolation without disturbing one another.

// Loads the cached train/test split, or creates it: applies
// cfg.vocabulary_limit (first N unique transcripts in manifest order), then
// a seeded utterance-level split with the closed-vocabulary guarantee.
// Cached under splits/; delete the workspace to change split parameters.
SplitResult ensure_splits(const Workspace& ws, const ExperimentConfig& cfg);

// Bandpass 0.1-70 Hz (order 4) then 60 Hz notch (Q 30) on every manifest
// utterance's EEG; writes filtered/<id>.ndx.
void run_preprocess(const Workspace& ws, const ExperimentConfig& cfg);

// Windowed EEG statistics at 100 Hz from filtered/<id>.ndx (optionally
// restricted to cfg.channel_subset); writes feat_eeg/<id>.ndx and a
// feature-name sidecar feat_eeg.names.
void run_features_eeg(const Workspace& ws, const ExperimentConfig& cfg);

// 13 mel cepstra at 100 Hz from each utterance's speech track; writes
// feat_mfcc/<id>.ndx.
void run_features_mfcc(const Workspace& ws, const ExperimentConfig& cfg);

// Column-concatenates MFCC (13) with articulatory trajectories (6) into the
// 19-dim regression/acoustic targets; writes targets/<id>.ndx.
void run_features_targets(const Workspace& ws, const ExperimentConfig& cfg);

// Fits polynomial-kernel PCA on (capped, seeded-subsampled) standardized
// training frames; writes kpca.ckpt and the explained-variance report.
void run_kpca_fit(const Workspace& ws, const ExperimentConfig& cfg);

// Renders reports/kpca_variance.{txt,tsv} from kpca.ckpt; returns the text.
std::string run_kpca_variance(const Workspace& ws);

// Projects every utterance's EEG features through the fitted KPCA (input
// standardizer -> kernel projection -> output standardizer); writes
// feat_kpca/<id>.ndx.
void run_kpca_transform(const Workspace& ws, const ExperimentConfig& cfg);

// Trains the character 4-gram model on the training-split transcripts;
// writes lm.txt.
void run_lm_train(const Workspace& ws, const ExperimentConfig& cfg);

// Trains the GRU regression network (KPCA 30 -> acoustic+articulatory 19,
// z-scored) with MSE; writes regression.ckpt and regression_loss.tsv.
// Returns the per-epoch training loss curve.
std::vector<double> run_pretrain(const Workspace& ws, const ExperimentConfig& cfg);

struct ArticReport {
    metrics::RegressionResult rmse;   // de-standardized test predictions
    metrics::RegressionResult nrmse;
    std::size_t test_utterances = 0;
    std::size_t test_frames = 0;
    std::vector<double> loss_curve;
};

// Trains the TCN articulatory regressor (KPCA 30 -> 6 tract variables,
// z-scored) and evaluates RMSE/NRMSE on the test split; writes artic.ckpt,
// artic_loss.tsv and reports/articulatory.{txt,tsv}.
ArticReport run_train_articulatory(const Workspace& ws, const ExperimentConfig& cfg);

// "ctc_<variant>_<init>[_bn].ckpt" for cfg's variant/init_mode/batchnorm.
std::string ctc_checkpoint_name(const ExperimentConfig& cfg);

struct CtcTrainReport {
    std::vector<double> loss_curve;  // mean per-utterance CTC loss per epoch
    std::size_t skipped_infeasible = 0;
    std::size_t trained_utterances = 0;
    std::string checkpoint_path;
};

// Trains the transcription network on KPCA features. init_mode=pretrained
// transplants the first two GRU layers from regression.ckpt;
// variant=extended seeds the frozen inserted layers from acoustic.ckpt.
// Utterances whose label sequence cannot fit the frame count are skipped and
// counted. Writes the checkpoint named by ctc_checkpoint_name plus a
// matching *_loss.tsv.
CtcTrainReport run_train_ctc(const Workspace& ws, const ExperimentConfig& cfg);

// Trains the donor transcription network on the 19-dim acoustic+articulatory
// targets; writes acoustic.ckpt and acoustic_loss.tsv.
CtcTrainReport run_train_acoustic(const Workspace& ws, const ExperimentConfig& cfg);

// Beam-search decodes the test split with the checkpoint named by cfg (or
// checkpoint_override when non-empty), applying the 4-gram LM when
// cfg.lm_weight > 0 (read from lm.txt, or lm_override when non-empty); writes
// reports/decode_<stem>.{txt,tsv} and returns the corpus numbers.
metrics::EvalReport run_decode_eval(const Workspace& ws, const ExperimentConfig& cfg,
                                    const std::string& checkpoint_override = "",
                                    const std::string& lm_override = "");

// ---------------------------------------------------------------------------
// Vocabulary sweep: corpus statistics plus decoder error for growing
// vocabulary sizes, one row per size.

struct SweepWer {
    double wer_random = 0.0;
    double wer_pretrained = 0.0;
};

struct SweepPoint {
    std::size_t vocabulary = 0;        // requested vocabulary size
    std::size_t utterances = 0;        // total sentence readings
    std::size_t unique_sentences = 0;
    std::size_t words = 0;             // with repetition
    std::size_t unique_words = 0;
    std::size_t letters = 0;           // non-space characters, with repetition
    SweepWer wer;
};

// Produces the WER pair for one vocabulary size (the CLI runs the full
// train/decode chain in a sub-workspace; tests may substitute a stub).
using SweepRunner =
    std::function<SweepWer(const Workspace& ws, const ExperimentConfig& cfg, std::size_t vocab)>;

// Computes corpus statistics for each vocabulary size from the manifest,
// invokes the runner for the WER columns, and writes reports/sweep.{txt,tsv}.
// Sizes must be strictly increasing and within the available vocabulary.
std::vector<SweepPoint> run_sweep(const Workspace& ws, const ExperimentConfig& cfg,
                                  const std::vector<std::size_t>& vocab_sizes,
                                  const SweepRunner& runner);

} // namespace eegcsr::pipeline
