// Command-line front end for the EEG-to-text experiment pipeline. Every
// subcommand wraps one library stage; a run is identified by a dataset
// directory (--data), a work directory (--out), and an ExperimentConfig
// assembled from --preset/--config plus per-flag overrides.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "eegcsr/ctc.hpp"
#include "eegcsr/pipeline/config.hpp"
#include "eegcsr/pipeline/io.hpp"
#include "eegcsr/pipeline/stages.hpp"
#include "eegcsr/pipeline/synth.hpp"

using namespace eegcsr;
using namespace eegcsr::pipeline;

namespace {

// Options shared by every stage subcommand. The config is layered: preset or
// config file first, explicit flags on top.
struct Common {
    std::string data_dir;
    std::string out_dir;
    std::string config_path;
    std::string preset;
    std::uint64_t seed = 0;
    std::size_t vocab_limit = 0;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* vocab_opt = nullptr;

    void add_to(CLI::App* cmd, bool needs_data = true) {
        auto* data = cmd->add_option("--data", data_dir, "dataset directory (manifest.tsv)");
        if (needs_data) data->required();
        cmd->add_option("--out", out_dir, "work directory for stage outputs")->required();
        auto* config =
            cmd->add_option("--config", config_path, "experiment config file (key = value)");
        cmd->add_option("--preset", preset, "config preset: full or desk")->excludes(config);
        seed_opt = cmd->add_option("--seed", seed, "override the experiment seed");
        vocab_opt = cmd->add_option("--vocab-limit", vocab_limit,
                                    "restrict to the first N unique sentences");
    }

    Workspace workspace() const { return Workspace{data_dir, out_dir}; }

    ExperimentConfig config() const {
        ExperimentConfig cfg;
        if (!preset.empty()) cfg = preset_config(preset);
        if (!config_path.empty()) cfg = load_config(config_path);
        if (seed_opt && seed_opt->count()) cfg.seed = seed;
        if (vocab_opt && vocab_opt->count()) cfg.vocabulary_limit = vocab_limit;
        return cfg;
    }
};

void print_loss_tail(const std::string& label, const std::vector<double>& curve) {
    if (curve.empty()) return;
    std::cout << label << ": " << curve.size() << " epochs, final loss " << curve.back()
              << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG-to-text pipeline: synthesis, features, training, decoding"};
    app.require_subcommand(1);

    // --- synth ------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out;
    std::uint64_t synth_seed = 1;
    SynthSpec spec;
    std::size_t sentence_count = 0;
    synth->add_option("--out", synth_out, "dataset directory to create")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--subjects", spec.subjects, "number of subjects");
    synth->add_option("--repetitions", spec.repetitions, "readings per subject and sentence");
    synth->add_option("--sentences", sentence_count,
                      "use the first N built-in prompts (default: all 30)");
    synth->add_option("--noise", spec.noise_level, "pink-noise level added to the EEG");

    // --- stage subcommands --------------------------------------------------
    auto* preprocess = app.add_subcommand("preprocess", "bandpass + notch filter the EEG");
    Common pre_c;
    pre_c.add_to(preprocess);

    auto* features = app.add_subcommand("features", "extract framed features");
    Common feat_c;
    feat_c.add_to(features);
    std::string feat_kind;
    std::vector<std::string> feat_channels;
    features->add_option("--kind", feat_kind, "eeg, mfcc, or targets")
        ->required()
        ->check(CLI::IsMember({"eeg", "mfcc", "targets"}));
    features
        ->add_option("--channels", feat_channels,
                     "EEG channel subset, comma separated (kind=eeg only)")
        ->delimiter(',');

    auto* kpca = app.add_subcommand("kpca", "kernel PCA fit/transform/report");
    Common kpca_c;
    kpca_c.add_to(kpca);
    std::string kpca_mode;
    kpca->add_option("mode", kpca_mode, "fit, transform, or variance-report")
        ->required()
        ->check(CLI::IsMember({"fit", "transform", "variance-report"}));

    auto* lm_train = app.add_subcommand("lm-train", "train the character 4-gram model");
    Common lm_c;
    lm_c.add_to(lm_train);

    auto* pretrain = app.add_subcommand("pretrain", "train the acoustic regression network");
    Common pretrain_c;
    pretrain_c.add_to(pretrain);

    auto* train_artic =
        app.add_subcommand("train-artic", "train and evaluate the articulatory regressor");
    Common artic_c;
    artic_c.add_to(train_artic);

    auto* train_ctc = app.add_subcommand("train-ctc", "train the transcription network");
    Common ctc_c;
    ctc_c.add_to(train_ctc);
    std::string ctc_init, ctc_variant;
    auto* init_opt = train_ctc->add_option("--init", ctc_init, "random or pretrained")
                         ->check(CLI::IsMember({"random", "pretrained"}));
    auto* variant_opt = train_ctc->add_option("--variant", ctc_variant, "base or extended")
                            ->check(CLI::IsMember({"base", "extended"}));
    auto* bn_flag = train_ctc->add_flag("--batchnorm", "insert batch norm before the output");

    auto* train_acoustic =
        app.add_subcommand("train-acoustic", "train the donor transcription network");
    Common acoustic_c;
    acoustic_c.add_to(train_acoustic);

    auto* decode = app.add_subcommand("decode", "beam-search decode the test split");
    Common decode_c;
    decode_c.add_to(decode);
    std::string decode_ckpt, decode_lm, decode_init, decode_variant;
    int decode_beam = 0;
    double decode_lm_weight = 0.0;
    decode->add_option("--ckpt", decode_ckpt, "checkpoint path (default: named by config)");
    decode->add_option("--lm", decode_lm, "language model file (default: <out>/lm.txt)");
    auto* beam_opt = decode->add_option("--beam", decode_beam, "beam width");
    auto* lmw_opt = decode->add_option("--lm-weight", decode_lm_weight,
                                       "language model weight (0 disables the LM)");
    auto* dinit_opt = decode->add_option("--init", decode_init, "checkpoint selector: init")
                          ->check(CLI::IsMember({"random", "pretrained"}));
    auto* dvariant_opt =
        decode->add_option("--variant", decode_variant, "checkpoint selector: variant")
            ->check(CLI::IsMember({"base", "extended"}));
    auto* dbn_flag = decode->add_flag("--batchnorm", "checkpoint selector: batch norm");

    auto* eval = app.add_subcommand("eval", "decode and print corpus metrics");
    Common eval_c;
    eval_c.add_to(eval);
    std::string eval_ckpt, eval_init, eval_variant;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path (default: named by config)");
    auto* einit_opt = eval->add_option("--init", eval_init, "checkpoint selector: init")
                          ->check(CLI::IsMember({"random", "pretrained"}));
    auto* evariant_opt =
        eval->add_option("--variant", eval_variant, "checkpoint selector: variant")
            ->check(CLI::IsMember({"base", "extended"}));
    auto* ebn_flag = eval->add_flag("--batchnorm", "checkpoint selector: batch norm");

    auto* sweep = app.add_subcommand("sweep", "WER against growing vocabulary sizes");
    Common sweep_c;
    sweep_c.add_to(sweep);
    std::vector<std::size_t> sweep_sizes;
    sweep->add_option("--vocab", sweep_sizes, "vocabulary sizes, comma separated")
        ->required()
        ->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            if (sentence_count > 0) {
                const std::vector<std::string>& all = default_sentences();
                if (sentence_count > all.size())
                    throw std::invalid_argument("--sentences: only " +
                                                std::to_string(all.size()) +
                                                " built-in prompts exist");
                spec.sentences.assign(all.begin(),
                                      all.begin() + static_cast<long>(sentence_count));
            }
            synth_dataset(spec, synth_seed, synth_out);
            const auto records =
                read_manifest(synth_out + "/manifest.tsv", ctc::Alphabet::standard());
            std::cout << "wrote " << records.size() << " utterances to " << synth_out << '\n';
        } else if (*preprocess) {
            run_preprocess(pre_c.workspace(), pre_c.config());
            std::cout << "filtered EEG written to " << pre_c.out_dir << "/filtered\n";
        } else if (*features) {
            ExperimentConfig cfg = feat_c.config();
            if (!feat_channels.empty()) cfg.channel_subset = feat_channels;
            const Workspace ws = feat_c.workspace();
            if (feat_kind == "eeg") {
                run_features_eeg(ws, cfg);
                std::cout << "EEG features written to " << feat_c.out_dir << "/feat_eeg\n";
            } else if (feat_kind == "mfcc") {
                run_features_mfcc(ws, cfg);
                std::cout << "mel cepstra written to " << feat_c.out_dir << "/feat_mfcc\n";
            } else {
                run_features_targets(ws, cfg);
                std::cout << "regression targets written to " << feat_c.out_dir
                          << "/targets\n";
            }
        } else if (*kpca) {
            const Workspace ws = kpca_c.workspace();
            const ExperimentConfig cfg = kpca_c.config();
            if (kpca_mode == "fit") {
                run_kpca_fit(ws, cfg);
                std::cout << "kernel PCA fitted: " << kpca_c.out_dir << "/kpca.ckpt\n";
            } else if (kpca_mode == "transform") {
                run_kpca_transform(ws, cfg);
                std::cout << "projected features written to " << kpca_c.out_dir
                          << "/feat_kpca\n";
            } else {
                std::cout << run_kpca_variance(ws);
            }
        } else if (*lm_train) {
            run_lm_train(lm_c.workspace(), lm_c.config());
            std::cout << "language model written to " << lm_c.out_dir << "/lm.txt\n";
        } else if (*pretrain) {
            const std::vector<double> curve = run_pretrain(pretrain_c.workspace(),
                                                           pretrain_c.config());
            print_loss_tail("regression pretraining", curve);
        } else if (*train_artic) {
            const ArticReport report =
                run_train_articulatory(artic_c.workspace(), artic_c.config());
            print_loss_tail("articulatory training", report.loss_curve);
            std::cout << "test RMSE " << report.rmse.mean << ", NRMSE " << report.nrmse.mean
                      << " over " << report.test_utterances << " utterances\n";
        } else if (*train_ctc) {
            ExperimentConfig cfg = ctc_c.config();
            if (init_opt->count()) cfg.init_mode = ctc_init;
            if (variant_opt->count()) cfg.variant = ctc_variant;
            if (bn_flag->count()) cfg.batchnorm = true;
            const CtcTrainReport report = run_train_ctc(ctc_c.workspace(), cfg);
            print_loss_tail("transcription training", report.loss_curve);
            std::cout << "trained " << report.trained_utterances << " utterances ("
                      << report.skipped_infeasible << " infeasible skipped) -> "
                      << report.checkpoint_path << '\n';
        } else if (*train_acoustic) {
            const CtcTrainReport report =
                run_train_acoustic(acoustic_c.workspace(), acoustic_c.config());
            print_loss_tail("acoustic donor training", report.loss_curve);
            std::cout << "checkpoint " << report.checkpoint_path << '\n';
        } else if (*decode) {
            ExperimentConfig cfg = decode_c.config();
            if (beam_opt->count()) cfg.beam_width = decode_beam;
            if (lmw_opt->count()) cfg.lm_weight = decode_lm_weight;
            if (dinit_opt->count()) cfg.init_mode = decode_init;
            if (dvariant_opt->count()) cfg.variant = decode_variant;
            if (dbn_flag->count()) cfg.batchnorm = true;
            run_decode_eval(decode_c.workspace(), cfg, decode_ckpt, decode_lm);
            const std::string stem =
                decode_ckpt.empty()
                    ? ctc_checkpoint_name(cfg).substr(0, ctc_checkpoint_name(cfg).size() - 5)
                    : std::filesystem::path(decode_ckpt).stem().string();
            std::cout << read_text(
                decode_c.workspace().work_file("reports/decode_" + stem + ".txt"));
        } else if (*eval) {
            ExperimentConfig eval_cfg = eval_c.config();
            if (einit_opt->count()) eval_cfg.init_mode = eval_init;
            if (evariant_opt->count()) eval_cfg.variant = eval_variant;
            if (ebn_flag->count()) eval_cfg.batchnorm = true;
            const metrics::EvalReport report =
                run_decode_eval(eval_c.workspace(), eval_cfg, eval_ckpt);
            std::cout << "test utterances " << report.utterance_count << '\n'
                      << "corpus WER " << report.corpus_wer << "% (" << report.total_edits
                      << " edits / " << report.total_ref_words << " reference words)\n";
        } else if (*sweep) {
            const Workspace ws = sweep_c.workspace();
            const ExperimentConfig cfg = sweep_c.config();
            // For each vocabulary size, run the whole chain in a nested work
            // directory and decode with both initializations.
            const SweepRunner runner = [](const Workspace& parent, const ExperimentConfig& base,
                                          std::size_t vocab) {
                Workspace sub{parent.dataset_dir,
                              parent.work_file("sweep/v" + std::to_string(vocab))};
                ExperimentConfig c = base;
                c.vocabulary_limit = vocab;
                run_preprocess(sub, c);
                run_features_eeg(sub, c);
                run_features_mfcc(sub, c);
                run_features_targets(sub, c);
                run_kpca_fit(sub, c);
                run_kpca_transform(sub, c);
                run_lm_train(sub, c);
                run_pretrain(sub, c);
                SweepWer wer;
                c.init_mode = "random";
                run_train_ctc(sub, c);
                wer.wer_random = run_decode_eval(sub, c).corpus_wer;
                c.init_mode = "pretrained";
                run_train_ctc(sub, c);
                wer.wer_pretrained = run_decode_eval(sub, c).corpus_wer;
                return wer;
            };
            run_sweep(ws, cfg, sweep_sizes, runner);
            std::cout << read_text(ws.work_file("reports/sweep.txt"));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
