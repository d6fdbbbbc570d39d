#include "eegcsr/pipeline/stages.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "eegcsr/ctc.hpp"
#include "eegcsr/features.hpp"
#include "eegcsr/kpca.hpp"
#include "eegcsr/lm.hpp"
#include "eegcsr/rng.hpp"
#include "eegcsr/signal.hpp"

namespace eegcsr::pipeline {

namespace fs = std::filesystem;

namespace {

// Per-stage sub-streams of the experiment seed, so stages can be re-run in
// isolation without shifting each other's draws.
constexpr std::uint64_t kSaltSplit = 101;
constexpr std::uint64_t kSaltKpca = 102;
constexpr std::uint64_t kSaltPretrain = 103;
constexpr std::uint64_t kSaltCtc = 104;
constexpr std::uint64_t kSaltArticulatory = 105;
constexpr std::uint64_t kSaltAcoustic = 106;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t salt) {
    Rng r = Rng(seed).fork(salt);
    return r.raw();
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) out.push_back(item);
    return out;
}

struct DatasetMeta {
    double eeg_rate_hz = 0.0;
    double speech_rate_hz = 0.0;
    std::vector<std::string> channel_labels;
    std::vector<std::string> artic_names;
};

DatasetMeta load_dataset_meta(const Workspace& ws) {
    const KvPairs kv = read_kv(ws.dataset_file("dataset.meta"));
    DatasetMeta meta;
    meta.eeg_rate_hz = kv_get_double(kv, "eeg_rate_hz");
    meta.speech_rate_hz = kv_get_double(kv, "speech_rate_hz");
    meta.channel_labels = split_csv(kv_get(kv, "channel_labels"));
    meta.artic_names = split_csv(kv_get(kv, "artic_names"));
    return meta;
}

// Manifest records, restricted to the first cfg.vocabulary_limit unique
// transcripts (in manifest order) when the limit is set.
std::vector<UtteranceRecord> limited_records(const Workspace& ws, const ExperimentConfig& cfg) {
    std::vector<UtteranceRecord> records =
        read_manifest(ws.manifest_path(), ctc::Alphabet::standard());
    if (cfg.vocabulary_limit == 0) return records;
    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const UtteranceRecord& r : records)
        if (seen.insert(r.transcript).second) order.push_back(r.transcript);
    if (cfg.vocabulary_limit >= order.size()) return records;
    const std::set<std::string> keep(order.begin(),
                                     order.begin() + static_cast<long>(cfg.vocabulary_limit));
    std::vector<UtteranceRecord> out;
    for (const UtteranceRecord& r : records)
        if (keep.count(r.transcript)) out.push_back(r);
    return out;
}

std::string fixed(double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

std::string full_precision(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// First column left-aligned, the rest right-aligned, two-space gutters.
std::string render_aligned(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (width.size() <= i) width.resize(i + 1, 0);
            width[i] = std::max(width[i], row[i].size());
        }
    std::ostringstream os;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << "  ";
            if (i == 0) {
                os << row[i];
                if (i + 1 < row.size())
                    os << std::string(width[i] - row[i].size(), ' ');
            } else {
                os << std::string(width[i] - row[i].size(), ' ') << row[i];
            }
        }
        os << '\n';
    }
    return os.str();
}

std::string join_tabs(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += '\t';
        out += cells[i];
    }
    out += '\n';
    return out;
}

void write_loss_curve(const std::string& path, const std::string& column,
                      const std::vector<double>& curve) {
    std::ostringstream os;
    os << "epoch\t" << column << '\n';
    for (std::size_t e = 0; e < curve.size(); ++e)
        os << e + 1 << '\t' << full_precision(curve[e]) << '\n';
    write_text(path, os.str());
}

Tensor head_rows(const Tensor& t, std::size_t n) {
    if (t.rows() == n) return t;
    Tensor out({n, t.cols()});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(r, c);
    return out;
}

// ---------------------------------------------------------------------------
// Training-pair assembly: per-utterance (input, target) sequences trimmed to
// a common length (feature and target streams are framed independently, so
// their lengths differ by a few trailing frames).

struct SeqPair {
    std::string id;
    Tensor x;
    Tensor y;
};

using PathFn = std::function<std::string(const UtteranceRecord&)>;

std::vector<SeqPair> load_pairs(const std::vector<UtteranceRecord>& records, const PathFn& x_path,
                                const PathFn& y_path, const std::string& what) {
    std::vector<std::string> paths;
    for (const UtteranceRecord& r : records) {
        paths.push_back(x_path(r));
        paths.push_back(y_path(r));
    }
    require_files(paths, what);
    std::vector<SeqPair> pairs;
    for (const UtteranceRecord& r : records) {
        SeqPair p;
        p.id = r.id;
        p.x = read_ndx(x_path(r));
        p.y = read_ndx(y_path(r));
        const std::size_t frames = std::min(p.x.rows(), p.y.rows());
        if (frames == 0) continue;
        p.x = head_rows(p.x, frames);
        p.y = head_rows(p.y, frames);
        pairs.push_back(std::move(p));
    }
    if (pairs.empty())
        throw std::runtime_error(what + ": no usable utterances (all empty after alignment)");
    return pairs;
}

// Mean per-utterance MSE per epoch; shuffled order and dropout masks are
// drawn from `rng`, so one seed fixes the whole trajectory.
std::vector<double> train_mse(nn::Model& model, std::vector<SeqPair>& pairs, std::size_t epochs,
                              std::size_t batch, Rng& rng) {
    nn::AdamOptimizer adam;
    nn::RunContext train_ctx{nn::Mode::kTrain, &rng};
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> curve;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t count = std::min(batch, order.size() - start);
            model.zero_grads();
            for (std::size_t k = 0; k < count; ++k) {
                SeqPair& p = pairs[order[start + k]];
                const Tensor pred = model.forward(p.x, train_ctx);
                const nn::MseResult res = nn::mse_loss(pred, p.y);
                model.backward(res.grad);
                total += res.loss;
            }
            model.scale_grads(1.0 / static_cast<double>(count));
            adam.step(model);
        }
        curve.push_back(total / static_cast<double>(pairs.size()));
    }
    return curve;
}

void append_standardizer_tensors(Checkpoint& ckpt, const Standardizer& stdz,
                                 const std::string& prefix) {
    ckpt.tensors.push_back({prefix + ".mean", stdz.mean});
    ckpt.tensors.push_back({prefix + ".scale", stdz.scale});
}

Standardizer standardizer_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
    const Tensor* mean = ckpt.find(prefix + ".mean");
    const Tensor* scale = ckpt.find(prefix + ".scale");
    if (!mean || !scale)
        throw std::runtime_error("checkpoint is missing the " + prefix + " tensors");
    return Standardizer{*mean, *scale};
}

// ---------------------------------------------------------------------------
// CTC training core, shared by the EEG and acoustic transcription models.

struct CtcItem {
    Tensor x;
    std::vector<int> labels;
};

// Frames needed to emit `labels`: one per label plus one blank between each
// adjacent repeat.
std::size_t required_frames(const std::vector<int>& labels) {
    std::size_t need = labels.size();
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i] == labels[i - 1]) ++need;
    return need;
}

CtcTrainReport train_ctc_core(const Workspace& ws, const ExperimentConfig& cfg,
                              const std::vector<UtteranceRecord>& records, const PathFn& x_path,
                              nn::Model& model, Rng& rng, const std::string& kind,
                              const std::string& ckpt_name, const std::string& loss_name,
                              KvPairs extra_meta) {
    const ctc::Alphabet& alphabet = ctc::Alphabet::standard();
    std::vector<std::string> paths;
    for (const UtteranceRecord& r : records) paths.push_back(x_path(r));
    require_files(paths, kind + " training");

    std::vector<CtcItem> items;
    std::size_t skipped = 0;
    for (const UtteranceRecord& r : records) {
        CtcItem item;
        item.x = read_ndx(x_path(r));
        item.labels = alphabet.encode(r.transcript);
        if (item.x.rows() < required_frames(item.labels)) {
            ++skipped;
            continue;
        }
        items.push_back(std::move(item));
    }
    if (items.empty())
        throw std::runtime_error(kind + " training: every utterance is infeasible (too few "
                                        "frames for its transcript)");

    nn::AdamOptimizer adam;
    nn::RunContext train_ctx{nn::Mode::kTrain, &rng};
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> curve;
    for (std::size_t epoch = 0; epoch < cfg.epochs_ctc; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        std::size_t counted = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_ctc) {
            const std::size_t count = std::min(cfg.batch_ctc, order.size() - start);
            model.zero_grads();
            std::size_t used = 0;
            for (std::size_t k = 0; k < count; ++k) {
                CtcItem& item = items[order[start + k]];
                const Tensor logits = forward_logits(model, item.x, train_ctx);
                const ctc::CtcLossResult res =
                    ctc::ctc_loss(logits, item.labels, alphabet.blank());
                if (!res.feasible) continue;
                backward_logits(model, res.grad_logits);
                total += res.loss;
                ++counted;
                ++used;
            }
            if (used == 0) continue;
            model.scale_grads(1.0 / static_cast<double>(used));
            adam.step(model);
        }
        curve.push_back(counted ? total / static_cast<double>(counted) : 0.0);
    }

    write_loss_curve(ws.work_file(loss_name), "ctc_loss", curve);

    KvPairs meta;
    meta.emplace_back("kind", kind);
    for (auto& kv : extra_meta) meta.push_back(std::move(kv));
    meta.emplace_back("epochs", std::to_string(cfg.epochs_ctc));
    meta.emplace_back("batch", std::to_string(cfg.batch_ctc));
    meta.emplace_back("seed", std::to_string(cfg.seed));
    meta.emplace_back("trained_utterances", std::to_string(items.size()));
    meta.emplace_back("skipped_infeasible", std::to_string(skipped));
    meta.emplace_back("final_loss", full_precision(curve.empty() ? 0.0 : curve.back()));
    Checkpoint ckpt = checkpoint_of_model(model, std::move(meta));
    const std::string ckpt_path = ws.work_file(ckpt_name);
    write_checkpoint(ckpt_path, ckpt);

    CtcTrainReport report;
    report.loss_curve = std::move(curve);
    report.skipped_infeasible = skipped;
    report.trained_utterances = items.size();
    report.checkpoint_path = ckpt_path;
    return report;
}

} // namespace

// ---------------------------------------------------------------------------
// Shared helpers.

Tensor log_softmax_rows(const Tensor& logits) {
    Tensor out({logits.rows(), logits.cols()});
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits.at(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(logits.at(r, c) - mx);
        const double log_z = mx + std::log(sum);
        for (std::size_t c = 0; c < logits.cols(); ++c) out.at(r, c) = logits.at(r, c) - log_z;
    }
    return out;
}

namespace {
std::size_t logits_depth(nn::Model& model) {
    const std::size_t n = model.layer_count();
    if (n > 0 && model.layer_at(n - 1).descriptor() == "softmax") return n - 1;
    return n;
}
} // namespace

Tensor forward_logits(nn::Model& model, const Tensor& x, const nn::RunContext& ctx) {
    Tensor h = x;
    const std::size_t depth = logits_depth(model);
    for (std::size_t i = 0; i < depth; ++i) h = model.layer_at(i).forward(h, ctx);
    return h;
}

Tensor backward_logits(nn::Model& model, const Tensor& grad_logits) {
    Tensor g = grad_logits;
    for (std::size_t i = logits_depth(model); i-- > 0;) g = model.layer_at(i).backward(g);
    return g;
}

void require_files(const std::vector<std::string>& paths, const std::string& what) {
    std::vector<std::string> missing;
    for (const std::string& p : paths)
        if (!fs::exists(p)) missing.push_back(p);
    if (missing.empty()) return;
    std::ostringstream os;
    os << what << ": " << missing.size() << " input file(s) missing:";
    const std::size_t show = std::min<std::size_t>(missing.size(), 8);
    for (std::size_t i = 0; i < show; ++i) os << ' ' << missing[i];
    if (show < missing.size()) os << " ...";
    throw std::runtime_error(os.str());
}

// ---------------------------------------------------------------------------
// Splits.

SplitResult ensure_splits(const Workspace& ws, const ExperimentConfig& cfg) {
    const std::string train_path = ws.work_file("splits/train.tsv");
    const std::string test_path = ws.work_file("splits/test.tsv");
    const ctc::Alphabet& alphabet = ctc::Alphabet::standard();
    if (fs::exists(train_path) && fs::exists(test_path)) {
        SplitResult cached;
        cached.train = read_manifest(train_path, alphabet);
        cached.test = read_manifest(test_path, alphabet);
        return cached;
    }
    const std::vector<UtteranceRecord> records = limited_records(ws, cfg);
    SplitResult split =
        split_dataset(records, cfg.split_fraction, derived_seed(cfg.seed, kSaltSplit));
    write_manifest(train_path, split.train);
    write_manifest(test_path, split.test);
    return split;
}

// ---------------------------------------------------------------------------
// Signal conditioning and feature extraction.

void run_preprocess(const Workspace& ws, const ExperimentConfig& cfg) {
    const DatasetMeta meta = load_dataset_meta(ws);
    const signal::IirFilter bandpass = signal::design_bandpass(0.1, 70.0, 4, meta.eeg_rate_hz);
    const signal::IirFilter notch = signal::design_notch(60.0, 30.0, meta.eeg_rate_hz);
    for (const UtteranceRecord& rec : limited_records(ws, cfg)) {
        signal::RawRecording raw;
        raw.samples = read_ndx(ws.dataset_file(rec.eeg_path));
        raw.sample_rate_hz = meta.eeg_rate_hz;
        raw.channel_labels = meta.channel_labels;
        raw.validate();
        const signal::RawRecording conditioned =
            signal::apply_filter(notch, signal::apply_filter(bandpass, raw));
        write_ndx(ws.work_file("filtered/" + rec.id + ".ndx"), conditioned.samples);
    }
}

void run_features_eeg(const Workspace& ws, const ExperimentConfig& cfg) {
    const DatasetMeta meta = load_dataset_meta(ws);
    const std::vector<UtteranceRecord> records = limited_records(ws, cfg);
    std::vector<std::string> inputs;
    for (const UtteranceRecord& rec : records)
        inputs.push_back(ws.work_file("filtered/" + rec.id + ".ndx"));
    require_files(inputs, "EEG feature extraction");

    features::WindowConfig wc;
    wc.window_samples = static_cast<std::size_t>(std::llround(meta.eeg_rate_hz / 10.0));
    wc.hop_samples = static_cast<std::size_t>(std::llround(meta.eeg_rate_hz / 100.0));
    bool wrote_names = false;
    for (std::size_t i = 0; i < records.size(); ++i) {
        signal::RawRecording rec;
        rec.samples = read_ndx(inputs[i]);
        rec.sample_rate_hz = meta.eeg_rate_hz;
        rec.channel_labels = meta.channel_labels;
        if (!cfg.channel_subset.empty())
            rec = features::select_channels(rec, cfg.channel_subset);
        const features::FeatureSequence seq = features::extract_eeg_features(rec, wc);
        write_ndx(ws.work_file("feat_eeg/" + records[i].id + ".ndx"), seq.frames);
        if (!wrote_names) {
            write_lines(ws.work_file("feat_eeg.names"), seq.names);
            wrote_names = true;
        }
    }
}

void run_features_mfcc(const Workspace& ws, const ExperimentConfig& cfg) {
    const DatasetMeta meta = load_dataset_meta(ws);
    features::WindowConfig wc;
    wc.window_samples = static_cast<std::size_t>(std::llround(0.025 * meta.speech_rate_hz));
    wc.hop_samples = static_cast<std::size_t>(std::llround(meta.speech_rate_hz / 100.0));
    for (const UtteranceRecord& rec : limited_records(ws, cfg)) {
        if (rec.speech_path.empty()) continue;
        signal::RawRecording speech;
        speech.samples = read_ndx(ws.dataset_file(rec.speech_path));
        speech.sample_rate_hz = meta.speech_rate_hz;
        speech.channel_labels = {"speech"};
        const features::FeatureSequence seq = features::extract_mfcc(speech, 13, wc);
        write_ndx(ws.work_file("feat_mfcc/" + rec.id + ".ndx"), seq.frames);
    }
}

void run_features_targets(const Workspace& ws, const ExperimentConfig& cfg) {
    const DatasetMeta meta = load_dataset_meta(ws);
    std::vector<UtteranceRecord> with_targets;
    for (const UtteranceRecord& rec : limited_records(ws, cfg))
        if (!rec.speech_path.empty() && !rec.artic_path.empty()) with_targets.push_back(rec);
    std::vector<std::string> inputs;
    for (const UtteranceRecord& rec : with_targets)
        inputs.push_back(ws.work_file("feat_mfcc/" + rec.id + ".ndx"));
    require_files(inputs, "target assembly");

    for (std::size_t i = 0; i < with_targets.size(); ++i) {
        const UtteranceRecord& rec = with_targets[i];
        features::FeatureSequence mfcc;
        mfcc.frames = read_ndx(inputs[i]);
        mfcc.frame_rate_hz = 100.0;
        for (std::size_t c = 0; c < mfcc.frames.cols(); ++c)
            mfcc.names.push_back("mfcc" + std::to_string(c));
        features::FeatureSequence artic;
        artic.frames = read_ndx(ws.dataset_file(rec.artic_path));
        artic.frame_rate_hz = 100.0;
        artic.names = meta.artic_names;
        const features::FeatureSequence joint = features::concat_targets(mfcc, artic);
        write_ndx(ws.work_file("targets/" + rec.id + ".ndx"), joint.frames);
    }
}

// ---------------------------------------------------------------------------
// Kernel PCA.

void run_kpca_fit(const Workspace& ws, const ExperimentConfig& cfg) {
    const SplitResult splits = ensure_splits(ws, cfg);
    std::vector<std::string> inputs;
    for (const UtteranceRecord& rec : splits.train)
        inputs.push_back(ws.work_file("feat_eeg/" + rec.id + ".ndx"));
    require_files(inputs, "kernel PCA fit");

    StandardizerAccumulator acc;
    std::size_t total = 0;
    for (const std::string& path : inputs) {
        const Tensor frames = read_ndx(path);
        acc.add(frames);
        total += frames.rows();
    }
    if (total < 2)
        throw std::runtime_error("kernel PCA fit needs at least two pooled training frames");
    const Standardizer stdz_in = acc.finish();
    const std::size_t dim = stdz_in.mean.size();

    // Seeded reservoir-free subsample: walk the pooled frames once, keeping
    // each with probability (still needed) / (still unseen).
    const std::size_t cap = std::min(cfg.kpca_fit_cap, total);
    std::vector<char> keep(total, 0);
    Rng rng = Rng(cfg.seed).fork(kSaltKpca);
    std::size_t need = cap;
    for (std::size_t i = 0; i < total && need > 0; ++i) {
        const std::size_t unseen = total - i;
        if (rng.uniform() * static_cast<double>(unseen) < static_cast<double>(need)) {
            keep[i] = 1;
            --need;
        }
    }

    Tensor fit_rows({cap, dim});
    std::size_t pooled = 0, taken = 0;
    for (const std::string& path : inputs) {
        const Tensor frames = stdz_in.apply(read_ndx(path));
        for (std::size_t r = 0; r < frames.rows(); ++r, ++pooled) {
            if (!keep[pooled]) continue;
            for (std::size_t c = 0; c < dim; ++c) fit_rows.at(taken, c) = frames.at(r, c);
            ++taken;
        }
    }

    const double gamma =
        cfg.kpca_gamma > 0.0 ? cfg.kpca_gamma : 1.0 / static_cast<double>(dim);
    KpcaBundle bundle;
    bundle.model = kpca::fit_kpca(fit_rows, cfg.kpca_components, gamma, cfg.kpca_coef0,
                                  cfg.kpca_degree);
    bundle.input = stdz_in;
    bundle.output = fit_standardizer(bundle.model.training_projections);

    KvPairs meta;
    meta.emplace_back("components", std::to_string(cfg.kpca_components));
    meta.emplace_back("degree", std::to_string(cfg.kpca_degree));
    meta.emplace_back("fit_rows", std::to_string(cap));
    meta.emplace_back("pooled_frames", std::to_string(total));
    meta.emplace_back("seed", std::to_string(cfg.seed));
    write_kpca_checkpoint(ws.work_file("kpca.ckpt"), bundle, meta);
    run_kpca_variance(ws);
}

std::string run_kpca_variance(const Workspace& ws) {
    const std::string ckpt_path = ws.work_file("kpca.ckpt");
    if (!fs::exists(ckpt_path))
        throw std::runtime_error("variance report requires " + ckpt_path +
                                 "; fit the kernel PCA first");
    const KpcaBundle bundle = read_kpca_checkpoint(ckpt_path);
    const std::vector<double> cumulative = kpca::explained_variance(bundle.model);
    const std::vector<double>& eig = bundle.model.eigenvalues;

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"component", "eigenvalue", "cumulative variance"});
    for (std::size_t i = 0; i < bundle.model.n_components; ++i)
        rows.push_back({std::to_string(i + 1), fixed(eig[i], 6), fixed(cumulative[i], 6)});
    std::ostringstream os;
    os << "kernel PCA explained variance\n";
    os << render_aligned(rows);
    os << "kept " << bundle.model.n_components << " of " << eig.size()
       << " positive components; cumulative explained variance "
       << fixed(cumulative[bundle.model.n_components - 1], 6) << '\n';
    const std::string text = os.str();
    write_text(ws.work_file("reports/kpca_variance.txt"), text);

    std::ostringstream tsv;
    tsv << "component\teigenvalue\tcumulative\n";
    for (std::size_t i = 0; i < eig.size(); ++i)
        tsv << i + 1 << '\t' << full_precision(eig[i]) << '\t' << full_precision(cumulative[i])
            << '\n';
    write_text(ws.work_file("reports/kpca_variance.tsv"), tsv.str());
    return text;
}

void run_kpca_transform(const Workspace& ws, const ExperimentConfig& cfg) {
    const std::string ckpt_path = ws.work_file("kpca.ckpt");
    if (!fs::exists(ckpt_path))
        throw std::runtime_error("KPCA transform requires " + ckpt_path +
                                 "; fit the kernel PCA first");
    const KpcaBundle bundle = read_kpca_checkpoint(ckpt_path);
    const std::vector<UtteranceRecord> records = limited_records(ws, cfg);
    std::vector<std::string> inputs;
    for (const UtteranceRecord& rec : records)
        inputs.push_back(ws.work_file("feat_eeg/" + rec.id + ".ndx"));
    require_files(inputs, "KPCA transform");
    for (std::size_t i = 0; i < records.size(); ++i) {
        const Tensor frames = read_ndx(inputs[i]);
        const Tensor projected =
            bundle.output.apply(kpca::transform(bundle.model, bundle.input.apply(frames)));
        write_ndx(ws.work_file("feat_kpca/" + records[i].id + ".ndx"), projected);
    }
}

// ---------------------------------------------------------------------------
// Language model.

void run_lm_train(const Workspace& ws, const ExperimentConfig& cfg) {
    const SplitResult splits = ensure_splits(ws, cfg);
    std::vector<std::string> corpus;
    for (const UtteranceRecord& rec : splits.train) corpus.push_back(rec.transcript);
    const lm::CharNGramModel model =
        lm::train_ngram(corpus, ctc::Alphabet::standard().chars(), 4, 1.0);
    lm::save_lm(model, ws.work_file("lm.txt"));
}

// ---------------------------------------------------------------------------
// Regression pretraining.

std::vector<double> run_pretrain(const Workspace& ws, const ExperimentConfig& cfg) {
    const SplitResult splits = ensure_splits(ws, cfg);
    std::vector<SeqPair> pairs = load_pairs(
        splits.train,
        [&](const UtteranceRecord& r) { return ws.work_file("feat_kpca/" + r.id + ".ndx"); },
        [&](const UtteranceRecord& r) { return ws.work_file("targets/" + r.id + ".ndx"); },
        "regression pretraining");

    StandardizerAccumulator acc;
    for (const SeqPair& p : pairs) acc.add(p.y);
    const Standardizer stdz = acc.finish();
    for (SeqPair& p : pairs) p.y = stdz.apply(p.y);

    Rng rng = Rng(cfg.seed).fork(kSaltPretrain);
    nn::Model model = nn::build_regression_model(pairs[0].x.cols(), pairs[0].y.cols(), rng);
    const std::vector<double> curve =
        train_mse(model, pairs, cfg.epochs_regression, cfg.batch_regression, rng);
    write_loss_curve(ws.work_file("regression_loss.tsv"), "mse", curve);

    KvPairs meta;
    meta.emplace_back("kind", "regression");
    meta.emplace_back("d_in", std::to_string(pairs[0].x.cols()));
    meta.emplace_back("d_out", std::to_string(pairs[0].y.cols()));
    meta.emplace_back("epochs", std::to_string(cfg.epochs_regression));
    meta.emplace_back("batch", std::to_string(cfg.batch_regression));
    meta.emplace_back("seed", std::to_string(cfg.seed));
    meta.emplace_back("final_loss", full_precision(curve.back()));
    Checkpoint ckpt = checkpoint_of_model(model, std::move(meta));
    append_standardizer_tensors(ckpt, stdz, "target_stdz");
    write_checkpoint(ws.work_file("regression.ckpt"), ckpt);
    return curve;
}

// ---------------------------------------------------------------------------
// Articulatory TCN.

ArticReport run_train_articulatory(const Workspace& ws, const ExperimentConfig& cfg) {
    const DatasetMeta dataset_meta = load_dataset_meta(ws);
    const SplitResult splits = ensure_splits(ws, cfg);
    const auto x_of = [&](const UtteranceRecord& r) {
        return ws.work_file("feat_kpca/" + r.id + ".ndx");
    };
    const auto y_of = [&](const UtteranceRecord& r) { return ws.dataset_file(r.artic_path); };

    std::vector<UtteranceRecord> train_records, test_records;
    for (const UtteranceRecord& r : splits.train)
        if (!r.artic_path.empty()) train_records.push_back(r);
    for (const UtteranceRecord& r : splits.test)
        if (!r.artic_path.empty()) test_records.push_back(r);
    if (train_records.empty() || test_records.empty())
        throw std::runtime_error(
            "articulatory training needs articulatory tracks in both splits");

    std::vector<SeqPair> pairs =
        load_pairs(train_records, x_of, y_of, "articulatory training");
    StandardizerAccumulator acc;
    for (const SeqPair& p : pairs) acc.add(p.y);
    const Standardizer stdz = acc.finish();
    for (SeqPair& p : pairs) p.y = stdz.apply(p.y);

    Rng rng = Rng(cfg.seed).fork(kSaltArticulatory);
    nn::Model model = nn::build_articulatory_model(pairs[0].x.cols(), pairs[0].y.cols(), rng);
    const std::vector<double> curve =
        train_mse(model, pairs, cfg.epochs_articulatory, cfg.batch_articulatory, rng);
    write_loss_curve(ws.work_file("artic_loss.tsv"), "mse", curve);

    KvPairs meta;
    meta.emplace_back("kind", "articulatory");
    meta.emplace_back("d_in", std::to_string(pairs[0].x.cols()));
    meta.emplace_back("d_out", std::to_string(pairs[0].y.cols()));
    meta.emplace_back("epochs", std::to_string(cfg.epochs_articulatory));
    meta.emplace_back("batch", std::to_string(cfg.batch_articulatory));
    meta.emplace_back("seed", std::to_string(cfg.seed));
    meta.emplace_back("final_loss", full_precision(curve.back()));
    Checkpoint ckpt = checkpoint_of_model(model, std::move(meta));
    append_standardizer_tensors(ckpt, stdz, "target_stdz");
    write_checkpoint(ws.work_file("artic.ckpt"), ckpt);

    // Test-split evaluation on de-standardized predictions, frames pooled
    // across utterances.
    std::vector<SeqPair> test_pairs =
        load_pairs(test_records, x_of, y_of, "articulatory evaluation");
    std::size_t total_frames = 0;
    for (const SeqPair& p : test_pairs) total_frames += p.x.rows();
    const std::size_t dims = test_pairs[0].y.cols();
    Tensor pred_pool({total_frames, dims});
    Tensor truth_pool({total_frames, dims});
    nn::RunContext infer{nn::Mode::kInfer, nullptr};
    std::size_t row = 0;
    for (const SeqPair& p : test_pairs) {
        const Tensor pred = stdz.invert(model.forward(p.x, infer));
        for (std::size_t r = 0; r < p.x.rows(); ++r, ++row)
            for (std::size_t c = 0; c < dims; ++c) {
                pred_pool.at(row, c) = pred.at(r, c);
                truth_pool.at(row, c) = p.y.at(r, c);
            }
    }

    ArticReport report;
    report.rmse = metrics::rmse(pred_pool, truth_pool);
    report.nrmse = metrics::nrmse(pred_pool, truth_pool);
    report.test_utterances = test_pairs.size();
    report.test_frames = total_frames;
    report.loss_curve = curve;

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"dimension", "RMSE", "NRMSE"});
    for (std::size_t d = 0; d < dims; ++d) {
        const std::string name =
            d < dataset_meta.artic_names.size() ? dataset_meta.artic_names[d]
                                                : "dim" + std::to_string(d);
        rows.push_back({name, fixed(report.rmse.per_dim[d], 6), fixed(report.nrmse.per_dim[d], 6)});
    }
    std::ostringstream os;
    os << "articulatory regression test report\n";
    os << "test utterances          " << report.test_utterances << '\n';
    os << "test frames              " << report.test_frames << '\n';
    os << "average RMSE             " << fixed(report.rmse.mean, 6) << '\n';
    os << "average normalized RMSE  " << fixed(report.nrmse.mean, 6) << '\n';
    os << '\n' << render_aligned(rows);
    write_text(ws.work_file("reports/articulatory.txt"), os.str());

    std::ostringstream tsv;
    tsv << "dimension\trmse\tnrmse\n";
    for (std::size_t d = 0; d < dims; ++d) {
        const std::string name =
            d < dataset_meta.artic_names.size() ? dataset_meta.artic_names[d]
                                                : "dim" + std::to_string(d);
        tsv << name << '\t' << full_precision(report.rmse.per_dim[d]) << '\t'
            << full_precision(report.nrmse.per_dim[d]) << '\n';
    }
    tsv << "average\t" << full_precision(report.rmse.mean) << '\t'
        << full_precision(report.nrmse.mean) << '\n';
    write_text(ws.work_file("reports/articulatory.tsv"), tsv.str());
    return report;
}

// ---------------------------------------------------------------------------
// Transcription training.

std::string ctc_checkpoint_name(const ExperimentConfig& cfg) {
    return "ctc_" + cfg.variant + "_" + cfg.init_mode + (cfg.batchnorm ? "_bn" : "") + ".ckpt";
}

CtcTrainReport run_train_ctc(const Workspace& ws, const ExperimentConfig& cfg) {
    const SplitResult splits = ensure_splits(ws, cfg);
    const auto x_of = [&](const UtteranceRecord& r) {
        return ws.work_file("feat_kpca/" + r.id + ".ndx");
    };
    std::vector<std::string> probe;
    for (const UtteranceRecord& r : splits.train) probe.push_back(x_of(r));
    require_files(probe, "transcription training");
    const std::size_t d_in = read_ndx(probe.front()).cols();

    Rng rng = Rng(cfg.seed).fork(kSaltCtc);
    const nn::CtcVariant variant =
        cfg.variant == "extended" ? nn::CtcVariant::kExtended : nn::CtcVariant::kBase;
    nn::Model model = nn::build_ctc_model(d_in, ctc::Alphabet::standard().num_classes(),
                                          variant, cfg.batchnorm, rng);

    if (cfg.init_mode == "pretrained") {
        const std::string donor_path = ws.work_file("regression.ckpt");
        if (!fs::exists(donor_path))
            throw std::runtime_error("pretrained initialization requires " + donor_path +
                                     "; run the regression pretraining first");
        nn::Model donor = model_from_checkpoint(read_checkpoint(donor_path));
        nn::transplant_gru_weights(donor, model);
    }
    if (variant == nn::CtcVariant::kExtended) {
        const std::string donor_path = ws.work_file("acoustic.ckpt");
        if (!fs::exists(donor_path))
            throw std::runtime_error("the extended variant requires " + donor_path +
                                     "; run the acoustic model training first");
        nn::Model donor = model_from_checkpoint(read_checkpoint(donor_path));
        nn::seed_extended_layers(donor, model);
    }

    const std::string ckpt_name = ctc_checkpoint_name(cfg);
    const std::string stem = ckpt_name.substr(0, ckpt_name.size() - 5);
    KvPairs extra;
    extra.emplace_back("variant", cfg.variant);
    extra.emplace_back("init", cfg.init_mode);
    extra.emplace_back("batchnorm", cfg.batchnorm ? "1" : "0");
    extra.emplace_back("d_in", std::to_string(d_in));
    return train_ctc_core(ws, cfg, splits.train, x_of, model, rng, "ctc", ckpt_name,
                          stem + "_loss.tsv", std::move(extra));
}

CtcTrainReport run_train_acoustic(const Workspace& ws, const ExperimentConfig& cfg) {
    const SplitResult splits = ensure_splits(ws, cfg);
    std::vector<UtteranceRecord> train_records;
    for (const UtteranceRecord& r : splits.train)
        if (!r.speech_path.empty() && !r.artic_path.empty()) train_records.push_back(r);
    if (train_records.empty())
        throw std::runtime_error(
            "acoustic model training needs speech and articulatory tracks in the train split");
    const auto x_of = [&](const UtteranceRecord& r) {
        return ws.work_file("targets/" + r.id + ".ndx");
    };
    std::vector<std::string> probe;
    for (const UtteranceRecord& r : train_records) probe.push_back(x_of(r));
    require_files(probe, "acoustic model training");
    const std::size_t d_in = read_ndx(probe.front()).cols();

    Rng rng = Rng(cfg.seed).fork(kSaltAcoustic);
    nn::Model model = nn::build_ctc_model(d_in, ctc::Alphabet::standard().num_classes(),
                                          nn::CtcVariant::kBase, false, rng);
    KvPairs extra;
    extra.emplace_back("d_in", std::to_string(d_in));
    return train_ctc_core(ws, cfg, train_records, x_of, model, rng, "acoustic-ctc",
                          "acoustic.ckpt", "acoustic_loss.tsv", std::move(extra));
}

// ---------------------------------------------------------------------------
// Decoding and evaluation.

metrics::EvalReport run_decode_eval(const Workspace& ws, const ExperimentConfig& cfg,
                                    const std::string& checkpoint_override,
                                    const std::string& lm_override) {
    const std::string ckpt_path = checkpoint_override.empty()
                                      ? ws.work_file(ctc_checkpoint_name(cfg))
                                      : checkpoint_override;
    if (!fs::exists(ckpt_path))
        throw std::runtime_error("decoding requires checkpoint " + ckpt_path +
                                 "; train the transcription model first");
    nn::Model model = model_from_checkpoint(read_checkpoint(ckpt_path));

    lm::CharNGramModel lm_model;
    bool have_lm = false;
    if (cfg.lm_weight > 0.0) {
        const std::string lm_path = lm_override.empty() ? ws.work_file("lm.txt") : lm_override;
        if (!fs::exists(lm_path))
            throw std::runtime_error("decoding with lm_weight > 0 requires " + lm_path +
                                     "; train the language model first");
        lm_model = lm::load_lm(lm_path);
        have_lm = true;
    }

    const SplitResult splits = ensure_splits(ws, cfg);
    std::vector<std::string> inputs;
    for (const UtteranceRecord& r : splits.test)
        inputs.push_back(ws.work_file("feat_kpca/" + r.id + ".ndx"));
    require_files(inputs, "decoding");

    const ctc::Alphabet& alphabet = ctc::Alphabet::standard();
    ctc::BeamSearchOptions opts;
    opts.beam_width = cfg.beam_width;
    opts.lm = have_lm ? &lm_model : nullptr;
    opts.lm_weight = have_lm ? cfg.lm_weight : 0.0;

    nn::RunContext infer{nn::Mode::kInfer, nullptr};
    std::vector<std::string> refs, hyps;
    for (std::size_t i = 0; i < splits.test.size(); ++i) {
        const Tensor logits = forward_logits(model, read_ndx(inputs[i]), infer);
        const Tensor log_probs = log_softmax_rows(logits);
        hyps.push_back(ctc::beam_search_decode(log_probs, alphabet, opts));
        refs.push_back(splits.test[i].transcript);
    }

    const metrics::WerResult wer = metrics::wer(refs, hyps);
    metrics::EvalReport report;
    report.per_utterance_wer = wer.per_utterance;
    report.corpus_wer = wer.percent;
    report.total_edits = wer.total_edits;
    report.total_ref_words = wer.total_ref_words;
    report.utterance_count = refs.size();

    const std::string stem = fs::path(ckpt_path).stem().string();
    std::ostringstream os;
    os << "decode report: " << stem << '\n';
    os << "test utterances  " << refs.size() << '\n';
    os << "beam width       " << cfg.beam_width << '\n';
    if (have_lm)
        os << "language model   4-gram, weight " << fixed(cfg.lm_weight, 2) << '\n';
    else
        os << "language model   no LM\n";
    os << "corpus WER       " << fixed(wer.percent, 2) << "% (" << wer.total_edits
       << " edits / " << wer.total_ref_words << " reference words)\n\n";
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"id", "WER%", "reference", "hypothesis"});
    for (std::size_t i = 0; i < refs.size(); ++i)
        rows.push_back({splits.test[i].id, fixed(wer.per_utterance[i], 2), refs[i], hyps[i]});
    os << render_aligned(rows);
    write_text(ws.work_file("reports/decode_" + stem + ".txt"), os.str());

    std::ostringstream tsv;
    tsv << "id\twer_percent\treference\thypothesis\n";
    for (std::size_t i = 0; i < refs.size(); ++i)
        tsv << splits.test[i].id << '\t' << full_precision(wer.per_utterance[i]) << '\t'
            << refs[i] << '\t' << hyps[i] << '\n';
    write_text(ws.work_file("reports/decode_" + stem + ".tsv"), tsv.str());
    return report;
}

// ---------------------------------------------------------------------------
// Vocabulary sweep.

std::vector<SweepPoint> run_sweep(const Workspace& ws, const ExperimentConfig& cfg,
                                  const std::vector<std::size_t>& vocab_sizes,
                                  const SweepRunner& runner) {
    if (vocab_sizes.empty())
        throw std::invalid_argument("vocabulary sweep needs at least one size");
    for (std::size_t i = 0; i < vocab_sizes.size(); ++i) {
        if (vocab_sizes[i] == 0)
            throw std::invalid_argument("vocabulary sweep sizes must be >= 1");
        if (i > 0 && vocab_sizes[i] <= vocab_sizes[i - 1])
            throw std::invalid_argument("vocabulary sweep sizes must be strictly increasing");
    }
    if (!runner) throw std::invalid_argument("vocabulary sweep needs a runner");

    const std::vector<UtteranceRecord> records =
        read_manifest(ws.manifest_path(), ctc::Alphabet::standard());
    std::vector<std::string> unique_order;
    std::set<std::string> seen;
    for (const UtteranceRecord& r : records)
        if (seen.insert(r.transcript).second) unique_order.push_back(r.transcript);
    if (vocab_sizes.back() > unique_order.size())
        throw std::invalid_argument("vocabulary sweep size " +
                                    std::to_string(vocab_sizes.back()) + " exceeds the " +
                                    std::to_string(unique_order.size()) +
                                    " available unique sentences");

    std::vector<SweepPoint> points;
    for (const std::size_t vocab : vocab_sizes) {
        const std::set<std::string> keep(unique_order.begin(),
                                         unique_order.begin() + static_cast<long>(vocab));
        SweepPoint point;
        point.vocabulary = vocab;
        point.unique_sentences = vocab;
        std::set<std::string> vocab_words;
        for (const std::string& sentence : keep)
            for (const std::string& w : metrics::words(sentence)) vocab_words.insert(w);
        point.unique_words = vocab_words.size();
        for (const UtteranceRecord& r : records) {
            if (!keep.count(r.transcript)) continue;
            ++point.utterances;
            point.words += metrics::words(r.transcript).size();
            for (char c : r.transcript)
                if (c != ' ') ++point.letters;
        }
        point.wer = runner(ws, cfg, vocab);
        points.push_back(point);
    }

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"vocabulary", "sentences", "unique sentences", "words", "unique words",
                    "letters", "WER random %", "WER pretrained %"});
    for (const SweepPoint& p : points)
        rows.push_back({std::to_string(p.vocabulary), std::to_string(p.utterances),
                        std::to_string(p.unique_sentences), std::to_string(p.words),
                        std::to_string(p.unique_words), std::to_string(p.letters),
                        fixed(p.wer.wer_random, 2), fixed(p.wer.wer_pretrained, 2)});
    std::ostringstream os;
    os << "vocabulary sweep\n" << render_aligned(rows);
    write_text(ws.work_file("reports/sweep.txt"), os.str());

    std::ostringstream tsv;
    tsv << join_tabs({"vocabulary", "sentences", "unique_sentences", "words", "unique_words",
                      "letters", "wer_random", "wer_pretrained"});
    for (const SweepPoint& p : points)
        tsv << join_tabs({std::to_string(p.vocabulary), std::to_string(p.utterances),
                          std::to_string(p.unique_sentences), std::to_string(p.words),
                          std::to_string(p.unique_words), std::to_string(p.letters),
                          full_precision(p.wer.wer_random),
                          full_precision(p.wer.wer_pretrained)});
    write_text(ws.work_file("reports/sweep.tsv"), tsv.str());
    return points;
}

} // namespace eegcsr::pipeline
