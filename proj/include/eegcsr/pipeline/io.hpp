#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eegcsr/ctc.hpp"
#include "eegcsr/kpca.hpp"
#include "eegcsr/nn.hpp"
#include "eegcsr/tensor.hpp"

namespace eegcsr::pipeline {

// ---------------------------------------------------------------------------
// Binary matrix files: magic "NDX1", little-endian u32 rank and dims,
// row-major 64-bit little-endian reals.

void write_ndx(const std::string& path, const Tensor& t);
Tensor read_ndx(const std::string& path);

// ---------------------------------------------------------------------------
// Plain text helpers (one entry per line, '\n' terminated).

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::string& path);

// ---------------------------------------------------------------------------
// Key/value metadata files: `key = value` lines, '#' comments.

using KvPairs = std::vector<std::pair<std::string, std::string>>;

void write_kv(const std::string& path, const KvPairs& entries);
KvPairs read_kv(const std::string& path);
const std::string& kv_get(const KvPairs& kv, const std::string& key); // throws on miss
double kv_get_double(const KvPairs& kv, const std::string& key);

// ---------------------------------------------------------------------------
// Dataset manifests: one utterance per line, tab-separated
// id, subject, session, transcript, eeg path, speech path, articulatory path.
// Optional paths are stored as "-". Paths are relative to the dataset root.

struct UtteranceRecord {
    std::string id;
    std::string subject;
    int session = 0;
    std::string transcript;
    std::string eeg_path;
    std::string speech_path;  // empty = absent
    std::string artic_path;   // empty = absent
};

void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& records);

// Reads and validates: field count, integer session, unique ids, non-empty
// transcripts containing only `alphabet` characters. Errors carry the
// offending line number.
std::vector<UtteranceRecord> read_manifest(const std::string& path,
                                           const ctc::Alphabet& alphabet);

// ---------------------------------------------------------------------------
// Checkpoint container: a text header (metadata, layer topology, tensor
// table) followed by a concatenated little-endian f64 payload. Tensors are
// sorted by name so identical contents serialize byte-identically.

struct TopologyEntry {
    std::string name;
    bool frozen = false;
    std::string descriptor;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    KvPairs meta;                        // written in the order given
    std::vector<TopologyEntry> topology; // model layer order
    std::vector<NamedTensor> tensors;

    const Tensor* find(const std::string& name) const;
    const std::string* meta_value(const std::string& key) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Snapshot every parameter and persistent-state tensor of the model, plus
// one topology line per layer.
Checkpoint checkpoint_of_model(nn::Model& model, KvPairs meta);

// Rebuild the model from topology descriptors and load every parameter and
// state tensor by qualified name (all must be present; extra tensors in the
// checkpoint are permitted and ignored).
nn::Model model_from_checkpoint(const Checkpoint& ckpt);

// ---------------------------------------------------------------------------
// Per-column standardization (z-scoring) fitted on training rows.

struct Standardizer {
    Tensor mean;  // [D]
    Tensor scale; // [D], standard deviation floored at 1e-8

    Tensor apply(const Tensor& rows) const;
    Tensor invert(const Tensor& rows) const;
};

Standardizer fit_standardizer(const Tensor& rows);

// Streaming variant: accumulate rows file by file, then finish().
struct StandardizerAccumulator {
    void add(const Tensor& rows);
    Standardizer finish() const; // throws if no rows were added

    std::size_t count = 0;
    std::vector<double> mean_acc;
    std::vector<double> m2_acc;
};

// ---------------------------------------------------------------------------
// Kernel-PCA persistence: the fitted model plus the input (feature) and
// output (projection) standardizers used around it.

struct KpcaBundle {
    kpca::KpcaModel model;
    Standardizer input;
    Standardizer output;
};

void write_kpca_checkpoint(const std::string& path, const KpcaBundle& bundle, KvPairs meta);
KpcaBundle read_kpca_checkpoint(const std::string& path, KvPairs* meta_out = nullptr);

} // namespace eegcsr::pipeline
