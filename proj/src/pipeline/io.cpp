#include "eegcsr/pipeline/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace eegcsr::pipeline {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in the host byte order and assume little-endian");

namespace {

namespace fs = std::filesystem;

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    ensure_parent_dir(path);
    std::ofstream out(path, mode);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    return in;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw std::runtime_error(path + ": truncated file");
    return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::istream& in, std::vector<double>& v, const std::string& path) {
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double))))
        throw std::runtime_error(path + ": truncated payload");
}

std::vector<std::string> split_on(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string hexdouble(double v) {
    std::ostringstream os;
    os << std::hexfloat << v;
    return os.str();
}

} // namespace

// ---------------------------------------------------------------------------
// NDX1 matrices

void write_ndx(const std::string& path, const Tensor& t) {
    if (t.rank() < 1 || t.rank() > 3)
        throw std::invalid_argument(path + ": only rank 1..3 tensors are stored, got rank " +
                                    std::to_string(t.rank()));
    std::ofstream out = open_out(path, std::ios::binary);
    out.write("NDX1", 4);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    put_doubles(out, t.values());
    if (!out) throw std::runtime_error(path + ": write failed");
}

Tensor read_ndx(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, "NDX1", 4) != 0)
        throw std::runtime_error(path + ": not an NDX1 matrix file");
    const std::uint32_t rank = get_u32(in, path);
    if (rank < 1 || rank > 3)
        throw std::runtime_error(path + ": unsupported tensor rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = get_u32(in, path);
        total *= shape[i];
    }
    if (total > (1u << 28))
        throw std::runtime_error(path + ": tensor implausibly large (" + std::to_string(total) +
                                 " elements)");
    Tensor t(shape);
    get_doubles(in, t.values(), path);
    // Anything after the payload means the header lied about the shape.
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error(path + ": trailing bytes after tensor payload");
    return t;
}

// ---------------------------------------------------------------------------
// Text files

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out = open_out(path, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

std::string read_text(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::string content;
    for (const std::string& l : lines) {
        content += l;
        content += '\n';
    }
    write_text(path, content);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in = open_in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// ---------------------------------------------------------------------------
// Key/value metadata

void write_kv(const std::string& path, const KvPairs& entries) {
    std::string content;
    for (const auto& [k, v] : entries) {
        if (k.empty() || k.find_first_of(" =\t\n") != std::string::npos)
            throw std::invalid_argument(path + ": invalid metadata key '" + k + "'");
        if (v.find('\n') != std::string::npos)
            throw std::invalid_argument(path + ": metadata value for '" + k +
                                        "' contains a newline");
        content += k + " = " + v + "\n";
    }
    write_text(path, content);
}

KvPairs read_kv(const std::string& path) {
    KvPairs out;
    const std::vector<std::string> lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string line = trim(lines[i]);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                                     ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": empty key");
        out.emplace_back(key, value);
    }
    return out;
}

const std::string& kv_get(const KvPairs& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    throw std::out_of_range("metadata key '" + key + "' not found");
}

double kv_get_double(const KvPairs& kv, const std::string& key) {
    const std::string& raw = kv_get(kv, key);
    try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("metadata key '" + key + "' is not a number: '" + raw + "'");
    }
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

void validate_record(const UtteranceRecord& r, const ctc::Alphabet& alphabet,
                     const std::string& where) {
    if (r.id.empty()) throw std::runtime_error(where + ": empty utterance id");
    if (r.transcript.empty()) throw std::runtime_error(where + ": empty transcript");
    for (char c : r.transcript) {
        if (alphabet.chars().find(c) == std::string::npos)
            throw std::runtime_error(where + ": transcript character '" + std::string(1, c) +
                                     "' is outside the alphabet");
    }
    for (const std::string* f : {&r.id, &r.subject, &r.eeg_path, &r.speech_path, &r.artic_path}) {
        if (f->find('\t') != std::string::npos || f->find('\n') != std::string::npos)
            throw std::runtime_error(where + ": field contains a tab or newline");
    }
    if (r.eeg_path.empty()) throw std::runtime_error(where + ": missing EEG path");
}

std::string opt_path(const std::string& p) { return p.empty() ? "-" : p; }

} // namespace

void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& records) {
    const ctc::Alphabet& alphabet = ctc::Alphabet::standard();
    std::vector<std::string> lines;
    lines.reserve(records.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const UtteranceRecord& r = records[i];
        validate_record(r, alphabet, path + " record " + std::to_string(i + 1));
        if (!seen.insert(r.id).second)
            throw std::runtime_error(path + " record " + std::to_string(i + 1) +
                                     ": duplicate utterance id '" + r.id + "'");
        lines.push_back(r.id + '\t' + r.subject + '\t' + std::to_string(r.session) + '\t' +
                        r.transcript + '\t' + r.eeg_path + '\t' + opt_path(r.speech_path) + '\t' +
                        opt_path(r.artic_path));
    }
    write_lines(path, lines);
}

std::vector<UtteranceRecord> read_manifest(const std::string& path,
                                           const ctc::Alphabet& alphabet) {
    const std::vector<std::string> lines = read_lines(path);
    std::vector<UtteranceRecord> records;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::string where = path + ":" + std::to_string(i + 1);
        const std::vector<std::string> fields = split_on(lines[i], '\t');
        if (fields.size() != 7)
            throw std::runtime_error(where + ": expected 7 tab-separated fields, got " +
                                     std::to_string(fields.size()));
        UtteranceRecord r;
        r.id = fields[0];
        r.subject = fields[1];
        try {
            std::size_t used = 0;
            r.session = std::stoi(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument(fields[2]);
        } catch (const std::exception&) {
            throw std::runtime_error(where + ": session '" + fields[2] + "' is not an integer");
        }
        r.transcript = fields[3];
        r.eeg_path = fields[4];
        r.speech_path = fields[5] == "-" ? "" : fields[5];
        r.artic_path = fields[6] == "-" ? "" : fields[6];
        validate_record(r, alphabet, where);
        if (!seen.insert(r.id).second)
            throw std::runtime_error(where + ": duplicate utterance id '" + r.id + "'");
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Checkpoints

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return &t.value;
    return nullptr;
}

const std::string* Checkpoint::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<const NamedTensor*> ordered;
    ordered.reserve(ckpt.tensors.size());
    for (const NamedTensor& t : ckpt.tensors) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(),
              [](const NamedTensor* a, const NamedTensor* b) { return a->name < b->name; });
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (ordered[i]->name == ordered[i - 1]->name)
            throw std::invalid_argument(path + ": duplicate tensor name '" + ordered[i]->name +
                                        "'");
    }

    std::ostringstream head;
    head << "EEGCSR-CKPT\t1\n";
    for (const auto& [k, v] : ckpt.meta) {
        if (k.find_first_of("\t\n") != std::string::npos ||
            v.find_first_of("\t\n") != std::string::npos)
            throw std::invalid_argument(path + ": checkpoint meta must not contain tabs/newlines");
        head << "meta\t" << k << '\t' << v << '\n';
    }
    for (const TopologyEntry& l : ckpt.topology) {
        if (l.name.find_first_of("\t\n") != std::string::npos ||
            l.descriptor.find_first_of("\t\n") != std::string::npos)
            throw std::invalid_argument(path + ": topology entries must not contain tabs");
        head << "layer\t" << l.name << '\t' << (l.frozen ? 1 : 0) << '\t' << l.descriptor << '\n';
    }
    std::size_t offset = 0;
    for (const NamedTensor* t : ordered) {
        head << "tensor\t" << t->name << '\t';
        const auto& shape = t->value.shape();
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) head << 'x';
            head << shape[i];
        }
        head << '\t' << offset << '\n';
        offset += t->value.size();
    }
    head << "payload\t" << offset << '\n';

    std::ofstream out = open_out(path, std::ios::binary);
    const std::string header = head.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const NamedTensor* t : ordered) put_doubles(out, t->value.values());
    if (!out) throw std::runtime_error(path + ": write failed");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    Checkpoint ckpt;
    std::string line;
    if (!std::getline(in, line) || line != "EEGCSR-CKPT\t1")
        throw std::runtime_error(path + ": unrecognized checkpoint header");

    struct PendingTensor {
        std::string name;
        std::vector<std::size_t> shape;
        std::size_t offset;
        std::size_t count;
    };
    std::vector<PendingTensor> pending;
    std::size_t payload_count = 0;
    bool saw_payload = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = path + ":" + std::to_string(line_no);
        const std::vector<std::string> f = split_on(line, '\t');
        if (f[0] == "meta") {
            if (f.size() != 3) throw std::runtime_error(where + ": malformed meta line");
            ckpt.meta.emplace_back(f[1], f[2]);
        } else if (f[0] == "layer") {
            if (f.size() != 4) throw std::runtime_error(where + ": malformed layer line");
            if (f[2] != "0" && f[2] != "1")
                throw std::runtime_error(where + ": frozen flag must be 0 or 1");
            ckpt.topology.push_back({f[1], f[2] == "1", f[3]});
        } else if (f[0] == "tensor") {
            if (f.size() != 4) throw std::runtime_error(where + ": malformed tensor line");
            PendingTensor p;
            p.name = f[1];
            p.count = 1;
            for (const std::string& d : split_on(f[2], 'x')) {
                try {
                    std::size_t used = 0;
                    p.shape.push_back(std::stoull(d, &used));
                    if (used != d.size()) throw std::invalid_argument(d);
                } catch (const std::exception&) {
                    throw std::runtime_error(where + ": bad tensor shape '" + f[2] + "'");
                }
                p.count *= p.shape.back();
            }
            try {
                p.offset = std::stoull(f[3]);
            } catch (const std::exception&) {
                throw std::runtime_error(where + ": bad tensor offset '" + f[3] + "'");
            }
            pending.push_back(std::move(p));
        } else if (f[0] == "payload") {
            if (f.size() != 2) throw std::runtime_error(where + ": malformed payload line");
            try {
                payload_count = std::stoull(f[1]);
            } catch (const std::exception&) {
                throw std::runtime_error(where + ": bad payload count '" + f[1] + "'");
            }
            saw_payload = true;
            break;
        } else {
            throw std::runtime_error(where + ": unknown checkpoint directive '" + f[0] + "'");
        }
    }
    if (!saw_payload) throw std::runtime_error(path + ": checkpoint has no payload line");

    std::vector<double> payload(payload_count);
    if (payload_count > 0) get_doubles(in, payload, path);
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error(path + ": trailing bytes after checkpoint payload");

    for (const PendingTensor& p : pending) {
        if (p.offset + p.count > payload_count)
            throw std::runtime_error(path + ": tensor '" + p.name +
                                     "' extends past the payload");
        Tensor t(p.shape);
        std::copy(payload.begin() + static_cast<std::ptrdiff_t>(p.offset),
                  payload.begin() + static_cast<std::ptrdiff_t>(p.offset + p.count),
                  t.values().begin());
        ckpt.tensors.push_back({p.name, std::move(t)});
    }
    return ckpt;
}

Checkpoint checkpoint_of_model(nn::Model& model, KvPairs meta) {
    Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        nn::Layer& l = model.layer_at(i);
        ckpt.topology.push_back({l.name(), l.frozen(), l.descriptor()});
    }
    for (nn::ParamRef& p : model.all_params()) ckpt.tensors.push_back({p.qualified(), *p.value});
    for (nn::StateRef& s : model.all_state()) ckpt.tensors.push_back({s.qualified(), *s.value});
    return ckpt;
}

nn::Model model_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.topology.empty())
        throw std::runtime_error("checkpoint carries no layer topology");
    nn::Model model;
    for (const TopologyEntry& l : ckpt.topology) {
        nn::Layer& added = model.add(nn::layer_from_descriptor(l.name, l.descriptor));
        added.set_frozen(l.frozen);
    }
    auto load_into = [&](const std::string& name, Tensor* dst) {
        const Tensor* src = ckpt.find(name);
        if (src == nullptr)
            throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
        if (!src->same_shape(*dst))
            throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                                     src->shape_str() + ", model expects " + dst->shape_str());
        *dst = *src;
    };
    for (nn::ParamRef& p : model.all_params()) load_into(p.qualified(), p.value);
    for (nn::StateRef& s : model.all_state()) load_into(s.qualified(), s.value);
    return model;
}

// ---------------------------------------------------------------------------
// Standardization

Tensor Standardizer::apply(const Tensor& rows) const {
    if (rows.rank() != 2 || rows.cols() != mean.size())
        throw std::invalid_argument("standardizer expects [T x " + std::to_string(mean.size()) +
                                    "] rows, got " + rows.shape_str());
    Tensor out = rows;
    for (std::size_t t = 0; t < out.rows(); ++t) {
        double* row = out.row_ptr(t);
        for (std::size_t j = 0; j < mean.size(); ++j) row[j] = (row[j] - mean[j]) / scale[j];
    }
    return out;
}

Tensor Standardizer::invert(const Tensor& rows) const {
    if (rows.rank() != 2 || rows.cols() != mean.size())
        throw std::invalid_argument("standardizer expects [T x " + std::to_string(mean.size()) +
                                    "] rows, got " + rows.shape_str());
    Tensor out = rows;
    for (std::size_t t = 0; t < out.rows(); ++t) {
        double* row = out.row_ptr(t);
        for (std::size_t j = 0; j < mean.size(); ++j) row[j] = row[j] * scale[j] + mean[j];
    }
    return out;
}

Standardizer fit_standardizer(const Tensor& rows) {
    StandardizerAccumulator acc;
    acc.add(rows);
    return acc.finish();
}

void StandardizerAccumulator::add(const Tensor& rows) {
    if (rows.rank() != 2) throw std::invalid_argument("standardizer input must be [T x D]");
    if (mean_acc.empty()) {
        mean_acc.assign(rows.cols(), 0.0);
        m2_acc.assign(rows.cols(), 0.0);
    }
    if (rows.cols() != mean_acc.size())
        throw std::invalid_argument("standardizer rows changed width: " +
                                    std::to_string(rows.cols()) + " vs " +
                                    std::to_string(mean_acc.size()));
    // Welford, one row at a time.
    for (std::size_t t = 0; t < rows.rows(); ++t) {
        ++count;
        const double* row = rows.row_ptr(t);
        for (std::size_t j = 0; j < mean_acc.size(); ++j) {
            const double delta = row[j] - mean_acc[j];
            mean_acc[j] += delta / static_cast<double>(count);
            m2_acc[j] += delta * (row[j] - mean_acc[j]);
        }
    }
}

Standardizer StandardizerAccumulator::finish() const {
    if (count == 0) throw std::invalid_argument("standardizer fitted on no rows");
    const std::size_t d = mean_acc.size();
    Standardizer s;
    s.mean = Tensor({d});
    s.scale = Tensor({d});
    for (std::size_t j = 0; j < d; ++j) {
        s.mean[j] = mean_acc[j];
        const double var = m2_acc[j] / static_cast<double>(count);
        s.scale[j] = std::max(std::sqrt(var), 1e-8);
    }
    return s;
}

// ---------------------------------------------------------------------------
// KPCA persistence

void write_kpca_checkpoint(const std::string& path, const KpcaBundle& bundle, KvPairs meta) {
    const kpca::KpcaModel& m = bundle.model;
    Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    ckpt.meta.emplace_back("kpca_gamma", hexdouble(m.gamma));
    ckpt.meta.emplace_back("kpca_coef0", hexdouble(m.coef0));
    ckpt.meta.emplace_back("kpca_degree", std::to_string(m.degree));
    ckpt.meta.emplace_back("kpca_components", std::to_string(m.n_components));
    ckpt.meta.emplace_back("kpca_grand_mean", hexdouble(m.grand_mean));
    ckpt.tensors.push_back({"kpca.training_vectors", m.training_vectors});
    ckpt.tensors.push_back({"kpca.row_means", m.row_means});
    ckpt.tensors.push_back(
        {"kpca.eigenvalues", Tensor({m.eigenvalues.size()}, m.eigenvalues)});
    ckpt.tensors.push_back({"kpca.dual_coefficients", m.dual_coefficients});
    ckpt.tensors.push_back({"kpca.training_projections", m.training_projections});
    ckpt.tensors.push_back({"stdz_in.mean", bundle.input.mean});
    ckpt.tensors.push_back({"stdz_in.scale", bundle.input.scale});
    ckpt.tensors.push_back({"stdz_out.mean", bundle.output.mean});
    ckpt.tensors.push_back({"stdz_out.scale", bundle.output.scale});
    write_checkpoint(path, ckpt);
}

KpcaBundle read_kpca_checkpoint(const std::string& path, KvPairs* meta_out) {
    const Checkpoint ckpt = read_checkpoint(path);
    auto need_meta = [&](const std::string& key) -> const std::string& {
        const std::string* v = ckpt.meta_value(key);
        if (v == nullptr)
            throw std::runtime_error(path + ": checkpoint is missing meta key '" + key + "'");
        return *v;
    };
    auto need_tensor = [&](const std::string& name) -> const Tensor& {
        const Tensor* t = ckpt.find(name);
        if (t == nullptr)
            throw std::runtime_error(path + ": checkpoint is missing tensor '" + name + "'");
        return *t;
    };
    auto parse_double = [&](const std::string& key) {
        const std::string& raw = need_meta(key);
        char* end = nullptr;
        const double v = std::strtod(raw.c_str(), &end);
        if (end == raw.c_str() || *end != '\0')
            throw std::runtime_error(path + ": meta key '" + key + "' is not a number");
        return v;
    };

    KpcaBundle bundle;
    kpca::KpcaModel& m = bundle.model;
    m.gamma = parse_double("kpca_gamma");
    m.coef0 = parse_double("kpca_coef0");
    m.degree = static_cast<int>(parse_double("kpca_degree"));
    m.n_components = static_cast<std::size_t>(parse_double("kpca_components"));
    m.grand_mean = parse_double("kpca_grand_mean");
    m.training_vectors = need_tensor("kpca.training_vectors");
    m.row_means = need_tensor("kpca.row_means");
    m.eigenvalues = need_tensor("kpca.eigenvalues").values();
    m.dual_coefficients = need_tensor("kpca.dual_coefficients");
    m.training_projections = need_tensor("kpca.training_projections");
    bundle.input.mean = need_tensor("stdz_in.mean");
    bundle.input.scale = need_tensor("stdz_in.scale");
    bundle.output.mean = need_tensor("stdz_out.mean");
    bundle.output.scale = need_tensor("stdz_out.scale");
    if (meta_out != nullptr) *meta_out = ckpt.meta;
    return bundle;
}

} // namespace eegcsr::pipeline
