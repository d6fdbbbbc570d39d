#include "eegcsr/pipeline/config.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "eegcsr/pipeline/io.hpp"

namespace eegcsr::pipeline {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw std::invalid_argument(where + ": " + what);
}

double parse_double(const std::string& where, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail(where, "'" + v + "' is not a number");
    }
}

std::uint64_t parse_count(const std::string& where, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        fail(where, "'" + v + "' is not a non-negative integer");
    }
}

bool parse_bool(const std::string& where, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    fail(where, "'" + v + "' is not a boolean (use true/false)");
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << v; // default precision round-trips the values we use
    return os.str();
}

} // namespace

void ExperimentConfig::validate() const {
    auto bad = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        bad("split_fraction must lie strictly inside (0, 1)");
    if (kpca_components < 1) bad("kpca_components must be >= 1");
    if (kpca_gamma < 0.0) bad("kpca_gamma must be >= 0 (0 selects 1/D)");
    if (kpca_degree < 1) bad("kpca_degree must be >= 1");
    if (kpca_fit_cap < 2) bad("kpca_fit_cap must be >= 2");
    if (epochs_regression < 1 || epochs_ctc < 1 || epochs_articulatory < 1)
        bad("epoch counts must be >= 1");
    if (batch_regression < 1 || batch_ctc < 1 || batch_articulatory < 1)
        bad("batch sizes must be >= 1");
    if (dropout_gru != 0.1)
        bad("dropout_gru is fixed at 0.1 by the network definition");
    if (dropout_articulatory != 0.2)
        bad("dropout_articulatory is fixed at 0.2 by the network definition");
    if (init_mode != "random" && init_mode != "pretrained")
        bad("init_mode must be 'random' or 'pretrained'");
    if (variant != "base" && variant != "extended")
        bad("variant must be 'base' or 'extended'");
    if (beam_width < 1) bad("beam_width must be >= 1");
    if (lm_weight < 0.0) bad("lm_weight must be >= 0");
    for (const std::string& c : channel_subset)
        if (c.empty()) bad("channel_subset contains an empty label");
}

ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig cfg; // defaults are the full schedule
    if (name == "full") return cfg;
    if (name == "desk") {
        cfg.epochs_regression = 25;
        cfg.epochs_ctc = 30;
        cfg.epochs_articulatory = 30;
        return cfg;
    }
    throw std::invalid_argument("unknown config preset '" + name +
                                "' (available: full, desk)");
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    bool any_setting = false;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string where = source_name + ":" + std::to_string(line_no);
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(where, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(where, "empty key");

        if (key == "preset") {
            if (any_setting) fail(where, "'preset' must come before other settings");
            try {
                cfg = preset_config(value);
            } catch (const std::invalid_argument& e) {
                fail(where, e.what());
            }
            continue;
        }
        any_setting = true;

        if (key == "seed") cfg.seed = parse_count(where, value);
        else if (key == "split_fraction") cfg.split_fraction = parse_double(where, value);
        else if (key == "kpca_components")
            cfg.kpca_components = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "kpca_gamma") cfg.kpca_gamma = parse_double(where, value);
        else if (key == "kpca_coef0") cfg.kpca_coef0 = parse_double(where, value);
        else if (key == "kpca_degree")
            cfg.kpca_degree = static_cast<int>(parse_count(where, value));
        else if (key == "kpca_fit_cap")
            cfg.kpca_fit_cap = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "epochs_regression")
            cfg.epochs_regression = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "epochs_ctc")
            cfg.epochs_ctc = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "epochs_articulatory")
            cfg.epochs_articulatory = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "batch_regression")
            cfg.batch_regression = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "batch_ctc")
            cfg.batch_ctc = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "batch_articulatory")
            cfg.batch_articulatory = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "dropout_gru") cfg.dropout_gru = parse_double(where, value);
        else if (key == "dropout_articulatory")
            cfg.dropout_articulatory = parse_double(where, value);
        else if (key == "batchnorm") cfg.batchnorm = parse_bool(where, value);
        else if (key == "init_mode") cfg.init_mode = value;
        else if (key == "variant") cfg.variant = value;
        else if (key == "beam_width")
            cfg.beam_width = static_cast<int>(parse_count(where, value));
        else if (key == "lm_weight") cfg.lm_weight = parse_double(where, value);
        else if (key == "vocabulary_limit")
            cfg.vocabulary_limit = static_cast<std::size_t>(parse_count(where, value));
        else if (key == "channel_subset") cfg.channel_subset = parse_list(value);
        else fail(where, "unknown configuration key '" + key + "'");
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(source_name + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config_text(read_text(path), path);
}

std::string render_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "seed = " << cfg.seed << '\n';
    os << "split_fraction = " << format_double(cfg.split_fraction) << '\n';
    os << "kpca_components = " << cfg.kpca_components << '\n';
    os << "kpca_gamma = " << format_double(cfg.kpca_gamma) << '\n';
    os << "kpca_coef0 = " << format_double(cfg.kpca_coef0) << '\n';
    os << "kpca_degree = " << cfg.kpca_degree << '\n';
    os << "kpca_fit_cap = " << cfg.kpca_fit_cap << '\n';
    os << "epochs_regression = " << cfg.epochs_regression << '\n';
    os << "epochs_ctc = " << cfg.epochs_ctc << '\n';
    os << "epochs_articulatory = " << cfg.epochs_articulatory << '\n';
    os << "batch_regression = " << cfg.batch_regression << '\n';
    os << "batch_ctc = " << cfg.batch_ctc << '\n';
    os << "batch_articulatory = " << cfg.batch_articulatory << '\n';
    os << "dropout_gru = " << format_double(cfg.dropout_gru) << '\n';
    os << "dropout_articulatory = " << format_double(cfg.dropout_articulatory) << '\n';
    os << "batchnorm = " << (cfg.batchnorm ? "true" : "false") << '\n';
    os << "init_mode = " << cfg.init_mode << '\n';
    os << "variant = " << cfg.variant << '\n';
    os << "beam_width = " << cfg.beam_width << '\n';
    os << "lm_weight = " << format_double(cfg.lm_weight) << '\n';
    os << "vocabulary_limit = " << cfg.vocabulary_limit << '\n';
    os << "channel_subset = ";
    for (std::size_t i = 0; i < cfg.channel_subset.size(); ++i) {
        if (i) os << ',';
        os << cfg.channel_subset[i];
    }
    os << '\n';
    return os.str();
}

} // namespace eegcsr::pipeline
