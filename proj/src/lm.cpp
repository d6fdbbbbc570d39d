#include "eegcsr/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace eegcsr::lm {

namespace {

std::string printable(char c) {
    if (c == ' ') return "<space>";
    if (c == kBegin) return "<s>";
    if (c == kEnd) return "</s>";
    if (c == '\t' || c == '\n' || c < 0x20) {
        std::ostringstream os;
        os << "\\x" << std::hex << int(static_cast<unsigned char>(c));
        return os.str();
    }
    return std::string(1, c);
}

// Symbols are written one per tab-separated field; characters that would
// collide with the format get named escapes.
std::string encode_symbol(char c) {
    switch (c) {
        case kBegin: return "<s>";
        case kEnd: return "</s>";
        case ' ': return "<sp>";
        case '\t': return "<tab>";
        case '\n': return "<nl>";
        default: return std::string(1, c);
    }
}

char decode_symbol(const std::string& tok, std::size_t byte_offset) {
    if (tok == "<s>") return kBegin;
    if (tok == "</s>") return kEnd;
    if (tok == "<sp>") return ' ';
    if (tok == "<tab>") return '\t';
    if (tok == "<nl>") return '\n';
    if (tok.size() == 1) return tok[0];
    throw std::runtime_error("lm load: unknown symbol token '" + tok + "' at byte " +
                             std::to_string(byte_offset));
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace

CharNGramModel train_ngram(const std::vector<std::string>& corpus,
                           const std::string& alphabet, int order, double k) {
    if (order < 1) throw std::invalid_argument("ngram order must be >= 1, got " + std::to_string(order));
    if (!(k > 0.0)) throw std::invalid_argument("smoothing k must be > 0, got " + std::to_string(k));
    if (alphabet.empty()) throw std::invalid_argument("ngram alphabet must be non-empty");
    for (char c : alphabet) {
        if (c == kBegin || c == kEnd)
            throw std::invalid_argument("ngram alphabet may not contain sentinel bytes");
        if (std::count(alphabet.begin(), alphabet.end(), c) != 1)
            throw std::invalid_argument("ngram alphabet has duplicate symbol '" + printable(c) + "'");
    }

    CharNGramModel m;
    m.order_ = order;
    m.k_ = k;
    m.alphabet_ = alphabet;

    for (std::size_t si = 0; si < corpus.size(); ++si) {
        const std::string& sent = corpus[si];
        for (char c : sent) {
            if (alphabet.find(c) == std::string::npos)
                throw std::invalid_argument("sentence " + std::to_string(si) +
                                            " contains character '" + printable(c) +
                                            "' outside the model alphabet");
        }
        std::string padded(static_cast<std::size_t>(order - 1), kBegin);
        padded += sent;
        padded += kEnd;
        // Every non-padding position is a continuation event; count the n-gram
        // ending there for each length up to the model order.
        for (std::size_t i = static_cast<std::size_t>(order - 1); i < padded.size(); ++i) {
            for (int n = 1; n <= order; ++n) {
                if (i + 1 < static_cast<std::size_t>(n)) break;
                std::string gram = padded.substr(i + 1 - static_cast<std::size_t>(n),
                                                 static_cast<std::size_t>(n));
                m.ngram_counts_[gram] += 1;
                m.context_totals_[gram.substr(0, gram.size() - 1)] += 1;
            }
        }
    }
    return m;
}

double CharNGramModel::score(const std::string& context_syms, char sym) const {
    // Trim to at most order-1 trailing symbols, then back off to the longest
    // context that was actually observed; the empty context is observed
    // whenever the corpus was non-empty.
    std::size_t max_len = std::min(context_syms.size(), static_cast<std::size_t>(order_ - 1));
    std::string ctx = context_syms.substr(context_syms.size() - max_len);
    while (!ctx.empty() && context_totals_.find(ctx) == context_totals_.end())
        ctx.erase(ctx.begin());

    double denom_count = 0.0;
    auto it = context_totals_.find(ctx);
    if (it != context_totals_.end()) denom_count = static_cast<double>(it->second);

    double numer = k_;
    auto ng = ngram_counts_.find(ctx + sym);
    if (ng != ngram_counts_.end()) numer += static_cast<double>(ng->second);

    // Continuations: every alphabet character plus the end sentinel. The begin
    // sentinel only ever appears in contexts.
    double vocab = static_cast<double>(alphabet_.size()) + 1.0;
    return std::log(numer) - std::log(denom_count + k_ * vocab);
}

double CharNGramModel::next_char_logprob(const std::string& context, char c) const {
    if (alphabet_.find(c) == std::string::npos)
        throw std::out_of_range("character '" + printable(c) + "' is outside the model alphabet");
    for (char cc : context) {
        if (alphabet_.find(cc) == std::string::npos)
            throw std::out_of_range("context character '" + printable(cc) +
                                    "' is outside the model alphabet");
    }
    std::string padded(static_cast<std::size_t>(order_ - 1), kBegin);
    padded += context;
    return score(padded, c);
}

double CharNGramModel::end_logprob(const std::string& context) const {
    for (char cc : context) {
        if (alphabet_.find(cc) == std::string::npos)
            throw std::out_of_range("context character '" + printable(cc) +
                                    "' is outside the model alphabet");
    }
    std::string padded(static_cast<std::size_t>(order_ - 1), kBegin);
    padded += context;
    return score(padded, kEnd);
}

double CharNGramModel::sequence_logprob(const std::string& s) const {
    for (char cc : s) {
        if (alphabet_.find(cc) == std::string::npos)
            throw std::out_of_range("character '" + printable(cc) +
                                    "' is outside the model alphabet");
    }
    std::string padded(static_cast<std::size_t>(order_ - 1), kBegin);
    double total = 0.0;
    for (char c : s) {
        total += score(padded, c);
        padded += c;
    }
    total += score(padded, kEnd);
    return total;
}

void CharNGramModel::save(std::ostream& out) const {
    out << "EEGCSR-NGLM\t1\n";
    out << "order\t" << order_ << "\n";
    out << std::hexfloat;
    out << "k\t" << k_ << "\n";
    out << std::defaultfloat;
    out << "alphabet";
    for (char c : alphabet_) out << '\t' << encode_symbol(c);
    out << "\n";
    out << "ngrams\t" << ngram_counts_.size() << "\n";

    std::vector<std::string> keys;
    keys.reserve(ngram_counts_.size());
    for (const auto& [gram, count] : ngram_counts_) {
        (void)count;
        keys.push_back(gram);
    }
    std::sort(keys.begin(), keys.end());
    for (const std::string& gram : keys) {
        out << ngram_counts_.at(gram);
        for (char c : gram) out << '\t' << encode_symbol(c);
        out << "\n";
    }
    if (!out) throw std::runtime_error("lm save: stream write failed");
}

CharNGramModel CharNGramModel::load(std::istream& in) {
    std::size_t offset = 0;
    auto next_line = [&](std::string& line) -> bool {
        if (!std::getline(in, line)) return false;
        return true;
    };
    auto fail = [&](const std::string& what) -> std::runtime_error {
        return std::runtime_error("lm load: " + what + " at byte " + std::to_string(offset));
    };

    std::string line;
    if (!next_line(line)) throw fail("missing header");
    if (line != "EEGCSR-NGLM\t1") throw fail("unrecognized header '" + line + "'");
    offset += line.size() + 1;

    CharNGramModel m;

    if (!next_line(line)) throw fail("missing order line");
    {
        auto f = split_tabs(line);
        if (f.size() != 2 || f[0] != "order") throw fail("expected 'order' line, got '" + line + "'");
        try {
            m.order_ = std::stoi(f[1]);
        } catch (const std::exception&) {
            throw fail("bad order value '" + f[1] + "'");
        }
        if (m.order_ < 1) throw fail("order must be >= 1");
    }
    offset += line.size() + 1;

    if (!next_line(line)) throw fail("missing k line");
    {
        auto f = split_tabs(line);
        if (f.size() != 2 || f[0] != "k") throw fail("expected 'k' line, got '" + line + "'");
        try {
            std::size_t used = 0;
            m.k_ = std::stod(f[1], &used);
            if (used != f[1].size()) throw std::invalid_argument(f[1]);
        } catch (const std::exception&) {
            throw fail("bad k value '" + f[1] + "'");
        }
        if (!(m.k_ > 0.0)) throw fail("k must be > 0");
    }
    offset += line.size() + 1;

    if (!next_line(line)) throw fail("missing alphabet line");
    {
        auto f = split_tabs(line);
        if (f.empty() || f[0] != "alphabet" || f.size() < 2)
            throw fail("expected 'alphabet' line, got '" + line + "'");
        for (std::size_t i = 1; i < f.size(); ++i) m.alphabet_ += decode_symbol(f[i], offset);
    }
    offset += line.size() + 1;

    if (!next_line(line)) throw fail("missing ngrams line");
    std::size_t n_grams = 0;
    {
        auto f = split_tabs(line);
        if (f.size() != 2 || f[0] != "ngrams") throw fail("expected 'ngrams' line, got '" + line + "'");
        try {
            n_grams = std::stoul(f[1]);
        } catch (const std::exception&) {
            throw fail("bad ngram count '" + f[1] + "'");
        }
    }
    offset += line.size() + 1;

    for (std::size_t i = 0; i < n_grams; ++i) {
        if (!next_line(line)) throw fail("expected " + std::to_string(n_grams) +
                                         " ngram lines, stream ended after " + std::to_string(i));
        auto f = split_tabs(line);
        if (f.size() < 2) throw fail("malformed ngram line '" + line + "'");
        std::uint64_t count = 0;
        try {
            count = std::stoull(f[0]);
        } catch (const std::exception&) {
            throw fail("bad count '" + f[0] + "'");
        }
        if (count == 0) throw fail("zero count stored for an observed ngram");
        std::string gram;
        for (std::size_t j = 1; j < f.size(); ++j) gram += decode_symbol(f[j], offset);
        if (gram.size() > static_cast<std::size_t>(m.order_))
            throw fail("ngram longer than model order");
        if (m.ngram_counts_.count(gram)) throw fail("duplicate ngram line");
        m.ngram_counts_[gram] = count;
        // Context totals are fully determined by the stored counts.
        m.context_totals_[gram.substr(0, gram.size() - 1)] += count;
        offset += line.size() + 1;
    }
    return m;
}

void save_lm(const CharNGramModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    model.save(out);
    if (!out.flush()) throw std::runtime_error("write to '" + path + "' failed");
}

CharNGramModel load_lm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    return CharNGramModel::load(in);
}

} // namespace eegcsr::lm
