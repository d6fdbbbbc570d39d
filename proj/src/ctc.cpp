#include "eegcsr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "eegcsr/logsum.hpp"

namespace eegcsr::ctc {

Alphabet::Alphabet(std::string chars) : chars_(std::move(chars)) {
    if (chars_.empty()) throw std::invalid_argument("alphabet must be non-empty");
    for (char c : chars_) {
        if (std::count(chars_.begin(), chars_.end(), c) != 1)
            throw std::invalid_argument(std::string("alphabet has duplicate character '") + c + "'");
    }
}

const Alphabet& Alphabet::standard() {
    static const Alphabet instance("abcdefghijklmnopqrstuvwxyz '");
    return instance;
}

int Alphabet::index_of(char c) const {
    auto pos = chars_.find(c);
    if (pos == std::string::npos)
        throw std::out_of_range(std::string("character '") + c + "' is not in the alphabet");
    return static_cast<int>(pos);
}

char Alphabet::char_at(int index) const {
    if (index < 0 || index >= size())
        throw std::out_of_range("label index " + std::to_string(index) +
                                " outside [0, " + std::to_string(size() - 1) + "]");
    return chars_[static_cast<std::size_t>(index)];
}

std::vector<int> Alphabet::encode(const std::string& text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(index_of(c));
    return out;
}

std::string Alphabet::decode(const std::vector<int>& labels) const {
    std::string out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(char_at(l));
    return out;
}

std::vector<int> collapse(const std::vector<int>& path, int blank) {
    std::vector<int> out;
    int prev = -1;
    for (int p : path) {
        if (p != prev && p != blank) out.push_back(p);
        prev = p;
    }
    return out;
}

CtcLossResult ctc_loss(const Tensor& logits, const std::vector<int>& labels, int blank) {
    if (logits.rank() != 2)
        throw std::invalid_argument("ctc_loss expects a [T x K] logit matrix, got rank " +
                                    std::to_string(logits.rank()));
    const int T = static_cast<int>(logits.rows());
    const int K = static_cast<int>(logits.cols());
    if (T < 1) throw std::invalid_argument("ctc_loss needs at least one frame");
    if (blank != K - 1)
        throw std::invalid_argument("blank must be the last class index " + std::to_string(K - 1) +
                                    ", got " + std::to_string(blank));
    for (int l : labels) {
        if (l < 0 || l >= blank)
            throw std::invalid_argument("label " + std::to_string(l) +
                                        " outside [0, " + std::to_string(blank - 1) + "]");
    }
    for (double v : logits.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument("ctc_loss logits must be finite");
    }

    const int L = static_cast<int>(labels.size());
    int repeats = 0;
    for (int i = 1; i < L; ++i) {
        if (labels[i] == labels[i - 1]) ++repeats;
    }
    CtcLossResult result;
    result.grad_logits = Tensor({static_cast<std::size_t>(T), static_cast<std::size_t>(K)});
    if (T < L + repeats) {
        result.loss = std::numeric_limits<double>::infinity();
        result.feasible = false;
        return result;
    }

    // Per-frame log-softmax.
    Tensor ls({static_cast<std::size_t>(T), static_cast<std::size_t>(K)});
    for (int t = 0; t < T; ++t) {
        const double* row = logits.row_ptr(static_cast<std::size_t>(t));
        double mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
        const double lse = mx + std::log(sum);
        for (int k = 0; k < K; ++k)
            ls.at(static_cast<std::size_t>(t), static_cast<std::size_t>(k)) = row[k] - lse;
    }

    // Blank-interleaved label sequence: blank, l1, blank, l2, ..., blank.
    const int S = 2 * L + 1;
    std::vector<int> ext(static_cast<std::size_t>(S), blank);
    for (int i = 0; i < L; ++i) ext[static_cast<std::size_t>(2 * i + 1)] = labels[i];

    auto emit = [&](int t, int s) {
        return ls.at(static_cast<std::size_t>(t), static_cast<std::size_t>(ext[static_cast<std::size_t>(s)]));
    };
    // Skipping from s-2 to s is allowed when s holds a real label differing
    // from the one two slots back.
    auto can_skip = [&](int s) {
        return s >= 2 && ext[static_cast<std::size_t>(s)] != blank &&
               ext[static_cast<std::size_t>(s)] != ext[static_cast<std::size_t>(s - 2)];
    };

    std::vector<std::vector<double>> alpha(
        static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(S), kLogZero));
    alpha[0][0] = emit(0, 0);
    if (S > 1) alpha[0][1] = emit(0, 1);
    for (int t = 1; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            double acc = alpha[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(s)];
            if (s >= 1)
                acc = logaddexp(acc, alpha[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(s - 1)]);
            if (can_skip(s))
                acc = logaddexp(acc, alpha[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(s - 2)]);
            alpha[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = acc + emit(t, s);
        }
    }
    double loglik = alpha[static_cast<std::size_t>(T - 1)][static_cast<std::size_t>(S - 1)];
    if (S > 1)
        loglik = logaddexp(loglik, alpha[static_cast<std::size_t>(T - 1)][static_cast<std::size_t>(S - 2)]);

    std::vector<std::vector<double>> beta(
        static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(S), kLogZero));
    beta[static_cast<std::size_t>(T - 1)][static_cast<std::size_t>(S - 1)] = emit(T - 1, S - 1);
    if (S > 1) beta[static_cast<std::size_t>(T - 1)][static_cast<std::size_t>(S - 2)] = emit(T - 1, S - 2);
    for (int t = T - 2; t >= 0; --t) {
        for (int s = S - 1; s >= 0; --s) {
            double acc = beta[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(s)];
            if (s + 1 < S)
                acc = logaddexp(acc, beta[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(s + 1)]);
            if (s + 2 < S && can_skip(s + 2))
                acc = logaddexp(acc, beta[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(s + 2)]);
            beta[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = acc + emit(t, s);
        }
    }

    result.loss = -loglik;
    // dloss/dlogit[t][k] = softmax[t][k] - P(state with class k at t | labels).
    for (int t = 0; t < T; ++t) {
        std::vector<double> post(static_cast<std::size_t>(K), kLogZero);
        for (int s = 0; s < S; ++s) {
            const int k = ext[static_cast<std::size_t>(s)];
            const double g = alpha[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] +
                             beta[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] - emit(t, s);
            post[static_cast<std::size_t>(k)] = logaddexp(post[static_cast<std::size_t>(k)], g);
        }
        for (int k = 0; k < K; ++k) {
            const double p = std::exp(ls.at(static_cast<std::size_t>(t), static_cast<std::size_t>(k)));
            const double q = std::exp(post[static_cast<std::size_t>(k)] - loglik);
            result.grad_logits.at(static_cast<std::size_t>(t), static_cast<std::size_t>(k)) = p - q;
        }
    }
    return result;
}

CtcLossResult ctc_loss(const Tensor& logits, const std::string& text, const Alphabet& alphabet) {
    if (static_cast<int>(logits.rank()) == 2 &&
        static_cast<int>(logits.cols()) != alphabet.num_classes())
        throw std::invalid_argument("ctc_loss expects " + std::to_string(alphabet.num_classes()) +
                                    " columns for this alphabet, got " +
                                    std::to_string(logits.cols()));
    return ctc_loss(logits, alphabet.encode(text), alphabet.blank());
}

namespace {

void validate_logprob_rows(const Tensor& log_probs, const Alphabet& alphabet, const char* who) {
    if (log_probs.rank() != 2)
        throw std::invalid_argument(std::string(who) + " expects a [T x classes] matrix, got rank " +
                                    std::to_string(log_probs.rank()));
    if (log_probs.rows() < 1)
        throw std::invalid_argument(std::string(who) + " needs at least one frame");
    if (static_cast<int>(log_probs.cols()) != alphabet.num_classes())
        throw std::invalid_argument(std::string(who) + " expects " +
                                    std::to_string(alphabet.num_classes()) + " columns, got " +
                                    std::to_string(log_probs.cols()));
    // Rows must be normalized log-probabilities: entries <= 0 (-infinity is a
    // legal "never" value) with logsumexp 0 up to rounding. This also catches
    // linear-domain probabilities passed by mistake.
    constexpr double kTol = 1e-6;
    for (std::size_t t = 0; t < log_probs.rows(); ++t) {
        double mx = kLogZero;
        for (std::size_t k = 0; k < log_probs.cols(); ++k) {
            const double v = log_probs.at(t, k);
            if (std::isnan(v) || v > kTol)
                throw std::invalid_argument(std::string(who) + " frame " + std::to_string(t) +
                                            " is not a log-probability row (entry " +
                                            std::to_string(v) + ")");
            mx = std::max(mx, v);
        }
        if (mx == kLogZero)
            throw std::invalid_argument(std::string(who) + " frame " + std::to_string(t) +
                                        " has zero total probability");
        double sum = 0.0;
        for (std::size_t k = 0; k < log_probs.cols(); ++k)
            sum += std::exp(log_probs.at(t, k) - mx);
        const double lse = mx + std::log(sum);
        if (std::abs(lse) > kTol)
            throw std::invalid_argument(std::string(who) + " frame " + std::to_string(t) +
                                        " is not normalized (logsumexp " + std::to_string(lse) + ")");
    }
}

} // namespace

std::string greedy_decode(const Tensor& log_probs, const Alphabet& alphabet) {
    validate_logprob_rows(log_probs, alphabet, "greedy_decode");
    std::vector<int> path;
    path.reserve(log_probs.rows());
    for (std::size_t t = 0; t < log_probs.rows(); ++t) {
        const double* row = log_probs.row_ptr(t);
        int best = 0;
        for (std::size_t k = 1; k < log_probs.cols(); ++k) {
            if (row[k] > row[best]) best = static_cast<int>(k);
        }
        path.push_back(best);
    }
    return alphabet.decode(collapse(path, alphabet.blank()));
}

std::string beam_search_decode(const Tensor& log_probs, const Alphabet& alphabet,
                               const BeamSearchOptions& options) {
    validate_logprob_rows(log_probs, alphabet, "beam_search_decode");
    if (options.beam_width < 1)
        throw std::invalid_argument("beam width must be >= 1, got " +
                                    std::to_string(options.beam_width));
    if (options.lm_weight < 0.0)
        throw std::invalid_argument("lm weight must be >= 0, got " +
                                    std::to_string(options.lm_weight));
    if (options.lm_weight > 0.0 && options.lm == nullptr)
        throw std::invalid_argument("lm weight is positive but no language model was supplied");
    const bool fuse = options.lm != nullptr && options.lm_weight > 0.0;
    if (fuse) {
        for (char c : alphabet.chars()) {
            if (options.lm->alphabet().find(c) == std::string::npos)
                throw std::invalid_argument(std::string("language model alphabet is missing '") + c +
                                            "' from the decoding alphabet");
        }
    }

    const int T = static_cast<int>(log_probs.rows());
    const int blank = alphabet.blank();

    // Per-prefix mass split by whether the last emitted frame was a blank.
    struct Mass {
        double blank_end = kLogZero;
        double label_end = kLogZero;
        double total() const { return logaddexp(blank_end, label_end); }
    };
    // std::map keeps iteration (and therefore floating-point accumulation
    // order) deterministic across runs.
    std::map<std::string, Mass> beams;
    beams[""].blank_end = 0.0;

    for (int t = 0; t < T; ++t) {
        const double* lp = log_probs.row_ptr(static_cast<std::size_t>(t));
        std::map<std::string, Mass> next;
        for (const auto& [prefix, mass] : beams) {
            const double total = mass.total();
            // Emit a blank: labeling unchanged.
            {
                Mass& m = next[prefix];
                m.blank_end = logaddexp(m.blank_end, total + lp[static_cast<std::size_t>(blank)]);
            }
            // Repeat the trailing character: only extends the last emission
            // run, so the labeling is unchanged and no LM cost applies.
            if (!prefix.empty()) {
                const int last = alphabet.index_of(prefix.back());
                Mass& m = next[prefix];
                m.label_end = logaddexp(m.label_end, mass.label_end + lp[static_cast<std::size_t>(last)]);
            }
            // Append each character.
            for (int k = 0; k < blank; ++k) {
                const double lpk = lp[static_cast<std::size_t>(k)];
                if (lpk == kLogZero) continue;
                const char c = alphabet.char_at(k);
                // After a label-ending frame of the same character, a new
                // emission needs an intervening blank, so only the blank-ending
                // mass contributes.
                const double source =
                    (!prefix.empty() && prefix.back() == c) ? mass.blank_end : total;
                if (source == kLogZero) continue;
                double contribution = source + lpk;
                if (fuse)
                    contribution += options.lm_weight * options.lm->next_char_logprob(prefix, c);
                Mass& m = next[prefix + c];
                m.label_end = logaddexp(m.label_end, contribution);
            }
        }

        if (next.size() > static_cast<std::size_t>(options.beam_width)) {
            std::vector<std::pair<std::string, Mass>> ranked(next.begin(), next.end());
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                const double ta = a.second.total();
                const double tb = b.second.total();
                if (ta != tb) return ta > tb;
                return a.first < b.first;
            });
            ranked.resize(static_cast<std::size_t>(options.beam_width));
            next = std::map<std::string, Mass>(ranked.begin(), ranked.end());
        }
        beams = std::move(next);
    }

    std::string best;
    double best_score = kLogZero;
    bool have = false;
    for (const auto& [prefix, mass] : beams) {
        const double score = mass.total();
        if (!have || score > best_score || (score == best_score && prefix < best)) {
            best = prefix;
            best_score = score;
            have = true;
        }
    }
    return best;
}

} // namespace eegcsr::ctc
