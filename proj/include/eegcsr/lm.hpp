#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace eegcsr::lm {

// Character n-gram model with add-k smoothing and longest-observed-context
// backoff. Sentences are padded with order-1 begin sentinels and one end
// sentinel; the continuation inventory is the alphabet plus the end sentinel.
class CharNGramModel {
public:
    int order() const { return order_; }
    double smoothing_k() const { return k_; }
    const std::string& alphabet() const { return alphabet_; }

    // log P(c | longest observed suffix of context), context capped at order-1.
    double next_char_logprob(const std::string& context, char c) const;

    // log P(end-of-sentence | context).
    double end_logprob(const std::string& context) const;

    // Sum of conditional log-probabilities over the sentinel-padded sequence,
    // including the end transition.
    double sequence_logprob(const std::string& s) const;

    void save(std::ostream& out) const;
    static CharNGramModel load(std::istream& in);

    friend CharNGramModel train_ngram(const std::vector<std::string>& corpus,
                                      const std::string& alphabet, int order, double k);

private:
    double score(const std::string& context_syms, char sym) const;

    int order_ = 4;
    double k_ = 1.0;
    std::string alphabet_;
    std::unordered_map<std::string, std::uint64_t> ngram_counts_;
    std::unordered_map<std::string, std::uint64_t> context_totals_;
};

// Internal sentinel symbols (never valid alphabet characters).
inline constexpr char kBegin = '\x01';
inline constexpr char kEnd = '\x02';

CharNGramModel train_ngram(const std::vector<std::string>& corpus,
                           const std::string& alphabet, int order = 4, double k = 1.0);

void save_lm(const CharNGramModel& model, const std::string& path);
CharNGramModel load_lm(const std::string& path);

} // namespace eegcsr::lm
