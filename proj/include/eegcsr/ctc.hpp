#pragma once

#include <string>
#include <vector>

#include "eegcsr/lm.hpp"
#include "eegcsr/tensor.hpp"

namespace eegcsr::ctc {

// Label inventory for transcription. The character at position i carries
// label index i; the blank label is one past the last character. standard()
// is the 26 letters plus space and apostrophe used throughout the pipeline.
class Alphabet {
public:
    explicit Alphabet(std::string chars);
    static const Alphabet& standard();

    int size() const { return static_cast<int>(chars_.size()); }
    int blank() const { return size(); }
    int num_classes() const { return size() + 1; }

    int index_of(char c) const;
    char char_at(int index) const;

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& labels) const;

    const std::string& chars() const { return chars_; }

private:
    std::string chars_;
};

// Remove consecutive duplicates, then blanks.
std::vector<int> collapse(const std::vector<int>& path, int blank);

struct CtcLossResult {
    double loss = 0.0;      // -log P(labels | logits); +infinity when infeasible
    bool feasible = true;   // false when T < required expanded length
    Tensor grad_logits;     // dloss/dlogits, zero when infeasible
};

// Forward-backward CTC loss over raw (pre-softmax) frame logits [T x K],
// blank must be K-1. A log-softmax is applied internally per frame (a no-op
// when the rows are already normalized log-probabilities), so the gradient is
// with respect to the pre-softmax values and each row sums to zero.
CtcLossResult ctc_loss(const Tensor& logits, const std::vector<int>& labels, int blank);

// Convenience: encode `text` against `alphabet` and use its blank index.
CtcLossResult ctc_loss(const Tensor& logits, const std::string& text, const Alphabet& alphabet);

// Frame-wise argmax over log-probability rows [T x num_classes] (lowest index
// wins ties) followed by collapse.
std::string greedy_decode(const Tensor& log_probs, const Alphabet& alphabet);

struct BeamSearchOptions {
    int beam_width = 16;
    const lm::CharNGramModel* lm = nullptr; // optional shallow fusion
    double lm_weight = 0.0;
};

// Prefix beam search over frame log-probabilities [T x num_classes],
// aggregating path mass per labeling. Rows must be normalized (logsumexp 0
// within a small tolerance); -infinity entries are legal. When an LM is
// supplied, each appended character is charged lm_weight * log P_lm(char |
// prefix), so the final ranking score of a labeling is its total path log-mass
// plus lm_weight times its LM log-probability. Deterministic: ties in beam
// pruning and in the final pick go to the lexicographically smaller prefix.
std::string beam_search_decode(const Tensor& log_probs, const Alphabet& alphabet,
                               const BeamSearchOptions& options);

} // namespace eegcsr::ctc
