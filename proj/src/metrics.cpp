#include "eegcsr/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace eegcsr::metrics {

std::size_t edit_distance(const std::vector<std::string>& ref,
                          const std::vector<std::string>& hyp) {
    const std::size_t n = ref.size();
    const std::size_t m = hyp.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::vector<std::string> words(const std::string& sentence) {
    std::vector<std::string> out;
    std::string w;
    for (char c : sentence) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!w.empty()) {
                out.push_back(w);
                w.clear();
            }
        } else {
            w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!w.empty()) out.push_back(w);
    return out;
}

WerResult wer(const std::vector<std::string>& refs,
              const std::vector<std::string>& hyps) {
    if (refs.size() != hyps.size())
        throw std::invalid_argument("wer: reference and hypothesis lists differ in length");
    WerResult r;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto rw = words(refs[i]);
        const auto hw = words(hyps[i]);
        const std::size_t e = edit_distance(rw, hw);
        r.total_edits += e;
        r.total_ref_words += rw.size();
        if (!rw.empty())
            r.per_utterance.push_back(100.0 * static_cast<double>(e) /
                                      static_cast<double>(rw.size()));
    }
    if (r.total_ref_words == 0)
        throw std::domain_error("wer: zero total reference words, metric undefined");
    r.percent = 100.0 * static_cast<double>(r.total_edits) /
                static_cast<double>(r.total_ref_words);
    return r;
}

RegressionResult rmse(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth))
        throw std::invalid_argument("rmse: shape mismatch " + pred.shape_str() + " vs " +
                                    truth.shape_str());
    const std::size_t t_count = pred.rows();
    const std::size_t d = pred.cols();
    if (t_count == 0 || d == 0)
        throw std::invalid_argument("rmse: empty input");
    RegressionResult r;
    r.per_dim.assign(d, 0.0);
    for (std::size_t t = 0; t < t_count; ++t)
        for (std::size_t j = 0; j < d; ++j) {
            const double e = pred.at(t, j) - truth.at(t, j);
            r.per_dim[j] += e * e;
        }
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        r.per_dim[j] = std::sqrt(r.per_dim[j] / static_cast<double>(t_count));
        total += r.per_dim[j];
    }
    r.mean = total / static_cast<double>(d);
    return r;
}

RegressionResult nrmse(const Tensor& pred, const Tensor& truth) {
    RegressionResult base = rmse(pred, truth);
    const std::size_t t_count = truth.rows();
    const std::size_t d = truth.cols();
    RegressionResult r;
    r.per_dim.assign(d, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double lo = truth.at(0, j), hi = truth.at(0, j);
        for (std::size_t t = 1; t < t_count; ++t) {
            lo = std::min(lo, truth.at(t, j));
            hi = std::max(hi, truth.at(t, j));
        }
        if (hi <= lo)
            throw std::domain_error("nrmse: constant truth in dimension " + std::to_string(j));
        r.per_dim[j] = base.per_dim[j] / (hi - lo);
        total += r.per_dim[j];
    }
    r.mean = total / static_cast<double>(d);
    return r;
}

} // namespace eegcsr::metrics
