#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "eegcsr/metrics.hpp"
#include "eegcsr/rng.hpp"

using namespace eegcsr;
using namespace eegcsr::metrics;

TEST_CASE("edit distance hand cases") {
    CHECK(edit_distance({}, {}) == 0);
    CHECK(edit_distance({"a"}, {}) == 1);
    CHECK(edit_distance({}, {"a", "b"}) == 2);
    CHECK(edit_distance({"the", "cat"}, {"the", "cat"}) == 0);
    CHECK(edit_distance({"the", "cat", "sat"}, {"the", "bat", "sat"}) == 1);
    // one substitution + one insertion
    CHECK(edit_distance({"a", "b", "c"}, {"a", "x", "c", "d"}) == 2);
    CHECK(edit_distance({"x", "y"}, {"y", "x"}) == 2);
}

TEST_CASE("edit distance metric axioms on random word lists") {
    Rng rng(2024);
    std::vector<std::string> vocab = {"a", "b", "c", "d"};
    auto random_words = [&](std::size_t max_len) {
        std::vector<std::string> out;
        const std::size_t len = rng.uniform_int(max_len + 1);
        for (std::size_t i = 0; i < len; ++i) out.push_back(vocab[rng.uniform_int(vocab.size())]);
        return out;
    };
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_words(6);
        auto b = random_words(6);
        auto c = random_words(6);
        const std::size_t dab = edit_distance(a, b);
        const std::size_t dba = edit_distance(b, a);
        CHECK(dab == dba);                                // symmetry
        CHECK(edit_distance(a, a) == 0);                  // identity
        const std::size_t dac = edit_distance(a, c);
        const std::size_t dcb = edit_distance(c, b);
        CHECK(dab <= dac + dcb);                          // triangle
        const std::size_t lo = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
        CHECK(dab >= lo);                                 // length bound
        CHECK(dab <= std::max(a.size(), b.size()));
    }
}

TEST_CASE("wer pooled over utterances") {
    // refs: "the cat sat" (3 words), "on a mat" (3 words)
    // hyps: "the bat sat" (1 sub), "on mat" (1 del) -> 2/6
    WerResult r = wer({"the cat sat", "on a mat"}, {"the bat sat", "on mat"});
    CHECK(r.total_edits == 2);
    CHECK(r.total_ref_words == 6);
    CHECK(r.percent == doctest::Approx(100.0 * 2.0 / 6.0).epsilon(1e-12));
    REQUIRE(r.per_utterance.size() == 2);
    CHECK(r.per_utterance[0] == doctest::Approx(100.0 / 3.0));
    CHECK(r.per_utterance[1] == doctest::Approx(100.0 / 3.0));
}

TEST_CASE("wer is case and whitespace insensitive via tokenization") {
    WerResult r = wer({"The  Cat"}, {"the cat"});
    CHECK(r.percent == 0.0);
}

TEST_CASE("wer above 100 percent is representable") {
    // 1 reference word, hypothesis of 4 words -> 3 insertions / 1 word = 300%
    WerResult r = wer({"yes"}, {"yes no no no"});
    CHECK(r.percent == doctest::Approx(300.0));
    // a 103%-style value: 31 edits over 30 words
    std::string ref = "w";
    for (int i = 0; i < 29; ++i) ref += " w";
    std::string hyp = "x";
    for (int i = 0; i < 30; ++i) hyp += " x";
    WerResult r2 = wer({ref}, {hyp});
    CHECK(r2.total_ref_words == 30);
    CHECK(r2.total_edits == 31);
    CHECK(r2.percent > 100.0);
}

TEST_CASE("wer errors") {
    CHECK_THROWS_AS(wer({"a"}, {"a", "b"}), std::invalid_argument);
    CHECK_THROWS_AS(wer({""}, {"a"}), std::domain_error);
    CHECK_THROWS_AS(wer({}, {}), std::domain_error);
}

TEST_CASE("rmse per dimension then averaged") {
    // dim 0 errors: 1, 1 -> rmse 1; dim 1 errors: 3, 3 -> rmse 3; mean 2
    Tensor pred = Tensor::matrix(2, 2);
    pred.at(0, 0) = 1.0;
    pred.at(0, 1) = 3.0;
    pred.at(1, 0) = 1.0;
    pred.at(1, 1) = 3.0;
    Tensor truth({2, 2});
    truth.at(0, 0) = 0.0;
    truth.at(0, 1) = 0.0;
    truth.at(1, 0) = 2.0;
    truth.at(1, 1) = 6.0;
    RegressionResult r = rmse(pred, truth);
    REQUIRE(r.per_dim.size() == 2);
    CHECK(r.per_dim[0] == doctest::Approx(1.0));
    CHECK(r.per_dim[1] == doctest::Approx(3.0));
    CHECK(r.mean == doctest::Approx(2.0));
}

TEST_CASE("nrmse divides by per-dimension truth range") {
    Tensor pred = Tensor::matrix(2, 1);
    pred.at(0, 0) = 1.0;
    pred.at(1, 0) = 1.0;
    Tensor truth = Tensor::matrix(2, 1);
    truth.at(0, 0) = 0.0;
    truth.at(1, 0) = 4.0; // range 4, errors 1 and 3 -> rmse sqrt(5), nrmse sqrt(5)/4
    RegressionResult r = nrmse(pred, truth);
    CHECK(r.mean == doctest::Approx(std::sqrt(5.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("nrmse rejects constant truth dimensions") {
    Tensor pred = Tensor::matrix(3, 1);
    Tensor truth = Tensor::matrix(3, 1);
    truth.fill(2.0);
    CHECK_THROWS_AS(nrmse(pred, truth), std::domain_error);
}

TEST_CASE("rmse shape and emptiness errors") {
    CHECK_THROWS_AS(rmse(Tensor::matrix(2, 2), Tensor::matrix(2, 3)), std::invalid_argument);
    CHECK_THROWS_AS(rmse(Tensor::matrix(0, 2), Tensor::matrix(0, 2)), std::invalid_argument);
}

TEST_CASE("rmse scale behaviour") {
    Rng rng(7);
    Tensor pred = Tensor::matrix(10, 3);
    Tensor truth = Tensor::matrix(10, 3);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = rng.gaussian();
        truth[i] = rng.gaussian();
    }
    RegressionResult base = rmse(pred, truth);
    Tensor pred2 = pred, truth2 = truth;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred2[i] *= 3.0;
        truth2[i] *= 3.0;
    }
    // rmse scales linearly, nrmse is scale-invariant
    CHECK(rmse(pred2, truth2).mean == doctest::Approx(3.0 * base.mean).epsilon(1e-12));
    CHECK(nrmse(pred2, truth2).mean == doctest::Approx(nrmse(pred, truth).mean).epsilon(1e-12));
}
