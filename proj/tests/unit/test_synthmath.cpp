// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "cepo/synthmath/synthmath.hpp"

using namespace cepo;
using namespace cepo::synthmath;

namespace {

// Independent evaluator working on the rendered text, not on token ids.
int oracle_eval(const std::string& text, int modulus) {
    long acc = text[1] - '0';
    for (std::size_t i = 2; i + 1 < text.size(); i += 2) {
        const long b = text[i + 1] - '0';
        switch (text[i]) {
        case '+': acc = acc + b; break;
        case '-': acc = acc - b; break;
        case '*': acc = acc * b; break;
        }
        acc = ((acc % modulus) + modulus) % modulus;
    }
    return static_cast<int>(((acc % modulus) + modulus) % modulus);
}

Problem make(const std::string& prompt, int modulus = 10) {
    Problem p;
    p.prompt = parse_tokens(prompt);
    p.modulus = modulus;
    p.ground_truth = {tok::digit(evaluate_expression(p.prompt, modulus))};
    p.difficulty = static_cast<int>(p.prompt.size() - 3) / 2;
    return p;
}

} // namespace

TEST_CASE("worked examples") {
    CHECK(evaluate_expression(parse_tokens("Q3+4?"), 10) == 7);
    CHECK(oracle_eval("Q3+4*2?", 10) == 4);
    CHECK(evaluate_expression(parse_tokens("Q3+4*2?"), 10) == 4);
    CHECK(evaluate_expression(parse_tokens("Q2-7?"), 10) == 5);
}

TEST_CASE("generated problems re-evaluate to their ground truth") {
    for (int modulus : {2, 5, 7, 10}) {
        auto ds = generate_dataset({500, 4, modulus, 17});
        for (const auto& p : ds) {
            const std::string text = render(p.prompt);
            REQUIRE(p.ground_truth.size() == 1);
            CHECK(tok::digit_value(p.ground_truth[0]) == oracle_eval(text, modulus));
            CHECK(std::count(p.prompt.begin(), p.prompt.end(), tok::kQuestion) == 1);
            CHECK(std::count(p.prompt.begin(), p.prompt.end(), tok::kAsk) == 1);
            CHECK(p.difficulty == 4);
            CHECK(verify(p, render_solution(p)).reward == 1);
            CHECK(verify(p, render_answer(p.ground_truth)).reward == 1);
        }
    }
}

TEST_CASE("generation is deterministic and seeds separate splits") {
    auto a = generate_dataset({50, 3, 10, 5});
    auto b = generate_dataset({50, 3, 10, 5});
    auto c = generate_dataset({50, 3, 10, 5 + kHeldOutSeedOffset});
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].prompt == b[i].prompt);
        same += a[i].prompt == c[i].prompt;
    }
    CHECK(same < 3);
}

TEST_CASE("invalid dataset parameters are rejected") {
    CHECK_THROWS_AS(generate_dataset({0, 4, 10, 0}), std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset({5, 0, 10, 0}), std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset({5, 4, 1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(generate_dataset({5, 4, 11, 0}), std::invalid_argument);
}

TEST_CASE("verifier") {
    auto p = make("Q3+4?");
    SUBCASE("correct answer") {
        auto r = verify(p, parse_tokens("+4=7;A7E"));
        CHECK(r.reward == 1);
        REQUIRE(r.extracted_answer);
        CHECK(*r.extracted_answer == parse_tokens("7"));
    }
    SUBCASE("wrong answer keeps the extraction") {
        auto r = verify(p, parse_tokens("A3E"));
        CHECK(r.reward == 0);
        CHECK(*r.extracted_answer == parse_tokens("3"));
    }
    SUBCASE("no marker") {
        auto r = verify(p, parse_tokens("+4=7;7E"));
        CHECK(r.reward == 0);
        CHECK_FALSE(r.extracted_answer);
    }
    SUBCASE("two markers are ambiguous") {
        auto r = verify(p, parse_tokens("A7;A3E"));
        CHECK(r.reward == 0);
        CHECK_FALSE(r.extracted_answer);
    }
    SUBCASE("empty span and missing end") {
        CHECK_FALSE(verify(p, parse_tokens("AE")).extracted_answer);
        CHECK_FALSE(verify(p, parse_tokens("A7")).extracted_answer);
    }
    SUBCASE("multi-token answers must match exactly") {
        CHECK(verify(p, parse_tokens("A77E")).reward == 0);
    }
    SUBCASE("pure: repeated calls agree") {
        auto resp = parse_tokens("+4=7;A7E");
        for (int i = 0; i < 3; ++i) CHECK(verify(p, resp).reward == 1);
    }
}

TEST_CASE("answers are near-uniform over residues (chi-square, p > 0.01)") {
    auto ds = generate_dataset({20000, 4, 10, 123});
    std::array<double, 10> counts{};
    for (const auto& p : ds) counts[static_cast<std::size_t>(tok::digit_value(p.ground_truth[0]))] += 1.0;
    double chi2 = 0.0;
    const double expected = 2000.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // Upper 1% point of chi-square with 9 degrees of freedom.
    CHECK(chi2 < 21.666);
}

TEST_CASE("dataset file round trip and trailing-newline tolerance") {
    const auto dir = std::filesystem::temp_directory_path() / "cepo_synth_test";
    std::filesystem::create_directories(dir);
    auto ds = generate_dataset({20, 4, 10, 9});
    write_dataset(dir / "d.tsv", ds);
    auto back = read_dataset(dir / "d.tsv", 10);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back[i].prompt == ds[i].prompt);
        CHECK(back[i].ground_truth == ds[i].ground_truth);
        CHECK(back[i].id == i);
    }
    {
        std::ofstream os(dir / "nonl.tsv");
        os << "Q3+4?\t7\t1";
    }
    CHECK(read_dataset(dir / "nonl.tsv", 10).size() == 1);
    {
        std::ofstream os(dir / "blank.tsv");
        os << "Q3+4?\t7\t1\n\n";
    }
    CHECK_THROWS(read_dataset(dir / "blank.tsv", 10));
    {
        std::ofstream os(dir / "mid.tsv");
        os << "Q3+4?\t7\t1\n\nQ3+4?\t7\t1\n";
    }
    CHECK_THROWS(read_dataset(dir / "mid.tsv", 10));
    {
        std::ofstream os(dir / "wrong.tsv");
        os << "Q3+4?\t8\t1\n";
    }
    CHECK_THROWS(read_dataset(dir / "wrong.tsv", 10));
}
