// SPDX-License-Identifier: Apache-2.0
#include "cepo/synthmath/synthmath.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cepo/common/rng.hpp"

namespace cepo::synthmath {

namespace {

int apply(int acc, TokenId op, int operand, int modulus) {
    int v = 0;
    switch (op) {
    case tok::kPlus: v = acc + operand; break;
    case tok::kMinus: v = acc - operand; break;
    case tok::kTimes: v = acc * operand; break;
    default: throw std::invalid_argument("not an operator token");
    }
    v %= modulus;
    return v < 0 ? v + modulus : v;
}

Tokens answer_tokens(int value) {
    // modulus <= 10, so every residue is one digit.
    return {tok::digit(value)};
}

} // namespace

int evaluate_expression(std::span<const TokenId> prompt, int modulus) {
    if (prompt.size() < 4 || prompt.front() != tok::kQuestion || prompt.back() != tok::kAsk) {
        throw std::invalid_argument("malformed prompt: " + render(prompt));
    }
    auto body = prompt.subspan(1, prompt.size() - 2);
    if (body.size() % 2 != 1 || !tok::is_digit(body[0])) throw std::invalid_argument("malformed expression");
    int acc = tok::digit_value(body[0]) % modulus;
    for (std::size_t i = 1; i < body.size(); i += 2) {
        if (!tok::is_operator(body[i]) || !tok::is_digit(body[i + 1])) throw std::invalid_argument("malformed expression");
        acc = apply(acc, body[i], tok::digit_value(body[i + 1]), modulus);
    }
    return acc;
}

std::vector<Problem> generate_dataset(const DatasetSpec& spec) {
    if (spec.n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    if (spec.k_ops < 1) throw std::invalid_argument("generate_dataset: k_ops must be >= 1");
    if (spec.modulus < 2 || spec.modulus > 10) throw std::invalid_argument("generate_dataset: modulus must be in [2, 10]");
    constexpr TokenId kOps[3] = {tok::kPlus, tok::kMinus, tok::kTimes};

    std::vector<Problem> out;
    out.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        RngStream rng(derive_seed(spec.seed, {0x5EED, i}));
        const int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.modulus)));
        Problem p;
        p.id = i;
        p.difficulty = spec.k_ops;
        p.modulus = spec.modulus;
        for (;;) {
            Tokens prompt{tok::kQuestion};
            int first = static_cast<int>(rng.below(10));
            prompt.push_back(tok::digit(first));
            int acc = first % spec.modulus;
            for (int k = 0; k < spec.k_ops; ++k) {
                const TokenId op = kOps[rng.below(3)];
                const int b = static_cast<int>(rng.below(10));
                prompt.push_back(op);
                prompt.push_back(tok::digit(b));
                acc = apply(acc, op, b, spec.modulus);
            }
            prompt.push_back(tok::kAsk);
            if (acc == target) {
                p.prompt = std::move(prompt);
                p.ground_truth = answer_tokens(acc);
                break;
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::optional<Tokens> extract_answer(std::span<const TokenId> response) {
    std::size_t markers = 0, pos = 0;
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (response[i] == tok::kAns) {
            ++markers;
            pos = i;
        }
    }
    if (markers != 1) return std::nullopt;
    std::size_t end = pos + 1;
    while (end < response.size() && response[end] != tok::kEnd) ++end;
    if (end >= response.size() || end == pos + 1) return std::nullopt;
    return Tokens(response.begin() + static_cast<std::ptrdiff_t>(pos + 1),
                  response.begin() + static_cast<std::ptrdiff_t>(end));
}

VerifierResult verify(const Problem& p, std::span<const TokenId> response) {
    VerifierResult r;
    r.extracted_answer = extract_answer(response);
    r.reward = (r.extracted_answer && *r.extracted_answer == p.ground_truth) ? 1 : 0;
    return r;
}

Tokens render_solution(const Problem& p) {
    Tokens out;
    auto body = std::span<const TokenId>(p.prompt).subspan(1, p.prompt.size() - 2);
    int acc = tok::digit_value(body[0]) % p.modulus;
    for (std::size_t i = 1; i < body.size(); i += 2) {
        acc = apply(acc, body[i], tok::digit_value(body[i + 1]), p.modulus);
        out.push_back(body[i]);
        out.push_back(body[i + 1]);
        out.push_back(tok::kEquals);
        out.push_back(tok::digit(acc));
        out.push_back(tok::kStepEnd);
    }
    auto ans = render_answer(p.ground_truth);
    out.insert(out.end(), ans.begin(), ans.end());
    return out;
}

Tokens render_answer(std::span<const TokenId> answer) {
    Tokens out{tok::kAns};
    out.insert(out.end(), answer.begin(), answer.end());
    out.push_back(tok::kEnd);
    return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const Problem> problems) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write dataset " + path.string());
    for (const auto& p : problems) {
        os << render(p.prompt) << '\t' << render(p.ground_truth) << '\t' << p.difficulty << '\n';
    }
}

std::vector<Problem> read_dataset(const std::filesystem::path& path, int modulus) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    std::string text = buf.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    if (!text.empty() && text.back() == '\n') {
        throw std::runtime_error(path.string() + ": blank line at end of dataset");
    }
    std::vector<Problem> out;
    if (text.empty()) return out;
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
        }
        Problem p;
        p.id = out.size();
        p.modulus = modulus;
        try {
            p.prompt = parse_tokens(line.substr(0, t1));
            p.ground_truth = parse_tokens(line.substr(t1 + 1, t2 - t1 - 1));
            p.difficulty = std::stoi(line.substr(t2 + 1));
            if (p.ground_truth != answer_tokens(evaluate_expression(p.prompt, modulus))) {
                throw std::runtime_error("ground truth does not match the expression");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace cepo::synthmath
