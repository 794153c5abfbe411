// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

#include "cepo/telemetry/telemetry.hpp"

namespace cepo::telemetry {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFields[] = {"mean_reward",        "train_accuracy",     "heldout_accuracy",
                                   "pos_delta_fraction", "neg_delta_fraction", "clip_rate",
                                   "lambda",             "degenerate_group_fraction", "loss"};
constexpr std::size_t kFieldCount = std::size(kFields);

using Row = std::array<std::optional<double>, kFieldCount>;

/// step -> values; held-out accuracy from the evaluations, the rest from metrics.
std::map<std::size_t, Row> rows_of(const RunRecord& r) {
    std::map<std::size_t, Row> rows;
    for (const auto& m : r.metrics) {
        auto& row = rows[m.step];
        row[0] = m.mean_reward;
        row[1] = m.train_accuracy;
        row[3] = m.pos_delta_fraction;
        row[4] = m.neg_delta_fraction;
        row[5] = m.clip_rate;
        row[6] = m.lambda;
        row[7] = m.degenerate_group_fraction;
        row[8] = m.loss;
    }
    for (const auto& [step, e] : r.evals) rows[step][2] = e.accuracy;
    return rows;
}

void write_value(std::ostream& os, const std::optional<double>& v) {
    os << '\t';
    if (v) os << *v;
    else os << '-';
}

void write_header(std::ostream& os) {
    os << "label\tseed\tn_runs\tstep";
    for (const char* f : kFields) os << '\t' << f << '\t' << f << "_stderr";
    os << '\n';
}

struct Table {
    std::vector<std::string> labels;  ///< first-appearance order
    std::map<std::string, std::vector<std::size_t>> members;
};

void write_rows(std::ostream& os, const Table& table, std::span<const RunRecord> runs,
                const std::vector<std::map<std::size_t, Row>>& rows, std::span<const std::size_t> steps) {
    for (const auto& label : table.labels) {
        const auto& idx = table.members.at(label);
        for (const std::size_t step : steps) {
            for (const std::size_t i : idx) {
                os << label << '\t' << runs[i].seed << "\t1\t" << step;
                const auto& row = rows[i].at(step);
                for (std::size_t f = 0; f < kFieldCount; ++f) {
                    write_value(os, row[f]);
                    write_value(os, std::nullopt);
                }
                os << '\n';
            }
            os << label << "\tmean\t" << idx.size() << '\t' << step;
            for (std::size_t f = 0; f < kFieldCount; ++f) {
                std::vector<double> xs;
                for (const std::size_t i : idx) {
                    if (const auto& v = rows[i].at(step)[f]) xs.push_back(*v);
                }
                if (xs.empty()) {
                    write_value(os, std::nullopt);
                    write_value(os, std::nullopt);
                    continue;
                }
                const double n = static_cast<double>(xs.size());
                double mean = 0.0;
                for (double x : xs) mean += x;
                mean /= n;
                write_value(os, mean);
                if (xs.size() < 2) {
                    write_value(os, std::nullopt);
                    continue;
                }
                double ss = 0.0;
                for (double x : xs) ss += (x - mean) * (x - mean);
                write_value(os, std::sqrt(ss / (n - 1.0)) / std::sqrt(n));
            }
            os << '\n';
        }
    }
}

} // namespace

RunRecord load_run(const fs::path& dir) {
    RunRecord r;
    r.dir = dir;
    const auto config = load_run_config(dir / "config.json");
    r.label = config.label();
    r.seed = config.trainer.seed;
    if (fs::exists(dir / "metrics.jsonl")) r.metrics = read_metrics(dir / "metrics.jsonl");
    if (fs::exists(dir / "eval.jsonl")) {
        std::ifstream in(dir / "eval.jsonl");
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            try {
                const auto j = json::parse(line);
                rollout::EvalResult e;
                e.accuracy = j.at("accuracy").get<double>();
                e.standard_error = j.at("standard_error").get<double>();
                e.format_validity = j.at("format_validity").get<double>();
                e.samples = j.at("samples").get<std::size_t>();
                r.evals.emplace_back(j.at("step").get<std::size_t>(), e);
            } catch (const json::exception& e) {
                if (in.eof()) break;  // unterminated final record
                throw std::runtime_error((dir / "eval.jsonl").string() + ":" + std::to_string(n) + ": " + e.what());
            }
        }
    }
    return r;
}

void compare_runs(std::span<const RunRecord> runs, const fs::path& out_dir) {
    if (runs.empty()) throw std::invalid_argument("compare_runs: no runs");
    std::vector<std::map<std::size_t, Row>> rows;
    for (const auto& r : runs) rows.push_back(rows_of(r));

    std::set<std::size_t> common;
    for (const auto& [step, _] : rows[0]) common.insert(step);
    bool mismatch = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::set<std::size_t> mine, kept;
        for (const auto& [step, _] : rows[i]) mine.insert(step);
        if (mine != common) mismatch = true;
        std::set_intersection(common.begin(), common.end(), mine.begin(), mine.end(),
                              std::inserter(kept, kept.begin()));
        common = std::move(kept);
    }
    if (mismatch) {
        std::cerr << "warning: step grids differ across runs; comparing the " << common.size()
                  << " steps they share\n";
    }
    if (common.empty()) throw std::runtime_error("compare_runs: the runs share no steps");

    Table table;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        auto& m = table.members[runs[i].label];
        if (m.empty()) table.labels.push_back(runs[i].label);
        m.push_back(i);
    }

    fs::create_directories(out_dir);
    const std::vector<std::size_t> steps(common.begin(), common.end());
    const std::size_t final_step = steps.back();
    for (const auto& [name, which] :
         {std::pair<const char*, std::vector<std::size_t>>{"curves.tsv", steps}, {"summary.tsv", {final_step}}}) {
        std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (out_dir / name).string());
        out.precision(10);
        write_header(out);
        write_rows(out, table, runs, rows, which);
        if (!out) throw std::runtime_error("write failed: " + (out_dir / name).string());
    }
}

} // namespace cepo::telemetry
