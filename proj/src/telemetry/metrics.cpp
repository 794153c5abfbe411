// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <stdexcept>

#include "cepo/telemetry/telemetry.hpp"

namespace cepo::telemetry {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const trainers::StepMetrics& m) {
    ordered_json j;
    j["step"] = m.step;
    j["mean_reward"] = m.mean_reward;
    j["train_accuracy"] = m.train_accuracy;
    j["heldout_accuracy"] = m.heldout_accuracy ? json(*m.heldout_accuracy) : json(nullptr);
    j["pos_delta_fraction"] = m.pos_delta_fraction;
    j["neg_delta_fraction"] = m.neg_delta_fraction;
    j["clip_rate"] = m.clip_rate;
    j["lambda"] = m.lambda;
    j["degenerate_group_fraction"] = m.degenerate_group_fraction;
    j["loss"] = m.loss;
    return j;
}

trainers::StepMetrics step_metrics_from_json(const json& j) {
    trainers::StepMetrics m;
    m.step = j.at("step").get<std::size_t>();
    m.mean_reward = j.at("mean_reward").get<double>();
    m.train_accuracy = j.at("train_accuracy").get<double>();
    if (!j.at("heldout_accuracy").is_null()) m.heldout_accuracy = j.at("heldout_accuracy").get<double>();
    m.pos_delta_fraction = j.at("pos_delta_fraction").get<double>();
    m.neg_delta_fraction = j.at("neg_delta_fraction").get<double>();
    m.clip_rate = j.at("clip_rate").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.degenerate_group_fraction = j.at("degenerate_group_fraction").get<double>();
    m.loss = j.at("loss").get<double>();
    return m;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path)
    : out_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::app)) {
    if (!*out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
}

MetricsWriter::~MetricsWriter() = default;

void MetricsWriter::write(const ordered_json& record) {
    *out_ << record.dump() << '\n';
    out_->flush();
    if (!*out_) throw std::runtime_error("metrics write failed");
}

std::vector<trainers::StepMetrics> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    bool last_terminated = true;
    while (std::getline(in, line)) {
        last_terminated = !in.eof();
        lines.push_back(line);
    }
    std::vector<trainers::StepMetrics> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const bool final_partial = i + 1 == lines.size() && !last_terminated;
        try {
            out.push_back(step_metrics_from_json(json::parse(lines[i])));
        } catch (const json::exception& e) {
            // A writer killed mid-record leaves one unterminated line behind.
            if (final_partial) break;
            throw std::runtime_error(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

} // namespace cepo::telemetry
