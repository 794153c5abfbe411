// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner, metrics stream, heatmap export and run comparison.
//
// A run directory holds:
//   config.json        resolved RunConfig
//   metrics.jsonl      one StepMetrics object per line
//   eval.jsonl         held-out evaluations (step 0 and every eval_every steps)
//   warm_start.json    warm-start report, when one ran
//   checkpoints/       warm_start.ckpt, step_<n>/ StepState directories
#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cepo/trainers/trainers.hpp"

namespace cepo::telemetry {

struct TaskConfig {
    std::size_t train_size = 2000;
    std::size_t heldout_size = 500;
    int k_ops = 4;
    int modulus = 10;
    std::uint64_t seed = 0;   ///< dataset seed; the held-out split adds kHeldOutSeedOffset
    std::string data_dir;     ///< read train.tsv / heldout.tsv from here instead of generating
};

struct RunSection {
    std::string name;             ///< label used by compare; derived from the settings when empty
    std::string output_dir = "runs/default";
    std::size_t eval_every = 5;
    std::size_t eval_problems = 500;
    std::size_t eval_samples = 2;
    std::size_t checkpoint_every = 25;
    std::string init_checkpoint;  ///< start from these parameters and skip the warm start
};

struct RunConfig {
    RunSection run;
    policy::PolicyConfig policy;
    TaskConfig task;
    trainers::WarmStartConfig warm_start;
    trainers::TrainerConfig trainer;

    /// Checks every section; throws std::invalid_argument.
    void validate() const;
    /// Label for comparisons: run.name, or method plus the swept settings.
    std::string label() const;
};

/// Defaults for `method` (learning rate, teacher source) with everything else
/// at its declared default.
RunConfig default_run_config(trainers::Method method = trainers::Method::CEPO);

nlohmann::ordered_json to_json(const RunConfig& c);
/// Starts from default_run_config(method in `j`, CEPO if absent) and applies
/// every key in `j`. Unknown keys throw std::invalid_argument naming the path.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies "section.field=value" overrides; the value is parsed as JSON when
/// possible and taken as a string otherwise.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);
/// Gives every seed in the config the value `seed`: trainer.seed (which
/// drives initialization, warm start, rollouts and evaluation).
void set_seed(RunConfig& c, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics

nlohmann::ordered_json to_json(const trainers::StepMetrics& m);
trainers::StepMetrics step_metrics_from_json(const nlohmann::json& j);

/// Single writer for an append-only JSON-lines file; flushes every record.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);
    ~MetricsWriter();
    MetricsWriter(const MetricsWriter&) = delete;
    MetricsWriter& operator=(const MetricsWriter&) = delete;
    void write(const nlohmann::ordered_json& record);

private:
    std::unique_ptr<std::ofstream> out_;
};

/// Reads a metrics stream. A truncated final line is dropped; malformed lines
/// elsewhere throw std::runtime_error naming the line.
std::vector<trainers::StepMetrics> read_metrics(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Runs

struct Datasets {
    std::vector<synthmath::Problem> train;
    std::vector<synthmath::Problem> heldout;
};

Datasets load_datasets(const TaskConfig& task);
/// Writes train.tsv, heldout.tsv and vocab.tsv into `dir`.
void write_datasets(const std::filesystem::path& dir, const Datasets& data);

/// Initial policy for a run: the configured checkpoint, or a fresh
/// initialization followed by the warm start.
struct InitialPolicy {
    policy::PolicyParams params;
    std::optional<trainers::WarmStartReport> report;
};
InitialPolicy initial_policy(const RunConfig& c, const Datasets& data);

nlohmann::ordered_json to_json(const trainers::WarmStartReport& r);
nlohmann::ordered_json to_json(const rollout::EvalResult& r, std::size_t step);

/// Held-out evaluation with the run's settings; the stream is disjoint from
/// every training stream.
rollout::EvalResult evaluate_heldout(const policy::PolicyParams& params, const RunConfig& c,
                                     std::span<const synthmath::Problem> heldout, std::size_t step);

struct RunResult {
    std::filesystem::path dir;
    std::vector<trainers::StepMetrics> metrics;
    std::vector<std::pair<std::size_t, rollout::EvalResult>> evals;
    trainers::StepState final_state;
};

/// Warm start (unless init_checkpoint is set), then total_steps of
/// train_step. Writes config.json first. On a non-finite loss the state and
/// the offending group land in <dir>/failure/ before the exception propagates.
RunResult run_experiment(const RunConfig& c);

// ---------------------------------------------------------------------------
// Heatmaps

struct HeatmapRow {
    std::string method;
    std::string problem_id;  ///< "<problem id>#<trajectory index>"
    std::size_t position = 0;
    char glyph = '?';
    credit::TokenCredit credit;
};

struct MethodSummary {
    std::string method;
    std::size_t trajectories = 0;
    std::size_t tokens = 0;
    std::size_t clipped = 0;
    double clip_rate = 0.0;
    double filler_mean_abs_delta = 0.0;        ///< markers and punctuation
    double answer_digit_mean_abs_delta = 0.0;  ///< digits between the answer marker and its end
};

struct Heatmap {
    std::vector<HeatmapRow> rows;
    std::vector<MethodSummary> summaries;
};

/// Credits of every listed method on the same trajectories, with `params` as
/// student and teacher; the student log-probs are rescored, so the stored
/// old log-probs do not matter. Degenerate groups are skipped (their
/// advantage is zero for every method).
Heatmap export_heatmap(const policy::PolicyParams& params, std::span<const rollout::RolloutGroup> groups,
                       std::span<const trainers::Method> methods, double lambda, double eps_w);

/// Columns method, problem_id, position, glyph, delta, weight, clipped, advantage.
void write_heatmap_tsv(const std::filesystem::path& path, const Heatmap& h);
/// Columns method, trajectories, tokens, clipped, clip_rate, filler_mean_abs_delta,
/// answer_digit_mean_abs_delta.
void write_heatmap_summary_tsv(const std::filesystem::path& path, const Heatmap& h);

// ---------------------------------------------------------------------------
// Comparison

struct RunRecord {
    std::filesystem::path dir;
    std::string label;
    std::uint64_t seed = 0;
    std::vector<trainers::StepMetrics> metrics;
    std::vector<std::pair<std::size_t, rollout::EvalResult>> evals;
};

RunRecord load_run(const std::filesystem::path& dir);

/// Aligns runs on the intersection of their step grids (warning on stderr when
/// they differ) and writes curves.tsv (per step) and summary.tsv (final step):
/// one row per run and one aggregate row per label with mean and
/// stderr = sample std / sqrt(n). Held-out accuracy comes from eval.jsonl.
void compare_runs(std::span<const RunRecord> runs, const std::filesystem::path& out_dir);

} // namespace cepo::telemetry
