#pragma once

#include "merchcast/dataset.hpp"
#include "merchcast/delphi.hpp"
#include "merchcast/ensemble.hpp"
#include "merchcast/evaluation.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace merchcast::pipeline {

// --- configuration -----------------------------------------------------------

/// Raw `key = value` settings. Later sources override earlier ones.
using ConfigValues = std::map<std::string, std::string>;

/// Parses the key-value text format: one `key = value` per line, `#` starts a
/// comment line, blank lines are ignored. Throws ParseError with the line
/// number on malformed input.
ConfigValues parse_config(std::string_view text);
ConfigValues load_config(const std::filesystem::path& path);

struct PipelineConfig {
    std::uint64_t seed = 7;

    std::optional<std::filesystem::path> input;
    std::string format = "auto";  // auto | csv | jsonl
    ImputePolicy impute = ImputePolicy::MedianMode;

    std::size_t synth_n = 441;
    std::uint64_t synth_seed = 7;
    bool synth_missing = true;

    EncoderSpec encoder = EncoderSpec::defaults();

    std::size_t delphi_experts = 20;
    double delphi_epsilon = 2.0;
    int delphi_max_rounds = 10;
    delphi::ExpertProfile delphi_profile{0.6, 1.0, 3.0, 5.0};
    std::uint64_t delphi_seed = 7;

    evaluation::SplitSpec split{0.2, 7};
    int cv_k = 5;
    std::uint64_t cv_seed = 7;

    evaluation::LearnerSpec linear;
    evaluation::LearnerSpec lasso;
    evaluation::LearnerSpec xgboost;
    evaluation::LearnerSpec lightgbm;

    ensemble::SearchOptions search{0.05, true, 3, 7};

    std::string admin_token;  // service only; never hashed
    std::filesystem::path output_dir = "out";

    /// Every resolved setting that affects artifacts, one `key=value` per
    /// line in sorted key order. Paths and secrets are excluded.
    std::string canonical() const;
    /// Hex SHA-256 of canonical().
    std::string hash() const;
};

/// Applies `values` over the defaults. Unknown keys and malformed values
/// throw UsageError naming the key. Seeds not given default to `seed`.
PipelineConfig resolve(const ConfigValues& values);

/// Every key resolve() accepts, with its default as text.
std::vector<std::pair<std::string, std::string>> documented_keys();

std::string sha256_hex(std::string_view data);

// --- in-memory stages --------------------------------------------------------

std::vector<MovieRecord> synthesize(const PipelineConfig& config);

struct LabelOutcome {
    delphi::Session session;
    delphi::SimulationReport report;
    std::vector<MovieRecord> records;  // with Delphi labels applied
};

/// Runs a simulated expert panel over every record; each record's current
/// label serves as the latent value experts scatter around.
LabelOutcome simulate_labels(std::vector<MovieRecord> records, const PipelineConfig& config);

struct TrainOutcome {
    std::vector<MovieRecord> train;
    std::vector<MovieRecord> test;
    FoldAssignment folds;
    learners::LinearModel linear;
    std::map<evaluation::LearnerKind, evaluation::CvResult> cv;
    ensemble::SearchResult search;
    ensemble::WeModel we;
};

/// Imputes, splits, fits the encoder on the training side, cross-validates all
/// four learners and tunes the ensemble weights on out-of-fold predictions.
TrainOutcome train_models(std::vector<MovieRecord> labeled, const PipelineConfig& config);

/// Test-set accuracy of Linear, LightGBM, LASSO, XGBoost and WeightedEnsemble.
evaluation::AccuracyReport evaluate_models(const learners::LinearModel& linear, const ensemble::WeModel& we,
                                           const std::vector<MovieRecord>& test);

/// Validation accuracies (out-of-fold) per component and for the tuned WE.
struct ValidationSummary {
    double lightgbm = 0.0;
    double lasso = 0.0;
    double xgboost = 0.0;
    double linear = 0.0;
    double weighted_ensemble = 0.0;
};
ValidationSummary validation_summary(const TrainOutcome& outcome);

// --- file stages -------------------------------------------------------------

struct StageResult {
    std::vector<std::filesystem::path> written;
    std::string summary;
};

StageResult stage_synth(const PipelineConfig& config);
StageResult stage_ingest(const PipelineConfig& config);
StageResult stage_nulls(const PipelineConfig& config);
StageResult stage_label_simulate(const PipelineConfig& config);
StageResult stage_train(const PipelineConfig& config);
StageResult stage_evaluate(const PipelineConfig& config);
StageResult stage_predict(const PipelineConfig& config, const std::filesystem::path& model);
StageResult stage_report(const PipelineConfig& config);

/// Reads records, honouring `format` (auto picks by extension).
std::vector<MovieRecord> read_records(const std::filesystem::path& path, const std::string& format);

}  // namespace merchcast::pipeline
