#pragma once

#include "merchcast/dataset.hpp"
#include "merchcast/folds.hpp"
#include "merchcast/learners.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace merchcast::evaluation {

// --- splitting ---------------------------------------------------------------

struct SplitSpec {
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Record positions (ascending) on each side of a split.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Per label stratum s, round_half_up(f·|s|) records go to test, at least one
/// when |s| >= 5 and f > 0, none when |s| < 5.
Split stratified_split(std::span<const int> labels, const SplitSpec& spec);
/// Throws UnlabeledRecord if any record has no label.
Split stratified_split(const std::vector<MovieRecord>& records, const SplitSpec& spec);

/// Test rows drawn from a stratum of the given size.
std::size_t stratum_test_count(std::size_t stratum_size, double fraction);

/// Shuffled K-fold assignment: after a seeded shuffle, position p goes to
/// fold p mod K, so fold sizes differ by at most one.
FoldAssignment kfold(const std::vector<std::int64_t>& ids, int k, std::uint64_t seed);

// --- metric ------------------------------------------------------------------

/// Nearest integer (halves round up), clamped to [0, 25].
int round_prediction(double raw);
std::vector<int> round_predictions(const Eigen::VectorXd& raw);

/// Share of i with |pred_i − score_i| <= 0.01·score_i.
double accuracy(std::span<const int> preds, std::span<const int> scores);

// --- learners ------------------------------------------------------------------

enum class LearnerKind { Linear, Lasso, GbtExact, GbtHist };

/// Report name: Linear, LASSO, XGBoost, LightGBM.
std::string_view display_name(LearnerKind kind);

struct LearnerSpec {
    LearnerKind kind = LearnerKind::Linear;
    learners::GbtParams gbt;
    learners::HistParams hist;
    learners::LassoOptions lasso;
    // LASSO: a fixed λ, or chosen by inner K-fold CV over a geometric grid.
    std::optional<double> lambda;
    std::size_t lambda_points = 50;
    double lambda_ratio = 1e-3;
    int lambda_folds = 5;
    std::uint64_t lambda_seed = 0;
};

learners::TrainedModel fit_learner(const LearnerSpec& spec, const FeatureMatrix& x, const Eigen::VectorXd& y);

struct CvResult {
    std::vector<double> fold_accuracy;
    double mean_accuracy = 0.0;
    learners::TrainedModel model;  // refitted on every training row
    Eigen::VectorXd oof_predictions;  // raw, aligned with the training rows
};

/// Needs targets on `train`. Folds must cover its rows.
CvResult cross_validate(const LearnerSpec& spec, const FeatureMatrix& train, const FoldAssignment& folds);

// --- reports -----------------------------------------------------------------

struct NamedPredictions {
    std::string name;
    std::vector<int> predictions;
};

struct ComparisonRow {
    std::int64_t id = 0;
    std::string film;
    int expert_score = 0;
    std::vector<int> predictions;  // one per model, in report order
};

struct AccuracyReport {
    std::vector<std::string> models;
    std::vector<double> accuracy;
    std::size_t n_test = 0;
    std::vector<ComparisonRow> rows;
    std::string config_hash;

    std::string render() const;
    nlohmann::json to_json() const;
};

/// `test` supplies the expert scores (labels) and film names.
AccuracyReport comparison_report(const std::vector<NamedPredictions>& models, const std::vector<MovieRecord>& test);

struct NamedModel {
    std::string name;
    const learners::TrainedModel* model = nullptr;
};

/// Rounds each model's predictions on `x` first; SchemaMismatch propagates.
AccuracyReport comparison_report(const std::vector<NamedModel>& models, const FeatureMatrix& x,
                                 const std::vector<MovieRecord>& test);

struct DistributionReport {
    std::vector<std::size_t> histogram;  // 26 buckets, label 0..25
    std::size_t n = 0;
    double zero_share = 0.0;
    double mean = 0.0;
    int max = 0;

    std::string render() const;
    nlohmann::json to_json() const;
};

DistributionReport distribution_report(const std::vector<MovieRecord>& records);

}  // namespace merchcast::evaluation
