#pragma once

#include "merchcast/dataset.hpp"
#include "merchcast/learners.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace merchcast::ensemble {

/// Convex weights for (LightGBM-style, LASSO, XGBoost-style), in that order.
struct EnsembleWeights {
    double lightgbm = 1.0;
    double lasso = 0.0;
    double xgboost = 0.0;

    bool operator==(const EnsembleWeights&) const = default;
};

/// Throws InvalidWeights unless every weight is in [0,1] and they sum to 1
/// within 1e-12.
void validate(const EnsembleWeights& w);

struct ComponentPredictions {
    Eigen::VectorXd lightgbm;
    Eigen::VectorXd lasso;
    Eigen::VectorXd xgboost;
};

Eigen::VectorXd combine(const Eigen::VectorXd& lightgbm, const Eigen::VectorXd& lasso, const Eigen::VectorXd& xgboost,
                        const EnsembleWeights& w);
Eigen::VectorXd combine(const ComponentPredictions& p, const EnsembleWeights& w);

struct EvaluatedPoint {
    EnsembleWeights weights;
    double accuracy = 0.0;
};

struct WeightSearchTrace {
    double step = 0.05;
    std::size_t grid_points = 0;  // lattice points of the coarse grid
    std::vector<EvaluatedPoint> points;  // grid first, then refinement, in evaluation order
    EvaluatedPoint best;
    int restarts = 0;
};

struct SearchOptions {
    double step = 0.05;
    // Hill-climb on the step/5 lattice from the grid optimum and from
    // `restarts` seeded random lattice points.
    bool refine = false;
    int restarts = 0;
    std::uint64_t seed = 0;
};

struct SearchResult {
    EnsembleWeights weights;
    WeightSearchTrace trace;
};

/// Maximizes accuracy of the rounded combination over the simplex. Ties go to
/// the lexicographically smallest weights.
SearchResult search_weights(const ComponentPredictions& validation, std::span<const int> scores,
                            const SearchOptions& options = {});

/// The WE model: the three components share one encoder and schema. Linear is
/// not representable here.
struct WeModel {
    EncoderSpec encoder;
    learners::GbtModel lightgbm;
    learners::LassoModel lasso;
    learners::GbtModel xgboost;
    EnsembleWeights weights;
    double validation_accuracy = 0.0;
    std::string config_hash;
};

ComponentPredictions component_predictions(const WeModel& model, const FeatureMatrix& x);

/// combine then round_prediction per row.
std::vector<int> we_predict(const WeModel& model, const FeatureMatrix& x);

nlohmann::json we_model_to_json(const WeModel& model);
WeModel we_model_from_json(const nlohmann::json& document);

}  // namespace merchcast::ensemble
