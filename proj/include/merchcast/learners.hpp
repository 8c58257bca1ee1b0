#pragma once

#include "merchcast/dataset.hpp"
#include "merchcast/folds.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace merchcast::learners {

// --- linear ------------------------------------------------------------------

struct LinearModel {
    double intercept = 0.0;
    Eigen::VectorXd coefficients;
    std::vector<std::string> columns;
    bool ridge_applied = false;  // design was singular; 1e-8 ridge was added
};

/// Least squares via the centred normal equations and an LDLᵀ factorization.
LinearModel fit_linear(const FeatureMatrix& x, const Eigen::VectorXd& y);

// --- lasso -------------------------------------------------------------------

struct LassoOptions {
    int max_sweeps = 100000;
    double tol = 1e-10;  // stop once the largest coefficient change drops below
};

struct LassoModel {
    double intercept = 0.0;
    Eigen::VectorXd coefficients;  // original feature scale
    double lambda = 0.0;
    double t_equivalent = 0.0;  // Σ|coefficients|
    std::vector<std::string> columns;

    // Standardization used during the fit.
    Eigen::VectorXd standardized_coefficients;
    Eigen::VectorXd column_mean;
    Eigen::VectorXd column_scale;  // 0 for constant columns

    int sweeps = 0;
    bool converged = false;
};

/// Cyclic coordinate descent on (1/2n)‖y_c − Zβ‖² + λ‖β‖₁ over standardized
/// columns Z; coefficients are mapped back to the original scale.
LassoModel fit_lasso(const FeatureMatrix& x, const Eigen::VectorXd& y, double lambda, const LassoOptions& options = {});

/// Smallest λ at which every coefficient is zero: max_j |Z_jᵀ y_c| / n.
double lasso_lambda_max(const FeatureMatrix& x, const Eigen::VectorXd& y);

/// Geometric grid from λ_max down to λ_max·ratio.
std::vector<double> lasso_lambda_grid(const FeatureMatrix& x, const Eigen::VectorXd& y, std::size_t points = 50,
                                      double ratio = 1e-3);

struct LambdaSelection {
    double lambda = 0.0;
    std::vector<std::pair<double, double>> cv_curve;  // (λ, mean validation MSE)
};

/// Picks λ minimizing mean fold validation MSE; ties go to the larger λ.
LambdaSelection select_lasso_lambda(const FeatureMatrix& x, const Eigen::VectorXd& y, const FoldAssignment& folds,
                                    std::span<const double> grid, const LassoOptions& options = {});

/// Largest KKT violation of a fitted model on its training data, measured
/// on the standardized problem.
double lasso_kkt_violation(const LassoModel& model, const FeatureMatrix& x, const Eigen::VectorXd& y);

// --- boosted trees -----------------------------------------------------------

struct GradHess {
    double g = 0.0;
    double h = 0.0;
};

/// Squared-error loss ½(y − pred)²: g = pred − y, h = 1.
GradHess loss_grad_hess(double y, double pred);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double weight = 0.0;

    bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int leaf_of(const double* row) const;
    double predict(const double* row) const { return nodes[static_cast<std::size_t>(leaf_of(row))].weight; }
    std::size_t leaf_count() const;
};

struct GbtParams {
    int n_trees = 200;
    double learning_rate = 0.1;
    int max_depth = 4;
    double lambda_reg = 1.0;
    double gamma_split = 0.0;
    double min_child_hessian = 1.0;
};

struct GossConfig {
    bool enabled = true;
    double top_rate = 0.2;
    double other_rate = 0.1;
};

struct HistParams {
    int max_bins = 256;
    GossConfig goss;
    bool efb = true;
    double efb_conflict_rate = 0.0;
    std::uint64_t seed = 0;
};

enum class GbtMode { Exact, Histogram };

struct GbtModel {
    double base_score = 0.0;
    GbtParams params;
    GbtMode mode = GbtMode::Exact;
    HistParams hist;  // meaningful in histogram mode
    std::vector<RegressionTree> trees;
    std::vector<std::string> columns;

    // Training MSE after each boosting step; not persisted.
    std::vector<double> training_mse;
};

GbtModel fit_gbt_exact(const FeatureMatrix& x, const Eigen::VectorXd& y, const GbtParams& params = {});
GbtModel fit_gbt_hist(const FeatureMatrix& x, const Eigen::VectorXd& y, const GbtParams& params = {},
                      const HistParams& hist = {});

/// Quantile bins per feature. Upper bounds are actual training values, so a
/// split after bin b is the raw-value test x <= upper_bounds[f][b].
struct HistogramBinMap {
    std::vector<std::vector<double>> upper_bounds;

    static HistogramBinMap build(const RowMatrix& x, int max_bins);
    int bin(std::size_t feature, double value) const;
    std::size_t bin_count(std::size_t feature) const { return upper_bounds[feature].size(); }
};

/// Greedy exclusive feature bundling over binned columns. A feature's
/// default bin is its most populated bin; bundle code 0 means every member
/// sits in its default bin, otherwise the code identifies one member and
/// one of its non-default bins.
struct EfbBundles {
    std::vector<std::vector<int>> bundles;
    std::vector<int> bundle_of;    // per feature
    std::vector<int> offset;       // per feature, first code of its range
    std::vector<int> default_bin;  // per feature
    std::vector<int> bundle_bins;  // codes per bundle

    static EfbBundles build(const std::vector<std::vector<int>>& binned_columns, const HistogramBinMap& bins,
                            double conflict_rate);
    /// Bundle code for one row given every feature's bin.
    int encode(std::size_t bundle, const std::vector<std::vector<int>>& binned_columns, std::size_t row) const;
    /// Bin of `feature` implied by its bundle's code.
    int decode(std::size_t feature, int code) const;
    bool singleton(std::size_t bundle) const { return bundles[bundle].size() == 1; }
};

/// Rows kept by one GOSS draw and the weight applied to each.
struct GossSample {
    std::vector<std::size_t> rows;  // ascending
    std::vector<double> weight;     // aligned with rows
};

GossSample goss_sample(std::span<const double> gradients, const GossConfig& config, std::uint64_t seed);

// --- shared contract ---------------------------------------------------------

using TrainedModel = std::variant<LinearModel, LassoModel, GbtModel>;

std::string_view model_kind(const TrainedModel& model);
const std::vector<std::string>& model_columns(const TrainedModel& model);

/// Raw real-valued predictions. Throws SchemaMismatch unless the matrix has
/// exactly the column layout the model was fitted on.
Eigen::VectorXd predict(const TrainedModel& model, const FeatureMatrix& x);
Eigen::VectorXd predict(const LinearModel& model, const FeatureMatrix& x);
Eigen::VectorXd predict(const LassoModel& model, const FeatureMatrix& x);
Eigen::VectorXd predict(const GbtModel& model, const FeatureMatrix& x);

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& document);

}  // namespace merchcast::learners
