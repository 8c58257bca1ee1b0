#include "merchcast/error.hpp"
#include "merchcast/learners.hpp"

#include <algorithm>
#include <cmath>

namespace merchcast::learners {

namespace {

constexpr std::string_view kModule = "learners";

struct Standardized {
    Eigen::MatrixXd z;  // column-major for column sweeps
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    Eigen::VectorXd y_centred;
    double y_mean = 0.0;
};

Standardized standardize(const FeatureMatrix& x, const Eigen::VectorXd& y) {
    const auto n = x.n_rows();
    if (n == 0) throw Error(ErrorCode::EmptyInput, kModule, "lasso on zero rows");
    if (y.size() != n) throw Error(ErrorCode::LengthMismatch, kModule, "targets do not match rows");
    Standardized s;
    s.mean = x.rows.colwise().mean().transpose();
    s.z = x.rows.rowwise() - s.mean.transpose();
    s.scale = (s.z.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
    for (Eigen::Index j = 0; j < s.z.cols(); ++j) {
        if (s.scale(j) > 0.0) s.z.col(j) /= s.scale(j);
        else s.z.col(j).setZero();
    }
    s.y_mean = y.mean();
    s.y_centred = y.array() - s.y_mean;
    return s;
}

double soft_threshold(double rho, double lambda) {
    if (rho > lambda) return rho - lambda;
    if (rho < -lambda) return rho + lambda;
    return 0.0;
}

LassoModel fit_standardized(const Standardized& s, const std::vector<std::string>& columns, double lambda,
                            const LassoOptions& options, const Eigen::VectorXd* warm_start) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidParams, kModule, "lambda must be >= 0");
    if (options.max_sweeps < 1 || !(options.tol > 0.0))
        throw Error(ErrorCode::InvalidParams, kModule, "max_sweeps >= 1 and tol > 0 required");

    const auto n = static_cast<double>(s.z.rows());
    const auto p = s.z.cols();
    Eigen::VectorXd beta = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
    Eigen::VectorXd residual = s.y_centred - s.z * beta;

    LassoModel model;
    model.lambda = lambda;
    model.columns = columns;
    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (s.scale(j) == 0.0) continue;
            const double old = beta(j);
            // Columns have unit variance, so Z_jᵀZ_j / n = 1.
            const double rho = s.z.col(j).dot(residual) / n + old;
            const double updated = soft_threshold(rho, lambda);
            if (updated != old) {
                residual.noalias() -= (updated - old) * s.z.col(j);
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        model.sweeps = sweep;
        if (max_change < options.tol) {
            model.converged = true;
            break;
        }
    }

    model.standardized_coefficients = beta;
    model.column_mean = s.mean;
    model.column_scale = s.scale;
    model.coefficients = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j)
        if (s.scale(j) > 0.0) model.coefficients(j) = beta(j) / s.scale(j);
    model.intercept = s.y_mean - s.mean.dot(model.coefficients);
    model.t_equivalent = model.coefficients.cwiseAbs().sum();
    return model;
}

}  // namespace

LassoModel fit_lasso(const FeatureMatrix& x, const Eigen::VectorXd& y, double lambda, const LassoOptions& options) {
    return fit_standardized(standardize(x, y), x.column_names, lambda, options, nullptr);
}

double lasso_lambda_max(const FeatureMatrix& x, const Eigen::VectorXd& y) {
    const auto s = standardize(x, y);
    if (s.z.cols() == 0) return 0.0;
    // Same per-column dot as the first sweep, so λ = λ_max zeroes every update.
    double top = 0.0;
    for (Eigen::Index j = 0; j < s.z.cols(); ++j)
        top = std::max(top, std::abs(s.z.col(j).dot(s.y_centred) / static_cast<double>(s.z.rows())));
    return top;
}

std::vector<double> lasso_lambda_grid(const FeatureMatrix& x, const Eigen::VectorXd& y, std::size_t points,
                                      double ratio) {
    if (points == 0 || !(ratio > 0.0) || ratio > 1.0)
        throw Error(ErrorCode::InvalidParams, kModule, "grid needs points >= 1 and ratio in (0,1]");
    const double top = lasso_lambda_max(x, y);
    std::vector<double> grid;
    if (points == 1) return {top};
    for (std::size_t i = 0; i < points; ++i)
        grid.push_back(top * std::pow(ratio, static_cast<double>(i) / static_cast<double>(points - 1)));
    return grid;
}

LambdaSelection select_lasso_lambda(const FeatureMatrix& x, const Eigen::VectorXd& y, const FoldAssignment& folds,
                                    std::span<const double> grid, const LassoOptions& options) {
    if (grid.empty()) throw Error(ErrorCode::InvalidParams, kModule, "empty lambda grid");
    if (folds.fold.size() != static_cast<std::size_t>(x.n_rows()))
        throw Error(ErrorCode::LengthMismatch, kModule, "fold assignment does not cover the design rows");

    std::vector<double> total_mse(grid.size(), 0.0);
    for (int f = 0; f < folds.k; ++f) {
        const auto train = folds.training_positions(f);
        const auto valid = folds.validation_positions(f);
        if (train.empty() || valid.empty()) throw Error(ErrorCode::TooFewRecords, kModule, "empty fold");
        const auto x_train = x.select_rows(train);
        const auto x_valid = x.select_rows(valid);
        Eigen::VectorXd y_train(static_cast<Eigen::Index>(train.size()));
        Eigen::VectorXd y_valid(static_cast<Eigen::Index>(valid.size()));
        for (std::size_t i = 0; i < train.size(); ++i) y_train(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(train[i]));
        for (std::size_t i = 0; i < valid.size(); ++i) y_valid(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(valid[i]));

        const auto s = standardize(x_train, y_train);
        Eigen::VectorXd warm = Eigen::VectorXd::Zero(s.z.cols());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto model = fit_standardized(s, x.column_names, grid[g], options, &warm);
            warm = model.standardized_coefficients;
            const Eigen::VectorXd pred = predict(model, x_valid);
            total_mse[g] += (pred - y_valid).squaredNorm() / static_cast<double>(valid.size());
        }
    }

    LambdaSelection out;
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double mean = total_mse[g] / static_cast<double>(folds.k);
        out.cv_curve.emplace_back(grid[g], mean);
        const double best_mean = out.cv_curve[best].second;
        if (mean < best_mean || (mean == best_mean && grid[g] > grid[best])) best = g;
    }
    out.lambda = grid[best];
    return out;
}

double lasso_kkt_violation(const LassoModel& model, const FeatureMatrix& x, const Eigen::VectorXd& y) {
    const auto s = standardize(x, y);
    const Eigen::VectorXd residual = s.y_centred - s.z * model.standardized_coefficients;
    const double n = static_cast<double>(s.z.rows());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < s.z.cols(); ++j) {
        if (s.scale(j) == 0.0) continue;
        const double corr = s.z.col(j).dot(residual) / n;
        const double b = model.standardized_coefficients(j);
        const double violation =
            b == 0.0 ? std::max(0.0, std::abs(corr) - model.lambda) : std::abs(corr - model.lambda * (b > 0 ? 1.0 : -1.0));
        worst = std::max(worst, violation);
    }
    return worst;
}

}  // namespace merchcast::learners
