#include "merchcast/error.hpp"
#include "merchcast/learners.hpp"

#include <Eigen/Cholesky>

namespace merchcast::learners {

namespace {

constexpr double kRidge = 1e-8;
constexpr double kMinReciprocalCondition = 1e-12;

}  // namespace

LinearModel fit_linear(const FeatureMatrix& x, const Eigen::VectorXd& y) {
    const auto n = x.n_rows();
    const auto p = x.n_cols();
    if (n == 0) throw Error(ErrorCode::EmptyInput, "learners", "fit_linear on zero rows");
    if (y.size() != n) throw Error(ErrorCode::LengthMismatch, "learners", "targets do not match rows");

    LinearModel model;
    model.columns = x.column_names;
    const double y_mean = y.mean();
    if (p == 0) {
        model.intercept = y_mean;
        model.coefficients = Eigen::VectorXd(0);
        return model;
    }

    const Eigen::RowVectorXd x_mean = x.rows.colwise().mean();
    const Eigen::MatrixXd centred = x.rows.rowwise() - x_mean;
    const Eigen::VectorXd y_centred = y.array() - y_mean;

    Eigen::MatrixXd gram = centred.transpose() * centred;
    const Eigen::VectorXd rhs = centred.transpose() * y_centred;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    // rcond() is blind to exact zero pivots, which LDLT solves as zero.
    const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
    const bool singular = n < p + 1 || ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                          pivots.minCoeff() <= kMinReciprocalCondition * pivots.maxCoeff() ||
                          ldlt.rcond() < kMinReciprocalCondition;
    if (singular) {
        gram.diagonal().array() += kRidge;
        ldlt.compute(gram);
        model.ridge_applied = true;
    }
    Eigen::VectorXd beta = ldlt.solve(rhs);
    // One round of iterative refinement tightens the normal-equation residual.
    beta += ldlt.solve(rhs - gram * beta);

    model.coefficients = beta;
    model.intercept = y_mean - x_mean.dot(beta);
    return model;
}

}  // namespace merchcast::learners
