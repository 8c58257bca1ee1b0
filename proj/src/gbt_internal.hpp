#pragma once

#include "merchcast/error.hpp"
#include "merchcast/learners.hpp"

#include <cmath>
#include <vector>

namespace merchcast::learners::detail {

inline void validate(const GbtParams& p) {
    auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidParams, "learners", why); };
    if (p.n_trees < 0) bad("n_trees must be >= 0");
    if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0)) bad("learning_rate must be in (0,1]");
    if (p.max_depth < 0) bad("max_depth must be >= 0");
    if (!(p.lambda_reg >= 0.0)) bad("lambda_reg must be >= 0");
    if (!(p.gamma_split >= 0.0)) bad("gamma_split must be >= 0");
    if (!(p.min_child_hessian >= 0.0)) bad("min_child_hessian must be >= 0");
}

/// ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ
inline double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) {
    const double g = gl + gr;
    const double h = hl + hr;
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

inline double leaf_weight(double g, double h, double lambda) {
    const double denom = h + lambda;
    return denom > 0.0 ? -g / denom : 0.0;
}

/// Shared boosting loop: base score is the target mean, every step fits one
/// tree to the current gradients and adds it with the learning rate.
/// `grow(g, h, step)` returns the fitted tree.
template <typename Grow>
GbtModel boost(const FeatureMatrix& x, const Eigen::VectorXd& y, const GbtParams& params, GbtMode mode, Grow&& grow) {
    validate(params);
    const auto n = x.n_rows();
    if (n < 2) throw Error(ErrorCode::InvalidParams, "learners", "boosting needs at least 2 rows");
    if (y.size() != n) throw Error(ErrorCode::LengthMismatch, "learners", "targets do not match rows");

    GbtModel model;
    model.params = params;
    model.mode = mode;
    model.columns = x.column_names;
    model.base_score = y.mean();
    if (y.maxCoeff() == y.minCoeff()) return model;  // nothing to fit

    Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, model.base_score);
    std::vector<double> g(static_cast<std::size_t>(n));
    std::vector<double> h(static_cast<std::size_t>(n));
    for (int step = 0; step < params.n_trees; ++step) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto gh = loss_grad_hess(y(i), pred(i));
            g[static_cast<std::size_t>(i)] = gh.g;
            h[static_cast<std::size_t>(i)] = gh.h;
        }
        RegressionTree tree = grow(g, h, step);
        for (Eigen::Index i = 0; i < n; ++i) pred(i) += params.learning_rate * tree.predict(x.rows.row(i).data());
        model.trees.push_back(std::move(tree));
        model.training_mse.push_back((pred - y).squaredNorm() / static_cast<double>(n));
    }
    return model;
}

}  // namespace merchcast::learners::detail
