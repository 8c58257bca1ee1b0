#include "support.hpp"

#include "merchcast/evaluation.hpp"
#include "merchcast/learners.hpp"

#include <Eigen/Dense>

#include <cmath>

using namespace merchcast;
using namespace merchcast::learners;

namespace {

double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) { return (pred - y).squaredNorm() / y.size(); }

// Central differences of the training MSE around (b0, b).
Eigen::VectorXd mse_gradient_fd(const RowMatrix& x, const Eigen::VectorXd& y, double b0, const Eigen::VectorXd& b) {
    const double h = 1e-6;
    auto loss = [&](double c0, const Eigen::VectorXd& c) {
        return ((x * c).array() + c0 - y.array()).matrix().squaredNorm() / y.size();
    };
    Eigen::VectorXd g(b.size() + 1);
    g[0] = (loss(b0 + h, b) - loss(b0 - h, b)) / (2 * h);
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        Eigen::VectorXd up = b, down = b;
        up[j] += h;
        down[j] -= h;
        g[j + 1] = (loss(b0, up) - loss(b0, down)) / (2 * h);
    }
    return g;
}

Eigen::VectorXd mse_gradient(const RowMatrix& x, const Eigen::VectorXd& y, double b0, const Eigen::VectorXd& b) {
    const Eigen::VectorXd r = ((x * b).array() + b0 - y.array()).matrix();
    Eigen::VectorXd g(b.size() + 1);
    g[0] = 2.0 * r.sum() / y.size();
    g.tail(b.size()) = 2.0 * x.transpose() * r / y.size();
    return g;
}

// Integer-valued features so bins saturate and ties occur.
FeatureMatrix discrete_instance(std::mt19937_64& rng, int n, int p, Eigen::VectorXd& y) {
    std::uniform_int_distribution<int> level(0, 12);
    RowMatrix x(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = level(rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    y.resize(n);
    for (int i = 0; i < n; ++i) y[i] = 0.8 * x(i, 0) - 0.5 * x(i, 1) + (x(i, 2) > 6 ? 3.0 : 0.0) + noise(rng);
    return make_feature_matrix(x);
}

HistParams plain_hist(int max_bins = 256) {
    HistParams h;
    h.max_bins = max_bins;
    h.goss.enabled = false;
    h.efb = false;
    return h;
}

}  // namespace

TEST_CASE("ols on exact lines") {
    RowMatrix x(3, 1);
    x << 1, 2, 3;
    auto m = fit_linear(make_feature_matrix(x), Eigen::Vector3d(2, 4, 6));
    CHECK(m.intercept == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.coefficients[0] == doctest::Approx(2.0).epsilon(1e-12));

    RowMatrix x2(2, 1);
    x2 << 1, 2;
    auto c = fit_linear(make_feature_matrix(x2), Eigen::Vector2d(5, 5));
    CHECK(c.intercept == doctest::Approx(5.0));
    CHECK(std::abs(c.coefficients[0]) < 1e-12);
}

TEST_CASE("ols gradient vanishes at the solution") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        const RowMatrix x = test::random_matrix(rng, 50, 5);
        const Eigen::VectorXd y = test::random_vector(rng, 50);
        const auto m = fit_linear(make_feature_matrix(x), y);
        CHECK(mse_gradient_fd(x, y, m.intercept, m.coefficients).lpNorm<Eigen::Infinity>() < 1e-8);
        CHECK(mse_gradient(x, y, m.intercept, m.coefficients).norm() < 1e-10);
        CHECK_FALSE(m.ridge_applied);
    }
}

TEST_CASE("singular designs fall back to ridge") {
    RowMatrix x(4, 2);
    x << 1, 2, 2, 4, 3, 6, 4, 8;
    const auto m = fit_linear(make_feature_matrix(x), Eigen::Vector4d(1, 2, 3, 4));
    CHECK(m.ridge_applied);
    CHECK(m.coefficients.allFinite());
    CHECK(mse(predict(m, make_feature_matrix(x)), Eigen::Vector4d(1, 2, 3, 4)) < 1e-6);
}

TEST_CASE("lasso agrees with ols at lambda 0") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = make_feature_matrix(test::random_matrix(rng, 30, 4));
        const Eigen::VectorXd y = test::random_vector(rng, 30);
        const auto ols = fit_linear(x, y);
        const auto lasso = fit_lasso(x, y, 0.0);
        CHECK(lasso.converged);
        CHECK((lasso.coefficients - ols.coefficients).lpNorm<Eigen::Infinity>() < 1e-6);
        CHECK(std::abs(lasso.intercept - ols.intercept) < 1e-6);
    }
}

TEST_CASE("lasso above lambda max is empty") {
    std::mt19937_64 rng(3);
    const auto x = make_feature_matrix(test::random_matrix(rng, 40, 6));
    const Eigen::VectorXd y = test::random_vector(rng, 40);
    const double lmax = lasso_lambda_max(x, y);
    const auto m = fit_lasso(x, y, lmax);
    CHECK(m.coefficients.isZero(0.0));
    CHECK(m.intercept == doctest::Approx(y.mean()));
    CHECK(fit_lasso(x, y, 0.999 * lmax).coefficients.cwiseAbs().maxCoeff() > 0.0);
    CHECK_ERROR(fit_lasso(x, y, -1.0), ErrorCode::InvalidParams);
}

TEST_CASE("lasso single feature soft threshold") {
    std::mt19937_64 rng(4);
    const int n = 50;
    RowMatrix raw = test::random_matrix(rng, n, 1);
    // Standardize with the population scale, as the fit does internally.
    raw.col(0).array() -= raw.col(0).mean();
    raw.col(0) /= std::sqrt(raw.col(0).squaredNorm() / n);
    Eigen::VectorXd y = 1.5 * raw.col(0) + 0.3 * test::random_vector(rng, n);
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double rho = raw.col(0).dot(yc) / n;
    for (double lambda : {0.0, 0.2, 0.9, 1.4, 3.0}) {
        const auto m = fit_lasso(make_feature_matrix(raw), y, lambda);
        const double expect = (rho > 0 ? 1.0 : -1.0) * std::max(std::abs(rho) - lambda, 0.0);
        CHECK(m.coefficients[0] == doctest::Approx(expect).epsilon(1e-9));
        CHECK(m.t_equivalent == doctest::Approx(std::abs(expect)).epsilon(1e-9));
    }
}

TEST_CASE("lasso kkt and sparsity path") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = make_feature_matrix(test::random_matrix(rng, 60, 8));
        Eigen::VectorXd y = 2.0 * x.rows.col(0) - x.rows.col(3) + test::random_vector(rng, 60);
        const auto grid = lasso_lambda_grid(x, y, 20, 1e-3);
        REQUIRE(grid.size() == 20);
        long previous = -1;
        for (auto it = grid.rbegin(); it != grid.rend(); ++it) {  // increasing λ
            const auto m = fit_lasso(x, y, *it);
            CHECK(lasso_kkt_violation(m, x, y) <= 1e-6);
            const long nnz = (m.coefficients.array() != 0.0).count();
            if (previous >= 0) CHECK(nnz <= previous + 1);  // ties tolerated
            previous = nnz;
        }
    }
}

TEST_CASE("lambda selection") {
    std::mt19937_64 rng(6);
    const int n = 100;
    const auto x = make_feature_matrix(test::random_matrix(rng, n, 5));
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    const auto folds = evaluation::kfold(ids, 5, 1);

    SUBCASE("noiseless linear target picks the smallest lambda") {
        const Eigen::VectorXd y = x.rows * Eigen::VectorXd::LinSpaced(5, 1.0, 3.0);
        const auto grid = lasso_lambda_grid(x, y);
        CHECK(select_lasso_lambda(x, y, folds, grid).lambda == grid.back());
    }
    SUBCASE("pure noise picks a large lambda") {
        const Eigen::VectorXd y = test::random_vector(rng, n);
        const auto grid = lasso_lambda_grid(x, y);
        const auto sel = select_lasso_lambda(x, y, folds, grid);
        CHECK(sel.lambda >= grid[grid.size() / 4]);
        CHECK(sel.cv_curve.size() == grid.size());
    }
    SUBCASE("single point grid") {
        const Eigen::VectorXd y = test::random_vector(rng, n);
        const std::vector<double> grid{0.123};
        CHECK(select_lasso_lambda(x, y, folds, grid).lambda == 0.123);
    }
}

TEST_CASE("squared loss gradient and hessian") {
    CHECK(loss_grad_hess(3, 3).g == 0.0);
    CHECK(loss_grad_hess(3, 3).h == 1.0);
    CHECK(loss_grad_hess(0, 2).g == 2.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-20, 20);
    for (int i = 0; i < 100; ++i) {
        const double y = u(rng), p = u(rng), h = 1e-5;
        auto l = [&](double q) { return 0.5 * (y - q) * (y - q); };
        CHECK(std::abs(loss_grad_hess(y, p).g - (l(p + h) - l(p - h)) / (2 * h)) < 1e-6);
    }
}

TEST_CASE("boosting basics") {
    std::mt19937_64 rng(8);
    Eigen::VectorXd y;
    const auto x = discrete_instance(rng, 80, 4, y);

    GbtParams stump;
    stump.n_trees = 1;
    stump.max_depth = 0;
    stump.lambda_reg = 0.0;
    stump.learning_rate = 1.0;
    const auto m = fit_gbt_exact(x, y, stump);
    const auto pred = predict(m, x);
    for (Eigen::Index i = 0; i < pred.size(); ++i) CHECK(pred[i] == doctest::Approx(y.mean()).epsilon(1e-12));

    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(80, 4.0);
    const auto c = fit_gbt_exact(x, flat);
    CHECK(c.trees.empty());
    CHECK(predict(c, x).isApproxToConstant(4.0));
    CHECK(predict(fit_gbt_hist(x, flat), x).isApproxToConstant(4.0));

    GbtParams bad;
    bad.learning_rate = 0.0;
    CHECK_ERROR(fit_gbt_exact(x, y, bad), ErrorCode::InvalidParams);
    HistParams bins;
    bins.max_bins = 1;
    CHECK_ERROR(fit_gbt_hist(x, y, {}, bins), ErrorCode::InvalidParams);
}

TEST_CASE("leaf weights follow the second-order rule") {
    std::mt19937_64 rng(9);
    Eigen::VectorXd y;
    const auto x = discrete_instance(rng, 60, 3, y);
    GbtParams p;
    p.n_trees = 1;
    p.max_depth = 2;
    p.learning_rate = 1.0;
    p.lambda_reg = 2.0;
    const auto m = fit_gbt_exact(x, y, p);
    REQUIRE(m.trees.size() == 1);
    const auto& tree = m.trees[0];
    std::map<int, std::pair<double, double>> gh;  // leaf → (G, H)
    for (Eigen::Index i = 0; i < x.n_rows(); ++i) {
        auto [g, h] = loss_grad_hess(y[i], m.base_score);
        auto& acc = gh[tree.leaf_of(x.rows.row(i).data())];
        acc.first += g;
        acc.second += h;
    }
    CHECK(gh.size() == tree.leaf_count());
    for (const auto& [leaf, s] : gh)
        CHECK(tree.nodes[static_cast<std::size_t>(leaf)].weight == doctest::Approx(-s.first / (s.second + 2.0)));
}

TEST_CASE("training loss never increases") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 3; ++trial) {
        const auto x = make_feature_matrix(test::random_matrix(rng, 100, 5));
        const Eigen::VectorXd y = x.rows.col(0).array().square().matrix() + test::random_vector(rng, 100);
        for (const auto& m : {fit_gbt_exact(x, y), fit_gbt_hist(x, y, {}, plain_hist(32))}) {
            REQUIRE(m.training_mse.size() == 200);
            for (std::size_t t = 1; t < m.training_mse.size(); ++t)
                CHECK(m.training_mse[t] <= m.training_mse[t - 1] + 1e-12);
        }
    }
}

TEST_CASE("saturated histogram equals exact") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd y;
        const auto x = discrete_instance(rng, 120, 5, y);
        GbtParams p;
        p.n_trees = 50;
        const auto exact = predict(fit_gbt_exact(x, y, p), x);
        const auto hist = predict(fit_gbt_hist(x, y, p, plain_hist(256)), x);
        CHECK((exact - hist).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
}

TEST_CASE("histogram bins") {
    std::mt19937_64 rng(12);
    const RowMatrix x = test::random_matrix(rng, 500, 3);
    const auto bins = HistogramBinMap::build(x, 16);
    for (std::size_t f = 0; f < 3; ++f) {
        CHECK(bins.bin_count(f) <= 16);
        const auto& ub = bins.upper_bounds[f];
        for (std::size_t b = 1; b < ub.size(); ++b) CHECK(ub[b - 1] < ub[b]);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const int b = bins.bin(f, x(i, static_cast<Eigen::Index>(f)));
            CHECK(x(i, static_cast<Eigen::Index>(f)) <= ub[static_cast<std::size_t>(b)]);
            if (b > 0) CHECK(x(i, static_cast<Eigen::Index>(f)) > ub[static_cast<std::size_t>(b - 1)]);
        }
    }
}

TEST_CASE("goss keeps every row when the top share is 1") {
    std::mt19937_64 rng(13);
    Eigen::VectorXd y;
    const auto x = discrete_instance(rng, 150, 4, y);
    auto off = plain_hist();
    auto full = plain_hist();
    full.goss = {true, 1.0, 0.0};
    full.seed = 99;
    CHECK((predict(fit_gbt_hist(x, y, {}, off), x) - predict(fit_gbt_hist(x, y, {}, full), x)).lpNorm<Eigen::Infinity>() ==
          0.0);

    const std::vector<double> g = {0.1, -5.0, 0.2, 3.0, -0.05, 0.7, 0.01, -0.3, 2.0, 0.4};
    const auto s = goss_sample(g, {true, 0.2, 0.3}, 1);
    CHECK(s.rows.size() == 5);
    CHECK(std::is_sorted(s.rows.begin(), s.rows.end()));
    for (std::size_t k = 0; k < s.rows.size(); ++k) {
        if (s.rows[k] == 1 || s.rows[k] == 3) CHECK(s.weight[k] == 1.0);
        else CHECK(s.weight[k] == doctest::Approx(0.8 / 0.3));
    }
    CHECK(goss_sample(g, {true, 0.2, 0.3}, 1).rows == s.rows);
    CHECK_ERROR(goss_sample(g, {true, 0.5, 0.6}, 1), ErrorCode::InvalidParams);
}

TEST_CASE("exclusive features bundle without changing predictions") {
    std::mt19937_64 rng(14);
    const int n = 200;
    RowMatrix x(n, 4);
    std::uniform_int_distribution<int> which(0, 2);
    std::normal_distribution<double> z;
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const int w = which(rng);  // one-hot pair: at most one of columns 0, 1 is nonzero
        x(i, 0) = w == 0 ? 1.0 : 0.0;
        x(i, 1) = w == 1 ? 1.0 : 0.0;
        x(i, 2) = z(rng);
        x(i, 3) = std::round(3 * z(rng));
        y[i] = 4.0 * x(i, 0) - 2.0 * x(i, 1) + x(i, 2) + 0.1 * z(rng);
    }
    const auto fm = make_feature_matrix(x);

    const auto bins = HistogramBinMap::build(x, 256);
    std::vector<std::vector<int>> binned(4, std::vector<int>(n));
    for (int f = 0; f < 4; ++f)
        for (int i = 0; i < n; ++i) binned[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)] = bins.bin(static_cast<std::size_t>(f), x(i, f));
    const auto efb = EfbBundles::build(binned, bins, 0.0);
    CHECK(efb.bundle_of[0] == efb.bundle_of[1]);
    for (std::size_t b = 0; b < efb.bundles.size(); ++b)
        for (int i = 0; i < n; ++i) {
            const int code = efb.encode(b, binned, static_cast<std::size_t>(i));
            for (int f : efb.bundles[b])
                CHECK(efb.decode(static_cast<std::size_t>(f), code) == binned[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)]);
        }

    auto on = plain_hist();
    on.efb = true;
    CHECK((predict(fit_gbt_hist(fm, y, {}, plain_hist()), fm) - predict(fit_gbt_hist(fm, y, {}, on), fm))
              .lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("goss fits depend only on the seed") {
    std::mt19937_64 rng(15);
    Eigen::VectorXd y;
    const auto x = discrete_instance(rng, 150, 4, y);
    HistParams h;
    h.seed = 3;
    const auto a = fit_gbt_hist(x, y, {}, h);
    const auto b = fit_gbt_hist(x, y, {}, h);
    CHECK(model_to_json(a).dump() == model_to_json(b).dump());
    h.seed = 4;
    CHECK(model_to_json(fit_gbt_hist(x, y, {}, h)).dump() != model_to_json(a).dump());
}

TEST_CASE("predict contract") {
    GbtModel empty;
    empty.base_score = 2.5;
    empty.columns = {"x0"};
    RowMatrix one(3, 1);
    one << 1, 2, 3;
    CHECK(predict(empty, make_feature_matrix(one)).isApproxToConstant(2.5));

    LinearModel lin;
    lin.intercept = 1.0;
    lin.coefficients = Eigen::VectorXd::Constant(1, 2.0);
    lin.columns = {"x0"};
    RowMatrix three(1, 1);
    three << 3;
    CHECK(predict(lin, make_feature_matrix(three))[0] == 7.0);

    RowMatrix two(2, 2);
    two << 1, 2, 3, 4;
    CHECK_ERROR(predict(TrainedModel{lin}, make_feature_matrix(two)), ErrorCode::SchemaMismatch);

    std::mt19937_64 rng(16);
    Eigen::VectorXd y;
    auto x = discrete_instance(rng, 50, 3, y);
    const TrainedModel gbt = fit_gbt_exact(x, y);
    RowMatrix dup(2, 3);
    dup.row(0) = x.rows.row(4);
    dup.row(1) = x.rows.row(4);
    const auto d = predict(gbt, make_feature_matrix(dup));
    CHECK(d[0] == d[1]);
}

TEST_CASE("model documents round trip") {
    std::mt19937_64 rng(17);
    Eigen::VectorXd y;
    const auto x = discrete_instance(rng, 90, 4, y);
    const std::vector<TrainedModel> models = {fit_linear(x, y), fit_lasso(x, y, 0.05), fit_gbt_exact(x, y),
                                              fit_gbt_hist(x, y)};
    for (const auto& m : models) {
        const auto doc = model_to_json(m);
        CHECK(doc.at("schema_version") == 1);
        const auto back = model_from_json(nlohmann::json::parse(doc.dump()));
        CHECK(model_kind(back) == model_kind(m));
        CHECK(predict(back, x) == predict(m, x));
        CHECK(model_to_json(back).dump() == doc.dump());
    }
    CHECK_ERROR(model_from_json(nlohmann::json{{"kind", "forest"}}), ErrorCode::ParseError);
}
