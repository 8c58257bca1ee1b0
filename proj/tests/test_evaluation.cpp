#include "support.hpp"

#include "merchcast/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>

using namespace merchcast;
using namespace merchcast::evaluation;

namespace {

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n) {
    // Roughly half zeros, like the labeled catalogue.
    std::bernoulli_distribution zero(0.5);
    std::geometric_distribution<int> tail(0.2);
    std::vector<int> out(n);
    for (auto& v : out) v = zero(rng) ? 0 : std::min(25, 1 + tail(rng));
    return out;
}

std::vector<MovieRecord> labeled_records(const std::vector<int>& labels) {
    std::vector<MovieRecord> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        MovieRecord r;
        r.id = static_cast<std::int64_t>(i + 1);
        r.film = "film " + std::to_string(i + 1);
        r.label = labels[i];
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("stratified split laws") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto labels = random_labels(rng, 441);
        const auto split = stratified_split(labels, {0.2, static_cast<std::uint64_t>(trial)});

        std::vector<std::size_t> all = split.train;
        all.insert(all.end(), split.test.begin(), split.test.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(labels.size());
        std::iota(expect.begin(), expect.end(), 0);
        CHECK(all == expect);  // disjoint and covering, so the label multiset is preserved
        CHECK(std::is_sorted(split.test.begin(), split.test.end()));

        std::map<int, std::size_t> stratum, tested;
        for (int l : labels) ++stratum[l];
        for (auto p : split.test) ++tested[labels[p]];
        for (const auto& [label, size] : stratum) {
            const double share = 0.2 * static_cast<double>(size);
            if (size >= 5) CHECK(std::abs(static_cast<double>(tested[label]) - share) <= 1.0);
            else CHECK(tested[label] == 0);
        }
        CHECK(split.test.size() >= 80);
        CHECK(split.test.size() <= 92);

        const auto again = stratified_split(labels, {0.2, static_cast<std::uint64_t>(trial)});
        CHECK(again.test == split.test);
    }
}

TEST_CASE("split edge cases") {
    const std::vector<int> labels = {0, 0, 0, 0, 0, 0, 3, 7};
    const auto none = stratified_split(labels, {0.0, 1});
    CHECK(none.test.empty());
    CHECK(none.train.size() == labels.size());

    const auto split = stratified_split(labels, {0.2, 1});
    for (auto p : split.test) CHECK(labels[p] == 0);  // singleton strata stay in train
    CHECK(split.test.size() == 1);

    CHECK(stratum_test_count(1, 0.2) == 0);
    CHECK(stratum_test_count(5, 0.2) == 1);
    CHECK(stratum_test_count(12, 0.2) == 2);
    CHECK(stratum_test_count(13, 0.2) == 3);  // 2.6 rounds up
    CHECK(stratum_test_count(6, 0.05) == 1);  // at least one from a stratum of five or more

    auto records = labeled_records(labels);
    records[2].label.reset();
    CHECK_ERROR(stratified_split(records, {0.2, 1}), ErrorCode::UnlabeledRecord);
}

TEST_CASE("kfold partition") {
    std::vector<std::int64_t> ids(441);
    std::iota(ids.begin(), ids.end(), 1000);
    const auto folds = kfold(ids, 5, 7);
    auto sizes = folds.sizes();
    std::sort(sizes.rbegin(), sizes.rend());
    CHECK(sizes == std::vector<std::size_t>{89, 88, 88, 88, 88});

    std::vector<int> seen(ids.size(), 0);
    for (int f = 0; f < 5; ++f) {
        for (auto p : folds.validation_positions(f)) ++seen[p];
        CHECK(folds.training_positions(f).size() + folds.validation_positions(f).size() == ids.size());
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(kfold(ids, 5, 7).fold == folds.fold);

    const auto loo = kfold(std::vector<std::int64_t>{1, 2, 3, 4}, 4, 1);
    for (auto s : loo.sizes()) CHECK(s == 1);

    CHECK_ERROR(kfold(ids, 1, 0), ErrorCode::InvalidParams);
    CHECK_ERROR(kfold({1, 2}, 3, 0), ErrorCode::TooFewRecords);
}

TEST_CASE("prediction rounding") {
    CHECK(round_prediction(2.6) == 3);
    CHECK(round_prediction(2.5) == 3);
    CHECK(round_prediction(2.4999) == 2);
    CHECK(round_prediction(-0.4) == 0);
    CHECK(round_prediction(26.2) == 25);
    CHECK(round_prediction(std::nan("")) == 0);
}

TEST_CASE("accuracy metric") {
    CHECK(accuracy(std::vector<int>{3}, std::vector<int>{3}) == 1.0);
    CHECK(accuracy(std::vector<int>{2}, std::vector<int>{3}) == 0.0);
    CHECK(accuracy(std::vector<int>{0, 0, 1, 3}, std::vector<int>{0, 1, 1, 3}) == 0.75);
    CHECK_ERROR(accuracy(std::vector<int>{1, 2}, std::vector<int>{1}), ErrorCode::LengthMismatch);
    CHECK_ERROR(accuracy(std::vector<int>{}, std::vector<int>{}), ErrorCode::EmptyInput);
}

TEST_CASE("accuracy equals the exact-match rate on integers") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> score(0, 25);
    std::uniform_int_distribution<std::size_t> len(1, 200);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = len(rng);
        std::vector<int> p(n), s(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = score(rng);
            p[i] = (i % 3 == 0) ? s[i] : score(rng);
        }
        std::size_t equal = 0;
        for (std::size_t i = 0; i < n; ++i) equal += p[i] == s[i];
        const double acc = accuracy(p, s);
        CHECK(acc == static_cast<double>(equal) / static_cast<double>(n));
        CHECK((acc >= 0.0 && acc <= 1.0));
        CHECK(accuracy(s, s) == 1.0);

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> pp(n), sp(n);
        for (std::size_t i = 0; i < n; ++i) {
            pp[i] = p[perm[i]];
            sp[i] = s[perm[i]];
        }
        CHECK(accuracy(pp, sp) == acc);
    }
}

TEST_CASE("cross validation") {
    std::mt19937_64 rng(3);
    const int n = 441;
    RowMatrix x = test::random_matrix(rng, n, 4);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = std::clamp(static_cast<int>(std::lround(5 + 3 * x(i, 0))), 0, 25);
    auto train = make_feature_matrix(x, y);
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 1);
    const auto folds = kfold(ids, 5, 1);

    LearnerSpec spec;
    spec.kind = LearnerKind::Linear;
    const auto cv = cross_validate(spec, train, folds);
    CHECK(cv.fold_accuracy.size() == 5);
    CHECK(cv.oof_predictions.size() == n);
    CHECK(cv.mean_accuracy ==
          doctest::Approx(std::accumulate(cv.fold_accuracy.begin(), cv.fold_accuracy.end(), 0.0) / 5.0));
    CHECK(learners::model_kind(cv.model) == "linear");

    // The refit sees every row.
    const auto full = learners::fit_linear(train, train.target_vector());
    CHECK(learners::predict(cv.model, train) == learners::predict(full, train));

    std::vector<int> flat(n, 4);
    auto constant = make_feature_matrix(x, flat);
    for (auto kind : {LearnerKind::Linear, LearnerKind::Lasso, LearnerKind::GbtExact, LearnerKind::GbtHist}) {
        LearnerSpec s;
        s.kind = kind;
        s.lambda = 0.01;
        s.gbt.n_trees = 10;
        const auto r = cross_validate(s, constant, folds);
        for (double a : r.fold_accuracy) CHECK(a == r.mean_accuracy);
    }
}

TEST_CASE("display names") {
    CHECK(display_name(LearnerKind::Linear) == "Linear");
    CHECK(display_name(LearnerKind::Lasso) == "LASSO");
    CHECK(display_name(LearnerKind::GbtExact) == "XGBoost");
    CHECK(display_name(LearnerKind::GbtHist) == "LightGBM");
}

TEST_CASE("comparison report") {
    auto test = labeled_records({0, 3, 20, 5});
    test[0].film = "Thirteen Days";
    const std::vector<NamedPredictions> models = {
        {"Linear", {0, 2, 18, 5}},
        {"LightGBM", {0, 3, 20, 4}},
    };
    auto report = comparison_report(models, test);
    report.config_hash = "abc123";
    CHECK(report.n_test == 4);
    CHECK(report.accuracy == std::vector<double>{0.5, 0.75});
    CHECK(report.rows[0].predictions == std::vector<int>{0, 0});

    const auto text = report.render();
    CHECK(text.find("abc123") != std::string::npos);
    CHECK(text.find("Thirteen Days") != std::string::npos);
    CHECK(text.find("75.00%") != std::string::npos);
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);)
        if (!line.empty()) CHECK(line.back() != ' ');

    const auto doc = report.to_json();
    CHECK(doc.at("n_test") == 4);
    CHECK(doc.at("config_hash") == "abc123");

    CHECK_ERROR(comparison_report(models, {}), ErrorCode::EmptyInput);
    CHECK_ERROR(comparison_report({{"Linear", {0}}}, test), ErrorCode::LengthMismatch);
}

TEST_CASE("comparison report from models checks the schema") {
    learners::LinearModel m;
    m.coefficients = Eigen::VectorXd::Zero(2);
    m.columns = {"x0", "x1"};
    const learners::TrainedModel tm = m;
    RowMatrix x(1, 3);
    x << 1, 2, 3;
    CHECK_ERROR(comparison_report({{"Linear", &tm}}, make_feature_matrix(x), labeled_records({0})),
                ErrorCode::SchemaMismatch);
}

TEST_CASE("distribution report") {
    auto records = labeled_records({0, 0, 0, 5, 10, 25});
    const auto d = distribution_report(records);
    CHECK(d.n == 6);
    CHECK(d.histogram.size() == 26);
    CHECK(d.histogram[0] == 3);
    CHECK(d.zero_share == 0.5);
    CHECK(d.mean == doctest::Approx(40.0 / 6.0));
    CHECK(d.max == 25);
    CHECK(d.render().find("50.00%") != std::string::npos);

    const auto top = distribution_report(labeled_records({25, 25, 25}));
    CHECK(top.histogram[25] == 3);
    CHECK(std::count(top.histogram.begin(), top.histogram.end(), 0u) == 25);

    CHECK_ERROR(distribution_report({}), ErrorCode::EmptyInput);
    records[1].label.reset();
    CHECK_ERROR(distribution_report(records), ErrorCode::UnlabeledRecord);
}
