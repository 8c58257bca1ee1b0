#include "merchcast/evaluation.hpp"

#include "merchcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace merchcast {

std::vector<std::size_t> FoldAssignment::validation_positions(int f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
        if (fold[i] == f) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldAssignment::training_positions(int f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
        if (fold[i] != f) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldAssignment::sizes() const {
    std::vector<std::size_t> out(static_cast<std::size_t>(std::max(k, 0)), 0);
    for (int f : fold) ++out[static_cast<std::size_t>(f)];
    return out;
}

}  // namespace merchcast

namespace merchcast::evaluation {

namespace {

constexpr std::string_view kModule = "evaluation";

std::string percent(double share) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", share * 100.0);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace

// --- splitting ---------------------------------------------------------------

std::size_t stratum_test_count(std::size_t stratum_size, double fraction) {
    if (stratum_size < 5 || fraction <= 0.0) return 0;
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(stratum_size) + 0.5 + 1e-9));
    return std::clamp<std::size_t>(k, 1, stratum_size);
}

Split stratified_split(std::span<const int> labels, const SplitSpec& spec) {
    if (!(spec.test_fraction >= 0.0 && spec.test_fraction <= 1.0))
        throw Error(ErrorCode::InvalidParams, kModule, "test_fraction must be in [0,1]");
    std::map<int, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < labels.size(); ++i) strata[labels[i]].push_back(i);

    std::mt19937_64 rng(spec.seed);
    Split out;
    for (auto& [label, members] : strata) {
        const std::size_t k = stratum_test_count(members.size(), spec.test_fraction);
        std::shuffle(members.begin(), members.end(), rng);
        out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
        out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

Split stratified_split(const std::vector<MovieRecord>& records, const SplitSpec& spec) {
    std::vector<int> labels;
    labels.reserve(records.size());
    for (const auto& r : records) {
        if (!r.label) throw Error(ErrorCode::UnlabeledRecord, kModule, "record " + std::to_string(r.id) + " has no label");
        labels.push_back(*r.label);
    }
    return stratified_split(labels, spec);
}

FoldAssignment kfold(const std::vector<std::int64_t>& ids, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::InvalidParams, kModule, "K must be >= 2");
    if (ids.size() < static_cast<std::size_t>(k))
        throw Error(ErrorCode::TooFewRecords, kModule,
                    std::to_string(ids.size()) + " records cannot fill " + std::to_string(k) + " folds");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    FoldAssignment out;
    out.k = k;
    out.seed = seed;
    out.ids = ids;
    out.fold.assign(ids.size(), 0);
    for (std::size_t p = 0; p < order.size(); ++p) out.fold[order[p]] = static_cast<int>(p % static_cast<std::size_t>(k));
    return out;
}

// --- metric ------------------------------------------------------------------

int round_prediction(double raw) {
    if (std::isnan(raw)) return 0;
    const double r = std::floor(std::clamp(raw, -1.0, static_cast<double>(kMaxLabel) + 1.0) + 0.5);
    return std::clamp(static_cast<int>(r), 0, kMaxLabel);
}

std::vector<int> round_predictions(const Eigen::VectorXd& raw) {
    std::vector<int> out(static_cast<std::size_t>(raw.size()));
    for (Eigen::Index i = 0; i < raw.size(); ++i) out[static_cast<std::size_t>(i)] = round_prediction(raw(i));
    return out;
}

double accuracy(std::span<const int> preds, std::span<const int> scores) {
    if (preds.size() != scores.size())
        throw Error(ErrorCode::LengthMismatch, kModule,
                    std::to_string(preds.size()) + " predictions vs " + std::to_string(scores.size()) + " scores");
    if (preds.empty()) throw Error(ErrorCode::EmptyInput, kModule, "accuracy of an empty set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (std::abs(static_cast<double>(preds[i] - scores[i])) <= 0.01 * static_cast<double>(scores[i])) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

// --- learners ------------------------------------------------------------------

std::string_view display_name(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::Linear: return "Linear";
        case LearnerKind::Lasso: return "LASSO";
        case LearnerKind::GbtExact: return "XGBoost";
        case LearnerKind::GbtHist: return "LightGBM";
    }
    return "?";
}

learners::TrainedModel fit_learner(const LearnerSpec& spec, const FeatureMatrix& x, const Eigen::VectorXd& y) {
    switch (spec.kind) {
        case LearnerKind::Linear: return learners::fit_linear(x, y);
        case LearnerKind::GbtExact: return learners::fit_gbt_exact(x, y, spec.gbt);
        case LearnerKind::GbtHist: return learners::fit_gbt_hist(x, y, spec.gbt, spec.hist);
        case LearnerKind::Lasso: break;
    }
    double lambda = 0.0;
    if (spec.lambda) {
        lambda = *spec.lambda;
    } else {
        const auto grid = learners::lasso_lambda_grid(x, y, spec.lambda_points, spec.lambda_ratio);
        const int k = std::min<int>(spec.lambda_folds, static_cast<int>(x.n_rows()));
        const auto folds = kfold(x.row_ids, k, spec.lambda_seed);
        lambda = learners::select_lasso_lambda(x, y, folds, grid, spec.lasso).lambda;
    }
    return learners::fit_lasso(x, y, lambda, spec.lasso);
}

CvResult cross_validate(const LearnerSpec& spec, const FeatureMatrix& train, const FoldAssignment& folds) {
    if (folds.fold.size() != static_cast<std::size_t>(train.n_rows()))
        throw Error(ErrorCode::LengthMismatch, kModule, "fold assignment does not cover the training rows");
    const Eigen::VectorXd y = train.target_vector();

    CvResult out;
    out.oof_predictions = Eigen::VectorXd::Zero(train.n_rows());
    for (int f = 0; f < folds.k; ++f) {
        const auto fit_rows = folds.training_positions(f);
        const auto valid_rows = folds.validation_positions(f);
        if (fit_rows.empty() || valid_rows.empty()) throw Error(ErrorCode::TooFewRecords, kModule, "empty fold");
        const auto x_fit = train.select_rows(fit_rows);
        const auto x_valid = train.select_rows(valid_rows);
        const auto model = fit_learner(spec, x_fit, x_fit.target_vector());
        const Eigen::VectorXd raw = learners::predict(model, x_valid);
        for (std::size_t i = 0; i < valid_rows.size(); ++i)
            out.oof_predictions(static_cast<Eigen::Index>(valid_rows[i])) = raw(static_cast<Eigen::Index>(i));
        out.fold_accuracy.push_back(accuracy(round_predictions(raw), *x_valid.targets));
    }
    out.mean_accuracy = std::accumulate(out.fold_accuracy.begin(), out.fold_accuracy.end(), 0.0) /
                        static_cast<double>(out.fold_accuracy.size());
    out.model = fit_learner(spec, train, y);
    return out;
}

// --- reports -----------------------------------------------------------------

AccuracyReport comparison_report(const std::vector<NamedPredictions>& models, const std::vector<MovieRecord>& test) {
    if (test.empty()) throw Error(ErrorCode::EmptyInput, kModule, "comparison report on an empty test set");
    std::vector<int> scores;
    for (const auto& r : test) {
        if (!r.label) throw Error(ErrorCode::UnlabeledRecord, kModule, "test record " + std::to_string(r.id) + " has no label");
        scores.push_back(*r.label);
    }

    AccuracyReport report;
    report.n_test = test.size();
    for (const auto& m : models) {
        report.models.push_back(m.name);
        report.accuracy.push_back(accuracy(m.predictions, scores));
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
        ComparisonRow row;
        row.id = test[i].id;
        row.film = test[i].film.value_or("");
        row.expert_score = scores[i];
        for (const auto& m : models) row.predictions.push_back(m.predictions[i]);
        report.rows.push_back(std::move(row));
    }
    return report;
}

AccuracyReport comparison_report(const std::vector<NamedModel>& models, const FeatureMatrix& x,
                                 const std::vector<MovieRecord>& test) {
    std::vector<NamedPredictions> named;
    for (const auto& m : models) named.push_back({m.name, round_predictions(learners::predict(*m.model, x))});
    return comparison_report(named, test);
}

std::string AccuracyReport::render() const {
    std::string out;
    if (!config_hash.empty()) out += "# config_hash: " + config_hash + "\n";
    out += "Test-set accuracy (n_test = " + std::to_string(n_test) + ")\n";
    std::size_t width = std::string("algorithm").size();
    for (const auto& m : models) width = std::max(width, m.size());
    width += 2;
    out += pad("algorithm", width) + "Accuracy\n";
    for (std::size_t i = 0; i < models.size(); ++i) out += pad(models[i], width) + percent(accuracy[i]) + "\n";

    out += "\nPer-film predictions\n";
    std::size_t film_width = std::string("movie").size();
    for (const auto& r : rows) film_width = std::max(film_width, r.film.size());
    film_width += 2;
    out += pad("movie", film_width) + pad("Experts' score", 16);
    for (const auto& m : models) out += pad(m, std::max<std::size_t>(m.size() + 2, 10));
    while (out.back() == ' ') out.pop_back();
    out += "\n";
    for (const auto& r : rows) {
        out += pad(r.film, film_width) + pad(std::to_string(r.expert_score), 16);
        for (std::size_t j = 0; j < models.size(); ++j)
            out += pad(std::to_string(r.predictions[j]), std::max<std::size_t>(models[j].size() + 2, 10));
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += "\n";
    }
    return out;
}

nlohmann::json AccuracyReport::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["n_test"] = n_test;
    auto& acc = j["accuracy"] = nlohmann::json::array();
    for (std::size_t i = 0; i < models.size(); ++i) acc.push_back({{"model", models[i]}, {"accuracy", accuracy[i]}});
    auto& rs = j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row{{"id", r.id}, {"film", r.film}, {"expert_score", r.expert_score}};
        for (std::size_t k = 0; k < models.size(); ++k) row["predictions"][models[k]] = r.predictions[k];
        rs.push_back(std::move(row));
    }
    return j;
}

DistributionReport distribution_report(const std::vector<MovieRecord>& records) {
    if (records.empty()) throw Error(ErrorCode::EmptyInput, kModule, "distribution report on no records");
    DistributionReport out;
    out.histogram.assign(static_cast<std::size_t>(kMaxLabel) + 1, 0);
    double sum = 0.0;
    for (const auto& r : records) {
        if (!r.label) throw Error(ErrorCode::UnlabeledRecord, kModule, "record " + std::to_string(r.id) + " has no label");
        const int label = std::clamp(*r.label, 0, kMaxLabel);
        ++out.histogram[static_cast<std::size_t>(label)];
        sum += label;
        out.max = std::max(out.max, label);
    }
    out.n = records.size();
    out.zero_share = static_cast<double>(out.histogram[0]) / static_cast<double>(out.n);
    out.mean = sum / static_cast<double>(out.n);
    return out;
}

std::string DistributionReport::render() const {
    std::string out = "Merchandising evaluation results (" + std::to_string(n) + " films)\n";
    const std::size_t peak = *std::max_element(histogram.begin(), histogram.end());
    for (std::size_t label = 0; label < histogram.size(); ++label) {
        if (histogram[label] == 0) continue;
        char head[32];
        std::snprintf(head, sizeof head, "%2zu | %4zu ", label, histogram[label]);
        const std::size_t bar = peak ? (histogram[label] * 50 + peak - 1) / peak : 0;
        out += head + std::string(bar, '#') + "\n";
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "zero share: %s\nmean: %.3f\nmax: %d\n", percent(zero_share).c_str(), mean, max);
    return out + buf;
}

nlohmann::json DistributionReport::to_json() const {
    return {{"n", n}, {"histogram", histogram}, {"zero_share", zero_share}, {"mean", mean}, {"max", max}};
}

}  // namespace merchcast::evaluation
