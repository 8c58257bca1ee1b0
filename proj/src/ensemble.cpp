#include "merchcast/ensemble.hpp"

#include "merchcast/error.hpp"
#include "merchcast/evaluation.hpp"

#include <array>
#include <cmath>
#include <random>
#include <set>

namespace merchcast::ensemble {

namespace {

constexpr std::string_view kModule = "ensemble";
constexpr int kSchemaVersion = 1;
constexpr int kRefineFactor = 5;

using Lattice = std::array<int, 3>;  // (i, j, k) with i + j + k = m

EnsembleWeights on_lattice(const Lattice& p, int m) {
    const double md = m;
    return {p[0] / md, p[1] / md, p[2] / md};
}

struct Searcher {
    const ComponentPredictions& val;
    std::span<const int> scores;
    int m;  // refinement lattice resolution
    WeightSearchTrace& trace;
    std::set<Lattice> seen;
    Lattice best{};
    double best_accuracy = -1.0;

    double evaluate(const Lattice& p) {
        const auto w = on_lattice(p, m);
        const double acc = evaluation::accuracy(evaluation::round_predictions(combine(val, w)), scores);
        if (seen.insert(p).second) trace.points.push_back({w, acc});
        if (acc > best_accuracy || (acc == best_accuracy && p < best)) {
            best_accuracy = acc;
            best = p;
        }
        return acc;
    }

    // Steepest-ascent moves of one lattice unit between two coordinates.
    void climb(Lattice p) {
        double current = evaluate(p);
        for (;;) {
            Lattice next = p;
            double next_acc = current;
            for (int from = 0; from < 3; ++from)
                for (int to = 0; to < 3; ++to) {
                    if (from == to || p[static_cast<std::size_t>(from)] == 0) continue;
                    Lattice q = p;
                    --q[static_cast<std::size_t>(from)];
                    ++q[static_cast<std::size_t>(to)];
                    const double acc = evaluate(q);
                    if (acc > next_acc) {
                        next_acc = acc;
                        next = q;
                    }
                }
            if (next == p) return;
            p = next;
            current = next_acc;
        }
    }
};

void check_length(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
    if (a.size() != b.size() || a.size() != c.size())
        throw Error(ErrorCode::LengthMismatch, kModule,
                    "component lengths " + std::to_string(a.size()) + ", " + std::to_string(b.size()) + ", " +
                        std::to_string(c.size()));
}

nlohmann::json weights_to_json(const EnsembleWeights& w) {
    return {{"lightgbm", w.lightgbm}, {"lasso", w.lasso}, {"xgboost", w.xgboost}};
}

}  // namespace

void validate(const EnsembleWeights& w) {
    for (double a : {w.lightgbm, w.lasso, w.xgboost})
        if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidWeights, kModule, "weight outside [0,1]");
    const double sum = w.lightgbm + w.lasso + w.xgboost;
    if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorCode::InvalidWeights, kModule, "weights sum to " + std::to_string(sum));
}

Eigen::VectorXd combine(const Eigen::VectorXd& lightgbm, const Eigen::VectorXd& lasso, const Eigen::VectorXd& xgboost,
                        const EnsembleWeights& w) {
    check_length(lightgbm, lasso, xgboost);
    validate(w);
    return w.lightgbm * lightgbm + w.lasso * lasso + w.xgboost * xgboost;
}

Eigen::VectorXd combine(const ComponentPredictions& p, const EnsembleWeights& w) {
    return combine(p.lightgbm, p.lasso, p.xgboost, w);
}

SearchResult search_weights(const ComponentPredictions& validation, std::span<const int> scores,
                            const SearchOptions& options) {
    if (!(options.step > 0.0 && options.step <= 1.0))
        throw Error(ErrorCode::InvalidStep, kModule, "step must be in (0,1]");
    const double inverse = 1.0 / options.step;
    const int m = static_cast<int>(std::lround(inverse));
    if (std::abs(inverse - m) > 1e-9) throw Error(ErrorCode::InvalidStep, kModule, "step does not divide 1 evenly");
    if (options.restarts < 0) throw Error(ErrorCode::InvalidParams, kModule, "restarts must be >= 0");
    check_length(validation.lightgbm, validation.lasso, validation.xgboost);
    if (static_cast<std::size_t>(validation.lightgbm.size()) != scores.size())
        throw Error(ErrorCode::LengthMismatch, kModule, "predictions and scores differ in length");

    SearchResult out;
    auto& trace = out.trace;
    trace.step = options.step;
    const int fine = options.refine ? m * kRefineFactor : m;
    const int scale = fine / m;
    Searcher searcher{validation, scores, fine, trace, {}, {}, -1.0};

    for (int i = 0; i <= m; ++i)
        for (int j = 0; i + j <= m; ++j) searcher.evaluate({i * scale, j * scale, (m - i - j) * scale});
    trace.grid_points = trace.points.size();

    if (options.refine) {
        const Lattice grid_best = searcher.best;
        searcher.climb(grid_best);
        std::mt19937_64 rng(options.seed);
        std::uniform_int_distribution<int> cut(0, fine + 1);
        for (int r = 0; r < options.restarts; ++r) {
            // Uniform point on the lattice via two sorted cuts of [0, fine + 2).
            int a = cut(rng);
            int b = cut(rng);
            while (b == a) b = cut(rng);
            if (a > b) std::swap(a, b);
            searcher.climb({a, b - a - 1, fine + 1 - b});
        }
        trace.restarts = options.restarts;
    }

    out.weights = on_lattice(searcher.best, fine);
    trace.best = {out.weights, searcher.best_accuracy};
    validate(out.weights);
    return out;
}

ComponentPredictions component_predictions(const WeModel& model, const FeatureMatrix& x) {
    return {learners::predict(model.lightgbm, x), learners::predict(model.lasso, x), learners::predict(model.xgboost, x)};
}

std::vector<int> we_predict(const WeModel& model, const FeatureMatrix& x) {
    return evaluation::round_predictions(combine(component_predictions(model, x), model.weights));
}

nlohmann::json we_model_to_json(const WeModel& model) {
    return {{"schema_version", kSchemaVersion},
            {"kind", "weighted_ensemble"},
            {"config_hash", model.config_hash},
            {"weights", weights_to_json(model.weights)},
            {"validation_accuracy", model.validation_accuracy},
            {"encoder", encoder_to_json(model.encoder)},
            {"components",
             {{"lightgbm", learners::model_to_json(model.lightgbm)},
              {"lasso", learners::model_to_json(model.lasso)},
              {"xgboost", learners::model_to_json(model.xgboost)}}}};
}

WeModel we_model_from_json(const nlohmann::json& document) {
    try {
        if (document.at("schema_version").get<int>() != kSchemaVersion)
            throw Error(ErrorCode::ParseError, kModule, "unsupported WE model schema_version");
        if (document.at("kind").get<std::string>() != "weighted_ensemble")
            throw Error(ErrorCode::ParseError, kModule, "document is not a weighted_ensemble model");
        WeModel m;
        m.config_hash = document.value("config_hash", "");
        const auto& w = document.at("weights");
        m.weights = {w.at("lightgbm").get<double>(), w.at("lasso").get<double>(), w.at("xgboost").get<double>()};
        validate(m.weights);
        m.validation_accuracy = document.value("validation_accuracy", 0.0);
        m.encoder = encoder_from_json(document.at("encoder"));
        const auto& c = document.at("components");
        auto as_gbt = [](const learners::TrainedModel& t, learners::GbtMode mode, const char* name) {
            const auto* g = std::get_if<learners::GbtModel>(&t);
            if (!g || g->mode != mode)
                throw Error(ErrorCode::ParseError, kModule, std::string("component ") + name + " has the wrong kind");
            return *g;
        };
        m.lightgbm = as_gbt(learners::model_from_json(c.at("lightgbm")), learners::GbtMode::Histogram, "lightgbm");
        m.xgboost = as_gbt(learners::model_from_json(c.at("xgboost")), learners::GbtMode::Exact, "xgboost");
        const auto lasso = learners::model_from_json(c.at("lasso"));
        if (!std::holds_alternative<learners::LassoModel>(lasso))
            throw Error(ErrorCode::ParseError, kModule, "component lasso has the wrong kind");
        m.lasso = std::get<learners::LassoModel>(lasso);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, e.what());
    }
}

}  // namespace merchcast::ensemble
