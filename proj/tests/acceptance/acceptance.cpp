// Acceptance gate: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is nonzero when any binding criterion fails.

#include "merchcast/delphi.hpp"
#include "merchcast/ensemble.hpp"
#include "merchcast/evaluation.hpp"
#include "merchcast/learners.hpp"
#include "merchcast/pipeline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

using namespace merchcast;
namespace fs = std::filesystem;

namespace {

constexpr double kLassoOlsTol = 1e-6;
constexpr double kHistExactTol = 1e-9;
constexpr double kOlsGradTol = 1e-8;
constexpr double kKktTol = 1e-6;
constexpr double kMonotoneSlack = 1e-12;
constexpr double kSigmaTol = 1e-12;
constexpr double kOracleBudgetSeconds = 30.0;
constexpr double kPipelineBudgetSeconds = 60.0;

struct Gate {
    int failed = 0;

    void report(const char* name, bool pass, const std::string& detail, bool binding = true) {
        std::printf("%s  %-24s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
        std::fflush(stdout);
        if (!pass && binding) ++failed;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

RowMatrix gaussian(std::mt19937_64& rng, int n, int p) {
    std::normal_distribution<double> z;
    RowMatrix x(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = z(rng);
    return x;
}

Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> z;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = z(rng);
    return v;
}

// Small integer levels, so 256 bins hold every distinct value.
FeatureMatrix discrete(std::mt19937_64& rng, int n, int p, Eigen::VectorXd& y) {
    std::uniform_int_distribution<int> level(0, 15);
    std::normal_distribution<double> z;
    RowMatrix x(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = level(rng);
    y.resize(n);
    for (int i = 0; i < n; ++i) y[i] = 0.7 * x(i, 0) - 0.4 * x(i, 1) + (x(i, 2) > 7 ? 2.5 : 0.0) + z(rng);
    return make_feature_matrix(x);
}

learners::HistParams plain_hist() {
    learners::HistParams h;
    h.goss.enabled = false;
    h.efb = false;
    return h;
}

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).lpNorm<Eigen::Infinity>(); }

// --- criteria ----------------------------------------------------------------

void oracle_equivalences(Gate& gate) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);

    double lasso_gap = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto x = make_feature_matrix(gaussian(rng, 30, 4));
        const Eigen::VectorXd y = gaussian_vector(rng, 30);
        const auto ols = learners::fit_linear(x, y);
        const auto lasso = learners::fit_lasso(x, y, 0.0);
        lasso_gap = std::max({lasso_gap, max_abs_diff(lasso.coefficients, ols.coefficients),
                              std::abs(lasso.intercept - ols.intercept)});
    }

    double hist_gap = 0.0;
    for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd y;
        const auto x = discrete(rng, 120, 5, y);
        hist_gap = std::max(hist_gap, max_abs_diff(learners::predict(learners::fit_gbt_exact(x, y), x),
                                                   learners::predict(learners::fit_gbt_hist(x, y, {}, plain_hist()), x)));
    }

    double goss_gap = 0.0;
    for (int k = 0; k < 5; ++k) {
        Eigen::VectorXd y;
        const auto x = discrete(rng, 150, 5, y);
        auto full = plain_hist();
        full.goss = {true, 1.0, 0.0};
        full.seed = static_cast<std::uint64_t>(k);
        goss_gap = std::max(goss_gap, max_abs_diff(learners::predict(learners::fit_gbt_hist(x, y, {}, plain_hist()), x),
                                                   learners::predict(learners::fit_gbt_hist(x, y, {}, full), x)));
    }

    double efb_gap = 0.0;
    for (int k = 0; k < 5; ++k) {
        const int n = 200;
        std::uniform_int_distribution<int> pick(0, 3);
        std::normal_distribution<double> z;
        RowMatrix x(n, 5);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            const int hot = pick(rng);  // columns 0..2 are mutually exclusive indicators
            for (int j = 0; j < 3; ++j) x(i, j) = hot == j ? 1.0 : 0.0;
            x(i, 3) = z(rng);
            x(i, 4) = std::round(2 * z(rng));
            y[i] = 3.0 * x(i, 0) - 2.0 * x(i, 1) + x(i, 2) + x(i, 3) + 0.2 * z(rng);
        }
        const auto fm = make_feature_matrix(x);
        auto on = plain_hist();
        on.efb = true;
        efb_gap = std::max(efb_gap, max_abs_diff(learners::predict(learners::fit_gbt_hist(fm, y, {}, plain_hist()), fm),
                                                 learners::predict(learners::fit_gbt_hist(fm, y, {}, on), fm)));
    }

    const double elapsed = seconds_since(t0);
    const bool pass = lasso_gap <= kLassoOlsTol && hist_gap <= kHistExactTol && goss_gap == 0.0 &&
                      efb_gap <= kHistExactTol && elapsed < kOracleBudgetSeconds;
    gate.report("oracle_equivalences", pass,
                fmt("lasso-ols %.2e (<=%.0e), hist-exact %.2e (<=%.0e), goss %.2e, efb %.2e, %.1fs (<%.0fs)",
                    lasso_gap, kLassoOlsTol, hist_gap, kHistExactTol, goss_gap, efb_gap, elapsed,
                    kOracleBudgetSeconds));
}

void optimality_certificates(Gate& gate) {
    std::mt19937_64 rng(202);
    double worst_grad = 0.0;
    for (int k = 0; k < 20; ++k) {
        const RowMatrix x = gaussian(rng, 50, 5);
        const Eigen::VectorXd y = gaussian_vector(rng, 50);
        const auto m = learners::fit_linear(make_feature_matrix(x), y);
        // Central finite differences of the training MSE.
        auto loss = [&](double b0, const Eigen::VectorXd& b) {
            return ((x * b).array() + b0 - y.array()).matrix().squaredNorm() / 50.0;
        };
        const double h = 1e-6;
        Eigen::VectorXd g(6);
        g[0] = (loss(m.intercept + h, m.coefficients) - loss(m.intercept - h, m.coefficients)) / (2 * h);
        for (int j = 0; j < 5; ++j) {
            Eigen::VectorXd up = m.coefficients, down = m.coefficients;
            up[j] += h;
            down[j] -= h;
            g[j + 1] = (loss(m.intercept, up) - loss(m.intercept, down)) / (2 * h);
        }
        worst_grad = std::max(worst_grad, g.norm());
    }

    double worst_kkt = 0.0;
    bool all_converged = true;
    for (int k = 0; k < 20; ++k) {
        const auto x = make_feature_matrix(gaussian(rng, 60, 8));
        const Eigen::VectorXd y = 1.5 * x.rows.col(0) - x.rows.col(5) + gaussian_vector(rng, 60);
        const double lambda = learners::lasso_lambda_max(x, y) * (0.02 + 0.04 * k);
        const auto m = learners::fit_lasso(x, y, lambda);
        all_converged = all_converged && m.converged;
        worst_kkt = std::max(worst_kkt, learners::lasso_kkt_violation(m, x, y));
    }
    gate.report("optimality_certificates", worst_grad < kOlsGradTol && worst_kkt <= kKktTol && all_converged,
                fmt("ols |grad| %.2e (<%.0e), lasso kkt %.2e (<=%.0e) over 20+20 instances", worst_grad, kOlsGradTol,
                    worst_kkt, kKktTol));
}

void boosting_monotonicity(Gate& gate) {
    std::mt19937_64 rng(303);
    double worst_rise = -1e300;
    std::size_t steps = 0;
    for (int k = 0; k < 10; ++k) {
        const auto x = make_feature_matrix(gaussian(rng, 100, 5));
        const Eigen::VectorXd y =
            x.rows.col(0).array().square().matrix() + 0.5 * x.rows.col(1) + 0.3 * gaussian_vector(rng, 100);
        for (const auto& m : {learners::fit_gbt_exact(x, y), learners::fit_gbt_hist(x, y, {}, plain_hist())}) {
            steps += m.training_mse.size();
            if (m.training_mse.size() != 200) worst_rise = 1e300;
            for (std::size_t t = 1; t < m.training_mse.size(); ++t)
                worst_rise = std::max(worst_rise, m.training_mse[t] - m.training_mse[t - 1]);
        }
    }
    gate.report("boosting_monotonicity", worst_rise <= kMonotoneSlack,
                fmt("max step-to-step MSE change %.2e (<=%.0e) over %zu steps, 10 instances x {exact, histogram}",
                    worst_rise, kMonotoneSlack, steps));
}

void delphi_laws(Gate& gate) {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> total(0, 25);
    std::uniform_int_distribution<int> size(1, 50);
    double sigma_gap = 0.0;
    for (int k = 0; k < 10000; ++k) {
        std::vector<double> v(static_cast<std::size_t>(size(rng)));
        for (auto& t : v) t = total(rng);
        double mean = 0.0;
        for (double t : v) mean += t;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double t : v) ss += (t - mean) * (t - mean);
        sigma_gap = std::max(sigma_gap, std::abs(delphi::dispersion(v).sigma - std::sqrt(ss / static_cast<double>(v.size()))));
    }

    const auto config = pipeline::resolve({});
    const auto records = pipeline::synthesize(config);
    std::map<std::int64_t, double> latent;
    for (const auto& r : records) latent[r.id] = *r.label;
    const auto labeled = pipeline::simulate_labels(records, config);
    const auto& session = labeled.session;
    const auto& experts = session.experts();

    bool no_return = true;
    bool sound = true;
    bool anonymous = true;
    std::size_t payloads = 0;
    for (int r = 1; r <= session.current_round(); ++r) {
        for (auto id : session.open_samples(r)) {
            const auto label = session.final_label(id);
            if (!label || label->round_index < r) no_return = false;
        }
        for (const auto& res : session.results(r))
            if (res.converged && !(res.sigma < session.epsilon())) sound = false;
        for (const auto& e : experts) {
            ++payloads;
            if (!delphi::is_anonymous_feedback(delphi::feedback_to_json(session.feedback(r, e)), experts))
                anonymous = false;
        }
    }

    auto fast = delphi::Session::open(experts, session.samples());
    const auto quick = delphi::simulate_experts(fast, {1.0, 0.0, 3.0, 0.0}, latent, 7);
    const bool by_two = fast.complete() && quick.rounds_run <= 2 && quick.forced == 0;

    gate.report("delphi_laws", sigma_gap <= kSigmaTol && no_return && sound && anonymous && by_two,
                fmt("sigma gap %.1e (<=%.0e), no re-entry %s, converged=>sigma<eps %s, %zu anonymous payloads %s, "
                    "full contraction done by round %d",
                    sigma_gap, kSigmaTol, no_return ? "yes" : "no", sound ? "yes" : "no", payloads,
                    anonymous ? "yes" : "no", quick.rounds_run));
}

void split_cv_laws(Gate& gate) {
    const auto config = pipeline::resolve({});
    const auto labeled = pipeline::simulate_labels(pipeline::synthesize(config), config).records;
    std::vector<int> labels;
    for (const auto& r : labeled) labels.push_back(*r.label);

    const auto split = evaluation::stratified_split(labels, {0.2, 7});
    std::vector<int> rejoined;
    for (auto p : split.train) rejoined.push_back(labels[p]);
    for (auto p : split.test) rejoined.push_back(labels[p]);
    auto a = labels, b = rejoined;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const bool multiset = a == b && split.train.size() + split.test.size() == labels.size();

    std::map<int, std::size_t> stratum, tested;
    for (int l : labels) ++stratum[l];
    for (auto p : split.test) ++tested[labels[p]];
    double worst = 0.0;
    for (const auto& [label, s] : stratum)
        if (s >= 5) worst = std::max(worst, std::abs(static_cast<double>(tested[label]) - 0.2 * static_cast<double>(s)));

    std::vector<std::int64_t> ids(441);
    std::iota(ids.begin(), ids.end(), 1);
    const auto folds = evaluation::kfold(ids, 5, 7);
    auto sizes = folds.sizes();
    std::sort(sizes.rbegin(), sizes.rend());
    std::vector<int> cover(ids.size(), 0);
    for (int f = 0; f < 5; ++f)
        for (auto p : folds.validation_positions(f)) ++cover[p];
    const bool partition = std::all_of(cover.begin(), cover.end(), [](int c) { return c == 1; });
    const bool sizes_ok = sizes == std::vector<std::size_t>{89, 88, 88, 88, 88};

    gate.report("split_cv_laws", multiset && worst <= 1.0 && sizes_ok && partition,
                fmt("label multiset kept %s, worst stratum deviation %.2f (<=1), test n=%zu, folds %zu/%zu/%zu/%zu/%zu, "
                    "disjoint+covering %s",
                    multiset ? "yes" : "no", worst, split.test.size(), sizes[0], sizes[1], sizes[2], sizes[3], sizes[4],
                    partition ? "yes" : "no"));
}

void metric_law(Gate& gate) {
    std::mt19937_64 rng(505);
    std::uniform_int_distribution<int> score(0, 25);
    std::uniform_int_distribution<int> len(1, 300);
    int mismatches = 0;
    for (int k = 0; k < 1000; ++k) {
        const auto n = static_cast<std::size_t>(len(rng));
        std::vector<int> p(n), s(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = score(rng);
            p[i] = i % 2 ? s[i] : score(rng);
        }
        std::size_t equal = 0;
        for (std::size_t i = 0; i < n; ++i) equal += p[i] == s[i];
        if (evaluation::accuracy(p, s) != static_cast<double>(equal) / static_cast<double>(n)) ++mismatches;
    }
    gate.report("metric_law", mismatches == 0, fmt("%d mismatches against the equality oracle over 1000 vectors", mismatches));
}

struct PipelineRun {
    pipeline::TrainOutcome trained;
    pipeline::ValidationSummary validation;
    evaluation::AccuracyReport report;
};

PipelineRun full_pipeline(const pipeline::PipelineConfig& config) {
    auto labeled = pipeline::simulate_labels(pipeline::synthesize(config), config).records;
    PipelineRun run{pipeline::train_models(std::move(labeled), config), {}, {}};
    run.validation = pipeline::validation_summary(run.trained);
    run.report = pipeline::evaluate_models(run.trained.linear, run.trained.we, run.trained.test);
    return run;
}

void ensemble_dominance(Gate& gate) {
    const auto t0 = Clock::now();
    const auto run = full_pipeline(pipeline::resolve({{"seed", "7"}}));
    const double elapsed = seconds_since(t0);

    const auto& v = run.validation;
    const double best_single = std::max({v.lightgbm, v.lasso, v.xgboost});
    const auto& trace = run.trained.search.trace;
    const bool pass = v.weighted_ensemble >= best_single && trace.grid_points == 231 && trace.points.size() >= 231 &&
                      run.report.models.size() == 5 && elapsed < kPipelineBudgetSeconds;
    const auto& w = run.trained.we.weights;
    gate.report("ensemble_dominance", pass,
                fmt("WE validation %.2f%% >= best component %.2f%% (LightGBM %.2f, LASSO %.2f, XGBoost %.2f); "
                    "grid %zu points; weights (%.2f, %.2f, %.2f); end-to-end %.1fs (<%.0fs)",
                    100 * v.weighted_ensemble, 100 * best_single, 100 * v.lightgbm, 100 * v.lasso, 100 * v.xgboost,
                    trace.grid_points, w.lightgbm, w.lasso, w.xgboost, elapsed, kPipelineBudgetSeconds));
}

void tendency(Gate& gate) {
    int wins = 0;
    std::string detail;
    for (int seed = 1; seed <= 10; ++seed) {
        const auto run = full_pipeline(pipeline::resolve({{"seed", std::to_string(seed)}}));
        const auto& acc = run.report.accuracy;  // Linear, LightGBM, LASSO, XGBoost, WE
        const double best = *std::max_element(acc.begin(), acc.end() - 1);
        if (acc.back() >= best) ++wins;
        detail += fmt(" %d:%.1f/%.1f", seed, 100 * acc.back(), 100 * best);
    }
    gate.report("tendency", true,
                fmt("non-binding: WE test >= best single model on %d/10 seeds; seed:WE/best%%", wins) + detail, false);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void determinism(Gate& gate) {
    auto stages = [](const fs::path& dir) {
        fs::remove_all(dir);
        const auto c = pipeline::resolve({{"seed", "7"}, {"output_dir", dir.string()}});
        pipeline::stage_synth(c);
        pipeline::stage_label_simulate(c);
        pipeline::stage_train(c);
        pipeline::stage_evaluate(c);
        pipeline::stage_report(c);
        return c.hash();
    };
    const auto base = fs::temp_directory_path() / "merchcast_acceptance";
    const auto h1 = stages(base / "a");
    const auto h2 = stages(base / "b");

    std::size_t compared = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(base / "a")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), base / "a");
        ++compared;
        if (slurp(entry.path()) != slurp(base / "b" / rel)) ++differing;
    }
    fs::remove_all(base);
    gate.report("determinism", h1 == h2 && compared >= 10 && differing == 0,
                fmt("config hash %.12s..., %zu artifacts (models, reports, labels) compared, %zu differ", h1.c_str(), compared,
                    differing));
}

}  // namespace

int main() {
    Gate gate;
    oracle_equivalences(gate);
    optimality_certificates(gate);
    boosting_monotonicity(gate);
    delphi_laws(gate);
    split_cv_laws(gate);
    metric_law(gate);
    ensemble_dominance(gate);
    tendency(gate);
    determinism(gate);
    std::printf("%s: %d binding criteria failed\n", gate.failed ? "FAIL" : "PASS", gate.failed);
    return gate.failed ? 1 : 0;
}
