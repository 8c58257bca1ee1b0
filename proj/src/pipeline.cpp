#include "merchcast/pipeline.hpp"

#include "merchcast/error.hpp"

#include "text_util.hpp"

#include <fstream>
#include <sstream>

namespace merchcast::pipeline {

namespace {

constexpr std::string_view kModule = "pipeline";

using evaluation::LearnerKind;

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Write-then-rename so a crashed run never leaves half an artifact.
fs::path write_file(const fs::path& path, const std::string& content) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, kModule, "cannot write " + path.string());
        out << content;
        if (!out.flush()) throw Error(ErrorCode::IoError, kModule, "short write to " + path.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, kModule, "cannot move " + tmp.string() + ": " + ec.message());
    return path;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, path.string() + ": " + e.what());
    }
}

std::string hash_line(const PipelineConfig& c) { return "config_hash: " + c.hash(); }

fs::path out_path(const PipelineConfig& c, const std::string& name) { return c.output_dir / name; }

/// --input if given, else the first existing default artifact.
fs::path stage_input(const PipelineConfig& c, std::initializer_list<const char*> defaults) {
    if (c.input) return *c.input;
    for (const char* name : defaults)
        if (fs::exists(out_path(c, name))) return out_path(c, name);
    throw Error(ErrorCode::UsageError, "cli",
                std::string("no --input given and no ") + *defaults.begin() + " in " + c.output_dir.string());
}

Eigen::VectorXd labels_of(const std::vector<MovieRecord>& records) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) y(static_cast<Eigen::Index>(i)) = *records[i].label;
    return y;
}

std::vector<int> int_labels(const FeatureMatrix& x) { return *x.targets; }

bool any_missing(const std::vector<MovieRecord>& records) {
    const auto report = null_report(records);
    for (const auto& col : report.columns)
        if (col.field != Field::Label && col.non_null_count != report.total_rows) return true;
    return false;
}

std::string render_cv(const TrainOutcome& t, const std::string& hash) {
    std::string out = "# " + std::string("config_hash: ") + hash + "\n";
    out += "Cross-validation accuracy (K = " + std::to_string(t.folds.k) + ", " + std::to_string(t.train.size()) +
           " training films)\n";
    for (auto kind : {LearnerKind::Linear, LearnerKind::GbtHist, LearnerKind::Lasso, LearnerKind::GbtExact}) {
        const auto& cv = t.cv.at(kind);
        std::string name(evaluation::display_name(kind));
        name.resize(std::max<std::size_t>(name.size(), 10), ' ');
        out += name;
        for (double a : cv.fold_accuracy) out += "  " + detail::format_fixed(a * 100.0, 2) + "%";
        out += "  mean " + detail::format_fixed(cv.mean_accuracy * 100.0, 2) + "%\n";
    }
    const auto& w = t.we.weights;
    out += "\nWeightedEnsemble weights (LightGBM, LASSO, XGBoost) = (" + detail::format_fixed(w.lightgbm, 2) + ", " +
           detail::format_fixed(w.lasso, 2) + ", " + detail::format_fixed(w.xgboost, 2) + ")\n";
    out += "out-of-fold accuracy " + detail::format_fixed(t.search.trace.best.accuracy * 100.0, 2) + "% over " +
           std::to_string(t.search.trace.points.size()) + " weight points (" +
           std::to_string(t.search.trace.grid_points) + " on the grid)\n";
    out += "LASSO lambda " + detail::format_fixed(t.we.lasso.lambda, 6) + "\n";
    return out;
}

nlohmann::json cv_json(const TrainOutcome& t, const std::string& hash) {
    nlohmann::json j{{"config_hash", hash}, {"k", t.folds.k}, {"n_train", t.train.size()}, {"n_test", t.test.size()}};
    for (auto kind : {LearnerKind::Linear, LearnerKind::GbtHist, LearnerKind::Lasso, LearnerKind::GbtExact}) {
        const auto& cv = t.cv.at(kind);
        j["learners"][std::string(evaluation::display_name(kind))] = {{"fold_accuracy", cv.fold_accuracy},
                                                                      {"mean_accuracy", cv.mean_accuracy}};
    }
    return j;
}

nlohmann::json search_json(const ensemble::SearchResult& s, const std::string& hash) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : s.trace.points)
        points.push_back({p.weights.lightgbm, p.weights.lasso, p.weights.xgboost, p.accuracy});
    const auto& b = s.trace.best;
    return {{"config_hash", hash},
            {"step", s.trace.step},
            {"grid_points", s.trace.grid_points},
            {"restarts", s.trace.restarts},
            {"best", {{"weights", {b.weights.lightgbm, b.weights.lasso, b.weights.xgboost}}, {"accuracy", b.accuracy}}},
            {"points_columns", {"lightgbm", "lasso", "xgboost", "accuracy"}},
            {"points", points}};
}

}  // namespace

std::vector<MovieRecord> read_records(const fs::path& path, const std::string& format) {
    DataFormat fmt = DataFormat::Csv;
    if (format == "jsonl") fmt = DataFormat::Jsonl;
    else if (format == "auto") {
        const auto guessed = format_from_path(path);
        if (!guessed) throw Error(ErrorCode::UsageError, "cli", "cannot tell the format of " + path.string() + "; set dataset.format");
        fmt = *guessed;
    }
    return parse_dataset(path, fmt);
}

// --- in-memory stages --------------------------------------------------------

std::vector<MovieRecord> synthesize(const PipelineConfig& c) {
    auto records = generate_synthetic(c.synth_n, c.synth_seed);
    if (c.synth_missing) records = inject_missing(std::move(records), c.synth_seed);
    return records;
}

LabelOutcome simulate_labels(std::vector<MovieRecord> records, const PipelineConfig& c) {
    std::vector<std::string> experts;
    for (std::size_t e = 1; e <= c.delphi_experts; ++e) {
        char name[32];
        std::snprintf(name, sizeof name, "expert_%02zu", e);
        experts.emplace_back(name);
    }
    std::vector<std::int64_t> samples;
    std::map<std::int64_t, double> latent;
    for (const auto& r : records) {
        if (!r.label)
            throw Error(ErrorCode::UnlabeledRecord, kModule,
                        "record " + std::to_string(r.id) + " has no prior score for the simulated panel to centre on");
        samples.push_back(r.id);
        latent[r.id] = *r.label;
    }
    LabelOutcome out{delphi::Session::open(std::move(experts), samples, c.delphi_epsilon, c.delphi_max_rounds), {}, {}};
    out.report = delphi::simulate_experts(out.session, c.delphi_profile, latent, c.delphi_seed);
    std::map<std::int64_t, int> labels;
    for (const auto& e : out.session.export_labels()) labels[e.sample_id] = e.label;
    apply_labels(records, labels);
    out.records = std::move(records);
    return out;
}

TrainOutcome train_models(std::vector<MovieRecord> labeled, const PipelineConfig& c) {
    for (const auto& r : labeled)
        if (!r.label) throw Error(ErrorCode::UnlabeledRecord, kModule, "record " + std::to_string(r.id) + " has no label");
    labeled = impute(std::move(labeled), c.impute);

    TrainOutcome t;
    const auto split = evaluation::stratified_split(labeled, c.split);
    for (auto i : split.train) t.train.push_back(labeled[i]);
    for (auto i : split.test) t.test.push_back(labeled[i]);

    const auto encoder = fit_encoder(t.train, c.encoder);
    const auto x = encode(t.train, encoder);
    const Eigen::VectorXd y = labels_of(t.train);
    t.folds = evaluation::kfold(x.row_ids, c.cv_k, c.cv_seed);

    auto lasso = c.lasso;
    if (!lasso.lambda) {
        const auto grid = learners::lasso_lambda_grid(x, y, lasso.lambda_points, lasso.lambda_ratio);
        lasso.lambda = learners::select_lasso_lambda(x, y, t.folds, grid, lasso.lasso).lambda;
    }

    for (const evaluation::LearnerSpec* spec : {&c.linear, &c.lightgbm, static_cast<const evaluation::LearnerSpec*>(&lasso), &c.xgboost})
        t.cv.emplace(spec->kind, evaluation::cross_validate(*spec, x, t.folds));

    t.linear = std::get<learners::LinearModel>(t.cv.at(LearnerKind::Linear).model);
    const ensemble::ComponentPredictions oof{t.cv.at(LearnerKind::GbtHist).oof_predictions,
                                             t.cv.at(LearnerKind::Lasso).oof_predictions,
                                             t.cv.at(LearnerKind::GbtExact).oof_predictions};
    t.search = ensemble::search_weights(oof, int_labels(x), c.search);

    t.we.encoder = encoder;
    t.we.lightgbm = std::get<learners::GbtModel>(t.cv.at(LearnerKind::GbtHist).model);
    t.we.lasso = std::get<learners::LassoModel>(t.cv.at(LearnerKind::Lasso).model);
    t.we.xgboost = std::get<learners::GbtModel>(t.cv.at(LearnerKind::GbtExact).model);
    t.we.weights = t.search.weights;
    t.we.validation_accuracy = t.search.trace.best.accuracy;
    t.we.config_hash = c.hash();
    return t;
}

evaluation::AccuracyReport evaluate_models(const learners::LinearModel& linear, const ensemble::WeModel& we,
                                           const std::vector<MovieRecord>& test) {
    const auto x = encode(test, we.encoder);
    const auto parts = ensemble::component_predictions(we, x);
    using evaluation::round_predictions;
    return evaluation::comparison_report(
        {{"Linear", round_predictions(learners::predict(linear, x))},
         {"LightGBM", round_predictions(parts.lightgbm)},
         {"LASSO", round_predictions(parts.lasso)},
         {"XGBoost", round_predictions(parts.xgboost)},
         {"WeightedEnsemble", round_predictions(ensemble::combine(parts, we.weights))}},
        test);
}

ValidationSummary validation_summary(const TrainOutcome& t) {
    std::vector<int> scores;
    for (const auto& r : t.train) scores.push_back(*r.label);
    auto acc = [&](LearnerKind k) {
        return evaluation::accuracy(evaluation::round_predictions(t.cv.at(k).oof_predictions), scores);
    };
    return {acc(LearnerKind::GbtHist), acc(LearnerKind::Lasso), acc(LearnerKind::GbtExact), acc(LearnerKind::Linear),
            t.search.trace.best.accuracy};
}

// --- file stages -------------------------------------------------------------

StageResult stage_synth(const PipelineConfig& c) {
    const auto records = synthesize(c);
    StageResult r;
    r.written.push_back(write_file(out_path(c, "records.csv"), write_csv(records, {hash_line(c)})));
    r.summary = "synthesized " + std::to_string(records.size()) + " films";
    return r;
}

StageResult stage_ingest(const PipelineConfig& c) {
    if (!c.input) throw Error(ErrorCode::UsageError, "cli", "ingest needs --input");
    const auto records = read_records(*c.input, c.format);
    StageResult r;
    r.written.push_back(write_file(out_path(c, "records.csv"), write_csv(records, {hash_line(c)})));
    r.summary = "ingested " + std::to_string(records.size()) + " films";
    return r;
}

StageResult stage_nulls(const PipelineConfig& c) {
    const auto path = stage_input(c, {"records.csv"});
    const auto report = null_report(read_records(path, c.format));
    StageResult r;
    r.written.push_back(write_file(out_path(c, "null_report.txt"), "# " + hash_line(c) + "\n" + report.render()));
    r.summary = report.render();
    return r;
}

StageResult stage_label_simulate(const PipelineConfig& c) {
    const auto path = stage_input(c, {"records.csv"});
    auto outcome = simulate_labels(read_records(path, c.format), c);
    const std::string hash = "# " + hash_line(c) + "\n";

    std::string report = hash;
    report += "Delphi simulation: " + std::to_string(c.delphi_experts) + " experts, " +
              std::to_string(outcome.session.samples().size()) + " films, epsilon " +
              detail::format_fixed(c.delphi_epsilon, 2) + "\n";
    report += "rounds run: " + std::to_string(outcome.report.rounds_run) + "\n";
    for (const auto& [round, count] : outcome.report.rounds_to_convergence)
        report += "round " + std::to_string(round) + ": " + std::to_string(count) + " labeled\n";
    report += "forced at the round cap: " + std::to_string(outcome.report.forced) + "\n";

    StageResult r;
    r.written.push_back(write_file(out_path(c, "labels.csv"), hash + delphi::labels_to_csv(outcome.session.export_labels())));
    r.written.push_back(write_file(out_path(c, "labeled.csv"), write_csv(outcome.records, {hash_line(c)})));
    auto session = outcome.session.to_json();
    session["config_hash"] = c.hash();
    r.written.push_back(write_file(out_path(c, "delphi_session.json"), dump(session)));
    r.written.push_back(write_file(out_path(c, "delphi_report.txt"), report));
    r.summary = report.substr(hash.size());
    return r;
}

StageResult stage_train(const PipelineConfig& c) {
    const auto path = stage_input(c, {"labeled.csv", "records.csv"});
    const auto t = train_models(read_records(path, c.format), c);
    const auto hash = c.hash();

    StageResult r;
    r.written.push_back(write_file(out_path(c, "train.csv"), write_csv(t.train, {hash_line(c)})));
    r.written.push_back(write_file(out_path(c, "test.csv"), write_csv(t.test, {hash_line(c)})));
    auto linear = learners::model_to_json(t.linear);
    linear["config_hash"] = hash;
    r.written.push_back(write_file(out_path(c, "models/linear.json"), dump(linear)));
    for (auto [name, kind] : {std::pair{"lightgbm", LearnerKind::GbtHist}, std::pair{"lasso", LearnerKind::Lasso},
                              std::pair{"xgboost", LearnerKind::GbtExact}}) {
        auto doc = learners::model_to_json(t.cv.at(kind).model);
        doc["config_hash"] = hash;
        r.written.push_back(write_file(out_path(c, std::string("models/") + name + ".json"), dump(doc)));
    }
    r.written.push_back(write_file(out_path(c, "models/we.json"), dump(ensemble::we_model_to_json(t.we))));
    r.written.push_back(write_file(out_path(c, "cv_report.txt"), render_cv(t, hash)));
    r.written.push_back(write_file(out_path(c, "cv_report.json"), dump(cv_json(t, hash))));
    r.written.push_back(write_file(out_path(c, "weight_search.json"), dump(search_json(t.search, hash))));
    r.summary = render_cv(t, hash);
    return r;
}

StageResult stage_evaluate(const PipelineConfig& c) {
    const auto test_path = c.input ? *c.input : out_path(c, "test.csv");
    const auto test = read_records(test_path, c.input ? c.format : "csv");
    const auto linear_doc = read_json(out_path(c, "models/linear.json"));
    const auto linear = learners::model_from_json(linear_doc);
    if (!std::holds_alternative<learners::LinearModel>(linear))
        throw Error(ErrorCode::ParseError, kModule, "models/linear.json is not a linear model");
    const auto we = ensemble::we_model_from_json(read_json(out_path(c, "models/we.json")));

    auto report = evaluate_models(std::get<learners::LinearModel>(linear), we, test);
    report.config_hash = c.hash();
    StageResult r;
    r.written.push_back(write_file(out_path(c, "report.txt"), report.render()));
    r.written.push_back(write_file(out_path(c, "report.json"), dump(report.to_json())));
    r.summary = report.render();
    return r;
}

StageResult stage_predict(const PipelineConfig& c, const fs::path& model) {
    if (!c.input) throw Error(ErrorCode::UsageError, "cli", "predict needs --input");
    const auto we = ensemble::we_model_from_json(read_json(model));
    auto records = read_records(*c.input, c.format);
    if (any_missing(records)) records = impute(std::move(records), c.impute);
    const auto preds = ensemble::we_predict(we, encode(records, we.encoder));

    std::string csv = "# " + hash_line(c) + "\n# model_config_hash: " + we.config_hash + "\nid,film,predicted_score\n";
    for (std::size_t i = 0; i < records.size(); ++i)
        csv += std::to_string(records[i].id) + "," + detail::csv_escape(records[i].film.value_or("")) + "," +
               std::to_string(preds[i]) + "\n";
    StageResult r;
    r.written.push_back(write_file(out_path(c, "predictions.csv"), csv));
    r.summary = "predicted " + std::to_string(records.size()) + " films";
    return r;
}

StageResult stage_report(const PipelineConfig& c) {
    const auto path = stage_input(c, {"labeled.csv", "records.csv"});
    const auto report = evaluation::distribution_report(read_records(path, c.format));
    auto json = report.to_json();
    json["config_hash"] = c.hash();
    StageResult r;
    r.written.push_back(write_file(out_path(c, "distribution.txt"), "# " + hash_line(c) + "\n" + report.render()));
    r.written.push_back(write_file(out_path(c, "distribution.json"), dump(json)));
    r.summary = report.render();
    return r;
}

}  // namespace merchcast::pipeline
