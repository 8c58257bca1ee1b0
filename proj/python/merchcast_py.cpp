// pybind11 bindings. Structured values cross the boundary as plain Python
// dicts and lists (the same JSON documents the CLI writes).

#include "merchcast/delphi.hpp"
#include "merchcast/ensemble.hpp"
#include "merchcast/error.hpp"
#include "merchcast/evaluation.hpp"
#include "merchcast/learners.hpp"
#include "merchcast/pipeline.hpp"
#include "merchcast/service.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace merchcast;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<MovieRecord> records_from_py(const py::list& items) {
    std::vector<MovieRecord> out;
    for (const auto& item : items) out.push_back(record_from_json(from_py(item)));
    return out;
}

py::list records_to_py(const std::vector<MovieRecord>& records) {
    py::list out;
    for (const auto& r : records) out.append(to_py(record_to_json(r)));
    return out;
}

pipeline::PipelineConfig config_from_py(const py::dict& values) {
    pipeline::ConfigValues text;
    for (const auto& [k, v] : values) text[py::str(k)] = py::str(v);
    return pipeline::resolve(text);
}

FeatureMatrix design(const RowMatrix& x) { return make_feature_matrix(x); }

py::dict train(const py::list& labeled, const py::dict& config) {
    const auto c = config_from_py(config);
    const auto t = pipeline::train_models(records_from_py(labeled), c);
    const auto v = pipeline::validation_summary(t);
    auto we = t.we;
    we.config_hash = c.hash();
    py::dict validation;
    validation["Linear"] = v.linear;
    validation["LightGBM"] = v.lightgbm;
    validation["LASSO"] = v.lasso;
    validation["XGBoost"] = v.xgboost;
    validation["WeightedEnsemble"] = v.weighted_ensemble;
    py::dict out;
    out["train"] = records_to_py(t.train);
    out["test"] = records_to_py(t.test);
    out["linear_model"] = to_py(learners::model_to_json(t.linear));
    out["we_model"] = to_py(ensemble::we_model_to_json(we));
    out["validation"] = validation;
    out["grid_points"] = t.search.trace.grid_points;
    out["config_hash"] = c.hash();
    return out;
}

py::dict evaluate(const py::dict& linear_model, const py::dict& we_model, const py::list& test) {
    const auto linear = learners::model_from_json(from_py(linear_model));
    if (!std::holds_alternative<learners::LinearModel>(linear))
        throw Error(ErrorCode::ParseError, "python", "linear_model is not a linear model document");
    const auto we = ensemble::we_model_from_json(from_py(we_model));
    auto report = pipeline::evaluate_models(std::get<learners::LinearModel>(linear), we, records_from_py(test));
    report.config_hash = we.config_hash;
    py::dict out = to_py(report.to_json());
    out["text"] = report.render();
    return out;
}

py::dict label(const py::list& records, const py::dict& config) {
    const auto outcome = pipeline::simulate_labels(records_from_py(records), config_from_py(config));
    py::dict by_round;
    for (const auto& [round, count] : outcome.report.rounds_to_convergence) by_round[py::int_(round)] = count;
    py::dict out;
    out["records"] = records_to_py(outcome.records);
    out["labels_csv"] = delphi::labels_to_csv(outcome.session.export_labels());
    out["rounds"] = outcome.report.rounds_run;
    out["converged_by_round"] = by_round;
    out["forced"] = outcome.report.forced;
    return out;
}

py::dict search(const Eigen::VectorXd& lightgbm, const Eigen::VectorXd& lasso, const Eigen::VectorXd& xgboost,
                const std::vector<int>& scores, double step, bool refine, int restarts, std::uint64_t seed) {
    const auto r = ensemble::search_weights({lightgbm, lasso, xgboost}, scores, {step, refine, restarts, seed});
    py::dict out;
    out["weights"] = py::make_tuple(r.weights.lightgbm, r.weights.lasso, r.weights.xgboost);
    out["accuracy"] = r.trace.best.accuracy;
    out["grid_points"] = r.trace.grid_points;
    out["evaluated"] = r.trace.points.size();
    return out;
}

py::dict fit(const std::string& kind, const RowMatrix& x, const Eigen::VectorXd& y, py::dict params) {
    const auto fm = design(x);
    auto num = [&](const char* key, double fallback) {
        return params.contains(key) ? params[key].cast<double>() : fallback;
    };
    learners::GbtParams gbt;
    gbt.n_trees = static_cast<int>(num("n_trees", gbt.n_trees));
    gbt.learning_rate = num("learning_rate", gbt.learning_rate);
    gbt.max_depth = static_cast<int>(num("max_depth", gbt.max_depth));
    gbt.lambda_reg = num("lambda_reg", gbt.lambda_reg);
    gbt.gamma_split = num("gamma_split", gbt.gamma_split);
    learners::TrainedModel model;
    if (kind == "linear") model = learners::fit_linear(fm, y);
    else if (kind == "lasso") model = learners::fit_lasso(fm, y, num("lambda", 0.0));
    else if (kind == "gbt_exact") model = learners::fit_gbt_exact(fm, y, gbt);
    else if (kind == "gbt_hist") {
        learners::HistParams hist;
        hist.max_bins = static_cast<int>(num("max_bins", hist.max_bins));
        hist.goss.enabled = num("goss", 1.0) != 0.0;
        hist.efb = num("efb", 1.0) != 0.0;
        hist.seed = static_cast<std::uint64_t>(num("seed", 0.0));
        model = learners::fit_gbt_hist(fm, y, gbt, hist);
    } else {
        throw Error(ErrorCode::InvalidParams, "python", "kind must be linear, lasso, gbt_exact or gbt_hist");
    }
    return to_py(learners::model_to_json(model));
}

py::tuple handle(service::DelphiService& svc, const std::string& method, const std::string& path,
                 const std::string& token, const std::string& body) {
    service::Request req{method, path, {}, body};
    if (!token.empty()) req.headers["authorization"] = "Bearer " + token;
    const auto r = svc.handle(req);
    return py::make_tuple(r.status, r.body, r.headers);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "merchcast core: Delphi labeling, learners and the weighted ensemble";

    // Lives as long as the interpreter; `code` carries the ErrorCode name.
    static PyObject* error_type = py::exception<Error>(m, "MerchcastError", PyExc_ValueError).release().ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(py::str(e.what()));
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    m.def("synth", [](std::size_t n, std::uint64_t seed, bool missing) {
        auto records = generate_synthetic(n, seed);
        if (missing) records = inject_missing(std::move(records), seed);
        return records_to_py(records);
    }, py::arg("n") = 441, py::arg("seed") = 7, py::arg("missing") = true);
    m.def("parse_csv", [](const std::string& text) { return records_to_py(parse_csv(text)); });
    m.def("parse_jsonl", [](const std::string& text) { return records_to_py(parse_jsonl(text)); });
    m.def("write_csv", [](const py::list& records) { return write_csv(records_from_py(records)); });
    m.def("null_report", [](const py::list& records) { return null_report(records_from_py(records)).render(); });
    m.def("impute", [](const py::list& records, const std::string& policy) {
        if (policy != "median_mode" && policy != "reject")
            throw Error(ErrorCode::InvalidParams, "python", "policy must be median_mode or reject");
        return records_to_py(impute(records_from_py(records),
                                    policy == "reject" ? ImputePolicy::Reject : ImputePolicy::MedianMode));
    }, py::arg("records"), py::arg("policy") = "median_mode");
    m.def("distribution", [](const py::list& records) {
        return to_py(evaluation::distribution_report(records_from_py(records)).to_json());
    });

    m.def("config_hash", [](const py::dict& values) { return config_from_py(values).hash(); },
          py::arg("config") = py::dict());
    m.def("label", &label, py::arg("records"), py::arg("config") = py::dict());
    m.def("train", &train, py::arg("labeled"), py::arg("config") = py::dict());
    m.def("evaluate", &evaluate, py::arg("linear_model"), py::arg("we_model"), py::arg("test"));
    m.def("predict", [](const py::dict& we_model, const py::list& records) {
        const auto model = ensemble::we_model_from_json(from_py(we_model));
        return ensemble::we_predict(model, encode(records_from_py(records), model.encoder));
    }, py::arg("we_model"), py::arg("records"));
    m.def("run_stages", [](const py::dict& config, const std::vector<std::string>& stages) {
        const auto c = config_from_py(config);
        std::vector<std::string> written;
        for (const auto& s : stages) {
            pipeline::StageResult r;
            if (s == "synth") r = pipeline::stage_synth(c);
            else if (s == "ingest") r = pipeline::stage_ingest(c);
            else if (s == "nulls") r = pipeline::stage_nulls(c);
            else if (s == "label-simulate") r = pipeline::stage_label_simulate(c);
            else if (s == "train") r = pipeline::stage_train(c);
            else if (s == "evaluate") r = pipeline::stage_evaluate(c);
            else if (s == "report") r = pipeline::stage_report(c);
            else throw Error(ErrorCode::UsageError, "python", "unknown stage '" + s + "'");
            for (const auto& p : r.written) written.push_back(p.string());
        }
        return written;
    }, py::arg("config"), py::arg("stages"));

    m.def("accuracy", [](const std::vector<int>& preds, const std::vector<int>& scores) {
        return evaluation::accuracy(preds, scores);
    });
    m.def("round_predictions", &evaluation::round_predictions);
    m.def("stratified_split", [](const std::vector<int>& labels, double fraction, std::uint64_t seed) {
        const auto s = evaluation::stratified_split(labels, {fraction, seed});
        return py::make_tuple(s.train, s.test);
    }, py::arg("labels"), py::arg("fraction") = 0.2, py::arg("seed") = 7);
    m.def("kfold", [](const std::vector<std::int64_t>& ids, int k, std::uint64_t seed) {
        return evaluation::kfold(ids, k, seed).fold;
    }, py::arg("ids"), py::arg("k") = 5, py::arg("seed") = 7);
    m.def("search_weights", &search, py::arg("lightgbm"), py::arg("lasso"), py::arg("xgboost"), py::arg("scores"),
          py::arg("step") = 0.05, py::arg("refine") = false, py::arg("restarts") = 0, py::arg("seed") = 0);

    m.def("fit", &fit, py::arg("kind"), py::arg("x"), py::arg("y"), py::arg("params") = py::dict());
    m.def("predict_model", [](const py::dict& model, const RowMatrix& x) {
        return learners::predict(learners::model_from_json(from_py(model)), design(x));
    }, py::arg("model"), py::arg("x"));
    m.def("lasso_lambda_max", [](const RowMatrix& x, const Eigen::VectorXd& y) {
        return learners::lasso_lambda_max(design(x), y);
    });

    m.def("dispersion", [](const std::vector<double>& totals) {
        const auto d = delphi::dispersion(totals);
        return py::make_tuple(d.mean, d.sigma);
    });
    m.def("consensus_label", &delphi::consensus_label);
    m.def("is_anonymous_feedback", [](const py::dict& payload, const std::vector<std::string>& roster) {
        return delphi::is_anonymous_feedback(from_py(payload), roster);
    });

    py::class_<service::DelphiService>(m, "DelphiService",
                                       "The /v1 service without a socket: handle(method, path, token, body) "
                                       "returns (status, body, headers).")
        .def(py::init([](const std::string& admin_token, const std::string& store_dir) {
                 std::shared_ptr<service::Store> store;
                 if (store_dir.empty()) store = std::make_shared<service::MemoryStore>();
                 else store = std::make_shared<service::FileStore>(store_dir);
                 return std::make_unique<service::DelphiService>(store, admin_token);
             }),
             py::arg("admin_token"), py::arg("store_dir") = "")
        .def("handle", &handle, py::arg("method"), py::arg("path"), py::arg("token") = "", py::arg("body") = "");
}
