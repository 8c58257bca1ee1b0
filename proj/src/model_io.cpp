#include "merchcast/error.hpp"
#include "merchcast/learners.hpp"

namespace merchcast::learners {

namespace {

constexpr std::string_view kModule = "learners";
constexpr int kSchemaVersion = 1;

void check_schema(const std::vector<std::string>& fitted, const FeatureMatrix& x) {
    if (fitted == x.column_names && x.n_cols() == static_cast<Eigen::Index>(fitted.size())) return;
    std::string detail = "model expects " + std::to_string(fitted.size()) + " columns, matrix has " +
                         std::to_string(x.n_cols());
    for (std::size_t j = 0; j < std::min(fitted.size(), x.column_names.size()); ++j)
        if (fitted[j] != x.column_names[j]) {
            detail += "; column " + std::to_string(j) + " is '" + x.column_names[j] + "', expected '" + fitted[j] + "'";
            break;
        }
    throw Error(ErrorCode::SchemaMismatch, kModule, detail);
}

nlohmann::json vec_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json node_to_json(const RegressionTree& tree, int id) {
    const auto& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.feature < 0) return {{"leaf", node.weight}};
    return {{"feature", node.feature},
            {"threshold", node.threshold},
            {"weight", node.weight},
            {"left", node_to_json(tree, node.left)},
            {"right", node_to_json(tree, node.right)}};
}

int node_from_json(const nlohmann::json& j, RegressionTree& tree, std::size_t n_features) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("leaf")) {
        tree.nodes.back().weight = j.at("leaf").get<double>();
        return id;
    }
    const int feature = j.at("feature").get<int>();
    if (feature < 0 || static_cast<std::size_t>(feature) >= n_features)
        throw Error(ErrorCode::ParseError, kModule, "tree node references feature " + std::to_string(feature));
    const double threshold = j.at("threshold").get<double>();
    const double weight = j.value("weight", 0.0);
    const int left = node_from_json(j.at("left"), tree, n_features);
    const int right = node_from_json(j.at("right"), tree, n_features);
    tree.nodes[static_cast<std::size_t>(id)] = TreeNode{feature, threshold, left, right, weight};
    return id;
}

nlohmann::json params_to_json(const GbtParams& p) {
    return {{"n_trees", p.n_trees},           {"learning_rate", p.learning_rate}, {"max_depth", p.max_depth},
            {"lambda_reg", p.lambda_reg},     {"gamma_split", p.gamma_split},     {"min_child_hessian", p.min_child_hessian}};
}

GbtParams params_from_json(const nlohmann::json& j) {
    GbtParams p;
    p.n_trees = j.at("n_trees").get<int>();
    p.learning_rate = j.at("learning_rate").get<double>();
    p.max_depth = j.at("max_depth").get<int>();
    p.lambda_reg = j.at("lambda_reg").get<double>();
    p.gamma_split = j.at("gamma_split").get<double>();
    p.min_child_hessian = j.at("min_child_hessian").get<double>();
    return p;
}

nlohmann::json hist_to_json(const HistParams& h) {
    return {{"max_bins", h.max_bins},
            {"goss", {{"enabled", h.goss.enabled}, {"top_rate", h.goss.top_rate}, {"other_rate", h.goss.other_rate}}},
            {"efb", h.efb},
            {"efb_conflict_rate", h.efb_conflict_rate},
            {"seed", h.seed}};
}

HistParams hist_from_json(const nlohmann::json& j) {
    HistParams h;
    h.max_bins = j.at("max_bins").get<int>();
    const auto& g = j.at("goss");
    h.goss.enabled = g.at("enabled").get<bool>();
    h.goss.top_rate = g.at("top_rate").get<double>();
    h.goss.other_rate = g.at("other_rate").get<double>();
    h.efb = j.at("efb").get<bool>();
    h.efb_conflict_rate = j.at("efb_conflict_rate").get<double>();
    h.seed = j.at("seed").get<std::uint64_t>();
    return h;
}

}  // namespace

std::string_view model_kind(const TrainedModel& model) {
    switch (model.index()) {
        case 0: return "linear";
        case 1: return "lasso";
        default: return "gbt";
    }
}

const std::vector<std::string>& model_columns(const TrainedModel& model) {
    return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.columns; }, model);
}

Eigen::VectorXd predict(const LinearModel& model, const FeatureMatrix& x) {
    check_schema(model.columns, x);
    return (x.rows * model.coefficients).array() + model.intercept;
}

Eigen::VectorXd predict(const LassoModel& model, const FeatureMatrix& x) {
    check_schema(model.columns, x);
    return (x.rows * model.coefficients).array() + model.intercept;
}

Eigen::VectorXd predict(const GbtModel& model, const FeatureMatrix& x) {
    check_schema(model.columns, x);
    const auto n = x.n_rows();
    Eigen::VectorXd out = Eigen::VectorXd::Constant(n, model.base_score);
    // Same accumulation order as training, tree by tree.
    for (const auto& tree : model.trees)
        for (Eigen::Index i = 0; i < n; ++i) out(i) += model.params.learning_rate * tree.predict(x.rows.row(i).data());
    return out;
}

Eigen::VectorXd predict(const TrainedModel& model, const FeatureMatrix& x) {
    return std::visit([&](const auto& m) { return predict(m, x); }, model);
}

nlohmann::json model_to_json(const TrainedModel& model) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = model_kind(model);
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            j["columns"] = m.columns;
            if constexpr (std::is_same_v<T, LinearModel>) {
                j["intercept"] = m.intercept;
                j["coefficients"] = vec_to_json(m.coefficients);
                j["ridge_applied"] = m.ridge_applied;
            } else if constexpr (std::is_same_v<T, LassoModel>) {
                j["intercept"] = m.intercept;
                j["coefficients"] = vec_to_json(m.coefficients);
                j["lambda"] = m.lambda;
                j["t_equivalent"] = m.t_equivalent;
                j["standardized_coefficients"] = vec_to_json(m.standardized_coefficients);
                j["column_mean"] = vec_to_json(m.column_mean);
                j["column_scale"] = vec_to_json(m.column_scale);
                j["sweeps"] = m.sweeps;
                j["converged"] = m.converged;
            } else {
                j["mode"] = m.mode == GbtMode::Exact ? "exact" : "histogram";
                j["base_score"] = m.base_score;
                j["params"] = params_to_json(m.params);
                if (m.mode == GbtMode::Histogram) j["hist"] = hist_to_json(m.hist);
                auto& trees = j["trees"] = nlohmann::json::array();
                for (const auto& tree : m.trees) trees.push_back(node_to_json(tree, 0));
            }
        },
        model);
    return j;
}

TrainedModel model_from_json(const nlohmann::json& document) {
    try {
        if (document.at("schema_version").get<int>() != kSchemaVersion)
            throw Error(ErrorCode::ParseError, kModule, "unsupported model schema_version");
        const auto kind = document.at("kind").get<std::string>();
        const auto columns = document.at("columns").get<std::vector<std::string>>();
        if (kind == "linear") {
            LinearModel m;
            m.columns = columns;
            m.intercept = document.at("intercept").get<double>();
            m.coefficients = vec_from_json(document.at("coefficients"));
            m.ridge_applied = document.value("ridge_applied", false);
            if (m.coefficients.size() != static_cast<Eigen::Index>(columns.size()))
                throw Error(ErrorCode::ParseError, kModule, "coefficient count does not match columns");
            return m;
        }
        if (kind == "lasso") {
            LassoModel m;
            m.columns = columns;
            m.intercept = document.at("intercept").get<double>();
            m.coefficients = vec_from_json(document.at("coefficients"));
            m.lambda = document.at("lambda").get<double>();
            m.t_equivalent = document.at("t_equivalent").get<double>();
            m.standardized_coefficients = vec_from_json(document.at("standardized_coefficients"));
            m.column_mean = vec_from_json(document.at("column_mean"));
            m.column_scale = vec_from_json(document.at("column_scale"));
            m.sweeps = document.value("sweeps", 0);
            m.converged = document.value("converged", false);
            if (m.coefficients.size() != static_cast<Eigen::Index>(columns.size()))
                throw Error(ErrorCode::ParseError, kModule, "coefficient count does not match columns");
            return m;
        }
        if (kind == "gbt") {
            GbtModel m;
            m.columns = columns;
            const auto mode = document.at("mode").get<std::string>();
            if (mode != "exact" && mode != "histogram") throw Error(ErrorCode::ParseError, kModule, "unknown gbt mode " + mode);
            m.mode = mode == "exact" ? GbtMode::Exact : GbtMode::Histogram;
            m.base_score = document.at("base_score").get<double>();
            m.params = params_from_json(document.at("params"));
            if (m.mode == GbtMode::Histogram) m.hist = hist_from_json(document.at("hist"));
            for (const auto& t : document.at("trees")) {
                RegressionTree tree;
                node_from_json(t, tree, columns.size());
                m.trees.push_back(std::move(tree));
            }
            return m;
        }
        throw Error(ErrorCode::ParseError, kModule, "unknown model kind " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, e.what());
    }
}

}  // namespace merchcast::learners
