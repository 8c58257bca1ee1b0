#include "merchcast/error.hpp"
#include "merchcast/pipeline.hpp"
#include "merchcast/service.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace merchcast;

const char* kConfigHelp = R"(Config file: one `key = value` per line, `#` comments. Flags override the file.
Keys (default):
)";

std::string config_footer() {
    std::string out = kConfigHelp;
    for (const auto& [key, value] : pipeline::documented_keys())
        out += "  " + key + " = " + (value.empty() ? "(unset)" : value) + "\n";
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"merchcast: Delphi labeling, regression learners and the weighted ensemble for merchandising value"};
    app.require_subcommand(1);
    app.fallthrough();
    app.footer(config_footer());

    std::string input;
    std::string output_dir;
    std::string config_path;
    std::string model;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    int port = 8080;
    auto* input_opt = app.add_option("--input", input, "Input dataset (csv or jsonl)");
    auto* output_opt = app.add_option("--output-dir", output_dir, "Artifact directory (env MERCHCAST_OUTPUT_DIR)");
    app.add_option("--config", config_path, "Key-value config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Master seed");
    auto* n_opt = app.add_option("--n", n, "Synthetic dataset size");
    app.add_option("--model", model, "WE model document for predict");
    app.add_option("--port", port, "Port for serve");

    const std::vector<std::pair<const char*, const char*>> commands = {
        {"ingest", "Validate a dataset and write records.csv"},
        {"nulls", "Null audit of a dataset"},
        {"synth", "Generate a synthetic dataset"},
        {"label-simulate", "Label records with a simulated Delphi panel"},
        {"serve", "Run the Delphi HTTP service"},
        {"train", "Split, cross-validate the learners and tune the ensemble"},
        {"evaluate", "Test-set accuracy report"},
        {"predict", "Score new films with a WE model"},
        {"report", "Label distribution report"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    pipeline::ConfigValues values;
    if (!config_path.empty()) values = pipeline::load_config(config_path);
    if (*output_opt) values["output_dir"] = output_dir;
    else if (!values.count("output_dir"))
        if (const char* env = std::getenv("MERCHCAST_OUTPUT_DIR"); env && *env) values["output_dir"] = env;
    if (*input_opt) values["dataset.path"] = input;
    if (*seed_opt) values["seed"] = std::to_string(seed);
    if (*n_opt) values["synth.n"] = std::to_string(n);
    if (!values.count("service.admin_token"))
        if (const char* env = std::getenv("MERCHCAST_ADMIN_TOKEN"); env && *env) values["service.admin_token"] = env;
    const auto config = pipeline::resolve(values);

    const std::string command = app.get_subcommands().front()->get_name();
    pipeline::StageResult result;
    if (command == "ingest") result = pipeline::stage_ingest(config);
    else if (command == "nulls") result = pipeline::stage_nulls(config);
    else if (command == "synth") result = pipeline::stage_synth(config);
    else if (command == "label-simulate") result = pipeline::stage_label_simulate(config);
    else if (command == "train") result = pipeline::stage_train(config);
    else if (command == "evaluate") result = pipeline::stage_evaluate(config);
    else if (command == "report") result = pipeline::stage_report(config);
    else if (command == "predict") {
        if (model.empty()) throw Error(ErrorCode::UsageError, "cli", "predict needs --model");
        result = pipeline::stage_predict(config, model);
    } else if (command == "serve") {
        if (config.admin_token.empty())
            throw Error(ErrorCode::UsageError, "cli", "serve needs service.admin_token or MERCHCAST_ADMIN_TOKEN");
        auto store = std::make_shared<service::FileStore>(config.output_dir / "service");
        service::DelphiService svc(store, config.admin_token);
        service::HttpServer server(svc);
        const int bound = server.bind("0.0.0.0", port);
        std::cout << "serving /v1 on port " << bound << std::endl;
        server.run();
        return 0;
    }

    std::cout << result.summary;
    if (!result.summary.empty() && result.summary.back() != '\n') std::cout << '\n';
    for (const auto& path : result.written) std::cout << "wrote " << path.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const merchcast::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code() == merchcast::ErrorCode::UsageError ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
