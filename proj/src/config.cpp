#include "merchcast/error.hpp"
#include "merchcast/pipeline.hpp"

#include "text_util.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace merchcast::pipeline {

namespace {

constexpr std::string_view kModule = "cli";

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw Error(ErrorCode::UsageError, kModule, "config key '" + key + "': '" + value + "' is not " + expected);
}

std::string show(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(int v) { return std::to_string(v); }
std::string show(std::size_t v, int) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }

double real(const std::string& key, const std::string& v) {
    if (auto x = detail::parse_number<double>(v)) return *x;
    bad_value(key, v, "a number");
}
std::uint64_t u64(const std::string& key, const std::string& v) {
    if (auto x = detail::parse_number<std::uint64_t>(v)) return *x;
    bad_value(key, v, "a non-negative integer");
}
int integer(const std::string& key, const std::string& v) {
    if (auto x = detail::parse_number<int>(v)) return *x;
    bad_value(key, v, "an integer");
}
bool boolean(const std::string& key, const std::string& v) {
    const auto t = detail::to_lower(detail::trim(v));
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    bad_value(key, v, "a boolean");
}

std::string policy_text(const FieldPolicy& p) {
    std::string out(to_string(p.policy));
    if (p.policy == EncodePolicy::TopKFrequency) out += ":" + std::to_string(p.k);
    return out;
}

FieldPolicy parse_policy(const std::string& key, const std::string& value) {
    std::string name(detail::trim(value));
    std::size_t k = 0;
    if (auto colon = name.find(':'); colon != std::string::npos) {
        const auto parsed = detail::parse_number<std::size_t>(name.substr(colon + 1));
        if (!parsed) bad_value(key, value, "a policy such as top_k_frequency:20");
        k = *parsed;
        name.resize(colon);
    }
    for (auto p : {EncodePolicy::MultiHot, EncodePolicy::Ordinal, EncodePolicy::NumericPassthrough, EncodePolicy::Binary,
                   EncodePolicy::TopKFrequency, EncodePolicy::Drop})
        if (to_string(p) == name) return FieldPolicy{p, k};
    bad_value(key, value, "an encoding policy");
}

struct Key {
    std::string name;
    bool hashed;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

void add_gbt_keys(std::vector<Key>& keys, const std::string& prefix, evaluation::LearnerSpec PipelineConfig::*spec) {
    auto p = [prefix](const char* k) { return prefix + "." + k; };
    keys.push_back({p("n_trees"), true, [=](auto& c, auto& v) { (c.*spec).gbt.n_trees = integer(p("n_trees"), v); },
                    [=](auto& c) { return show((c.*spec).gbt.n_trees); }});
    keys.push_back({p("learning_rate"), true,
                    [=](auto& c, auto& v) { (c.*spec).gbt.learning_rate = real(p("learning_rate"), v); },
                    [=](auto& c) { return show((c.*spec).gbt.learning_rate); }});
    keys.push_back({p("max_depth"), true, [=](auto& c, auto& v) { (c.*spec).gbt.max_depth = integer(p("max_depth"), v); },
                    [=](auto& c) { return show((c.*spec).gbt.max_depth); }});
    keys.push_back({p("lambda"), true, [=](auto& c, auto& v) { (c.*spec).gbt.lambda_reg = real(p("lambda"), v); },
                    [=](auto& c) { return show((c.*spec).gbt.lambda_reg); }});
    keys.push_back({p("gamma"), true, [=](auto& c, auto& v) { (c.*spec).gbt.gamma_split = real(p("gamma"), v); },
                    [=](auto& c) { return show((c.*spec).gbt.gamma_split); }});
    keys.push_back({p("min_child_hessian"), true,
                    [=](auto& c, auto& v) { (c.*spec).gbt.min_child_hessian = real(p("min_child_hessian"), v); },
                    [=](auto& c) { return show((c.*spec).gbt.min_child_hessian); }});
}

const std::vector<Key>& key_table() {
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        using C = PipelineConfig;
        // Seeds resolve in a second pass; `seed` is applied first.
        k.push_back({"seed", true, [](C& c, auto& v) { c.seed = u64("seed", v); }, [](auto& c) { return show(c.seed); }});
        k.push_back({"dataset.path", false, [](C& c, auto& v) { c.input = std::filesystem::path(v); },
                     [](auto& c) { return c.input ? c.input->string() : std::string(); }});
        k.push_back({"dataset.format", true,
                     [](C& c, auto& v) {
                         if (v != "auto" && v != "csv" && v != "jsonl") bad_value("dataset.format", v, "auto, csv or jsonl");
                         c.format = v;
                     },
                     [](auto& c) { return c.format; }});
        k.push_back({"dataset.impute", true,
                     [](C& c, auto& v) {
                         if (v == "median_mode") c.impute = ImputePolicy::MedianMode;
                         else if (v == "reject") c.impute = ImputePolicy::Reject;
                         else bad_value("dataset.impute", v, "median_mode or reject");
                     },
                     [](auto& c) { return std::string(c.impute == ImputePolicy::MedianMode ? "median_mode" : "reject"); }});
        k.push_back({"synth.n", true,
                     [](C& c, auto& v) { c.synth_n = static_cast<std::size_t>(u64("synth.n", v)); },
                     [](auto& c) { return show(c.synth_n, 0); }});
        k.push_back({"synth.seed", true, [](C& c, auto& v) { c.synth_seed = u64("synth.seed", v); },
                     [](auto& c) { return show(c.synth_seed); }});
        k.push_back({"synth.missing", true, [](C& c, auto& v) { c.synth_missing = boolean("synth.missing", v); },
                     [](auto& c) { return show(c.synth_missing); }});
        k.push_back({"encoder.strict", true, [](C& c, auto& v) { c.encoder.strict = boolean("encoder.strict", v); },
                     [](auto& c) { return show(c.encoder.strict); }});
        for (auto f : kAllFields) {
            if (f == Field::Id || f == Field::Label) continue;
            const std::string key = "encoder." + std::string(field_key(f));
            k.push_back({key, true, [f, key](C& c, auto& v) { c.encoder.policies[f] = parse_policy(key, v); },
                         [f](auto& c) {
                             auto it = c.encoder.policies.find(f);
                             return it == c.encoder.policies.end() ? std::string("none") : policy_text(it->second);
                         }});
        }
        k.push_back({"delphi.experts", true,
                     [](C& c, auto& v) { c.delphi_experts = static_cast<std::size_t>(u64("delphi.experts", v)); },
                     [](auto& c) { return show(c.delphi_experts, 0); }});
        k.push_back({"delphi.epsilon", true, [](C& c, auto& v) { c.delphi_epsilon = real("delphi.epsilon", v); },
                     [](auto& c) { return show(c.delphi_epsilon); }});
        k.push_back({"delphi.max_rounds", true, [](C& c, auto& v) { c.delphi_max_rounds = integer("delphi.max_rounds", v); },
                     [](auto& c) { return show(c.delphi_max_rounds); }});
        k.push_back({"delphi.contraction", true,
                     [](C& c, auto& v) { c.delphi_profile.contraction = real("delphi.contraction", v); },
                     [](auto& c) { return show(c.delphi_profile.contraction); }});
        k.push_back({"delphi.noise_sd", true, [](C& c, auto& v) { c.delphi_profile.noise_sd = real("delphi.noise_sd", v); },
                     [](auto& c) { return show(c.delphi_profile.noise_sd); }});
        k.push_back({"delphi.initial_sd", true,
                     [](C& c, auto& v) { c.delphi_profile.initial_sd = real("delphi.initial_sd", v); },
                     [](auto& c) { return show(c.delphi_profile.initial_sd); }});
        k.push_back({"delphi.full_spread_at", true,
                     [](C& c, auto& v) { c.delphi_profile.full_spread_at = real("delphi.full_spread_at", v); },
                     [](auto& c) { return show(c.delphi_profile.full_spread_at); }});
        k.push_back({"delphi.seed", true, [](C& c, auto& v) { c.delphi_seed = u64("delphi.seed", v); },
                     [](auto& c) { return show(c.delphi_seed); }});
        k.push_back({"split.fraction", true, [](C& c, auto& v) { c.split.test_fraction = real("split.fraction", v); },
                     [](auto& c) { return show(c.split.test_fraction); }});
        k.push_back({"split.seed", true, [](C& c, auto& v) { c.split.seed = u64("split.seed", v); },
                     [](auto& c) { return show(c.split.seed); }});
        k.push_back({"cv.k", true, [](C& c, auto& v) { c.cv_k = integer("cv.k", v); }, [](auto& c) { return show(c.cv_k); }});
        k.push_back({"cv.seed", true, [](C& c, auto& v) { c.cv_seed = u64("cv.seed", v); },
                     [](auto& c) { return show(c.cv_seed); }});
        k.push_back({"lasso.lambda", true,
                     [](C& c, auto& v) {
                         if (v == "auto") c.lasso.lambda.reset();
                         else c.lasso.lambda = real("lasso.lambda", v);
                     },
                     [](auto& c) { return c.lasso.lambda ? show(*c.lasso.lambda) : std::string("auto"); }});
        k.push_back({"lasso.points", true,
                     [](C& c, auto& v) { c.lasso.lambda_points = static_cast<std::size_t>(u64("lasso.points", v)); },
                     [](auto& c) { return show(c.lasso.lambda_points, 0); }});
        k.push_back({"lasso.ratio", true, [](C& c, auto& v) { c.lasso.lambda_ratio = real("lasso.ratio", v); },
                     [](auto& c) { return show(c.lasso.lambda_ratio); }});
        k.push_back({"lasso.max_sweeps", true, [](C& c, auto& v) { c.lasso.lasso.max_sweeps = integer("lasso.max_sweeps", v); },
                     [](auto& c) { return show(c.lasso.lasso.max_sweeps); }});
        k.push_back({"lasso.tol", true, [](C& c, auto& v) { c.lasso.lasso.tol = real("lasso.tol", v); },
                     [](auto& c) { return show(c.lasso.lasso.tol); }});
        add_gbt_keys(k, "xgboost", &C::xgboost);
        add_gbt_keys(k, "lightgbm", &C::lightgbm);
        k.push_back({"lightgbm.max_bins", true,
                     [](C& c, auto& v) { c.lightgbm.hist.max_bins = integer("lightgbm.max_bins", v); },
                     [](auto& c) { return show(c.lightgbm.hist.max_bins); }});
        k.push_back({"lightgbm.goss", true, [](C& c, auto& v) { c.lightgbm.hist.goss.enabled = boolean("lightgbm.goss", v); },
                     [](auto& c) { return show(c.lightgbm.hist.goss.enabled); }});
        k.push_back({"lightgbm.goss.top_rate", true,
                     [](C& c, auto& v) { c.lightgbm.hist.goss.top_rate = real("lightgbm.goss.top_rate", v); },
                     [](auto& c) { return show(c.lightgbm.hist.goss.top_rate); }});
        k.push_back({"lightgbm.goss.other_rate", true,
                     [](C& c, auto& v) { c.lightgbm.hist.goss.other_rate = real("lightgbm.goss.other_rate", v); },
                     [](auto& c) { return show(c.lightgbm.hist.goss.other_rate); }});
        k.push_back({"lightgbm.efb", true, [](C& c, auto& v) { c.lightgbm.hist.efb = boolean("lightgbm.efb", v); },
                     [](auto& c) { return show(c.lightgbm.hist.efb); }});
        k.push_back({"lightgbm.efb.conflict_rate", true,
                     [](C& c, auto& v) { c.lightgbm.hist.efb_conflict_rate = real("lightgbm.efb.conflict_rate", v); },
                     [](auto& c) { return show(c.lightgbm.hist.efb_conflict_rate); }});
        k.push_back({"lightgbm.seed", true, [](C& c, auto& v) { c.lightgbm.hist.seed = u64("lightgbm.seed", v); },
                     [](auto& c) { return show(c.lightgbm.hist.seed); }});
        k.push_back({"ensemble.step", true, [](C& c, auto& v) { c.search.step = real("ensemble.step", v); },
                     [](auto& c) { return show(c.search.step); }});
        k.push_back({"ensemble.refine", true, [](C& c, auto& v) { c.search.refine = boolean("ensemble.refine", v); },
                     [](auto& c) { return show(c.search.refine); }});
        k.push_back({"ensemble.restarts", true, [](C& c, auto& v) { c.search.restarts = integer("ensemble.restarts", v); },
                     [](auto& c) { return show(c.search.restarts); }});
        k.push_back({"ensemble.seed", true, [](C& c, auto& v) { c.search.seed = u64("ensemble.seed", v); },
                     [](auto& c) { return show(c.search.seed); }});
        k.push_back({"service.admin_token", false, [](C& c, auto& v) { c.admin_token = v; },
                     [](auto&) { return std::string(); }});
        k.push_back({"output_dir", false, [](C& c, auto& v) { c.output_dir = v; },
                     [](auto& c) { return c.output_dir.string(); }});
        return k;
    }();
    return keys;
}

PipelineConfig base_config() {
    PipelineConfig c;
    c.linear.kind = evaluation::LearnerKind::Linear;
    c.lasso.kind = evaluation::LearnerKind::Lasso;
    c.xgboost.kind = evaluation::LearnerKind::GbtExact;
    c.lightgbm.kind = evaluation::LearnerKind::GbtHist;
    return c;
}

}  // namespace

ConfigValues parse_config(std::string_view text) {
    ConfigValues out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        const auto line = detail::trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::ParseError, kModule, "config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(detail::trim(line.substr(0, eq)));
        if (key.empty()) throw Error(ErrorCode::ParseError, kModule, "config line " + std::to_string(line_no) + ": empty key");
        out[key] = std::string(detail::trim(line.substr(eq + 1)));
    }
    return out;
}

ConfigValues load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

PipelineConfig resolve(const ConfigValues& values) {
    const auto& keys = key_table();
    for (const auto& [name, _] : values) {
        bool known = false;
        for (const auto& k : keys) known = known || k.name == name;
        if (!known) throw Error(ErrorCode::UsageError, kModule, "unknown config key '" + name + "'");
    }
    PipelineConfig c = base_config();
    if (auto it = values.find("seed"); it != values.end()) keys.front().set(c, it->second);
    c.synth_seed = c.delphi_seed = c.split.seed = c.cv_seed = c.search.seed = c.seed;
    c.lasso.lambda_seed = c.seed;
    c.lightgbm.hist.seed = c.seed;
    for (const auto& k : keys)
        if (auto it = values.find(k.name); it != values.end() && k.name != "seed") k.set(c, it->second);
    c.lasso.lambda_seed = c.cv_seed;
    return c;
}

std::vector<std::pair<std::string, std::string>> documented_keys() {
    const auto c = base_config();
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : key_table()) out.emplace_back(k.name, k.get(c));
    return out;
}

std::string PipelineConfig::canonical() const {
    std::map<std::string, std::string> lines;
    for (const auto& k : key_table())
        if (k.hashed) lines[k.name] = k.get(*this);
    std::string out;
    for (const auto& [name, value] : lines) out += name + "=" + value + "\n";
    return out;
}

std::string PipelineConfig::hash() const { return sha256_hex(canonical()); }

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::IoError, kModule, "SHA-256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

}  // namespace merchcast::pipeline
