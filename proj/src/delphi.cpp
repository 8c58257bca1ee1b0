#include "merchcast/delphi.hpp"
#include "merchcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace merchcast::delphi {

namespace {

constexpr std::string_view kModule = "delphi";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(code, kModule, detail); }

std::string round_name(int r) { return "round " + std::to_string(r); }

}  // namespace

std::string_view category_key(Category category) noexcept {
    switch (category) {
        case Category::Toys: return "toys";
        case Category::Stationery: return "stationery";
        case Category::DailyUse: return "daily_use";
        case Category::ClothesAccessories: return "clothes_accessories";
        case Category::LuggageBags: return "luggage_bags";
    }
    return "";
}

std::optional<Category> category_from_key(std::string_view key) {
    for (auto c : kCategories)
        if (category_key(c) == key) return c;
    return std::nullopt;
}

int ScoreSheet::total() const {
    int sum = 0;
    for (int s : scores) sum += s;
    return sum;
}

std::array<int, kCategoryCount> spread_total(int total) {
    total = std::clamp(total, 0, kMaxTotal);
    std::array<int, kCategoryCount> out{};
    for (std::size_t c = 0; c < kCategoryCount; ++c)
        out[c] = total / 5 + (static_cast<int>(c) < total % 5 ? 1 : 0);
    return out;
}

Dispersion dispersion(std::span<const double> totals) {
    if (totals.empty()) return {};
    const double n = static_cast<double>(totals.size());
    double mean = 0.0;
    for (double t : totals) mean += t;
    mean /= n;
    double ss = 0.0;
    for (double t : totals) ss += (t - mean) * (t - mean);
    return {mean, std::sqrt(ss / n)};
}

int consensus_label(double mean) { return std::clamp(static_cast<int>(std::floor(mean + 0.5)), 0, kMaxTotal); }

std::string labels_to_csv(const std::vector<LabelEntry>& labels) {
    std::string out = "sample_id,label,forced\n";
    for (const auto& e : labels)
        out += std::to_string(e.sample_id) + "," + std::to_string(e.label) + "," + (e.forced ? "true" : "false") + "\n";
    return out;
}

// --- session -----------------------------------------------------------------

Session Session::open(std::vector<std::string> experts, std::vector<std::int64_t> samples, double epsilon,
                      int max_rounds) {
    if (experts.size() < 2) fail(ErrorCode::TooFewExperts, "a panel needs at least 2 experts");
    if (samples.empty()) fail(ErrorCode::EmptySampleSet, "no samples to score");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail(ErrorCode::InvalidEpsilon, "epsilon must be > 0");
    if (max_rounds < 1) fail(ErrorCode::InvalidParams, "max_rounds must be >= 1");
    if (std::set<std::string>(experts.begin(), experts.end()).size() != experts.size())
        fail(ErrorCode::InvalidParams, "duplicate expert id in roster");
    if (std::set<std::int64_t>(samples.begin(), samples.end()).size() != samples.size())
        fail(ErrorCode::InvalidParams, "duplicate sample id");
    for (const auto& e : experts)
        if (e.empty()) fail(ErrorCode::InvalidParams, "empty expert id");

    Session s;
    s.experts_ = std::move(experts);
    s.samples_ = std::move(samples);
    s.epsilon_ = epsilon;
    s.max_rounds_ = max_rounds;
    s.rounds_.push_back(Round{1, s.samples_, {}, false, {}});
    return s;
}

const Session::Round& Session::round_at(int round_index) const {
    if (round_index < 1 || round_index > current_round()) fail(ErrorCode::RoundNotOpen, round_name(round_index) + " does not exist");
    return rounds_[static_cast<std::size_t>(round_index - 1)];
}

bool Session::round_closed(int round_index) const {
    return round_index >= 1 && round_index <= current_round() && rounds_[static_cast<std::size_t>(round_index - 1)].closed;
}

bool Session::is_expert(const std::string& expert_id) const {
    return std::find(experts_.begin(), experts_.end(), expert_id) != experts_.end();
}

void Session::submit_scores(const std::string& expert_id, int round_index, const std::vector<ScoreSheet>& sheets) {
    if (!is_expert(expert_id)) fail(ErrorCode::UnknownExpert, "expert '" + expert_id + "' is not on the panel");
    if (round_index < current_round() || (round_index == current_round() && !round_open()))
        fail(ErrorCode::RoundClosed, round_name(round_index) + " is closed");
    if (round_index > current_round()) fail(ErrorCode::RoundNotOpen, round_name(round_index) + " is not open");

    auto& round = rounds_.back();
    std::map<std::int64_t, ScoreSheet> accepted;
    const std::set<std::int64_t> open(round.open.begin(), round.open.end());
    for (std::size_t i = 0; i < sheets.size(); ++i) {
        const auto& sheet = sheets[i];
        if (sheet.expert_id != expert_id)
            fail(ErrorCode::UnknownExpert, "sheet " + std::to_string(i) + " belongs to a different expert");
        if (sheet.round_index != round_index)
            fail(ErrorCode::RoundNotOpen, "sheet " + std::to_string(i) + " names " + round_name(sheet.round_index));
        if (!open.count(sheet.sample_id))
            fail(ErrorCode::UnknownSample, "sample " + std::to_string(sheet.sample_id) + " is not open in " + round_name(round_index));
        for (auto c : kCategories) {
            const int v = sheet.scores[static_cast<std::size_t>(c)];
            if (v < 0 || v > kMaxCategoryScore)
                fail(ErrorCode::ScoreOutOfRange, "sample " + std::to_string(sheet.sample_id) + " " +
                                                     std::string(category_key(c)) + "=" + std::to_string(v) +
                                                     " outside [0,5]");
        }
        if (!accepted.emplace(sheet.sample_id, sheet).second)
            fail(ErrorCode::DuplicateSheet, "sample " + std::to_string(sheet.sample_id) + " scored twice");
    }
    if (accepted.size() != open.size()) {
        std::string missing;
        for (auto id : round.open)
            if (!accepted.count(id)) missing += (missing.empty() ? "" : ", ") + std::to_string(id);
        fail(ErrorCode::IncompleteSheet, "missing open samples: " + missing);
    }
    round.sheets[expert_id] = std::move(accepted);
}

std::vector<std::string> Session::delinquent_experts() const {
    std::vector<std::string> out;
    if (!round_open()) return out;
    for (const auto& e : experts_)
        if (!rounds_.back().sheets.count(e)) out.push_back(e);
    return out;
}

bool Session::has_submitted(const std::string& expert_id, int round_index) const {
    return round_at(round_index).sheets.count(expert_id) > 0;
}

std::vector<RoundResult> Session::close_round(int round_index) {
    if (round_index < 1 || round_index > current_round()) fail(ErrorCode::RoundNotOpen, round_name(round_index) + " is not open");
    if (round_closed(round_index)) fail(ErrorCode::RoundAlreadyClosed, round_name(round_index) + " was already closed");

    if (auto missing = delinquent_experts(); !missing.empty()) {
        std::string names;
        for (const auto& e : missing) names += (names.empty() ? "" : ", ") + e;
        fail(ErrorCode::MissingSubmissions, "no sheets from: " + names);
    }

    auto& round = rounds_.back();
    const bool last_round = round_index >= max_rounds_;
    std::vector<std::int64_t> carried;
    std::vector<double> totals;
    totals.reserve(experts_.size());
    for (auto sample : round.open) {
        totals.clear();
        for (const auto& e : experts_) totals.push_back(round.sheets.at(e).at(sample).total());
        const auto d = dispersion(totals);

        RoundResult result;
        result.sample_id = sample;
        result.round_index = round_index;
        result.mean = d.mean;
        result.sigma = d.sigma;
        result.n_scores = static_cast<int>(totals.size());
        result.converged = d.sigma < epsilon_;
        if (result.converged || last_round) {
            result.forced = !result.converged;
            result.label = consensus_label(d.mean);
            labels_[sample] = FinalLabel{*result.label, result.forced, round_index};
        } else {
            carried.push_back(sample);
        }
        round.results.push_back(result);
    }
    round.closed = true;
    if (!carried.empty()) rounds_.push_back(Round{round_index + 1, std::move(carried), {}, false, {}});
    return round.results;
}

const std::vector<std::int64_t>& Session::open_samples(int round_index) const { return round_at(round_index).open; }

const std::vector<RoundResult>& Session::results(int round_index) const {
    const auto& round = round_at(round_index);
    if (!round.closed) fail(ErrorCode::RoundNotClosed, round_name(round_index) + " is still open");
    return round.results;
}

std::vector<ScoreSheet> Session::own_sheets(const std::string& expert_id, int round_index) const {
    if (!is_expert(expert_id)) fail(ErrorCode::UnknownExpert, "expert '" + expert_id + "' is not on the panel");
    std::vector<ScoreSheet> out;
    const auto& round = round_at(round_index);
    if (auto it = round.sheets.find(expert_id); it != round.sheets.end())
        for (const auto& [_, sheet] : it->second) out.push_back(sheet);
    return out;
}

Feedback Session::feedback(int round_index, const std::string& expert_id) const {
    if (!is_expert(expert_id)) fail(ErrorCode::UnknownExpert, "expert '" + expert_id + "' is not on the panel");
    if (round_index < 1 || round_index > current_round() || !round_closed(round_index))
        fail(ErrorCode::RoundNotClosed, round_name(round_index) + " has not been closed");

    // Built only from aggregates so the payload cannot depend on the requester.
    const auto& round = round_at(round_index);
    Feedback out;
    out.round_index = round_index;
    for (const auto& result : round.results) {
        FeedbackSample s;
        s.sample_id = result.sample_id;
        s.mean = result.mean;
        s.sigma = result.sigma;
        s.n_scores = result.n_scores;
        s.converged = result.converged;
        s.forced = result.forced;
        s.label = result.label;
        for (const auto& [_, sheets] : round.sheets) ++s.histogram[sheets.at(result.sample_id).total()];
        out.samples.push_back(std::move(s));
    }
    return out;
}

std::optional<Session::FinalLabel> Session::final_label(std::int64_t sample_id) const {
    if (auto it = labels_.find(sample_id); it != labels_.end()) return it->second;
    return std::nullopt;
}

std::vector<LabelEntry> Session::export_labels() const {
    if (!complete())
        fail(ErrorCode::SessionIncomplete, std::to_string(samples_.size() - labels_.size()) + " samples still unlabeled");
    std::vector<LabelEntry> out;
    out.reserve(samples_.size());
    for (auto id : samples_) {
        const auto& l = labels_.at(id);
        out.push_back({id, l.label, l.forced});
    }
    return out;
}

// --- feedback payloads -------------------------------------------------------

nlohmann::json feedback_to_json(const Feedback& feedback) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : feedback.samples) {
        nlohmann::json histogram = nlohmann::json::object();
        for (const auto& [total, count] : s.histogram) histogram[std::to_string(total)] = count;
        samples.push_back({{"sample_id", s.sample_id},
                           {"mean", s.mean},
                           {"sigma", s.sigma},
                           {"n_scores", s.n_scores},
                           {"histogram", std::move(histogram)},
                           {"converged", s.converged},
                           {"forced", s.forced},
                           {"label", s.label ? nlohmann::json(*s.label) : nlohmann::json(nullptr)}});
    }
    return {{"round_index", feedback.round_index}, {"samples", std::move(samples)}};
}

bool is_anonymous_feedback(const nlohmann::json& payload, std::span<const std::string> roster, std::string* why) {
    auto reject = [&](const std::string& reason) {
        if (why) *why = reason;
        return false;
    };
    static const std::set<std::string> kTop = {"round_index", "samples"};
    static const std::set<std::string> kSample = {"sample_id", "mean",      "sigma",  "n_scores",
                                                  "histogram", "converged", "forced", "label"};
    if (!payload.is_object()) return reject("payload is not an object");
    for (const auto& [key, _] : payload.items())
        if (!kTop.count(key)) return reject("unexpected top-level key '" + key + "'");
    if (!payload.contains("samples") || !payload["samples"].is_array()) return reject("samples missing");
    for (const auto& sample : payload["samples"]) {
        if (!sample.is_object()) return reject("sample entry is not an object");
        for (const auto& [key, value] : sample.items()) {
            if (!kSample.count(key)) return reject("unexpected sample key '" + key + "'");
            if (value.is_string()) return reject("string value under '" + key + "'");
        }
        const auto& histogram = sample.value("histogram", nlohmann::json::object());
        if (!histogram.is_object()) return reject("histogram is not an object");
        for (const auto& [bucket, count] : histogram.items()) {
            if (bucket.empty() || bucket.find_first_not_of("0123456789") != std::string::npos)
                return reject("histogram bucket '" + bucket + "' is not a score");
            if (!count.is_number_integer()) return reject("histogram count is not an integer");
            for (const auto& id : roster)
                if (bucket == id) return reject("histogram bucket equals an expert id");
        }
    }
    return true;
}

// --- persistence -------------------------------------------------------------

nlohmann::json Session::to_json() const {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : rounds_) {
        nlohmann::json sheets = nlohmann::json::object();
        for (const auto& [expert, by_sample] : r.sheets) {
            auto& list = sheets[expert] = nlohmann::json::array();
            for (const auto& [sample, sheet] : by_sample) list.push_back({{"sample_id", sample}, {"scores", sheet.scores}});
        }
        nlohmann::json results = nlohmann::json::array();
        for (const auto& x : r.results)
            results.push_back({{"sample_id", x.sample_id},
                               {"mean", x.mean},
                               {"sigma", x.sigma},
                               {"converged", x.converged},
                               {"forced", x.forced},
                               {"n_scores", x.n_scores},
                               {"label", x.label ? nlohmann::json(*x.label) : nlohmann::json(nullptr)}});
        rounds.push_back({{"index", r.index},
                          {"open", r.open},
                          {"closed", r.closed},
                          {"sheets", std::move(sheets)},
                          {"results", std::move(results)}});
    }
    return {{"schema_version", 1},   {"epsilon", epsilon_}, {"max_rounds", max_rounds_},
            {"experts", experts_},   {"samples", samples_}, {"rounds", std::move(rounds)}};
}

Session Session::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("schema_version").get<int>() != 1) fail(ErrorCode::ParseError, "unsupported session schema version");
        Session s;
        s.experts_ = doc.at("experts").get<std::vector<std::string>>();
        s.samples_ = doc.at("samples").get<std::vector<std::int64_t>>();
        s.epsilon_ = doc.at("epsilon").get<double>();
        s.max_rounds_ = doc.at("max_rounds").get<int>();
        for (const auto& r : doc.at("rounds")) {
            Round round;
            round.index = r.at("index").get<int>();
            round.open = r.at("open").get<std::vector<std::int64_t>>();
            round.closed = r.at("closed").get<bool>();
            for (const auto& [expert, list] : r.at("sheets").items())
                for (const auto& entry : list) {
                    ScoreSheet sheet;
                    sheet.expert_id = expert;
                    sheet.round_index = round.index;
                    sheet.sample_id = entry.at("sample_id").get<std::int64_t>();
                    sheet.scores = entry.at("scores").get<std::array<int, kCategoryCount>>();
                    round.sheets[expert][sheet.sample_id] = sheet;
                }
            for (const auto& x : r.at("results")) {
                RoundResult result;
                result.sample_id = x.at("sample_id").get<std::int64_t>();
                result.round_index = round.index;
                result.mean = x.at("mean").get<double>();
                result.sigma = x.at("sigma").get<double>();
                result.converged = x.at("converged").get<bool>();
                result.forced = x.at("forced").get<bool>();
                result.n_scores = x.at("n_scores").get<int>();
                if (!x.at("label").is_null()) {
                    result.label = x.at("label").get<int>();
                    s.labels_[result.sample_id] = FinalLabel{*result.label, result.forced, round.index};
                }
                round.results.push_back(result);
            }
            s.rounds_.push_back(std::move(round));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("session document: ") + e.what());
    }
}

// --- simulation --------------------------------------------------------------

SimulationReport simulate_experts(Session& session, const ExpertProfile& profile,
                                  const std::map<std::int64_t, double>& latent, std::uint64_t seed) {
    if (session.current_round() != 1 || !session.round_open() ||
        session.delinquent_experts().size() != session.experts().size())
        fail(ErrorCode::InvalidParams, "simulation needs a fresh session");
    if (profile.contraction < 0.0 || profile.contraction > 1.0) fail(ErrorCode::InvalidParams, "contraction outside [0,1]");
    if (profile.noise_sd < 0.0 || profile.initial_sd < 0.0 || profile.full_spread_at < 0.0)
        fail(ErrorCode::InvalidParams, "negative noise");
    for (auto id : session.samples())
        if (!latent.count(id)) fail(ErrorCode::UnknownSample, "no latent value for sample " + std::to_string(id));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const auto& experts = session.experts();

    std::map<std::int64_t, double> spread;
    for (auto id : session.samples())
        spread[id] = profile.full_spread_at > 0.0 ? std::clamp(latent.at(id) / profile.full_spread_at, 0.0, 1.0) : 1.0;

    // opinion[expert][sample]
    std::map<std::string, std::map<std::int64_t, double>> opinion;
    for (const auto& e : experts)
        for (auto id : session.samples())
            opinion[e][id] = latent.at(id) + spread[id] * profile.initial_sd * unit(rng);

    SimulationReport report;
    std::map<std::int64_t, double> last_mean;
    while (!session.complete()) {
        const int r = session.current_round();
        const auto open = session.open_samples(r);
        if (r > 1) {
            for (const auto& e : experts)
                for (auto id : open) {
                    double& x = opinion[e][id];
                    x += profile.contraction * (last_mean.at(id) - x);
                    if (profile.noise_sd > 0.0) x += spread[id] * profile.noise_sd * unit(rng);
                }
        }

        std::map<std::int64_t, double> sigma;
        std::vector<double> values(experts.size());
        for (auto id : open) {
            for (std::size_t k = 0; k < experts.size(); ++k) values[k] = opinion[experts[k]][id];
            sigma[id] = dispersion(values).sigma;
        }
        report.opinion_sigma.push_back(std::move(sigma));

        for (const auto& e : experts) {
            std::vector<ScoreSheet> sheets;
            sheets.reserve(open.size());
            for (auto id : open) {
                const int total = std::clamp(static_cast<int>(std::lround(opinion[e][id])), 0, kMaxTotal);
                sheets.push_back(ScoreSheet{e, r, id, spread_total(total)});
            }
            session.submit_scores(e, r, sheets);
        }
        for (const auto& result : session.close_round(r)) {
            last_mean[result.sample_id] = result.mean;
            if (result.label) {
                ++report.rounds_to_convergence[r];
                if (result.forced) ++report.forced;
            }
        }
        report.rounds_run = r;
    }
    return report;
}

}  // namespace merchcast::delphi
