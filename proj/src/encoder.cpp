#include "merchcast/dataset.hpp"
#include "merchcast/error.hpp"

#include <algorithm>
#include <map>

namespace merchcast {

namespace {

constexpr std::string_view kModule = "dataset";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(code, kModule, detail); }

constexpr Field kFeatureFields[] = {
    Field::Film,     Field::Year,      Field::Mpaa,      Field::Runtime,          Field::ImdbRating,
    Field::Genres,   Field::Directors, Field::Writers,   Field::Stars,            Field::Countries,
    Field::Languages, Field::FilmingLocations, Field::ProductionCompanies, Field::BoxOffice, Field::IsSeries,
    Field::SeriesCount, Field::Script,
};

constexpr Mpaa kRatings[] = {Mpaa::G, Mpaa::PG, Mpaa::PG13, Mpaa::R, Mpaa::NC17, Mpaa::NotRated};

bool is_list(Field f) {
    switch (f) {
        case Field::Genres:
        case Field::Directors:
        case Field::Writers:
        case Field::Stars:
        case Field::Countries:
        case Field::Languages:
        case Field::FilmingLocations:
        case Field::ProductionCompanies: return true;
        default: return false;
    }
}

bool is_numeric(Field f) {
    return f == Field::Year || f == Field::Runtime || f == Field::ImdbRating || f == Field::BoxOffice ||
           f == Field::SeriesCount;
}

bool allowed(Field f, EncodePolicy p) {
    if (p == EncodePolicy::Drop) return true;
    if (is_list(f)) return p == EncodePolicy::MultiHot || p == EncodePolicy::TopKFrequency;
    if (is_numeric(f)) return p == EncodePolicy::NumericPassthrough;
    if (f == Field::Mpaa) return p == EncodePolicy::Ordinal || p == EncodePolicy::MultiHot;
    if (f == Field::IsSeries) return p == EncodePolicy::Binary;
    return false;  // film and script are free text
}

const std::vector<std::string>& list_of(const MovieRecord& r, Field f) {
    static const std::vector<std::string> empty;
    const std::optional<std::vector<std::string>>* slot = nullptr;
    switch (f) {
        case Field::Genres: slot = &r.genres; break;
        case Field::Directors: slot = &r.directors; break;
        case Field::Writers: slot = &r.writers; break;
        case Field::Stars: slot = &r.stars; break;
        case Field::Countries: slot = &r.countries; break;
        case Field::Languages: slot = &r.languages; break;
        case Field::FilmingLocations: slot = &r.filming_locations; break;
        case Field::ProductionCompanies: slot = &r.production_companies; break;
        default: return empty;
    }
    return slot->has_value() ? **slot : empty;
}

double numeric_of(const MovieRecord& r, Field f) {
    switch (f) {
        case Field::Year: return *r.year;
        case Field::Runtime: return *r.runtime_minutes;
        case Field::ImdbRating: return *r.imdb_rating;
        case Field::BoxOffice: return *r.box_office;
        case Field::SeriesCount: return *r.series_count;
        default: return 0.0;
    }
}

void validate_spec(const EncoderSpec& spec) {
    for (auto f : kFeatureFields) {
        auto it = spec.policies.find(f);
        if (it == spec.policies.end())
            fail(ErrorCode::InvalidEncoderSpec, "no policy for field " + std::string(field_key(f)));
        if (!allowed(f, it->second.policy))
            fail(ErrorCode::InvalidEncoderSpec, std::string(to_string(it->second.policy)) + " cannot encode " +
                                                    std::string(field_key(f)));
        if (it->second.policy == EncodePolicy::TopKFrequency && it->second.k == 0)
            fail(ErrorCode::InvalidEncoderSpec, "top_k_frequency needs k > 0 for " + std::string(field_key(f)));
    }
    for (const auto& [f, _] : spec.policies)
        if (f == Field::Id || f == Field::Label)
            fail(ErrorCode::InvalidEncoderSpec, std::string(field_key(f)) + " is not a feature field");
}

std::optional<EncodePolicy> policy_from_string(std::string_view text) {
    for (auto p : {EncodePolicy::MultiHot, EncodePolicy::Ordinal, EncodePolicy::NumericPassthrough,
                   EncodePolicy::Binary, EncodePolicy::TopKFrequency, EncodePolicy::Drop})
        if (to_string(p) == text) return p;
    return std::nullopt;
}

}  // namespace

std::string_view to_string(EncodePolicy policy) noexcept {
    switch (policy) {
        case EncodePolicy::MultiHot: return "multi_hot";
        case EncodePolicy::Ordinal: return "ordinal";
        case EncodePolicy::NumericPassthrough: return "numeric_passthrough";
        case EncodePolicy::Binary: return "binary";
        case EncodePolicy::TopKFrequency: return "top_k_frequency";
        case EncodePolicy::Drop: return "drop";
    }
    return "drop";
}

EncoderSpec EncoderSpec::defaults() {
    EncoderSpec spec;
    auto set = [&](Field f, EncodePolicy p, std::size_t k = 0) { spec.policies[f] = FieldPolicy{p, k}; };
    set(Field::Genres, EncodePolicy::MultiHot);
    set(Field::Languages, EncodePolicy::MultiHot);
    set(Field::Countries, EncodePolicy::MultiHot);
    set(Field::Mpaa, EncodePolicy::Ordinal);
    for (auto f : {Field::Year, Field::Runtime, Field::ImdbRating, Field::BoxOffice, Field::SeriesCount})
        set(f, EncodePolicy::NumericPassthrough);
    set(Field::IsSeries, EncodePolicy::Binary);
    for (auto f : {Field::Directors, Field::Writers, Field::Stars, Field::ProductionCompanies})
        set(f, EncodePolicy::TopKFrequency, 20);
    for (auto f : {Field::Film, Field::Script, Field::FilmingLocations}) set(f, EncodePolicy::Drop);
    return spec;
}

EncoderSpec fit_encoder(const std::vector<MovieRecord>& records, EncoderSpec spec) {
    validate_spec(spec);
    spec.vocabulary.clear();
    for (const auto& [field, policy] : spec.policies) {
        if (!is_list(field)) continue;
        if (policy.policy == EncodePolicy::MultiHot) {
            std::vector<std::string> vocab;
            for (const auto& r : records) {
                const auto& items = list_of(r, field);
                vocab.insert(vocab.end(), items.begin(), items.end());
            }
            std::sort(vocab.begin(), vocab.end());
            vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
            spec.vocabulary[field] = std::move(vocab);
        } else if (policy.policy == EncodePolicy::TopKFrequency) {
            std::map<std::string, std::size_t> counts;
            for (const auto& r : records) {
                // count each film once even if a name is listed twice
                auto items = list_of(r, field);
                std::sort(items.begin(), items.end());
                items.erase(std::unique(items.begin(), items.end()), items.end());
                for (const auto& item : items) ++counts[item];
            }
            std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
            std::vector<std::string> vocab;
            for (std::size_t i = 0; i < ranked.size() && i < policy.k; ++i) vocab.push_back(ranked[i].first);
            spec.vocabulary[field] = std::move(vocab);
        }
    }
    spec.fitted = true;
    return spec;
}

FeatureMatrix encode(const std::vector<MovieRecord>& records, const EncoderSpec& fitted) {
    if (!fitted.fitted) fail(ErrorCode::UnfittedEncoder, "call fit_encoder before encode");
    validate_spec(fitted);

    // Column layout follows field order, then vocabulary order.
    struct Block {
        Field field;
        FieldPolicy policy;
        const std::vector<std::string>* vocab = nullptr;
        Eigen::Index offset = 0;
    };
    std::vector<Block> blocks;
    FeatureMatrix out;
    for (auto f : kFeatureFields) {
        const auto& policy = fitted.policies.at(f);
        if (policy.policy == EncodePolicy::Drop) continue;
        Block block{f, policy, nullptr, static_cast<Eigen::Index>(out.column_names.size())};
        const std::string key(field_key(f));
        if (is_list(f)) {
            auto it = fitted.vocabulary.find(f);
            if (it == fitted.vocabulary.end()) fail(ErrorCode::UnfittedEncoder, "no vocabulary for " + key);
            block.vocab = &it->second;
            for (const auto& item : it->second) out.column_names.push_back(key + "=" + item);
        } else if (f == Field::Mpaa && policy.policy == EncodePolicy::MultiHot) {
            for (auto rating : kRatings) out.column_names.push_back(key + "=" + std::string(to_string(rating)));
        } else {
            out.column_names.push_back(key);
        }
        blocks.push_back(block);
    }

    const auto n = static_cast<Eigen::Index>(records.size());
    const auto p = static_cast<Eigen::Index>(out.column_names.size());
    out.rows = RowMatrix::Zero(n, p);
    out.row_ids.reserve(records.size());
    bool all_labeled = !records.empty();

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<std::size_t>(i)];
        out.row_ids.push_back(r.id);
        all_labeled = all_labeled && r.label.has_value();
        for (const auto& b : blocks) {
            if (!r.has(b.field))
                fail(ErrorCode::MissingValue, std::string(field_key(b.field)) + " missing for record id " +
                                                  std::to_string(r.id) + "; impute first");
            if (b.vocab) {
                for (const auto& item : list_of(r, b.field)) {
                    auto pos = std::find(b.vocab->begin(), b.vocab->end(), item);
                    if (pos == b.vocab->end()) {
                        if (fitted.strict && b.policy.policy == EncodePolicy::MultiHot)
                            fail(ErrorCode::UnknownCategory,
                                 std::string(field_key(b.field)) + " value '" + item + "' not in vocabulary");
                        continue;
                    }
                    out.rows(i, b.offset + (pos - b.vocab->begin())) = 1.0;
                }
            } else if (b.field == Field::Mpaa) {
                const auto ordinal = static_cast<Eigen::Index>(*r.mpaa);
                if (b.policy.policy == EncodePolicy::Ordinal) out.rows(i, b.offset) = static_cast<double>(ordinal);
                else out.rows(i, b.offset + ordinal) = 1.0;
            } else if (b.field == Field::IsSeries) {
                out.rows(i, b.offset) = *r.is_series ? 1.0 : 0.0;
            } else {
                out.rows(i, b.offset) = numeric_of(r, b.field);
            }
        }
    }
    if (all_labeled) {
        std::vector<int> targets;
        for (const auto& r : records) targets.push_back(*r.label);
        out.targets = std::move(targets);
    }
    return out;
}

Eigen::VectorXd FeatureMatrix::target_vector() const {
    if (!targets) throw Error(ErrorCode::UnlabeledRecord, kModule, "feature matrix carries no targets");
    Eigen::VectorXd y(static_cast<Eigen::Index>(targets->size()));
    for (std::size_t i = 0; i < targets->size(); ++i) y(static_cast<Eigen::Index>(i)) = (*targets)[i];
    return y;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& positions) const {
    FeatureMatrix out;
    out.column_names = column_names;
    out.rows.resize(static_cast<Eigen::Index>(positions.size()), rows.cols());
    std::vector<int> picked_targets;
    for (std::size_t k = 0; k < positions.size(); ++k) {
        const auto src = static_cast<Eigen::Index>(positions[k]);
        out.rows.row(static_cast<Eigen::Index>(k)) = rows.row(src);
        out.row_ids.push_back(row_ids.empty() ? static_cast<std::int64_t>(positions[k]) : row_ids[positions[k]]);
        if (targets) picked_targets.push_back((*targets)[positions[k]]);
    }
    if (targets) out.targets = std::move(picked_targets);
    return out;
}

FeatureMatrix make_feature_matrix(RowMatrix rows, std::optional<std::vector<int>> targets) {
    FeatureMatrix out;
    out.rows = std::move(rows);
    for (Eigen::Index j = 0; j < out.rows.cols(); ++j) out.column_names.push_back("x" + std::to_string(j));
    for (Eigen::Index i = 0; i < out.rows.rows(); ++i) out.row_ids.push_back(i);
    out.targets = std::move(targets);
    return out;
}

nlohmann::json encoder_to_json(const EncoderSpec& spec) {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    doc["strict"] = spec.strict;
    doc["fitted"] = spec.fitted;
    auto& policies = doc["policies"] = nlohmann::json::object();
    for (const auto& [f, p] : spec.policies) {
        nlohmann::json entry{{"policy", to_string(p.policy)}};
        if (p.policy == EncodePolicy::TopKFrequency) entry["k"] = p.k;
        policies[std::string(field_key(f))] = entry;
    }
    auto& vocab = doc["vocabulary"] = nlohmann::json::object();
    for (const auto& [f, items] : spec.vocabulary) vocab[std::string(field_key(f))] = items;
    return doc;
}

EncoderSpec encoder_from_json(const nlohmann::json& doc) {
    EncoderSpec spec;
    try {
        spec.strict = doc.value("strict", false);
        spec.fitted = doc.value("fitted", false);
        for (const auto& [key, entry] : doc.at("policies").items()) {
            auto f = field_from_key(key);
            if (!f) fail(ErrorCode::InvalidEncoderSpec, "unknown field '" + key + "'");
            auto p = policy_from_string(entry.at("policy").get<std::string>());
            if (!p) fail(ErrorCode::InvalidEncoderSpec, "unknown policy for '" + key + "'");
            spec.policies[*f] = FieldPolicy{*p, entry.value("k", std::size_t{0})};
        }
        if (doc.contains("vocabulary"))
            for (const auto& [key, items] : doc.at("vocabulary").items()) {
                auto f = field_from_key(key);
                if (!f) fail(ErrorCode::InvalidEncoderSpec, "unknown field '" + key + "'");
                spec.vocabulary[*f] = items.get<std::vector<std::string>>();
            }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("encoder document: ") + e.what());
    }
    validate_spec(spec);
    return spec;
}

}  // namespace merchcast
