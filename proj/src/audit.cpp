#include "merchcast/dataset.hpp"
#include "merchcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace merchcast {

namespace {

constexpr std::string_view kModule = "dataset";

std::string_view dtype_of(Field field) {
    switch (field) {
        case Field::Id:
        case Field::Year:
        case Field::Runtime:
        case Field::SeriesCount:
        case Field::Label: return "int64";
        case Field::ImdbRating:
        case Field::BoxOffice: return "float64";
        case Field::IsSeries: return "bool";
        default: return "object";
    }
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

template <typename T>
T mode_of(const std::vector<T>& values) {
    std::map<T, std::size_t> counts;
    for (const auto& v : values) ++counts[v];
    // std::map iterates ascending, so `>` keeps the smallest value on ties.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

[[noreturn]] void all_missing(Field f) {
    throw Error(ErrorCode::AllMissingColumn, kModule, std::string(field_key(f)) + " has no values to impute from");
}

template <typename Get>
std::vector<double> present_numbers(const std::vector<MovieRecord>& records, Get get) {
    std::vector<double> out;
    for (const auto& r : records)
        if (auto v = get(r)) out.push_back(static_cast<double>(*v));
    return out;
}

template <typename Member>
void fill_real(std::vector<MovieRecord>& records, Field field, Member member) {
    auto values = present_numbers(records, [&](const MovieRecord& r) { return r.*member; });
    if (values.size() == records.size()) return;
    if (values.empty()) all_missing(field);
    const double fill = median_of(std::move(values));
    for (auto& r : records)
        if (!(r.*member)) {
            r.*member = fill;
            r.imputed.insert(field);
        }
}

template <typename Member>
void fill_integer(std::vector<MovieRecord>& records, Field field, Member member) {
    auto values = present_numbers(records, [&](const MovieRecord& r) { return r.*member; });
    if (values.size() == records.size()) return;
    if (values.empty()) all_missing(field);
    const int fill = static_cast<int>(std::floor(median_of(std::move(values)) + 0.5));
    for (auto& r : records)
        if (!(r.*member)) {
            r.*member = fill;
            r.imputed.insert(field);
        }
}

void fill_list(std::vector<MovieRecord>& records, Field field,
               std::optional<std::vector<std::string>> MovieRecord::*member) {
    std::vector<std::string> items;
    bool gaps = false;
    for (const auto& r : records) {
        if (r.*member) items.insert(items.end(), (r.*member)->begin(), (r.*member)->end());
        else gaps = true;
    }
    if (!gaps) return;
    if (items.empty()) all_missing(field);
    const std::vector<std::string> fill{mode_of(items)};
    for (auto& r : records)
        if (!(r.*member)) {
            r.*member = fill;
            r.imputed.insert(field);
        }
}

void fill_series(std::vector<MovieRecord>& records) {
    std::vector<int> flags;
    for (const auto& r : records)
        if (r.is_series) flags.push_back(*r.is_series ? 1 : 0);
    const bool flag_gaps = flags.size() != records.size();
    if (flag_gaps && flags.empty() &&
        std::none_of(records.begin(), records.end(), [](const MovieRecord& r) { return r.series_count.has_value(); }))
        all_missing(Field::IsSeries);
    const bool mode_flag = flags.empty() ? false : mode_of(flags) == 1;

    for (auto& r : records) {
        if (r.is_series) continue;
        // A positive count already says the film belongs to a series.
        r.is_series = (r.series_count && *r.series_count > 0) ? true : mode_flag;
        r.imputed.insert(Field::IsSeries);
    }

    std::vector<double> series_counts;
    std::vector<double> all_counts;
    for (const auto& r : records) {
        if (!r.series_count) continue;
        all_counts.push_back(*r.series_count);
        if (*r.is_series) series_counts.push_back(*r.series_count);
    }
    for (auto& r : records) {
        if (!*r.is_series) {
            // Closure of "not a series ⇒ count 0".
            if (r.series_count != 0) {
                r.series_count = 0;
                r.imputed.insert(Field::SeriesCount);
            }
            continue;
        }
        if (r.series_count) continue;
        const auto& pool = series_counts.empty() ? all_counts : series_counts;
        if (pool.empty()) all_missing(Field::SeriesCount);
        r.series_count = static_cast<int>(std::floor(median_of(pool) + 0.5));
        r.imputed.insert(Field::SeriesCount);
    }
}

}  // namespace

std::size_t NullReport::missing(Field field) const {
    for (const auto& c : columns)
        if (c.field == field) return total_rows - c.non_null_count;
    return total_rows;
}

std::string NullReport::render() const {
    std::size_t name_width = std::string_view("Column").size();
    for (const auto& c : columns) name_width = std::max(name_width, field_display_name(c.field).size());

    auto pad = [](std::string text, std::size_t width) {
        if (text.size() < width) text.append(width - text.size(), ' ');
        return text;
    };
    const std::size_t count_width = std::string_view("Non-Null Count").size();

    std::ostringstream out;
    out << "RangeIndex: " << total_rows << " entries\n";
    out << pad("#", 4) << pad("Column", name_width + 2) << pad("Non-Null Count", count_width + 2) << "Dtype\n";
    out << pad("---", 4) << pad("------", name_width + 2) << pad("--------------", count_width + 2) << "-----\n";
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto& c = columns[i];
        out << pad(std::to_string(i), 4) << pad(std::string(field_display_name(c.field)), name_width + 2)
            << pad(std::to_string(c.non_null_count) + " non-null", count_width + 2) << c.dtype << "\n";
    }
    return out.str();
}

NullReport null_report(const std::vector<MovieRecord>& records) {
    if (records.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "no records to audit");
    NullReport report;
    report.total_rows = records.size();
    for (auto f : kAllFields) {
        NullReport::Column column{f, 0, std::string(dtype_of(f))};
        for (const auto& r : records) column.non_null_count += r.has(f) ? 1 : 0;
        report.columns.push_back(std::move(column));
    }
    return report;
}

std::vector<MovieRecord> impute(std::vector<MovieRecord> records, ImputePolicy policy) {
    if (policy == ImputePolicy::Reject) {
        std::vector<std::string> gaps;
        for (auto f : kAllFields) {
            if (f == Field::Label) continue;
            auto n = std::count_if(records.begin(), records.end(), [f](const MovieRecord& r) { return !r.has(f); });
            if (n) gaps.push_back(std::string(field_key(f)) + " (" + std::to_string(n) + ")");
        }
        if (!gaps.empty()) {
            std::string detail = "gaps in";
            for (const auto& g : gaps) detail += " " + g;
            throw Error(ErrorCode::MissingDataRejected, kModule, detail);
        }
        return records;
    }

    for (auto& r : records) {
        if (!r.film) {
            r.film = "unknown";
            r.imputed.insert(Field::Film);
        }
        if (!r.script) {
            r.script = "unknown";
            r.imputed.insert(Field::Script);
        }
    }
    fill_integer(records, Field::Year, &MovieRecord::year);
    fill_integer(records, Field::Runtime, &MovieRecord::runtime_minutes);
    fill_real(records, Field::ImdbRating, &MovieRecord::imdb_rating);
    fill_real(records, Field::BoxOffice, &MovieRecord::box_office);

    {
        std::vector<Mpaa> ratings;
        for (const auto& r : records)
            if (r.mpaa) ratings.push_back(*r.mpaa);
        if (ratings.size() != records.size()) {
            if (ratings.empty()) all_missing(Field::Mpaa);
            const Mpaa fill = mode_of(ratings);
            for (auto& r : records)
                if (!r.mpaa) {
                    r.mpaa = fill;
                    r.imputed.insert(Field::Mpaa);
                }
        }
    }

    fill_list(records, Field::Genres, &MovieRecord::genres);
    fill_list(records, Field::Directors, &MovieRecord::directors);
    fill_list(records, Field::Writers, &MovieRecord::writers);
    fill_list(records, Field::Stars, &MovieRecord::stars);
    fill_list(records, Field::Countries, &MovieRecord::countries);
    fill_list(records, Field::Languages, &MovieRecord::languages);
    fill_list(records, Field::FilmingLocations, &MovieRecord::filming_locations);
    fill_list(records, Field::ProductionCompanies, &MovieRecord::production_companies);
    fill_series(records);
    return records;
}

}  // namespace merchcast
