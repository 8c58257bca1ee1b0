#include "merchcast/dataset.hpp"
#include "merchcast/error.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace merchcast {

using detail::trim;

namespace {

constexpr std::string_view kModule = "dataset";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(code, kModule, detail); }

int current_year() {
    using namespace std::chrono;
    const auto today = year_month_day{floor<days>(system_clock::now())};
    return static_cast<int>(today.year());
}

struct Alias {
    std::string_view key;
    Field field;
};

// Normalized header spellings accepted at ingest, including the spellings
// that appear in published movie tables.
constexpr Alias kAliases[] = {
    {"id", Field::Id},
    {"film", Field::Film},
    {"movie", Field::Film},
    {"title", Field::Film},
    {"year", Field::Year},
    {"mpaa", Field::Mpaa},
    {"motion_picture_rating_mpaa", Field::Mpaa},
    {"motion_picture_rating", Field::Mpaa},
    {"runtime_minutes", Field::Runtime},
    {"runtime", Field::Runtime},
    {"time", Field::Runtime},
    {"imdb_rating", Field::ImdbRating},
    {"genres", Field::Genres},
    {"genre", Field::Genres},
    {"gmres", Field::Genres},
    {"directors", Field::Directors},
    {"director", Field::Directors},
    {"writers", Field::Writers},
    {"stars", Field::Stars},
    {"countries", Field::Countries},
    {"countries_of_origin", Field::Countries},
    {"countries_of_origina", Field::Countries},
    {"languages", Field::Languages},
    {"language", Field::Languages},
    {"filming_locations", Field::FilmingLocations},
    {"production_companies", Field::ProductionCompanies},
    {"box_office", Field::BoxOffice},
    {"box_office_100_million", Field::BoxOffice},
    {"is_series", Field::IsSeries},
    {"movie_series", Field::IsSeries},
    {"series_count", Field::SeriesCount},
    {"how_many_movie_series", Field::SeriesCount},
    {"script", Field::Script},
    {"label", Field::Label},
    {"experts_score", Field::Label},
    {"total_score", Field::Label},
};

std::optional<Field> field_from_header(std::string_view header) {
    const auto key = detail::normalize_key(header);
    for (const auto& alias : kAliases)
        if (alias.key == key) return alias.field;
    return std::nullopt;
}

std::string describe(Field field, std::int64_t id) {
    return std::string(field_key(field)) + " (record id " + std::to_string(id) + ")";
}

std::optional<bool> parse_bool(std::string_view text) {
    const auto lower = detail::to_lower(trim(text));
    if (lower == "yes" || lower == "y" || lower == "true" || lower == "1") return true;
    if (lower == "no" || lower == "n" || lower == "false" || lower == "0") return false;
    return std::nullopt;
}

std::vector<std::string> normalize_genres(std::vector<std::string> genres) {
    std::sort(genres.begin(), genres.end());
    genres.erase(std::unique(genres.begin(), genres.end()), genres.end());
    return genres;
}

std::optional<std::vector<std::string>>* list_slot(MovieRecord& r, Field field) {
    switch (field) {
        case Field::Genres: return &r.genres;
        case Field::Directors: return &r.directors;
        case Field::Writers: return &r.writers;
        case Field::Stars: return &r.stars;
        case Field::Countries: return &r.countries;
        case Field::Languages: return &r.languages;
        case Field::FilmingLocations: return &r.filming_locations;
        case Field::ProductionCompanies: return &r.production_companies;
        default: return nullptr;
    }
}

const std::optional<std::vector<std::string>>* list_slot(const MovieRecord& r, Field field) {
    return list_slot(const_cast<MovieRecord&>(r), field);
}

template <typename T>
T require_number(std::string_view text, Field field, std::int64_t id) {
    auto value = detail::parse_number<T>(text);
    if (!value) fail(ErrorCode::TypeError, describe(field, id) + ": not a number: '" + std::string(text) + "'");
    return *value;
}

// Assigns one textual cell. `text` is already trimmed and non-empty.
void assign_text(MovieRecord& r, Field field, std::string_view text) {
    switch (field) {
        case Field::Id: r.id = require_number<std::int64_t>(text, field, r.id); break;
        case Field::Film: r.film = std::string(text); break;
        case Field::Script: r.script = std::string(text); break;
        case Field::Year: r.year = require_number<int>(text, field, r.id); break;
        case Field::Mpaa: {
            auto rating = parse_mpaa(text);
            if (!rating) fail(ErrorCode::TypeError, describe(field, r.id) + ": unknown rating '" + std::string(text) + "'");
            r.mpaa = *rating;
            break;
        }
        case Field::Runtime: {
            auto minutes = parse_runtime(text);
            if (!minutes) fail(ErrorCode::TypeError, describe(field, r.id) + ": bad runtime '" + std::string(text) + "'");
            r.runtime_minutes = *minutes;
            break;
        }
        case Field::ImdbRating: r.imdb_rating = require_number<double>(text, field, r.id); break;
        case Field::BoxOffice: r.box_office = require_number<double>(text, field, r.id); break;
        case Field::SeriesCount: r.series_count = require_number<int>(text, field, r.id); break;
        case Field::Label: r.label = require_number<int>(text, field, r.id); break;
        case Field::IsSeries: {
            auto flag = parse_bool(text);
            if (!flag) fail(ErrorCode::TypeError, describe(field, r.id) + ": expected yes/no, got '" + std::string(text) + "'");
            r.is_series = *flag;
            break;
        }
        default: {
            auto items = detail::split_list(text);
            if (field == Field::Genres) items = normalize_genres(std::move(items));
            *list_slot(r, field) = std::move(items);
        }
    }
}

void check_unique_ids(const std::vector<MovieRecord>& records) {
    std::unordered_set<std::int64_t> seen;
    for (const auto& r : records)
        if (!seen.insert(r.id).second) fail(ErrorCode::DuplicateId, "id " + std::to_string(r.id) + " appears more than once");
}

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += "; ";
        out += items[i];
    }
    return out;
}

}  // namespace

std::string_view to_string(Mpaa rating) noexcept {
    switch (rating) {
        case Mpaa::G: return "G";
        case Mpaa::PG: return "PG";
        case Mpaa::PG13: return "PG-13";
        case Mpaa::R: return "R";
        case Mpaa::NC17: return "NC-17";
        case Mpaa::NotRated: return "NotRated";
    }
    return "NotRated";
}

std::optional<Mpaa> parse_mpaa(std::string_view text) {
    const auto key = detail::normalize_key(text);
    if (key == "g") return Mpaa::G;
    if (key == "pg") return Mpaa::PG;
    if (key == "pg_13") return Mpaa::PG13;
    if (key == "r") return Mpaa::R;
    if (key == "nc_17") return Mpaa::NC17;
    if (key == "notrated" || key == "not_rated" || key == "unrated" || key == "nr") return Mpaa::NotRated;
    return std::nullopt;
}

std::string_view field_key(Field field) noexcept {
    switch (field) {
        case Field::Id: return "id";
        case Field::Film: return "film";
        case Field::Year: return "year";
        case Field::Mpaa: return "mpaa";
        case Field::Runtime: return "runtime_minutes";
        case Field::ImdbRating: return "imdb_rating";
        case Field::Genres: return "genres";
        case Field::Directors: return "directors";
        case Field::Writers: return "writers";
        case Field::Stars: return "stars";
        case Field::Countries: return "countries";
        case Field::Languages: return "languages";
        case Field::FilmingLocations: return "filming_locations";
        case Field::ProductionCompanies: return "production_companies";
        case Field::BoxOffice: return "box_office";
        case Field::IsSeries: return "is_series";
        case Field::SeriesCount: return "series_count";
        case Field::Script: return "script";
        case Field::Label: return "label";
    }
    return "";
}

std::string_view field_display_name(Field field) noexcept {
    switch (field) {
        case Field::Id: return "id";
        case Field::Film: return "Film";
        case Field::Year: return "Year";
        case Field::Mpaa: return "Motion Picture Rating(MPAA)";
        case Field::Runtime: return "Time";
        case Field::ImdbRating: return "IMDB rating";
        case Field::Genres: return "Genres";
        case Field::Directors: return "Directors";
        case Field::Writers: return "Writers";
        case Field::Stars: return "Stars";
        case Field::Countries: return "Countries of origin";
        case Field::Languages: return "Languages";
        case Field::FilmingLocations: return "Filming locations";
        case Field::ProductionCompanies: return "Production companies";
        case Field::BoxOffice: return "Box Office";
        case Field::IsSeries: return "Movie series";
        case Field::SeriesCount: return "How many movie series";
        case Field::Script: return "Script";
        case Field::Label: return "Total score";
    }
    return "";
}

std::optional<Field> field_from_key(std::string_view key) {
    for (auto f : kAllFields)
        if (field_key(f) == key) return f;
    return std::nullopt;
}

bool MovieRecord::has(Field field) const {
    switch (field) {
        case Field::Id: return true;
        case Field::Film: return film.has_value();
        case Field::Year: return year.has_value();
        case Field::Mpaa: return mpaa.has_value();
        case Field::Runtime: return runtime_minutes.has_value();
        case Field::ImdbRating: return imdb_rating.has_value();
        case Field::BoxOffice: return box_office.has_value();
        case Field::IsSeries: return is_series.has_value();
        case Field::SeriesCount: return series_count.has_value();
        case Field::Script: return script.has_value();
        case Field::Label: return label.has_value();
        default: return list_slot(*this, field)->has_value();
    }
}

void MovieRecord::clear(Field field) {
    switch (field) {
        case Field::Id: break;
        case Field::Film: film.reset(); break;
        case Field::Year: year.reset(); break;
        case Field::Mpaa: mpaa.reset(); break;
        case Field::Runtime: runtime_minutes.reset(); break;
        case Field::ImdbRating: imdb_rating.reset(); break;
        case Field::BoxOffice: box_office.reset(); break;
        case Field::IsSeries: is_series.reset(); break;
        case Field::SeriesCount: series_count.reset(); break;
        case Field::Script: script.reset(); break;
        case Field::Label: label.reset(); break;
        default: list_slot(*this, field)->reset();
    }
}

void validate_record(const MovieRecord& r, int this_year) {
    auto bad = [&](Field f, const std::string& why) { fail(ErrorCode::TypeError, describe(f, r.id) + ": " + why); };
    if (r.year && (*r.year < kMinYear || *r.year > this_year))
        bad(Field::Year, "year " + std::to_string(*r.year) + " outside [1970, " + std::to_string(this_year) + "]");
    if (r.runtime_minutes && *r.runtime_minutes < 0) bad(Field::Runtime, "negative runtime");
    if (r.imdb_rating && (*r.imdb_rating < 0.0 || *r.imdb_rating > 10.0)) bad(Field::ImdbRating, "rating outside [0,10]");
    if (r.box_office && *r.box_office < 0.0) bad(Field::BoxOffice, "negative box office");
    if (r.series_count && *r.series_count < 0) bad(Field::SeriesCount, "negative series count");
    if (r.is_series && !*r.is_series && r.series_count && *r.series_count != 0)
        bad(Field::SeriesCount, "non-series film with series count " + std::to_string(*r.series_count));
    if (r.label && (*r.label < 0 || *r.label > kMaxLabel)) bad(Field::Label, "label outside [0,25]");
}

std::optional<int> parse_runtime(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    if (auto plain = detail::parse_number<int>(text)) return *plain >= 0 ? plain : std::nullopt;

    int total = 0;
    bool any = false;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == ' ') {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        if (start == i || i >= text.size()) return std::nullopt;
        const int value = *detail::parse_number<int>(text.substr(start, i - start));
        const char unit = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
        if (unit == 'h') total += 60 * value;
        else if (unit == 'm') total += value;
        else return std::nullopt;
        ++i;
        // accept "min" / "mins"
        while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
        any = true;
    }
    return any ? std::optional<int>(total) : std::nullopt;
}

std::optional<DataFormat> format_from_path(const std::filesystem::path& path) {
    const auto ext = detail::to_lower(path.extension().string());
    if (ext == ".csv") return DataFormat::Csv;
    if (ext == ".jsonl" || ext == ".ndjson" || ext == ".json") return DataFormat::Jsonl;
    return std::nullopt;
}

std::vector<MovieRecord> parse_csv(std::string_view text) {
    auto rows = detail::parse_csv_rows(text);
    if (rows.empty()) fail(ErrorCode::UnknownColumn, "no header row");

    const auto& header = rows.front();
    std::vector<Field> columns;
    std::set<Field> seen;
    for (const auto& name : header) {
        auto field = field_from_header(name);
        if (!field) fail(ErrorCode::UnknownColumn, "unrecognised column '" + name + "'");
        if (!seen.insert(*field).second) fail(ErrorCode::UnknownColumn, "column '" + name + "' given twice");
        columns.push_back(*field);
    }
    for (auto f : kAllFields)
        if (f != Field::Id && f != Field::Label && !seen.count(f))
            fail(ErrorCode::UnknownColumn, "missing column '" + std::string(field_key(f)) + "'");

    const bool has_id = seen.count(Field::Id) > 0;
    const int this_year = current_year();
    std::vector<MovieRecord> records;
    records.reserve(rows.size() - 1);
    for (std::size_t row = 1; row < rows.size(); ++row) {
        const auto& cells = rows[row];
        if (cells.size() != columns.size())
            fail(ErrorCode::ParseError, "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                            " cells, header has " + std::to_string(columns.size()));
        MovieRecord r;
        r.id = static_cast<std::int64_t>(row);
        if (has_id) {
            auto pos = std::find(columns.begin(), columns.end(), Field::Id) - columns.begin();
            auto text = trim(cells[static_cast<std::size_t>(pos)]);
            if (text.empty()) fail(ErrorCode::TypeError, "row " + std::to_string(row) + ": empty id");
            assign_text(r, Field::Id, text);
        }
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (columns[c] == Field::Id) continue;
            auto text = trim(cells[c]);
            if (text.empty()) continue;
            assign_text(r, columns[c], text);
        }
        validate_record(r, this_year);
        records.push_back(std::move(r));
    }
    check_unique_ids(records);
    return records;
}

MovieRecord record_from_json(const nlohmann::json& object) {
    if (!object.is_object()) fail(ErrorCode::ParseError, "record is not a JSON object");
    MovieRecord r;
    bool has_id = false;
    for (const auto& [name, value] : object.items()) {
        if (name == "imputed") {
            for (const auto& key : value) {
                auto f = field_from_key(key.get<std::string>());
                if (!f) fail(ErrorCode::UnknownColumn, "unknown imputed field '" + key.get<std::string>() + "'");
                r.imputed.insert(*f);
            }
            continue;
        }
        auto field = field_from_header(name);
        if (!field) fail(ErrorCode::UnknownColumn, "unrecognised key '" + name + "'");
        if (value.is_null()) continue;
        if (*field == Field::Id) has_id = true;
        if (value.is_array()) {
            auto* slot = list_slot(r, *field);
            if (!slot) fail(ErrorCode::TypeError, describe(*field, r.id) + ": unexpected array");
            std::vector<std::string> items;
            for (const auto& item : value) items.push_back(item.get<std::string>());
            if (*field == Field::Genres) items = normalize_genres(std::move(items));
            *slot = std::move(items);
        } else if (value.is_boolean()) {
            if (*field != Field::IsSeries) fail(ErrorCode::TypeError, describe(*field, r.id) + ": unexpected boolean");
            r.is_series = value.get<bool>();
        } else if (value.is_number()) {
            if (value.is_number_float() &&
                (*field == Field::Year || *field == Field::SeriesCount || *field == Field::Label || *field == Field::Id ||
                 *field == Field::Runtime))
                fail(ErrorCode::TypeError, describe(*field, r.id) + ": expected an integer");
            assign_text(r, *field, value.dump());
        } else if (value.is_string()) {
            auto text = trim(value.get_ref<const std::string&>());
            if (!text.empty()) assign_text(r, *field, text);
        } else {
            fail(ErrorCode::TypeError, describe(*field, r.id) + ": unsupported JSON value");
        }
    }
    if (!has_id) fail(ErrorCode::TypeError, "record without id");
    return r;
}

std::vector<MovieRecord> parse_jsonl(std::string_view text) {
    std::vector<MovieRecord> records;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    const int this_year = current_year();
    while (std::getline(in, line)) {
        ++line_no;
        auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        nlohmann::json object;
        try {
            object = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
        }
        auto r = record_from_json(object);
        validate_record(r, this_year);
        records.push_back(std::move(r));
    }
    check_unique_ids(records);
    return records;
}

std::vector<MovieRecord> parse_dataset(const std::filesystem::path& path, DataFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, kModule, "cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return format == DataFormat::Csv ? parse_csv(buffer.str()) : parse_jsonl(buffer.str());
}

nlohmann::json record_to_json(const MovieRecord& r) {
    nlohmann::json out = nlohmann::json::object();
    out["id"] = r.id;
    if (r.film) out["film"] = *r.film;
    if (r.year) out["year"] = *r.year;
    if (r.mpaa) out["mpaa"] = std::string(to_string(*r.mpaa));
    if (r.runtime_minutes) out["runtime_minutes"] = *r.runtime_minutes;
    if (r.imdb_rating) out["imdb_rating"] = *r.imdb_rating;
    for (auto f : {Field::Genres, Field::Directors, Field::Writers, Field::Stars, Field::Countries, Field::Languages,
                   Field::FilmingLocations, Field::ProductionCompanies}) {
        if (const auto& slot = *list_slot(r, f)) out[std::string(field_key(f))] = *slot;
    }
    if (r.box_office) out["box_office"] = *r.box_office;
    if (r.is_series) out["is_series"] = *r.is_series;
    if (r.series_count) out["series_count"] = *r.series_count;
    if (r.script) out["script"] = *r.script;
    if (r.label) out["label"] = *r.label;
    if (!r.imputed.empty()) {
        auto& flags = out["imputed"] = nlohmann::json::array();
        for (auto f : r.imputed) flags.push_back(std::string(field_key(f)));
    }
    return out;
}

std::string write_jsonl(const std::vector<MovieRecord>& records) {
    std::string out;
    for (const auto& r : records) out += record_to_json(r).dump() + "\n";
    return out;
}

std::string write_csv(const std::vector<MovieRecord>& records, const std::vector<std::string>& preamble) {
    std::string out;
    for (const auto& line : preamble) out += "# " + line + "\n";
    for (std::size_t i = 0; i < kFieldCount; ++i) {
        if (i) out += ",";
        out += field_key(kAllFields[i]);
    }
    out += "\n";
    for (const auto& r : records) {
        for (std::size_t i = 0; i < kFieldCount; ++i) {
            if (i) out += ",";
            const Field f = kAllFields[i];
            std::string cell;
            switch (f) {
                case Field::Id: cell = std::to_string(r.id); break;
                case Field::Film: cell = r.film.value_or(""); break;
                case Field::Script: cell = r.script.value_or(""); break;
                case Field::Year: if (r.year) cell = std::to_string(*r.year); break;
                case Field::Mpaa: if (r.mpaa) cell = to_string(*r.mpaa); break;
                case Field::Runtime: if (r.runtime_minutes) cell = std::to_string(*r.runtime_minutes); break;
                case Field::ImdbRating: if (r.imdb_rating) cell = nlohmann::json(*r.imdb_rating).dump(); break;
                case Field::BoxOffice: if (r.box_office) cell = nlohmann::json(*r.box_office).dump(); break;
                case Field::IsSeries: if (r.is_series) cell = *r.is_series ? "yes" : "no"; break;
                case Field::SeriesCount: if (r.series_count) cell = std::to_string(*r.series_count); break;
                case Field::Label: if (r.label) cell = std::to_string(*r.label); break;
                default:
                    if (const auto& slot = *list_slot(r, f)) cell = join_list(*slot);
            }
            out += detail::csv_escape(cell);
        }
        out += "\n";
    }
    return out;
}

void apply_labels(std::vector<MovieRecord>& records, const std::map<std::int64_t, int>& labels) {
    for (auto& r : records)
        if (auto it = labels.find(r.id); it != labels.end()) r.label = it->second;
}

}  // namespace merchcast
