#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace merchcast {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMinYear = 1970;
inline constexpr int kMaxLabel = 25;

enum class Mpaa { G, PG, PG13, R, NC17, NotRated };

std::string_view to_string(Mpaa rating) noexcept;
std::optional<Mpaa> parse_mpaa(std::string_view text);

// The attribute columns of a movie record, in the order of the null report.
// `Id` and `Label` are bookkeeping columns and never become features.
enum class Field {
    Id,
    Film,
    Year,
    Mpaa,
    Runtime,
    ImdbRating,
    Genres,
    Directors,
    Writers,
    Stars,
    Countries,
    Languages,
    FilmingLocations,
    ProductionCompanies,
    BoxOffice,
    IsSeries,
    SeriesCount,
    Script,
    Label,
};

inline constexpr std::size_t kFieldCount = 19;
inline constexpr std::array<Field, kFieldCount> kAllFields = {
    Field::Id,        Field::Film,      Field::Year,
    Field::Mpaa,      Field::Runtime,   Field::ImdbRating,
    Field::Genres,    Field::Directors, Field::Writers,
    Field::Stars,     Field::Countries, Field::Languages,
    Field::FilmingLocations, Field::ProductionCompanies, Field::BoxOffice,
    Field::IsSeries,  Field::SeriesCount, Field::Script,
    Field::Label,
};

/// Canonical lower-snake-case key, used for CSV headers and JSON keys.
std::string_view field_key(Field field) noexcept;
/// Display name used in the null report.
std::string_view field_display_name(Field field) noexcept;
std::optional<Field> field_from_key(std::string_view key);

struct MovieRecord {
    std::int64_t id = 0;
    std::optional<std::string> film;
    std::optional<int> year;
    std::optional<Mpaa> mpaa;
    std::optional<int> runtime_minutes;
    std::optional<double> imdb_rating;
    std::optional<std::vector<std::string>> genres;  // sorted, unique
    std::optional<std::vector<std::string>> directors;
    std::optional<std::vector<std::string>> writers;
    std::optional<std::vector<std::string>> stars;
    std::optional<std::vector<std::string>> countries;
    std::optional<std::vector<std::string>> languages;
    std::optional<std::vector<std::string>> filming_locations;
    std::optional<std::vector<std::string>> production_companies;
    std::optional<double> box_office;  // units of $100 million
    std::optional<bool> is_series;
    std::optional<int> series_count;
    std::optional<std::string> script;
    std::optional<int> label;

    std::set<Field> imputed;

    bool has(Field field) const;
    void clear(Field field);

    bool operator==(const MovieRecord&) const = default;
};

/// Checks the record-level invariants (year range, series closure, label
/// range); throws TypeError naming the offending field.
void validate_record(const MovieRecord& record, int current_year);

// --- ingest ---------------------------------------------------------------

enum class DataFormat { Csv, Jsonl };

std::optional<DataFormat> format_from_path(const std::filesystem::path& path);

/// Parses minutes from "2h13m", "2h", "45m" or a bare integer.
std::optional<int> parse_runtime(std::string_view text);

std::vector<MovieRecord> parse_dataset(const std::filesystem::path& path, DataFormat format);
std::vector<MovieRecord> parse_csv(std::string_view text);
std::vector<MovieRecord> parse_jsonl(std::string_view text);

/// Writes records with canonical headers. List cells are joined with "; ".
/// `preamble` lines are emitted first as `# ` comments.
std::string write_csv(const std::vector<MovieRecord>& records,
                      const std::vector<std::string>& preamble = {});
std::string write_jsonl(const std::vector<MovieRecord>& records);

nlohmann::json record_to_json(const MovieRecord& record);
MovieRecord record_from_json(const nlohmann::json& object);

// --- null audit -------------------------------------------------------------

struct NullReport {
    struct Column {
        Field field;
        std::size_t non_null_count = 0;
        std::string dtype;
    };
    std::vector<Column> columns;
    std::size_t total_rows = 0;

    std::size_t missing(Field field) const;
    /// Aligned text: `#  Column  Non-Null Count  Dtype`.
    std::string render() const;
};

NullReport null_report(const std::vector<MovieRecord>& records);

// --- imputation -------------------------------------------------------------

enum class ImputePolicy { MedianMode, Reject };

std::vector<MovieRecord> impute(std::vector<MovieRecord> records, ImputePolicy policy);

// --- encoding ---------------------------------------------------------------

enum class EncodePolicy { MultiHot, Ordinal, NumericPassthrough, Binary, TopKFrequency, Drop };

std::string_view to_string(EncodePolicy policy) noexcept;

struct FieldPolicy {
    EncodePolicy policy = EncodePolicy::Drop;
    std::size_t k = 0;  // TopKFrequency only

    bool operator==(const FieldPolicy&) const = default;
};

struct EncoderSpec {
    std::map<Field, FieldPolicy> policies;
    std::map<Field, std::vector<std::string>> vocabulary;
    bool strict = false;
    bool fitted = false;

    static EncoderSpec defaults();

    bool operator==(const EncoderSpec&) const = default;
};

nlohmann::json encoder_to_json(const EncoderSpec& spec);
EncoderSpec encoder_from_json(const nlohmann::json& document);

struct FeatureMatrix {
    RowMatrix rows;
    std::vector<std::string> column_names;
    std::vector<std::int64_t> row_ids;
    std::optional<std::vector<int>> targets;

    Eigen::Index n_rows() const { return rows.rows(); }
    Eigen::Index n_cols() const { return rows.cols(); }
    Eigen::VectorXd target_vector() const;
    FeatureMatrix select_rows(const std::vector<std::size_t>& positions) const;
};

/// Wraps a bare design matrix with generated column names `x0..x{p-1}`.
FeatureMatrix make_feature_matrix(RowMatrix rows, std::optional<std::vector<int>> targets = {});

EncoderSpec fit_encoder(const std::vector<MovieRecord>& records, EncoderSpec spec);
FeatureMatrix encode(const std::vector<MovieRecord>& records, const EncoderSpec& fitted);

// --- synthetic data ---------------------------------------------------------

/// Labeled records resembling a 1970s-to-present film catalogue: about half zero
/// labels, a decade mix skewed to recent years, labels driven by series
/// membership, box office and genre.
std::vector<MovieRecord> generate_synthetic(std::size_t n, std::uint64_t seed);

/// Blanks cells in the proportions of a 441-row audit (writers 20, filming
/// locations 10, box office 11, series flag and count 4), scaled to n.
std::vector<MovieRecord> inject_missing(std::vector<MovieRecord> records, std::uint64_t seed);

/// Joins (id → label) onto records; ids absent from `labels` keep their label.
void apply_labels(std::vector<MovieRecord>& records, const std::map<std::int64_t, int>& labels);

}  // namespace merchcast
