#include "merchcast/dataset.hpp"
#include "merchcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace merchcast {

namespace {

// Decade shares of the sample, oldest first (1970s .. 2020s).
constexpr double kDecadeShare[] = {0.03, 0.07, 0.12, 0.15, 0.23, 0.40};
constexpr int kLastSyntheticYear = 2024;

struct Genre {
    const char* name;
    double weight;  // sampling weight
    double effect;  // contribution to merchandising appeal
};

constexpr Genre kGenres[] = {
    {"Action", 1.6, 0.5},     {"Adventure", 1.2, 0.7}, {"Animation", 0.6, 1.5}, {"Biography", 0.5, -0.5},
    {"Comedy", 1.3, 0.1},     {"Crime", 0.8, -0.3},    {"Drama", 1.8, -0.6},    {"Family", 0.6, 1.2},
    {"Fantasy", 0.7, 0.8},    {"History", 0.4, -0.5},  {"Horror", 0.7, -0.8},   {"Musical", 0.3, 0.3},
    {"Romance", 0.7, -0.3},   {"Sci-Fi", 0.9, 0.7},    {"Thriller", 1.0, -0.2}, {"War", 0.3, -0.4},
};

constexpr const char* kCountries[] = {"United States", "United Kingdom", "Canada", "China",       "France",
                                      "Germany",       "Japan",          "Australia", "South Korea", "India"};
constexpr double kCountryWeight[] = {10.0, 2.0, 1.2, 1.0, 0.8, 0.7, 0.7, 0.5, 0.5, 0.4};

constexpr const char* kLanguages[] = {"English", "Spanish", "French", "Mandarin", "Japanese",
                                      "German",  "Russian", "Italian", "Korean",  "Hindi"};
constexpr double kLanguageWeight[] = {10.0, 1.5, 1.0, 0.8, 0.6, 0.6, 0.5, 0.5, 0.4, 0.3};

std::string pool_name(const char* prefix, std::size_t index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s %03zu", prefix, index);
    return buf;
}

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    template <typename Weights>
    std::size_t weighted(const Weights& weights) {
        std::discrete_distribution<std::size_t> dist(std::begin(weights), std::end(weights));
        return dist(rng_);
    }

    // `count` distinct indices drawn by weight.
    template <typename Weights>
    std::vector<std::size_t> distinct(const Weights& weights, std::size_t count) {
        std::vector<double> w(std::begin(weights), std::end(weights));
        std::vector<std::size_t> picked;
        while (picked.size() < count && picked.size() < w.size()) {
            auto k = weighted(w);
            picked.push_back(k);
            w[k] = 0.0;
        }
        return picked;
    }

    // Zipf-like draw from a named pool so a few names recur often.
    std::vector<std::string> names(const char* prefix, std::size_t pool, std::size_t count) {
        std::vector<double> w(pool);
        for (std::size_t i = 0; i < pool; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), 0.9);
        std::vector<std::string> out;
        for (auto k : distinct(w, count)) out.push_back(pool_name(prefix, k + 1));
        return out;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

std::vector<int> decade_quota(std::size_t n) {
    // Largest-remainder apportionment keeps shares exact up to one record.
    std::vector<int> quota(std::size(kDecadeShare));
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t d = 0; d < quota.size(); ++d) {
        const double exact = kDecadeShare[d] * static_cast<double>(n);
        quota[d] = static_cast<int>(std::floor(exact));
        assigned += quota[d];
        remainders.emplace_back(exact - quota[d], d);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < static_cast<int>(n); ++i, ++assigned) ++quota[remainders[i].second];
    return quota;
}

Mpaa draw_rating(Sampler& s, const std::vector<std::string>& genres) {
    auto has = [&](const char* g) { return std::find(genres.begin(), genres.end(), g) != genres.end(); };
    // G, PG, PG-13, R, NC-17, NotRated
    double w[] = {0.05, 0.15, 0.40, 0.35, 0.01, 0.04};
    if (has("Animation") || has("Family")) {
        w[0] = 0.30, w[1] = 0.45, w[2] = 0.20, w[3] = 0.02;
    }
    if (has("Horror") || has("Crime")) {
        w[0] = 0.0, w[1] = 0.03, w[2] = 0.25, w[3] = 0.65;
    }
    return static_cast<Mpaa>(s.weighted(w));
}

double rating_effect(Mpaa rating) {
    switch (rating) {
        case Mpaa::G: return 0.4;
        case Mpaa::PG: return 0.5;
        case Mpaa::PG13: return 0.2;
        case Mpaa::R: return -0.7;
        case Mpaa::NC17: return -1.0;
        case Mpaa::NotRated: return -0.4;
    }
    return 0.0;
}

}  // namespace

std::vector<MovieRecord> generate_synthetic(std::size_t n, std::uint64_t seed) {
    if (n < 10) throw Error(ErrorCode::InvalidParams, "dataset", "synthetic datasets need n >= 10");
    Sampler s(seed);

    std::vector<int> years;
    const auto quota = decade_quota(n);
    for (std::size_t d = 0; d < quota.size(); ++d) {
        const int start = 1970 + 10 * static_cast<int>(d);
        const int end = std::min(start + 9, kLastSyntheticYear);
        for (int k = 0; k < quota[d]; ++k) years.push_back(s.integer(start, end));
    }
    std::shuffle(years.begin(), years.end(), s.engine());

    std::vector<double> genre_weight;
    for (const auto& g : kGenres) genre_weight.push_back(g.weight);

    std::vector<MovieRecord> records(n);
    std::vector<double> appeal(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = records[i];
        r.id = static_cast<std::int64_t>(i + 1);
        r.film = pool_name("Synthetic Film", i + 1);
        r.year = years[i];

        std::vector<std::string> genres;
        for (auto k : s.distinct(genre_weight, static_cast<std::size_t>(s.integer(1, 3))))
            genres.emplace_back(kGenres[k].name);
        std::sort(genres.begin(), genres.end());
        r.genres = genres;
        r.mpaa = draw_rating(s, genres);
        r.runtime_minutes = static_cast<int>(std::clamp(std::round(s.normal(115.0, 18.0)), 75.0, 200.0));
        r.imdb_rating = std::round(std::clamp(s.normal(6.8, 0.8), 1.0, 9.5) * 10.0) / 10.0;

        r.directors = s.names("Director", 150, 1);
        r.writers = s.names("Writer", 250, static_cast<std::size_t>(s.integer(1, 3)));
        r.stars = s.names("Star", 300, 3);
        std::vector<std::string> countries;
        for (auto k : s.distinct(kCountryWeight, s.uniform() < 0.7 ? 1 : 2)) countries.emplace_back(kCountries[k]);
        r.countries = countries;
        std::vector<std::string> languages;
        for (auto k : s.distinct(kLanguageWeight, static_cast<std::size_t>(s.integer(1, 3))))
            languages.emplace_back(kLanguages[k]);
        r.languages = languages;
        r.filming_locations = s.names("Location", 200, static_cast<std::size_t>(s.integer(1, 2)));
        r.production_companies = s.names("Studio", 80, static_cast<std::size_t>(s.integer(1, 3)));
        r.script = pool_name("Synthetic premise", i + 1);

        const bool series = s.uniform() < 0.35;
        r.is_series = series;
        r.series_count = series ? std::min(2 + static_cast<int>(std::floor(-std::log(1.0 - s.uniform()) * 3.0)), 14) : 0;
        const double box = std::exp(s.normal(std::log(0.9), 0.9) + (series ? 0.5 : 0.0));
        r.box_office = std::round(box * 100.0) / 100.0;

        double z = (series ? 1.6 : 0.0) + 0.35 * std::min(*r.series_count, 10) + 1.2 * std::log1p(*r.box_office) +
                   rating_effect(*r.mpaa);
        for (const auto& g : genres)
            for (const auto& known : kGenres)
                if (g == known.name) z += known.effect;
        appeal[i] = z + s.normal(0.0, 0.6);
    }

    // Rank by appeal: the lower half scores zero, the upper half follows a
    // geometric-like tail over 1..25 so high scores are rare.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return appeal[a] < appeal[b]; });
    const std::size_t zeros = n / 2;
    const std::size_t upper = n - zeros;
    for (std::size_t rank = 0; rank < n; ++rank) {
        auto& r = records[order[rank]];
        if (rank < zeros) {
            r.label = 0;
            continue;
        }
        const double u = (static_cast<double>(rank - zeros) + 0.5) / static_cast<double>(upper);
        const int score = 1 + static_cast<int>(std::floor(-std::log(1.0 - u) * 4.0));
        r.label = std::clamp(score, 1, kMaxLabel);
    }
    return records;
}

std::vector<MovieRecord> inject_missing(std::vector<MovieRecord> records, std::uint64_t seed) {
    const double n = static_cast<double>(records.size());
    auto scaled = [&](double count) { return static_cast<std::size_t>(std::llround(count * n / 441.0)); };
    std::mt19937_64 rng(seed ^ 0x5eedULL);

    auto blank = [&](std::size_t count, std::initializer_list<Field> fields) {
        std::vector<std::size_t> idx(records.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < count && k < idx.size(); ++k)
            for (auto f : fields) records[idx[k]].clear(f);
    };
    blank(scaled(20), {Field::Writers});
    blank(scaled(10), {Field::FilmingLocations});
    blank(scaled(11), {Field::BoxOffice});
    blank(scaled(4), {Field::IsSeries, Field::SeriesCount});
    return records;
}

}  // namespace merchcast
