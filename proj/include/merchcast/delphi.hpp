#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace merchcast::delphi {

// Merchandise lines each expert scores per film.
enum class Category { Toys, Stationery, DailyUse, ClothesAccessories, LuggageBags };

inline constexpr std::size_t kCategoryCount = 5;
inline constexpr int kMaxCategoryScore = 5;
inline constexpr int kMaxTotal = 25;
inline constexpr std::array<Category, kCategoryCount> kCategories = {
    Category::Toys, Category::Stationery, Category::DailyUse, Category::ClothesAccessories, Category::LuggageBags};

std::string_view category_key(Category category) noexcept;
std::optional<Category> category_from_key(std::string_view key);

struct ScoreSheet {
    std::string expert_id;
    int round_index = 0;
    std::int64_t sample_id = 0;
    std::array<int, kCategoryCount> scores{};

    int total() const;
    bool operator==(const ScoreSheet&) const = default;
};

/// Splits a total in [0,25] across the five categories as evenly as possible.
std::array<int, kCategoryCount> spread_total(int total);

struct RoundResult {
    std::int64_t sample_id = 0;
    int round_index = 0;
    double mean = 0.0;
    double sigma = 0.0;
    bool converged = false;
    bool forced = false;
    int n_scores = 0;
    std::optional<int> label;

    bool operator==(const RoundResult&) const = default;
};

struct Dispersion {
    double mean = 0.0;
    double sigma = 0.0;
};

/// Mean and population standard deviation sqrt((1/n)·Σ(x−M)²).
Dispersion dispersion(std::span<const double> totals);

/// Mean rounded half-up, clamped to [0,25].
int consensus_label(double mean);

struct LabelEntry {
    std::int64_t sample_id = 0;
    int label = 0;
    bool forced = false;

    bool operator==(const LabelEntry&) const = default;
};

std::string labels_to_csv(const std::vector<LabelEntry>& labels);

struct FeedbackSample {
    std::int64_t sample_id = 0;
    double mean = 0.0;
    double sigma = 0.0;
    int n_scores = 0;
    std::map<int, int> histogram;  // total → number of experts
    bool converged = false;
    bool forced = false;
    std::optional<int> label;
};

struct Feedback {
    int round_index = 0;
    std::vector<FeedbackSample> samples;
};

nlohmann::json feedback_to_json(const Feedback& feedback);

/// Schema check for anonymized feedback: only the known keys appear, and no
/// key or string value equals a roster identity. On failure `why` explains.
bool is_anonymous_feedback(const nlohmann::json& payload, std::span<const std::string> roster,
                           std::string* why = nullptr);

class Session {
public:
    static constexpr double kDefaultEpsilon = 2.0;
    static constexpr int kDefaultMaxRounds = 10;

    static Session open(std::vector<std::string> experts, std::vector<std::int64_t> samples,
                        double epsilon = kDefaultEpsilon, int max_rounds = kDefaultMaxRounds);

    /// Stores one expert's sheets for the open round. Resubmission before
    /// close replaces the earlier sheets.
    void submit_scores(const std::string& expert_id, int round_index, const std::vector<ScoreSheet>& sheets);

    std::vector<RoundResult> close_round(int round_index);

    Feedback feedback(int round_index, const std::string& expert_id) const;

    std::vector<LabelEntry> export_labels() const;

    int current_round() const { return static_cast<int>(rounds_.size()); }
    bool round_open() const { return !rounds_.empty() && !rounds_.back().closed; }
    bool complete() const { return labels_.size() == samples_.size(); }
    bool round_closed(int round_index) const;

    double epsilon() const { return epsilon_; }
    int max_rounds() const { return max_rounds_; }
    const std::vector<std::string>& experts() const { return experts_; }
    const std::vector<std::int64_t>& samples() const { return samples_; }

    const std::vector<std::int64_t>& open_samples(int round_index) const;
    const std::vector<RoundResult>& results(int round_index) const;
    std::vector<std::string> delinquent_experts() const;
    bool has_submitted(const std::string& expert_id, int round_index) const;
    bool is_expert(const std::string& expert_id) const;

    /// The requesting expert's own sheets for a round; never another's.
    std::vector<ScoreSheet> own_sheets(const std::string& expert_id, int round_index) const;

    struct FinalLabel {
        int label = 0;
        bool forced = false;
        int round_index = 0;
        bool operator==(const FinalLabel&) const = default;
    };
    std::optional<FinalLabel> final_label(std::int64_t sample_id) const;
    std::size_t labeled_count() const { return labels_.size(); }

    nlohmann::json to_json() const;
    static Session from_json(const nlohmann::json& document);

    bool operator==(const Session&) const = default;

private:
    struct Round {
        int index = 0;
        std::vector<std::int64_t> open;
        std::map<std::string, std::map<std::int64_t, ScoreSheet>> sheets;
        bool closed = false;
        std::vector<RoundResult> results;
        bool operator==(const Round&) const = default;
    };

    const Round& round_at(int round_index) const;

    std::vector<std::string> experts_;
    std::vector<std::int64_t> samples_;
    double epsilon_ = kDefaultEpsilon;
    int max_rounds_ = kDefaultMaxRounds;
    std::vector<Round> rounds_;
    std::map<std::int64_t, FinalLabel> labels_;
};

struct ExpertProfile {
    double contraction = 0.6;  // share of the gap to the last round's mean closed each round
    double noise_sd = 1.0;     // per-round revision noise
    double initial_sd = 3.0;   // spread of first-round opinions around the latent value
    // When > 0, both spreads shrink by min(1, latent / full_spread_at) so
    // panels agree on films with little merchandising potential.
    double full_spread_at = 0.0;
};

struct SimulationReport {
    int rounds_run = 0;
    std::map<int, int> rounds_to_convergence;  // closing round → samples labeled there
    std::size_t forced = 0;
    // Per round, per open sample: σ of the experts' real-valued opinions
    // before they are rounded onto the integer score sheet.
    std::vector<std::map<std::int64_t, double>> opinion_sigma;
};

/// Drives a fresh session to completion with simulated experts. Each
/// sample's first-round opinions scatter around `latent[sample]`; in later
/// rounds every expert moves toward the previous round's mean by
/// `contraction` and adds N(0, noise_sd).
SimulationReport simulate_experts(Session& session, const ExpertProfile& profile,
                                  const std::map<std::int64_t, double>& latent, std::uint64_t seed);

}  // namespace merchcast::delphi
