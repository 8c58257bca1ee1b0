#pragma once

// Internal helpers shared by the readers and report writers.

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace merchcast::detail {

std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);

/// Lower-case, runs of non-alphanumerics collapsed to '_', edges trimmed.
std::string normalize_key(std::string_view text);

/// RFC 4180 rows. Lines beginning with '#' before the first data row are
/// treated as comments; blank lines are skipped.
std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text);
std::string csv_escape(std::string_view cell);

std::vector<std::string> split_list(std::string_view cell);

template <typename T>
std::optional<T> parse_number(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
    return value;
}

/// Fixed-point formatting without locale surprises.
std::string format_fixed(double value, int decimals);

}  // namespace merchcast::detail
