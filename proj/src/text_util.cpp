#include "text_util.hpp"

#include "merchcast/error.hpp"

#include <cctype>
#include <cstdio>

namespace merchcast::detail {

std::string_view trim(std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    return text;
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string normalize_key(std::string_view text) {
    std::string out;
    bool pending_sep = false;
    for (char raw : text) {
        auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            if (pending_sep && !out.empty()) out.push_back('_');
            pending_sep = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_sep = true;
        }
    }
    return out;
}

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool in_quotes = false;
    bool at_line_start = true;
    bool cell_quoted = false;
    bool seen_data = false;

    auto finish_row = [&] {
        row.push_back(std::move(cell));
        cell.clear();
        bool blank = row.size() == 1 && row.front().empty() && !cell_quoted;
        if (!blank) {
            rows.push_back(std::move(row));
            seen_data = true;
        }
        row.clear();
        cell_quoted = false;
        at_line_start = true;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (at_line_start && !seen_data && c == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            continue;
        }
        at_line_start = false;
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                cell_quoted = true;
                break;
            case ',':
                row.push_back(std::move(cell));
                cell.clear();
                break;
            case '\r':
                break;
            case '\n':
                finish_row();
                break;
            default:
                cell.push_back(c);
        }
    }
    if (in_quotes) throw Error(ErrorCode::ParseError, "dataset", "unterminated quoted cell");
    if (!cell.empty() || !row.empty()) finish_row();
    return rows;
}

std::string csv_escape(std::string_view cell) {
    if (cell.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(cell);
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::vector<std::string> split_list(std::string_view cell) {
    const char sep = cell.find(';') != std::string_view::npos ? ';' : ',';
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= cell.size()) {
        auto end = cell.find(sep, start);
        if (end == std::string_view::npos) end = cell.size();
        auto item = trim(cell.substr(start, end - start));
        if (!item.empty()) items.emplace_back(item);
        start = end + 1;
    }
    return items;
}

std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

}  // namespace merchcast::detail
