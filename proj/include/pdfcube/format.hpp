#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "error.hpp"

namespace pdfcube {

/// Shortest text that parses back to the same double.
[[nodiscard]] inline std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

[[nodiscard]] inline double parse_real(std::string_view text, std::string_view what = "value") {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ValidationError("cannot parse " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

template <class Int = std::uint64_t>
[[nodiscard]] Int parse_int(std::string_view text, std::string_view what = "value") {
    Int v{};
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ValidationError("cannot parse " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

[[nodiscard]] inline std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

/// One-line `key=value,key=value` record. Keys keep insertion order.
class KeyValueRecord {
public:
    KeyValueRecord& add(std::string key, std::string value) {
        fields_.emplace_back(std::move(key), std::move(value));
        return *this;
    }
    KeyValueRecord& add(std::string key, double value) { return add(std::move(key), format_real(value)); }
    KeyValueRecord& add(std::string key, std::uint64_t value) {
        return add(std::move(key), std::to_string(value));
    }
    KeyValueRecord& add(std::string key, std::uint32_t value) {
        return add(std::move(key), std::to_string(value));
    }
    KeyValueRecord& add(std::string key, int value) { return add(std::move(key), std::to_string(value)); }
    KeyValueRecord& add(std::string key, const char* value) { return add(std::move(key), std::string(value)); }

    [[nodiscard]] std::string str() const {
        std::string out;
        for (const auto& [k, v] : fields_) {
            if (!out.empty()) out += ',';
            out += k;
            out += '=';
            out += v;
        }
        return out;
    }

    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& fields() const {
        return fields_;
    }

    static std::map<std::string, std::string, std::less<>> parse(std::string_view line) {
        while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
        std::map<std::string, std::string, std::less<>> out;
        if (line.empty()) return out;
        for (auto field : split(line, ',')) {
            const auto eq = field.find('=');
            if (eq == std::string_view::npos)
                throw ValidationError("malformed record field '" + std::string(field) + "'");
            out.emplace(std::string(field.substr(0, eq)), std::string(field.substr(eq + 1)));
        }
        return out;
    }

private:
    std::vector<std::pair<std::string, std::string>> fields_;
};

} // namespace pdfcube
