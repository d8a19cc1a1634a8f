#include "trajgnn/textio.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace trajgnn {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view token, const std::string& context) {
    token = trim(token);
    double v = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size() || token.empty()) {
        throw std::runtime_error(context + ": non-numeric value '" + std::string(token) + "'");
    }
    return v;
}

std::int64_t parse_int(std::string_view token, const std::string& context) {
    token = trim(token);
    std::int64_t v = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size() || token.empty()) {
        throw std::runtime_error(context + ": non-integer value '" + std::string(token) + "'");
    }
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            if (start < text.size()) lines.emplace_back(trim(text.substr(start)));
            break;
        }
        lines.emplace_back(trim(text.substr(start, pos - start)));
        start = pos + 1;
    }
    return lines;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    return split_lines(read_file(path));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::map<std::string, std::string> parse_key_value_text(std::string_view text) {
    std::map<std::string, std::string> kv;
    int line_no = 0;
    for (const std::string& raw : split_lines(text)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected key=value, got '" + std::string(line) + "'");
        }
        const std::string key{trim(line.substr(0, eq))};
        const std::string value{trim(line.substr(eq + 1))};
        if (key.empty()) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": empty key");
        }
        if (!kv.emplace(key, value).second) {
            throw std::runtime_error("duplicate key '" + key + "'");
        }
    }
    return kv;
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
    return parse_key_value_text(read_file(path));
}

}  // namespace trajgnn
