#pragma once

// CSV/JSON writers. Numbers use the shortest round-trip decimal form so that
// identical runs give byte-identical files. Every file starts with a '#'
// header carrying the library version and the normalised config on one line.

#include "notrade/version.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

namespace notrade::cli {

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

using Cell = std::variant<double, long, std::string>;

/// Table built in memory and written in one go.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<Cell> row) {
        if (row.size() != columns_.size()) throw std::logic_error("csv row width mismatch");
        rows_.push_back(std::move(row));
    }

    std::size_t size() const { return rows_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }

    std::string render(const std::string& header) const {
        std::string out = header;
        append_line(out, columns_);
        std::vector<std::string> cells;
        for (const auto& row : rows_) {
            cells.clear();
            for (const auto& c : row) cells.push_back(to_text(c));
            append_line(out, cells);
        }
        return out;
    }

private:
    static std::string to_text(const Cell& c) {
        if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
        if (const auto* l = std::get_if<long>(&c)) return std::to_string(*l);
        return std::get<std::string>(c);
    }
    static void append_line(std::string& out, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
};

inline std::string header_block(const nlohmann::json& config_echo) {
    return "# notrade " + std::string(kVersion) + "\n# config: " + config_echo.dump() + "\n";
}

/// Strip a header block back to the config JSON it carries.
inline nlohmann::json read_config_echo(const std::string& text) {
    static const std::string tag = "# config: ";
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = text.find('\n', pos);
        const std::string line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        if (line.rfind(tag, 0) == 0) return nlohmann::json::parse(line.substr(tag.size()));
        if (line.empty() || line[0] != '#') break;
        if (end == std::string::npos) break;
        pos = end + 1;
    }
    throw std::runtime_error("no config echo found");
}

/// Pending output: all files are rendered first and written only after the
/// computation succeeded, so a failing run leaves nothing behind.
class OutputSet {
public:
    void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

    const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

    std::vector<std::filesystem::path> write(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::vector<std::filesystem::path> written;
        for (const auto& [name, content] : files_) {
            const auto path = dir / name;
            const auto tmp = dir / (name + ".tmp");
            {
                std::ofstream os(tmp, std::ios::binary);
                os << content;
                if (!os) throw std::runtime_error("cannot write " + tmp.string());
            }
            std::filesystem::rename(tmp, path);
            written.push_back(path);
        }
        return written;
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace notrade::cli
