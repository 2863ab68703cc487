#pragma once

#include <string>
#include <vector>

#include "qkdnet/errors.hpp"
#include "qkdnet/units.hpp"

namespace qkdnet {

/// Minimal CSV support for the reporting formats used here: comma separated,
/// no quoting (field values never contain commas), '\n' line ends.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) { write_row(header); }

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += cells[i];
        }
        out_ += '\n';
    }

    const std::string& str() const { return out_; }

private:
    std::string out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw ParseError("CSV is missing column '" + name + "'");
    }
};

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::size_t start = 0;
    bool first = true;
    while (start <= text.size()) {
        std::size_t pos = text.find('\n', start);
        std::string line =
            pos == std::string::npos ? text.substr(start) : text.substr(start, pos - start);
        std::string trimmed = trim(line);
        if (!trimmed.empty()) {
            auto cells = split(trimmed, ',');
            if (first) {
                t.header = cells;
                first = false;
            } else {
                if (cells.size() != t.header.size())
                    throw ParseError("CSV row has " + std::to_string(cells.size()) +
                                     " cells, expected " + std::to_string(t.header.size()));
                t.rows.push_back(cells);
            }
        }
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (first) throw ParseError("CSV has no header row");
    return t;
}

inline double to_double(const std::string& s) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw ParseError("trailing characters in number '" + s + "'");
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad numeric value '" + s + "'");
    }
}

inline long long to_int(const std::string& s) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(s, &used);
        if (used != s.size()) throw ParseError("trailing characters in integer '" + s + "'");
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad integer value '" + s + "'");
    }
}

} // namespace qkdnet
