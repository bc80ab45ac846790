#pragma once
// Output plumbing for the command-line tools: full-precision numeric
// formatting and RFC-4180 CSV emission.  Kept free of third-party includes so
// the library tree stays dependency-light; JSON handling lives with the CLI.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace twinspin {

inline constexpr const char* kVersionString = "0.1.0";

// Decimal rendering with 17 significant digits: parsing the result recovers
// the original double bit for bit.
inline std::string format_full(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return std::string(buf);
}

// Quotes a field when RFC 4180 requires it (embedded comma, quote, or line
// break), doubling any embedded quotes.
inline std::string csv_escape(const std::string& field) {
    bool needs_quoting = false;
    for (char c : field)
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quoting = true;
            break;
        }
    if (!needs_quoting) return field;
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

// Row-by-row CSV writer with CRLF line endings (RFC 4180).  The stream is
// binary so the bytes are identical on every platform.
class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_)
            throw std::runtime_error("cannot open for writing: " + path.string());
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) out_ << ',';
            out_ << csv_escape(fields[i]);
        }
        out_ << "\r\n";
        if (!out_) throw std::runtime_error("CSV write failure");
    }

  private:
    std::ofstream out_;
};

}  // namespace twinspin
