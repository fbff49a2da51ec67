#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mhalab {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

/// RFC 4180 writer: CRLF line endings, fields quoted only when they contain a
/// comma, quote, CR or LF, embedded quotes doubled.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

    static std::string quote(std::string_view field);

private:
    std::ostream& out_;
};

} // namespace mhalab
