#include "popcast/csv.hpp"

#include "popcast/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace popcast::csv {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw eval_error("failed to format double");
    }
    return std::string(buf, ptr);
}

double parse_double(std::string_view field) {
    double out = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) {
        throw data_error("not a number: '" + std::string(field) + "'");
    }
    return out;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw data_error("missing CSV column '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

} // namespace

Table read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open CSV file: " + path.string());
    }
    Table table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (first) {
            table.header = split_line(line);
            first = false;
        } else {
            table.rows.push_back(split_line(line));
        }
    }
    if (first) {
        throw data_error("empty CSV file: " + path.string());
    }
    return table;
}

Writer::Writer(const std::filesystem::path& path) : path_(path) {}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            buffer_ += ',';
        }
        buffer_ += fields[i];
    }
    buffer_ += '\n';
}

void Writer::flush() {
    if (flushed_) {
        return;
    }
    if (!path_.parent_path().empty()) {
        std::filesystem::create_directories(path_.parent_path());
    }
    std::ofstream out(path_, std::ios::binary);
    if (!out) {
        throw data_error("cannot write CSV file: " + path_.string());
    }
    out << buffer_;
    flushed_ = true;
}

Writer::~Writer() {
    try {
        flush();
    } catch (...) {
        // destructor must not throw; callers needing errors call flush() directly
    }
}

} // namespace popcast::csv
