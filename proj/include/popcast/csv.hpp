#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace popcast::csv {

/// Shortest decimal representation that round-trips the exact double.
/// Used for every CSV/JSON number we emit so outputs are byte-deterministic.
std::string format_double(double v);

double parse_double(std::string_view field);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const; // throws data_error if absent
};

Table read_file(const std::filesystem::path& path);

/// Minimal writer: no quoting (fields never contain commas here), '\n' endings.
class Writer {
  public:
    explicit Writer(const std::filesystem::path& path);
    void row(const std::vector<std::string>& fields);
    std::string str() const { return buffer_; }
    void flush(); // writes the buffer to disk
    ~Writer();

  private:
    std::filesystem::path path_;
    std::string buffer_;
    bool flushed_ = false;
};

} // namespace popcast::csv
