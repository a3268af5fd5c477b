#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace etcon::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Write-temp-then-rename.
void atomic_write(const fs::path& path, std::string_view contents);
std::string read_file(const fs::path& path);

void append_line(const fs::path& path, std::string_view line);
std::vector<std::string> read_lines(const fs::path& path);
// Truncates the file to its first `n` lines (missing file counts as empty).
void truncate_lines(const fs::path& path, std::size_t n);
std::size_t count_lines(const fs::path& path);

std::vector<json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, const std::vector<json>& rows);

}  // namespace etcon::io
