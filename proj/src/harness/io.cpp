#include "etcon/io.hpp"

#include <fstream>
#include <sstream>

namespace etcon::io {

void atomic_write(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_line(const fs::path& path, std::string_view line) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << line << '\n';
  if (!out) throw IoError("append failed for " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::size_t count_lines(const fs::path& path) { return read_lines(path).size(); }

void truncate_lines(const fs::path& path, std::size_t n) {
  auto lines = read_lines(path);
  if (lines.size() <= n && fs::exists(path)) return;
  std::string out;
  for (std::size_t i = 0; i < std::min(n, lines.size()); ++i) {
    out += lines[i];
    out += '\n';
  }
  atomic_write(path, out);
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> rows;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    rows.push_back(json::parse(line));
  }
  return rows;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  atomic_write(path, out);
}

}  // namespace etcon::io
