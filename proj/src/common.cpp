#include "modepool/common.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace modepool {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(io_error::kind::open_failed, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error(io_error::kind::open_failed, "write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace modepool
