#include "modepool/cloud_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace modepool {

namespace {

bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

std::vector<std::string> tokens_of(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

PointCloud from_rows(std::vector<Eigen::RowVector3d>& rows, bool normalize) {
  PointCloud cloud;
  cloud.points.resize(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) cloud.points.row(static_cast<Eigen::Index>(i)) = rows[i];
  cloud.inlier_mask =
      Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(cloud.points.rows(), true);
  if (normalize) normalize_to_unit_cube(cloud);
  return cloud;
}

}  // namespace

PointCloud load_xyz(const std::string& path, bool normalize) {
  std::ifstream in(path);
  if (!in) throw io_error(io_error::kind::open_failed, "cannot open " + path);
  std::vector<Eigen::RowVector3d> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokens_of(line);
    if (toks.empty()) continue;
    if (toks.size() != 3)
      throw io_error(io_error::kind::bad_token,
                     path + ":" + std::to_string(lineno) + ": expected 3 values per line");
    Eigen::RowVector3d p;
    for (int a = 0; a < 3; ++a) {
      if (!parse_double(toks[a], p[a]))
        throw io_error(io_error::kind::bad_token, path + ":" + std::to_string(lineno) +
                                                      ": non-numeric token '" + toks[a] + "'");
    }
    rows.push_back(p);
  }
  if (rows.empty()) throw io_error(io_error::kind::empty_file, path + ": no points");
  return from_rows(rows, normalize);
}

void save_xyz(const PointCloud& cloud, const std::string& path) {
  std::string out;
  out.reserve(static_cast<std::size_t>(cloud.size()) * 24);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    out += format_double(cloud.points(i, 0));
    out += ' ';
    out += format_double(cloud.points(i, 1));
    out += ' ';
    out += format_double(cloud.points(i, 2));
    out += '\n';
  }
  atomic_write_file(path, out);
}

PointCloud load_off(const std::string& path, bool normalize) {
  std::ifstream in(path);
  if (!in) throw io_error(io_error::kind::open_failed, "cannot open " + path);

  std::string line;
  std::vector<std::string> header;
  std::size_t lineno = 0;
  // "OFF" may carry the counts on the same line or the next non-blank one
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = tokens_of(line);
    if (toks.empty()) continue;
    if (header.empty()) {
      if (toks[0] != "OFF")
        throw io_error(io_error::kind::malformed_header, path + ": missing OFF magic");
      header = std::move(toks);
      if (header.size() == 1) continue;  // counts on the following line
      header.erase(header.begin());
      break;
    }
    header = std::move(toks);
    break;
  }
  if (header.empty() || header[0] == "OFF")
    throw io_error(io_error::kind::malformed_header, path + ": missing OFF counts");
  if (header.size() != 3)
    throw io_error(io_error::kind::malformed_header,
                   path + ": expected 'V F E' counts, got " + std::to_string(header.size()) +
                       " fields");
  long counts[3];
  for (int a = 0; a < 3; ++a) {
    double v = 0.0;
    if (!parse_double(header[a], v) || v < 0.0 || v != std::floor(v))
      throw io_error(io_error::kind::malformed_header,
                     path + ": non-integer count '" + header[a] + "'");
    counts[a] = static_cast<long>(v);
  }
  if (counts[0] == 0) throw io_error(io_error::kind::empty_file, path + ": no vertices");

  std::vector<Eigen::RowVector3d> rows;
  rows.reserve(static_cast<std::size_t>(counts[0]));
  while (static_cast<long>(rows.size()) < counts[0] && std::getline(in, line)) {
    ++lineno;
    auto toks = tokens_of(line);
    if (toks.empty()) continue;
    if (toks.size() < 3)
      throw io_error(io_error::kind::bad_token,
                     path + ":" + std::to_string(lineno) + ": short vertex line");
    Eigen::RowVector3d p;
    for (int a = 0; a < 3; ++a) {
      if (!parse_double(toks[a], p[a]))
        throw io_error(io_error::kind::bad_token, path + ":" + std::to_string(lineno) +
                                                      ": non-numeric token '" + toks[a] + "'");
    }
    rows.push_back(p);
  }
  if (static_cast<long>(rows.size()) != counts[0])
    throw io_error(io_error::kind::count_mismatch,
                   path + ": header declares " + std::to_string(counts[0]) + " vertices, found " +
                       std::to_string(rows.size()));
  return from_rows(rows, normalize);
}

void save_off(const PointCloud& cloud, const std::string& path) {
  std::string out = "OFF\n";
  out += std::to_string(cloud.size());
  out += " 0 0\n";
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    out += format_double(cloud.points(i, 0));
    out += ' ';
    out += format_double(cloud.points(i, 1));
    out += ' ';
    out += format_double(cloud.points(i, 2));
    out += '\n';
  }
  atomic_write_file(path, out);
}

}  // namespace modepool
