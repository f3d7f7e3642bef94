#pragma once

#include <string>

#include "modepool/cloud.hpp"

namespace modepool {

// Whitespace-delimited "x y z" triples, one point per line. Blank lines are
// skipped; anything else malformed raises io_error with a specific kind.
PointCloud load_xyz(const std::string& path, bool normalize = false);
void save_xyz(const PointCloud& cloud, const std::string& path);

// Standard OFF: "OFF" (counts on the same or the following line), vertex
// lines, then faces, which are ignored; the vertex list becomes the cloud.
PointCloud load_off(const std::string& path, bool normalize = false);
void save_off(const PointCloud& cloud, const std::string& path);

}  // namespace modepool
