#pragma once

#include <string>
#include <vector>

namespace gendx {

/// Shortest decimal form that round-trips the double exactly ("%.17g" with a
/// trim pass).  All on-disk floats use this so reruns are byte-identical.
std::string format_double(double v);

/// Writes `content` to `path` atomically: temp file in the same directory,
/// then rename.  Creates parent directories as needed.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// Splits one CSV line on commas (no quoting; our files never need it).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace gendx
