#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace deeplcc::csv {

/// Full-precision decimal form of a double (round-trips exactly).
std::string format_double(double v);

/// One CSV table: optional leading '#' comment lines, one header row, then
/// numeric rows. Separator ',', decimal '.'.
struct Table {
  std::vector<std::string> comments;  // without the leading '#'
  std::vector<std::string> header;
  Eigen::MatrixXd data;  // rows x header.size()
  int column(const std::string& name) const;  // -1 when absent
};

Table read_table(const std::filesystem::path& path);

/// Write-temp-then-rename so partially written files are never observed.
void write_table(const std::filesystem::path& path, const Table& t);

/// Debug export for matrices: header row of column indices, row-major order.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

/// Atomic plain-text write (used for reports/summaries).
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace deeplcc::csv
