#pragma once

#include <Eigen/Core>
#include <filesystem>

#include "deeplcc/datamat.hpp"
#include "deeplcc/model.hpp"

namespace deeplcc {

/// Time-indexed record of one experiment: the controller-facing signals
/// (u, eps, y) plus the full plant state kept for metrics and oracles.
struct TrajectoryRecord {
  Eigen::MatrixXd u;           // m x T, CAV accelerations
  Eigen::VectorXd eps;         // T, head-vehicle velocity error
  Eigen::MatrixXd y;           // (n+m) x T, measured outputs
  Eigen::MatrixXd positions;   // (n+1) x T, head vehicle first
  Eigen::MatrixXd velocities;  // (n+1) x T
  double dt = 0.05;
  bool masked = false;

  Eigen::Index length() const { return eps.size(); }
  Series u_series() const;
  Series eps_series() const;
  Series y_series() const;
  /// Combined input (eps stacked over u), the excitation-certificate signal.
  Series combined_input_series() const;
};

void write_record_csv(const std::filesystem::path& path, const TrajectoryRecord& rec);
TrajectoryRecord read_record_csv(const std::filesystem::path& path);

}  // namespace deeplcc
