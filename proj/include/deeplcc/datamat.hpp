#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace deeplcc {

/// Vector-valued time series; column j is the sample at step j.
struct Series {
  Eigen::MatrixXd values;  // q x T

  Eigen::Index dim() const { return values.rows(); }
  Eigen::Index length() const { return values.cols(); }

  static Series from_vector(const Eigen::VectorXd& v);  // q = 1
};

enum class MatrixKind { Hankel, Page };

const char* matrix_kind_name(MatrixKind k);
MatrixKind matrix_kind_from_name(const std::string& name);

/// Sliding-window matrix of depth k: column j stacks samples j..j+k-1.
Eigen::MatrixXd hankel(const Series& s, int depth);

/// Disjoint-window matrix of depth k: column j stacks samples
/// (j-1)k..jk-1; the trailing T mod k samples are dropped.
Eigen::MatrixXd page(const Series& s, int depth);

/// The six data blocks of the predictive controller, with aligned columns.
struct BlockMatrixSet {
  MatrixKind kind = MatrixKind::Hankel;
  int t_ini = 0;
  int horizon = 0;
  int m = 0;       // input dimension per step
  int p = 0;       // output dimension per step
  Eigen::Index cols = 0;
  Eigen::MatrixXd U_p, U_f;  // m*t_ini x cols, m*horizon x cols
  Eigen::MatrixXd E_p, E_f;  // t_ini x cols, horizon x cols
  Eigen::MatrixXd Y_p, Y_f;  // p*t_ini x cols, p*horizon x cols
};

BlockMatrixSet partition(MatrixKind kind, const Series& u, const Series& eps, const Series& y,
                         int t_ini, int horizon);

struct ExcitationCertificate {
  bool exciting = false;
  Eigen::Index rank = 0;
  Eigen::Index required = 0;
  Eigen::Index discarded_samples = 0;  // Page only: trailing T mod k drops
};

// Numerical rank uses the ledgered tolerance: singular values below
// tol_rel * sigma_max count as zero.
inline constexpr double kRankTolRel = 1e-8;

ExcitationCertificate is_hankel_exciting(const Series& s, int order);
ExcitationCertificate is_page_exciting(const Series& s, int depth, int order);

/// Closed-form minimum sample counts for the excitation conditions.
/// `masked` raises the excitation order by one (the offset-carrying
/// representations need the extra ones row).
std::int64_t min_samples(MatrixKind kind, int m, int n, int t_ini, int horizon,
                         bool masked = false);

/// Samples needed so the partition has exactly `cols` columns.
std::int64_t samples_for_columns(MatrixKind kind, Eigen::Index cols, int t_ini, int horizon);
Eigen::Index columns_for_samples(MatrixKind kind, std::int64_t samples, int t_ini, int horizon);

}  // namespace deeplcc
