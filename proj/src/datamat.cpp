#include "deeplcc/datamat.hpp"

#include <Eigen/SVD>
#include <string>

#include "deeplcc/errors.hpp"

namespace deeplcc {

Series Series::from_vector(const Eigen::VectorXd& v) {
  Series s;
  s.values = v.transpose();
  return s;
}

const char* matrix_kind_name(MatrixKind k) {
  return k == MatrixKind::Hankel ? "hankel" : "page";
}

MatrixKind matrix_kind_from_name(const std::string& name) {
  if (name == "hankel") return MatrixKind::Hankel;
  if (name == "page") return MatrixKind::Page;
  throw Error(Errc::ConfigError, "unknown matrix kind: " + name);
}

Eigen::MatrixXd hankel(const Series& s, int depth) {
  const Eigen::Index q = s.dim(), T = s.length();
  if (depth < 1) throw Error(Errc::DimensionMismatch, "hankel depth must be >= 1");
  if (depth > T) throw Error(Errc::DepthExceedsLength, "hankel depth exceeds series length");
  const Eigen::Index cols = T - depth + 1;
  Eigen::MatrixXd h(q * depth, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index r = 0; r < depth; ++r) {
      h.block(r * q, j, q, 1) = s.values.col(j + r);
    }
  }
  return h;
}

Eigen::MatrixXd page(const Series& s, int depth) {
  const Eigen::Index q = s.dim(), T = s.length();
  if (depth < 1) throw Error(Errc::DimensionMismatch, "page depth must be >= 1");
  if (depth > T) throw Error(Errc::DepthExceedsLength, "page depth exceeds series length");
  const Eigen::Index cols = T / depth;
  Eigen::MatrixXd pmat(q * depth, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index r = 0; r < depth; ++r) {
      pmat.block(r * q, j, q, 1) = s.values.col(j * depth + r);
    }
  }
  return pmat;
}

BlockMatrixSet partition(MatrixKind kind, const Series& u, const Series& eps, const Series& y,
                         int t_ini, int horizon) {
  if (t_ini < 1 || horizon < 1) {
    throw Error(Errc::DimensionMismatch, "partition needs t_ini >= 1 and horizon >= 1");
  }
  const Eigen::Index T = u.length();
  if (eps.length() != T || y.length() != T) {
    throw Error(Errc::DimensionMismatch, "u, eps, y series lengths differ");
  }
  if (eps.dim() != 1) throw Error(Errc::DimensionMismatch, "eps must be scalar-valued");
  const int depth = t_ini + horizon;
  const Eigen::Index cols = columns_for_samples(kind, T, t_ini, horizon);
  if (cols < 1) {
    throw Error(Errc::InsufficientData, "series too short for one " +
                                            std::string(matrix_kind_name(kind)) + " column");
  }

  const auto build = [&](const Series& s) {
    return kind == MatrixKind::Hankel ? hankel(s, depth) : page(s, depth);
  };
  const Eigen::MatrixXd U = build(u);
  const Eigen::MatrixXd E = build(eps);
  const Eigen::MatrixXd Y = build(y);

  BlockMatrixSet b;
  b.kind = kind;
  b.t_ini = t_ini;
  b.horizon = horizon;
  b.m = static_cast<int>(u.dim());
  b.p = static_cast<int>(y.dim());
  b.cols = cols;
  b.U_p = U.topRows(b.m * t_ini);
  b.U_f = U.bottomRows(b.m * horizon);
  b.E_p = E.topRows(t_ini);
  b.E_f = E.bottomRows(horizon);
  b.Y_p = Y.topRows(b.p * t_ini);
  b.Y_f = Y.bottomRows(b.p * horizon);
  return b;
}

namespace {

Eigen::Index numerical_rank(const Eigen::MatrixXd& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double tol = kRankTolRel * sv(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++rank;
  }
  return rank;
}

}  // namespace

ExcitationCertificate is_hankel_exciting(const Series& s, int order) {
  if (order < 1) throw Error(Errc::DimensionMismatch, "excitation order must be >= 1");
  ExcitationCertificate cert;
  cert.required = s.dim() * order;
  if (order > s.length()) {
    // too short to even form the matrix: report not exciting
    cert.rank = 0;
    cert.exciting = false;
    return cert;
  }
  const Eigen::MatrixXd h = hankel(s, order);
  cert.rank = numerical_rank(h);
  cert.exciting = (cert.rank == cert.required);
  return cert;
}

ExcitationCertificate is_page_exciting(const Series& s, int depth, int order) {
  if (depth < 1 || order < 1) {
    throw Error(Errc::DimensionMismatch, "page excitation needs depth >= 1 and order >= 1");
  }
  const Eigen::Index q = s.dim(), T = s.length();
  ExcitationCertificate cert;
  cert.required = q * depth * order;
  cert.discarded_samples = T % depth;

  // window length shared by all shifted blocks
  const Eigen::Index span = T - static_cast<Eigen::Index>(order - 1) * depth;
  if (span < depth) {
    throw Error(Errc::InsufficientData, "a shifted page block would have zero columns");
  }
  const Eigen::Index cols = span / depth;
  Eigen::MatrixXd stacked(q * depth * order, cols);
  for (int r = 0; r < order; ++r) {
    Series sub;
    sub.values = s.values.middleCols(static_cast<Eigen::Index>(r) * depth, span);
    stacked.middleRows(static_cast<Eigen::Index>(r) * q * depth, q * depth) = page(sub, depth);
  }
  cert.rank = numerical_rank(stacked);
  cert.exciting = (cert.rank == cert.required);
  return cert;
}

std::int64_t min_samples(MatrixKind kind, int m, int n, int t_ini, int horizon, bool masked) {
  if (m < 1 || n < 1 || t_ini < 1 || horizon < 1) {
    throw Error(Errc::DimensionMismatch, "min_samples arguments must be >= 1");
  }
  const std::int64_t L = t_ini + horizon;
  if (kind == MatrixKind::Hankel) {
    const std::int64_t order = L + 2 * n + (masked ? 1 : 0);
    return static_cast<std::int64_t>(m + 2) * order - 1;
  }
  const std::int64_t order = 2 * n + (masked ? 2 : 1);
  return L * (((m + 1) * L + 1) * order - 1);
}

std::int64_t samples_for_columns(MatrixKind kind, Eigen::Index cols, int t_ini, int horizon) {
  if (cols < 1) throw Error(Errc::DimensionMismatch, "columns must be >= 1");
  const std::int64_t L = t_ini + horizon;
  if (kind == MatrixKind::Hankel) return cols + L - 1;
  return static_cast<std::int64_t>(cols) * L;
}

Eigen::Index columns_for_samples(MatrixKind kind, std::int64_t samples, int t_ini, int horizon) {
  const std::int64_t L = t_ini + horizon;
  if (kind == MatrixKind::Hankel) return static_cast<Eigen::Index>(samples - L + 1);
  return static_cast<Eigen::Index>(samples / L);
}

}  // namespace deeplcc
