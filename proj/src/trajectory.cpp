#include "deeplcc/trajectory.hpp"

#include <string>

#include "deeplcc/csv.hpp"
#include "deeplcc/errors.hpp"

namespace deeplcc {

Series TrajectoryRecord::u_series() const { return Series{u}; }

Series TrajectoryRecord::eps_series() const { return Series{eps.transpose()}; }

Series TrajectoryRecord::y_series() const { return Series{y}; }

Series TrajectoryRecord::combined_input_series() const {
  Series s;
  s.values.resize(u.rows() + 1, eps.size());
  s.values.row(0) = eps.transpose();
  s.values.bottomRows(u.rows()) = u;
  return s;
}

void write_record_csv(const std::filesystem::path& path, const TrajectoryRecord& rec) {
  const Eigen::Index T = rec.length();
  const Eigen::Index m = rec.u.rows(), p = rec.y.rows(), nv = rec.positions.rows();
  csv::Table t;
  if (rec.masked) t.comments.push_back(" masked=true");
  t.comments.push_back(" dt=" + csv::format_double(rec.dt));
  t.header.push_back("t");
  for (Eigen::Index i = 0; i < m; ++i) t.header.push_back("u_" + std::to_string(i + 1));
  t.header.push_back("eps");
  for (Eigen::Index i = 0; i < p; ++i) t.header.push_back("y_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < nv; ++i) t.header.push_back("p_" + std::to_string(i));
  for (Eigen::Index i = 0; i < nv; ++i) t.header.push_back("v_" + std::to_string(i));

  t.data.resize(T, static_cast<Eigen::Index>(t.header.size()));
  for (Eigen::Index k = 0; k < T; ++k) {
    Eigen::Index c = 0;
    t.data(k, c++) = static_cast<double>(k) * rec.dt;
    for (Eigen::Index i = 0; i < m; ++i) t.data(k, c++) = rec.u(i, k);
    t.data(k, c++) = rec.eps[k];
    for (Eigen::Index i = 0; i < p; ++i) t.data(k, c++) = rec.y(i, k);
    for (Eigen::Index i = 0; i < nv; ++i) t.data(k, c++) = rec.positions(i, k);
    for (Eigen::Index i = 0; i < nv; ++i) t.data(k, c++) = rec.velocities(i, k);
  }
  csv::write_table(path, t);
}

TrajectoryRecord read_record_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read_table(path);
  TrajectoryRecord rec;
  for (const auto& c : t.comments) {
    if (c.find("masked=true") != std::string::npos) rec.masked = true;
    const auto pos = c.find("dt=");
    if (pos != std::string::npos) rec.dt = std::stod(c.substr(pos + 3));
  }
  Eigen::Index m = 0, p = 0, nv = 0;
  for (const auto& h : t.header) {
    if (h.rfind("u_", 0) == 0) ++m;
    else if (h.rfind("y_", 0) == 0) ++p;
    else if (h.rfind("p_", 0) == 0) ++nv;
  }
  if (t.column("eps") < 0) throw Error(Errc::IoError, "record CSV missing eps column");
  const Eigen::Index T = t.data.rows();
  rec.u.resize(m, T);
  rec.y.resize(p, T);
  rec.positions.resize(nv, T);
  rec.velocities.resize(nv, T);
  rec.eps.resize(T);

  Eigen::Index c = 1;  // after "t"
  for (Eigen::Index i = 0; i < m; ++i) rec.u.row(i) = t.data.col(c++).transpose();
  rec.eps = t.data.col(c++);
  for (Eigen::Index i = 0; i < p; ++i) rec.y.row(i) = t.data.col(c++).transpose();
  for (Eigen::Index i = 0; i < nv; ++i) rec.positions.row(i) = t.data.col(c++).transpose();
  for (Eigen::Index i = 0; i < nv; ++i) rec.velocities.row(i) = t.data.col(c++).transpose();
  return rec;
}

}  // namespace deeplcc
