#include "deeplcc/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "deeplcc/errors.hpp"

namespace deeplcc::csv {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int Table::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(Errc::IoError, "cannot open for writing: " + tmp.string());
    os << content;
    if (!os) throw Error(Errc::IoError, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

Table read_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open: " + path.string());

  Table t;
  std::string line;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line.substr(1));
      continue;
    }
    if (!have_header) {
      t.header = split_line(line);
      have_header = true;
      continue;
    }
    const auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw Error(Errc::IoError, "ragged CSV row in " + path.string());
    }
    std::vector<double> row(cells.size());
    for (size_t i = 0; i < cells.size(); ++i) {
      try {
        row[i] = std::stod(cells[i]);
      } catch (const std::exception&) {
        throw Error(Errc::IoError, "non-numeric cell '" + cells[i] + "' in " + path.string());
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(Errc::IoError, "missing header row in " + path.string());

  t.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      t.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return t;
}

void write_table(const std::filesystem::path& path, const Table& t) {
  std::ostringstream os;
  for (const auto& c : t.comments) os << '#' << c << '\n';
  for (size_t i = 0; i < t.header.size(); ++i) {
    if (i) os << ',';
    os << t.header[i];
  }
  os << '\n';
  for (Eigen::Index r = 0; r < t.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.data.cols(); ++c) {
      if (c) os << ',';
      os << format_double(t.data(r, c));
    }
    os << '\n';
  }
  atomic_write(path, os.str());
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  Table t;
  t.header.reserve(static_cast<size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) t.header.push_back(std::to_string(c));
  t.data = m;
  write_table(path, t);
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  return read_table(path).data;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  atomic_write(path, content);
}

}  // namespace deeplcc::csv
