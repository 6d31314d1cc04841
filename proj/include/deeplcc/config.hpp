#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deeplcc/controller.hpp"
#include "deeplcc/model.hpp"
#include "deeplcc/privacy.hpp"
#include "deeplcc/qp.hpp"
#include "deeplcc/sim.hpp"

namespace deeplcc {

/// Flat view of the nested key/value config file; keys are "section.key".
/// Schema in docs/config.md.
class ConfigFile {
public:
  static ConfigFile parse_file(const std::filesystem::path& path);
  static ConfigFile parse_string(const std::string& text, const std::filesystem::path& dir = ".");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// Directory of the source file: relative paths resolve against it.
  const std::filesystem::path& base_dir() const { return base_dir_; }

private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_ = ".";
};

/// Everything one command needs, assembled and cross-validated.
struct RunConfig {
  FleetTopology fleet;
  OvmParams ovm;
  Equilibrium eq;  // from equilibrium.v_star
  ControllerConfig controller;
  bool ones_row = true;
  std::optional<FleetMasks> masks;
  ConstraintMode constraint_mode = ConstraintMode::ExactPreimage;
  ScenarioSpec scenario;
  NoiseSpec noise;
  ExcitationSpec excitation;
  Eigen::Index columns = 900;  // data-matrix columns; samples derived per kind
  std::filesystem::path dataset_path;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 42;
  double dt = 0.05;
  QpSettings solver;
  int demo_witnesses = 100;

  Eigen::Index samples() const;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_config(const ConfigFile& cf);
};

}  // namespace deeplcc
