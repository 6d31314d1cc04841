#include "deeplcc/config.hpp"

#include <fstream>
#include <sstream>

#include "deeplcc/errors.hpp"
#include "deeplcc/rng.hpp"

namespace deeplcc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open config: " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  auto dir = path.parent_path();
  if (dir.empty()) dir = ".";
  return parse_string(buf.str(), dir);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::filesystem::path& dir) {
  ConfigFile cf;
  cf.base_dir_ = dir;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(Errc::ConfigError, "bad section header at line " + std::to_string(line_no));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::ConfigError, "expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw Error(Errc::ConfigError, "empty key at line " + std::to_string(line_no));
    }
    cf.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cf;
}

bool ConfigFile::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ConfigFile::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(Errc::ConfigError, "missing config key: " + key);
  return it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key) const {
  try {
    return std::stod(get_string(key));
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, "config key is not a number: " + key);
  }
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long ConfigFile::get_int(const std::string& key) const {
  try {
    return std::stol(get_string(key));
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, "config key is not an integer: " + key);
  }
}

long ConfigFile::get_int(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(Errc::ConfigError, "config key is not a boolean: " + key);
}

std::vector<double> ConfigFile::get_doubles(const std::string& key) const {
  std::istringstream is(get_string(key));
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error(Errc::ConfigError, "config key is not a number list: " + key);
    }
  }
  return out;
}

Eigen::Index RunConfig::samples() const {
  return static_cast<Eigen::Index>(
      samples_for_columns(controller.matrix_kind, columns, controller.t_ini, controller.horizon));
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  return from_config(ConfigFile::parse_file(path));
}

RunConfig RunConfig::from_config(const ConfigFile& cf) {
  RunConfig rc;

  const int n = static_cast<int>(cf.get_int("fleet.n"));
  const std::vector<double> cavs_d = cf.get_doubles("fleet.cav_indices");
  std::vector<int> cavs;
  for (double c : cavs_d) cavs.push_back(static_cast<int>(c));
  rc.fleet = FleetTopology::make(n, cavs);

  rc.ovm.alpha = cf.get_double("ovm.alpha", 0.6);
  rc.ovm.beta = cf.get_double("ovm.beta", 0.9);
  rc.ovm.s_st = cf.get_double("ovm.s_st", 5.0);
  rc.ovm.s_go = cf.get_double("ovm.s_go", 35.0);
  rc.ovm.v_max = cf.get_double("ovm.v_max", 30.0);
  rc.ovm.validate();

  const double v_star = cf.get_double("equilibrium.v_star", 15.0);
  rc.eq = solve_equilibrium(rc.ovm, v_star);

  ControllerConfig& cc = rc.controller;
  cc.t_ini = static_cast<int>(cf.get_int("controller.t_ini", 15));
  cc.horizon = static_cast<int>(cf.get_int("controller.horizon", 30));
  cc.w_s = cf.get_double("controller.w_s", 0.5);
  cc.w_v = cf.get_double("controller.w_v", 1.0);
  cc.w_u = cf.get_double("controller.w_u", 0.1);
  cc.s_err_min = cf.get_double("controller.s_err_min", -15.0);
  cc.s_err_max = cf.get_double("controller.s_err_max", 20.0);
  cc.v_err_min = cf.get_double("controller.v_err_min", -30.0);
  cc.v_err_max = cf.get_double("controller.v_err_max", 30.0);
  cc.a_min = cf.get_double("controller.a_min", -5.0);
  cc.a_max = cf.get_double("controller.a_max", 2.0);
  cc.lambda_g = cf.get_double("controller.lambda_g", 100.0);
  cc.lambda_sigma = cf.get_double("controller.lambda_sigma", 10000.0);
  cc.regularized = cf.get_bool("controller.regularized", true);
  cc.matrix_kind = matrix_kind_from_name(cf.get_string("data.matrix_kind", "hankel"));
  cc.validate();
  rc.ones_row = cf.get_bool("controller.ones_row", true);

  if (cf.has("masks.preset")) {
    const std::string preset = cf.get_string("masks.preset");
    if (preset == "paper") {
      rc.masks = paper_masks(rc.fleet);
    } else if (preset == "identity") {
      rc.masks = identity_masks(rc.fleet);
    } else if (preset != "none") {
      throw Error(Errc::ConfigError, "unknown mask preset: " + preset);
    }
  } else if (cf.has("masks.cav_1")) {
    std::vector<AffineMap2> sms;
    std::vector<AffineMap1> ims;
    for (int i = 1; i <= rc.fleet.m(); ++i) {
      const std::string key = "masks.cav_" + std::to_string(i);
      const std::vector<double> v = cf.get_doubles(key);
      if (v.size() != 8) {
        throw Error(Errc::ConfigError, key + " needs 8 numbers: P(2x2 row-major) l(2) p_u l_u");
      }
      AffineMap2 sm;
      sm.P << v[0], v[1], v[2], v[3];
      sm.l << v[4], v[5];
      sms.push_back(sm);
      ims.push_back(AffineMap1{v[6], v[7]});
    }
    rc.masks = lift_maps(sms, ims, rc.fleet);
  }

  const std::string mode = cf.get_string("run.constraint_mode", "exact");
  if (mode == "exact") {
    rc.constraint_mode = ConstraintMode::ExactPreimage;
  } else if (mode == "literal") {
    rc.constraint_mode = ConstraintMode::PaperLiteral;
  } else {
    throw Error(Errc::ConfigError, "constraint_mode must be exact or literal");
  }

  ScenarioSpec& scn = rc.scenario;
  const std::string kind = cf.get_string("scenario.kind", "brake");
  if (kind == "brake") {
    scn.kind = ScenarioSpec::Kind::EmergencyBrake;
  } else if (kind == "cycle") {
    scn.kind = ScenarioSpec::Kind::DriveCycle;
  } else if (kind == "replay") {
    scn.kind = ScenarioSpec::Kind::ReplayCsv;
  } else {
    throw Error(Errc::ConfigError, "scenario.kind must be brake, cycle or replay");
  }
  scn.duration = cf.get_double("scenario.duration", 15.0);
  scn.v_star = v_star;
  scn.brake_start = cf.get_double("scenario.brake_start", 2.0);
  scn.brake_decel = cf.get_double("scenario.brake_decel", -5.0);
  scn.v_low = cf.get_double("scenario.v_low", 5.0);
  scn.low_duration = cf.get_double("scenario.low_duration", 3.0);
  scn.recovery_accel = cf.get_double("scenario.recovery_accel", 2.0);
  if (cf.has("scenario.cycle_knots")) {
    const std::vector<double> flat = cf.get_doubles("scenario.cycle_knots");
    if (flat.size() % 2 != 0 || flat.empty()) {
      throw Error(Errc::ConfigError, "cycle_knots must be time velocity pairs");
    }
    for (size_t i = 0; i + 1 < flat.size(); i += 2) {
      scn.cycle_knots.emplace_back(flat[i], flat[i + 1]);
    }
  }
  if (cf.has("scenario.replay_csv")) {
    std::filesystem::path p = cf.get_string("scenario.replay_csv");
    if (p.is_relative()) p = cf.base_dir() / p;
    scn.csv_path = p;
  } else if (scn.kind == ScenarioSpec::Kind::ReplayCsv) {
    throw Error(Errc::ConfigError, "scenario.kind = replay needs scenario.replay_csv");
  }
  scn.validate(cc.a_min);

  rc.noise.half_width = cf.get_double("noise.half_width", 0.3);
  rc.excitation.input_half_width = cf.get_double("excitation.input_half_width", 1.0);
  rc.excitation.head_half_width = cf.get_double("excitation.head_half_width", 1.0);

  rc.columns = static_cast<Eigen::Index>(cf.get_int("data.columns", 900));
  if (rc.columns < 1) throw Error(Errc::ConfigError, "data.columns must be >= 1");
  {
    std::filesystem::path p = cf.get_string("data.dataset", "dataset.csv");
    if (p.is_relative()) p = cf.base_dir() / p;
    rc.dataset_path = p;
  }

  rc.out_dir = cf.get_string("run.out", "out");
  rc.seed = static_cast<std::uint64_t>(cf.get_int("run.seed", 42));
  rc.noise.seed = derive_seed(rc.seed, "noise");
  rc.dt = cf.get_double("run.dt", 0.05);
  if (!(rc.dt > 0.0)) throw Error(Errc::ConfigError, "run.dt must be > 0");

  rc.solver.abs_tol = cf.get_double("solver.abs_tol", 1e-8);
  rc.solver.rel_tol = cf.get_double("solver.rel_tol", 1e-9);
  rc.solver.max_iter = static_cast<int>(cf.get_int("solver.max_iter", 20000));
  rc.solver.polish = cf.get_bool("solver.polish", true);

  rc.demo_witnesses = static_cast<int>(cf.get_int("demo.witnesses", 100));
  return rc;
}

}  // namespace deeplcc
