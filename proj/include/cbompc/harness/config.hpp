#pragma once

#include <cbompc/cbo.hpp>
#include <cbompc/cstr.hpp>
#include <cbompc/errors.hpp>
#include <cbompc/linear_plant.hpp>
#include <cbompc/mpc.hpp>
#include <cbompc/plant.hpp>

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cbompc::harness {

using nlohmann::json;

enum class PlantKind { Cstr, Linear };
enum class InitKind { ReferenceUniform, BoxUniform };
enum class SweepAxis { None, NAgents, KBar };

struct CstrSettings {
  CstrParams params{};
  double substep = 1e-3;
  double q_c_min = 20.0;
  double q_c_max = 200.0;
  Eigen::VectorXd x0 = Eigen::Vector2d(0.1, 438.54);
  PiecewiseConstant c_ref = CstrPlant::Options{}.c_ref;
  PiecewiseConstant q_c_ref = CstrPlant::Options{}.q_c_ref;
};

struct LinearSettings {
  Eigen::MatrixXd a_s = Eigen::MatrixXd::Constant(1, 1, 0.9);
  Eigen::VectorXd b_s = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd f_c = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd u_min = Eigen::VectorXd::Constant(1, -1.0);
  Eigen::VectorXd u_max = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  PiecewiseConstant x_ref{{0.0, 15.0, 30.0},
                          {Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, -0.5),
                           Eigen::VectorXd::Constant(1, 0.9)}};
};

struct InitSettings {
  InitKind kind = InitKind::ReferenceUniform;
  double half_width = 0.5;
};

struct SweepSettings {
  SweepAxis axis = SweepAxis::None;
  std::vector<std::size_t> values;
  std::size_t repetitions = 1;
  std::uint64_t seed_base = 0;
};

struct ExperimentConfig {
  PlantKind plant = PlantKind::Cstr;
  CstrSettings cstr;
  LinearSettings linear;
  MpcConfig mpc;
  CboParams cbo;
  InitSettings init;
  SweepSettings sweep;
  double theory_eps = 0.05;
  std::string output_dir = "out";
  std::size_t jobs = 0;  // 0: hardware concurrency
};

/// CSTR defaults reproduce the reference protocol (N=32, k_bar=10, horizon 10,
/// 130 steps of 0.05 min); linear defaults are the one-move verification instance.
inline ExperimentConfig default_config(PlantKind plant) {
  ExperimentConfig c;
  c.plant = plant;
  if (plant == PlantKind::Linear) {
    c.mpc = {.horizon = 1, .nu = 0.1, .n_steps = 50, .dt = 1.0, .regularize_to_reference = false};
    c.cbo = {.lambda = 1.0, .sigma = 0.3, .tau = 0.1, .alpha = 1e5, .n_agents = 200, .k_bar = 50,
             .diffusion = Diffusion::isotropic(), .seed = 0};
    c.init.kind = InitKind::BoxUniform;
  }
  return c;
}

inline std::vector<std::size_t> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::NAgents: return {8, 16, 32, 64, 128};
    case SweepAxis::KBar: return {2, 4, 8, 16, 32};
    case SweepAxis::None: break;
  }
  return {};
}

inline std::string to_string(PlantKind p) { return p == PlantKind::Cstr ? "cstr" : "linear"; }
inline std::string to_string(InitKind k) { return k == InitKind::ReferenceUniform ? "reference_uniform" : "box_uniform"; }
inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::NAgents: return "n_agents";
    case SweepAxis::KBar: return "k_bar";
    case SweepAxis::None: break;
  }
  return "none";
}

inline PlantKind parse_plant(const std::string& s, const std::string& key = "plant") {
  if (s == "cstr") return PlantKind::Cstr;
  if (s == "linear") return PlantKind::Linear;
  throw ConfigError(key, "expected 'cstr' or 'linear', got '" + s + "'");
}

inline SweepAxis parse_axis(const std::string& s, const std::string& key = "sweep.axis") {
  if (s == "none") return SweepAxis::None;
  if (s == "n_agents" || s == "n") return SweepAxis::NAgents;
  if (s == "k_bar" || s == "kbar") return SweepAxis::KBar;
  throw ConfigError(key, "expected 'none', 'n_agents' or 'k_bar', got '" + s + "'");
}

// ---------------------------------------------------------------------------
// JSON <-> domain values

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const PiecewiseConstant& p) {
  json values = json::array();
  for (const auto& v : p.values()) values.push_back(to_json(v));
  return {{"times", p.times()}, {"values", values}};
}

namespace detail {

inline std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline void check_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items())
    if (!ok.count(item.key())) throw ConfigError(join(prefix, item.key()), "unknown key");
}

inline double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

inline std::uint64_t as_uint(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline Eigen::VectorXd as_vector(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key, "expected an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = as_double(v[i], key);
  return out;
}

inline Eigen::MatrixXd as_matrix(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) throw ConfigError(key, "expected a non-empty array of rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!v[r].is_array() || v[r].size() != cols || cols == 0) throw ConfigError(key, "rows must have equal, non-zero length");
    for (std::size_t c = 0; c < cols; ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_double(v[r][c], key);
  }
  return out;
}

inline PiecewiseConstant as_signal(const json& v, const std::string& key) {
  check_keys(v, key, {"times", "values"});
  if (!v.contains("times") || !v.contains("values")) throw ConfigError(key, "needs 'times' and 'values'");
  std::vector<double> times;
  for (const auto& t : v["times"]) times.push_back(as_double(t, key + ".times"));
  std::vector<Eigen::VectorXd> values;
  for (const auto& x : v["values"]) values.push_back(as_vector(x, key + ".values"));
  try {
    return PiecewiseConstant(std::move(times), std::move(values));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

template <class T, class Fn>
void read(const json& obj, const std::string& prefix, const char* key, T& out, Fn convert) {
  if (auto it = obj.find(key); it != obj.end()) out = convert(*it, join(prefix, key));
}

inline void read(const json& obj, const std::string& prefix, const char* key, double& out) {
  read(obj, prefix, key, out, as_double);
}
inline void read(const json& obj, const std::string& prefix, const char* key, std::size_t& out) {
  read(obj, prefix, key, out, [](const json& v, const std::string& k) { return static_cast<std::size_t>(as_uint(v, k)); });
}
inline void read(const json& obj, const std::string& prefix, const char* key, bool& out) {
  read(obj, prefix, key, out, [](const json& v, const std::string& k) {
    if (!v.is_boolean()) throw ConfigError(k, "expected a boolean");
    return v.get<bool>();
  });
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  const auto& p = c.cstr.params;
  json sweep_values = c.sweep.values;
  return {
      {"plant", to_string(c.plant)},
      {"cstr",
       {{"params",
         {{"q", p.q}, {"V", p.V}, {"C_f", p.C_f}, {"T_0", p.T_0}, {"T_C0", p.T_C0}, {"hA", p.hA}, {"k_0", p.k_0},
          {"E_over_R", p.E_over_R}, {"dH", p.dH}, {"rho", p.rho}, {"rho_c", p.rho_c}, {"c_p", p.c_p},
          {"c_pc", p.c_pc}}},
        {"substep", c.cstr.substep},
        {"q_c_min", c.cstr.q_c_min},
        {"q_c_max", c.cstr.q_c_max},
        {"x0", to_json(c.cstr.x0)},
        {"c_ref", to_json(c.cstr.c_ref)},
        {"q_c_ref", to_json(c.cstr.q_c_ref)}}},
      {"linear",
       {{"A_s", to_json(c.linear.a_s)},
        {"b_s", to_json(c.linear.b_s)},
        {"F_c", to_json(c.linear.f_c)},
        {"u_min", to_json(c.linear.u_min)},
        {"u_max", to_json(c.linear.u_max)},
        {"x0", to_json(c.linear.x0)},
        {"x_ref", to_json(c.linear.x_ref)}}},
      {"mpc",
       {{"horizon", c.mpc.horizon}, {"nu", c.mpc.nu}, {"n_steps", c.mpc.n_steps}, {"dt", c.mpc.dt},
        {"regularize_to_reference", c.mpc.regularize_to_reference}}},
      {"cbo",
       {{"lambda", c.cbo.lambda}, {"sigma", c.cbo.sigma}, {"tau", c.cbo.tau}, {"alpha", c.cbo.alpha},
        {"n_agents", c.cbo.n_agents}, {"k_bar", c.cbo.k_bar},
        {"diffusion", c.cbo.diffusion.kind == DiffusionKind::Isotropic ? "isotropic" : "consensus_relative"},
        {"sigma_tilde", c.cbo.diffusion.sigma_tilde}, {"seed", c.cbo.seed}}},
      {"init", {{"kind", to_string(c.init.kind)}, {"half_width", c.init.half_width}}},
      {"sweep",
       {{"axis", to_string(c.sweep.axis)}, {"values", sweep_values}, {"repetitions", c.sweep.repetitions},
        {"seed_base", c.sweep.seed_base}}},
      {"theory", {{"eps", c.theory_eps}}},
      {"output_dir", c.output_dir},
      {"jobs", c.jobs},
  };
}

/// Validates and maps domain-level failures onto configuration keys.
inline void validate(const ExperimentConfig& c) {
  auto guard = [](const std::string& key, auto&& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  };
  guard("cbo", [&] { c.cbo.validate(); });
  guard("mpc", [&] { c.mpc.validate(); });
  if (c.sweep.repetitions == 0) throw ConfigError("sweep.repetitions", "must be >= 1");
  if (c.sweep.axis != SweepAxis::None) {
    if (c.sweep.values.empty()) throw ConfigError("sweep.values", "must be non-empty");
    for (std::size_t i = 1; i < c.sweep.values.size(); ++i)
      if (c.sweep.values[i] <= c.sweep.values[i - 1]) throw ConfigError("sweep.values", "must be strictly increasing");
    if (c.sweep.axis == SweepAxis::NAgents && c.sweep.values.front() == 0)
      throw ConfigError("sweep.values", "agent counts must be >= 1");
  }
  if (!(c.init.half_width >= 0.0)) throw ConfigError("init.half_width", "must be >= 0");
  if (!(c.theory_eps > 0.0)) throw ConfigError("theory.eps", "must be positive");
  if (c.plant == PlantKind::Cstr) {
    if (c.cstr.x0.size() != 2) throw ConfigError("cstr.x0", "expected [C, T]");
    guard("cstr", [&] {
      CstrPlant::Options o{c.cstr.params, c.cstr.substep, c.mpc.dt, c.cstr.q_c_min, c.cstr.q_c_max, c.cstr.c_ref,
                           c.cstr.q_c_ref};
      CstrPlant plant(std::move(o));
    });
  } else {
    if (c.mpc.horizon != 1) throw ConfigError("mpc.horizon", "the linear plant is run with a one-move horizon");
    guard("linear", [&] {
      LinearAdditivePlant plant(c.linear.a_s, c.linear.b_s, c.linear.f_c, ControlBox(c.linear.u_min, c.linear.u_max),
                                c.linear.x_ref);
    });
    if (c.linear.x0.size() != c.linear.a_s.rows()) throw ConfigError("linear.x0", "dimension must match A_s");
  }
}

/// Overlays the keys present in `j` onto `base`.
inline ExperimentConfig apply_json(ExperimentConfig c, const json& j) {
  using namespace detail;
  check_keys(j, "", {"plant", "cstr", "linear", "mpc", "cbo", "init", "sweep", "theory", "output_dir", "jobs"});
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("output_dir", "expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  read(j, "", "jobs", c.jobs);

  if (j.contains("cstr")) {
    const json& s = j["cstr"];
    check_keys(s, "cstr", {"params", "substep", "q_c_min", "q_c_max", "x0", "c_ref", "q_c_ref"});
    if (s.contains("params")) {
      const json& p = s["params"];
      check_keys(p, "cstr.params",
                 {"q", "V", "C_f", "T_0", "T_C0", "hA", "k_0", "E_over_R", "dH", "rho", "rho_c", "c_p", "c_pc"});
      auto& cp = c.cstr.params;
      const std::string pre = "cstr.params";
      read(p, pre, "q", cp.q); read(p, pre, "V", cp.V); read(p, pre, "C_f", cp.C_f);
      read(p, pre, "T_0", cp.T_0); read(p, pre, "T_C0", cp.T_C0); read(p, pre, "hA", cp.hA);
      read(p, pre, "k_0", cp.k_0); read(p, pre, "E_over_R", cp.E_over_R); read(p, pre, "dH", cp.dH);
      read(p, pre, "rho", cp.rho); read(p, pre, "rho_c", cp.rho_c); read(p, pre, "c_p", cp.c_p);
      read(p, pre, "c_pc", cp.c_pc);
    }
    read(s, "cstr", "substep", c.cstr.substep);
    read(s, "cstr", "q_c_min", c.cstr.q_c_min);
    read(s, "cstr", "q_c_max", c.cstr.q_c_max);
    read(s, "cstr", "x0", c.cstr.x0, as_vector);
    read(s, "cstr", "c_ref", c.cstr.c_ref, as_signal);
    read(s, "cstr", "q_c_ref", c.cstr.q_c_ref, as_signal);
  }
  if (j.contains("linear")) {
    const json& s = j["linear"];
    check_keys(s, "linear", {"A_s", "b_s", "F_c", "u_min", "u_max", "x0", "x_ref"});
    read(s, "linear", "A_s", c.linear.a_s, as_matrix);
    read(s, "linear", "b_s", c.linear.b_s, as_vector);
    read(s, "linear", "F_c", c.linear.f_c, as_matrix);
    read(s, "linear", "u_min", c.linear.u_min, as_vector);
    read(s, "linear", "u_max", c.linear.u_max, as_vector);
    read(s, "linear", "x0", c.linear.x0, as_vector);
    read(s, "linear", "x_ref", c.linear.x_ref, as_signal);
  }
  if (j.contains("mpc")) {
    const json& s = j["mpc"];
    check_keys(s, "mpc", {"horizon", "nu", "n_steps", "dt", "regularize_to_reference"});
    read(s, "mpc", "horizon", c.mpc.horizon);
    read(s, "mpc", "nu", c.mpc.nu);
    read(s, "mpc", "n_steps", c.mpc.n_steps);
    read(s, "mpc", "dt", c.mpc.dt);
    read(s, "mpc", "regularize_to_reference", c.mpc.regularize_to_reference);
  }
  if (j.contains("cbo")) {
    const json& s = j["cbo"];
    check_keys(s, "cbo", {"lambda", "sigma", "tau", "alpha", "n_agents", "k_bar", "diffusion", "sigma_tilde", "seed"});
    read(s, "cbo", "lambda", c.cbo.lambda);
    read(s, "cbo", "sigma", c.cbo.sigma);
    read(s, "cbo", "tau", c.cbo.tau);
    read(s, "cbo", "alpha", c.cbo.alpha);
    read(s, "cbo", "n_agents", c.cbo.n_agents);
    read(s, "cbo", "k_bar", c.cbo.k_bar);
    if (s.contains("diffusion")) {
      const auto kind = s["diffusion"].is_string() ? s["diffusion"].get<std::string>() : "";
      if (kind == "isotropic") c.cbo.diffusion.kind = DiffusionKind::Isotropic;
      else if (kind == "consensus_relative") c.cbo.diffusion.kind = DiffusionKind::ConsensusRelative;
      else throw ConfigError("cbo.diffusion", "expected 'isotropic' or 'consensus_relative'");
    }
    read(s, "cbo", "sigma_tilde", c.cbo.diffusion.sigma_tilde);
    read(s, "cbo", "seed", c.cbo.seed, as_uint);
  }
  if (j.contains("init")) {
    const json& s = j["init"];
    check_keys(s, "init", {"kind", "half_width"});
    if (s.contains("kind")) {
      const auto kind = s["kind"].is_string() ? s["kind"].get<std::string>() : "";
      if (kind == "reference_uniform") c.init.kind = InitKind::ReferenceUniform;
      else if (kind == "box_uniform") c.init.kind = InitKind::BoxUniform;
      else throw ConfigError("init.kind", "expected 'reference_uniform' or 'box_uniform'");
    }
    read(s, "init", "half_width", c.init.half_width);
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, "sweep", {"axis", "values", "repetitions", "seed_base"});
    if (s.contains("axis")) {
      if (!s["axis"].is_string()) throw ConfigError("sweep.axis", "expected a string");
      c.sweep.axis = parse_axis(s["axis"].get<std::string>());
    }
    if (s.contains("values")) {
      if (!s["values"].is_array()) throw ConfigError("sweep.values", "expected an array of integers");
      c.sweep.values.clear();
      for (const auto& v : s["values"]) c.sweep.values.push_back(static_cast<std::size_t>(as_uint(v, "sweep.values")));
    }
    read(s, "sweep", "repetitions", c.sweep.repetitions);
    read(s, "sweep", "seed_base", c.sweep.seed_base, as_uint);
  }
  if (j.contains("theory")) {
    const json& s = j["theory"];
    check_keys(s, "theory", {"eps"});
    read(s, "theory", "eps", c.theory_eps);
  }
  return c;
}

/// Builds a configuration from JSON. A summary.json (which nests the resolved
/// configuration under "config") is accepted as well. `plant_override`
/// replaces the plant named in the file; defaults follow the chosen plant.
inline ExperimentConfig config_from_json(const json& doc, std::optional<PlantKind> plant_override = {}) {
  const json& j = (doc.is_object() && doc.contains("config") && doc["config"].is_object()) ? doc["config"] : doc;
  PlantKind plant = PlantKind::Cstr;
  if (j.is_object() && j.contains("plant")) {
    if (!j["plant"].is_string()) throw ConfigError("plant", "expected a string");
    plant = parse_plant(j["plant"].get<std::string>());
  }
  if (plant_override) plant = *plant_override;
  ExperimentConfig c = apply_json(default_config(plant), j);
  c.plant = plant;
  return c;
}

inline ExperimentConfig load_config(const std::string& path, std::optional<PlantKind> plant_override = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("parse error: ") + e.what());
  }
  return config_from_json(doc, plant_override);
}

}  // namespace cbompc::harness
