#include <cbompc/harness/experiment.hpp>

#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace cbompc::harness;
using testing_support::Gen;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cbompc_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

ExperimentConfig quick_cstr(const fs::path& out) {
  ExperimentConfig c = default_config(PlantKind::Cstr);
  c.mpc.n_steps = 12;
  c.cbo.n_agents = 8;
  c.cbo.k_bar = 3;
  c.cbo.seed = 9;
  c.output_dir = out.string();
  return c;
}

ExperimentConfig quick_linear(const fs::path& out) {
  ExperimentConfig c = default_config(PlantKind::Linear);
  c.mpc.n_steps = 20;
  c.cbo.n_agents = 50;
  c.cbo.k_bar = 20;
  c.output_dir = out.string();
  return c;
}

std::string key_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const cbompc::ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CBOMPC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---- configuration ------------------------------------------------------------------

TEST(Config, DefaultsMatchProtocol) {
  const auto c = default_config(PlantKind::Cstr);
  EXPECT_EQ(c.cbo.n_agents, 32u);
  EXPECT_EQ(c.cbo.k_bar, 10u);
  EXPECT_EQ(c.mpc.horizon, 10u);
  EXPECT_EQ(c.mpc.n_steps, 130u);
  EXPECT_EQ(c.cbo.alpha, 1e5);
  EXPECT_EQ(c.cbo.diffusion, cbompc::Diffusion::consensus_relative(1e-3));
  EXPECT_EQ(c.cstr.x0, Eigen::Vector2d(0.1, 438.54));
  EXPECT_NO_THROW(validate(c));
  EXPECT_NO_THROW(validate(default_config(PlantKind::Linear)));
}

TEST(Config, OverlayAndRoundTrip) {
  const json doc = json::parse(R"({"plant": "cstr", "cbo": {"n_agents": 64, "seed": 77},
                                   "mpc": {"n_steps": 40}, "sweep": {"axis": "kbar", "values": [2, 8],
                                   "repetitions": 3, "seed_base": 5}})");
  const auto c = config_from_json(doc);
  EXPECT_EQ(c.cbo.n_agents, 64u);
  EXPECT_EQ(c.cbo.seed, 77u);
  EXPECT_EQ(c.cbo.k_bar, 10u);
  EXPECT_EQ(c.mpc.n_steps, 40u);
  EXPECT_EQ(c.sweep.axis, SweepAxis::KBar);
  EXPECT_EQ(c.sweep.values, (std::vector<std::size_t>{2, 8}));
  const auto again = config_from_json(to_json(c));
  EXPECT_EQ(to_json(again).dump(), to_json(c).dump());
  // A summary-style document nests the configuration.
  EXPECT_EQ(to_json(config_from_json(json{{"config", to_json(c)}, {"total_loss", 1.0}})).dump(), to_json(c).dump());
}

TEST(Config, PlantOverrideUsesPlantDefaults) {
  const auto c = config_from_json(json::object(), PlantKind::Linear);
  EXPECT_EQ(c.plant, PlantKind::Linear);
  EXPECT_EQ(c.mpc.horizon, 1u);
  EXPECT_EQ(c.cbo.diffusion.kind, cbompc::DiffusionKind::Isotropic);
}

TEST(Config, ErrorsCarryKeys) {
  auto parse = [](const char* text) { return [text] { validate(config_from_json(json::parse(text))); }; };
  EXPECT_EQ(key_of(parse(R"({"cbo": {"n_agnts": 3}})")), "cbo.n_agnts");
  EXPECT_EQ(key_of(parse(R"({"bogus": 1})")), "bogus");
  EXPECT_EQ(key_of(parse(R"({"cbo": {"n_agents": "many"}})")), "cbo.n_agents");
  EXPECT_EQ(key_of(parse(R"({"cbo": {"n_agents": -4}})")), "cbo.n_agents");
  EXPECT_EQ(key_of(parse(R"({"mpc": {"dt": -1}})")), "mpc");
  EXPECT_EQ(key_of(parse(R"({"cbo": {"lambda": 20}})")), "cbo");
  EXPECT_EQ(key_of(parse(R"({"cbo": {"diffusion": "anisotropic"}})")), "cbo.diffusion");
  EXPECT_EQ(key_of(parse(R"({"plant": "tank"})")), "plant");
  EXPECT_EQ(key_of(parse(R"({"sweep": {"axis": "n", "values": [8, 8]}})")), "sweep.values");
  EXPECT_EQ(key_of(parse(R"({"sweep": {"axis": "n", "values": []}})")), "sweep.values");
  EXPECT_EQ(key_of(parse(R"({"sweep": {"repetitions": 0}})")), "sweep.repetitions");
  EXPECT_EQ(key_of(parse(R"({"sweep": {"axis": "time"}})")), "sweep.axis");
  EXPECT_EQ(key_of(parse(R"({"plant": "linear", "mpc": {"horizon": 3}})")), "mpc.horizon");
  EXPECT_EQ(key_of(parse(R"({"cstr": {"substep": 0.003}})")), "cstr");
  EXPECT_EQ(key_of(parse(R"({"cstr": {"x0": [0.1]}})")), "cstr.x0");
  EXPECT_EQ(key_of(parse(R"({"cstr": {"c_ref": {"times": [0, 1]}}})")), "cstr.c_ref");
  EXPECT_EQ(key_of(parse(R"({"plant": "linear", "linear": {"u_min": [2.0]}})")), "linear");
  EXPECT_EQ(key_of(parse(R"({"theory": {"eps": 0}})")), "theory.eps");

  const auto dir = scratch("config_errors");
  write_text(dir / "broken.json", "{ \"cbo\": ");
  EXPECT_EQ(key_of([&] { load_config((dir / "broken.json").string()); }), "--config");
  EXPECT_EQ(key_of([&] { load_config((dir / "missing.json").string()); }), "--config");
}

// ---- statistics -------------------------------------------------------------------

TEST(Stats, LinearInterpolation) {
  const std::vector<double> s{4.0, 1.0, 3.0, 2.0};
  EXPECT_DOUBLE_EQ(quantile(s, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(s, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(s, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(s, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile(s, 0.75), 3.25);
  const auto one = summarize({7.5});
  EXPECT_EQ(one.median, 7.5);
  EXPECT_EQ(one.p25, 7.5);
  EXPECT_EQ(one.p75, 7.5);
  EXPECT_EQ(one.iqr(), 0.0);
  EXPECT_THROW(quantile({}, 0.5), std::invalid_argument);
  EXPECT_THROW(quantile(s, 1.5), std::invalid_argument);
}

TEST(Stats, QuantilesOrdered) {
  Gen g(51);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> s(g.index(1, 40));
    for (auto& x : s) x = g.uniform(-1e3, 1e3);
    const auto q = summarize(s);
    EXPECT_LE(q.p25, q.median);
    EXPECT_LE(q.median, q.p75);
    EXPECT_GE(q.p25, *std::min_element(s.begin(), s.end()));
    EXPECT_LE(q.p75, *std::max_element(s.begin(), s.end()));
  }
}

// ---- CSV --------------------------------------------------------------------------------

TEST(Csv, NumbersRoundTrip) {
  Gen g(52);
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = g.normal() * std::pow(10.0, g.uniform(-300.0, 300.0));
    EXPECT_EQ(std::stod(format_number(x)), x);
  }
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
}

TEST(Csv, WriteAndRead) {
  const auto dir = scratch("csv");
  {
    CsvWriter w((dir / "t.csv").string(), {"a", "b"});
    w.row({"1", "2.5"});
    w.row({"3", ""});
  }
  const auto t = read_csv((dir / "t.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.number(0, "b"), 2.5);
  EXPECT_EQ(t.rows[1].size(), 2u);
  EXPECT_THROW(t.column("c"), std::out_of_range);
  EXPECT_THROW(CsvWriter((dir / "nope" / "x.csv").string(), {"a"}), std::runtime_error);
}

// ---- single runs --------------------------------------------------------------------------

TEST(RunSingle, CstrFilesAndReplay) {
  const auto dir = scratch("cstr_run");
  const auto c = quick_cstr(dir);
  const auto files = run_single(c);
  const auto t = read_csv(files.trace_csv.string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"n", "t_min", "C", "T", "q_c_applied", "loss_n"}));
  ASSERT_EQ(t.rows.size(), c.mpc.n_steps);

  // Replay the logged controls through the plant.
  const auto plant = make_plant(c);
  Eigen::VectorXd x = initial_state(c);
  for (std::size_t n = 0; n < t.rows.size(); ++n) {
    EXPECT_EQ(t.number(n, "C"), x[0]);
    EXPECT_EQ(t.number(n, "T"), x[1]);
    EXPECT_EQ(t.number(n, "t_min"), static_cast<double>(n) * c.mpc.dt);
    x = plant->step(x, Eigen::VectorXd::Constant(1, t.number(n, "q_c_applied")), t.number(n, "t_min"));
  }
  EXPECT_EQ(x, files.outcome.trace.final_state);

  const json summary = json::parse(slurp(files.summary_json));
  EXPECT_EQ(summary["n_steps"], c.mpc.n_steps);
  EXPECT_EQ(summary["seed"], c.cbo.seed);
  EXPECT_EQ(summary["objective_evaluations"],
            c.mpc.n_steps * c.cbo.k_bar * c.cbo.n_agents + c.mpc.n_steps * c.cbo.n_agents);
  EXPECT_EQ(summary["config"].dump(), to_json(c).dump());
  for (const char* k : {"final_loss", "mean_loss", "tail_mean_loss", "total_loss", "wall_clock_seconds"})
    EXPECT_TRUE(summary.contains(k)) << k;
}

TEST(RunSingle, IdenticalSeedsIdenticalBytes) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_single(quick_cstr(a));
  run_single(quick_cstr(b));
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
}

TEST(RunSingle, RerunFromSummaryIsBitIdentical) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  run_single(quick_linear(a));
  auto c = load_config((a / "summary.json").string());
  c.output_dir = b.string();
  run_single(c);
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
}

TEST(RunSingle, SingleStepTrace) {
  const auto dir = scratch("one_step");
  auto c = quick_cstr(dir);
  c.mpc.n_steps = 1;
  const auto files = run_single(c);
  EXPECT_EQ(read_csv(files.trace_csv.string()).rows.size(), 1u);
}

TEST(RunSingle, LinearTraceHasOracleColumns) {
  const auto dir = scratch("linear_run");
  const auto c = quick_linear(dir);
  const auto files = run_single(c);
  const auto t = read_csv(files.trace_csv.string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"n", "t", "x0", "u0", "loss_n", "u_star0", "err_u"}));
  const auto plant = make_plant(c);
  Eigen::VectorXd x = initial_state(c);
  double worst = 0.0;
  for (std::size_t n = 0; n < t.rows.size(); ++n) {
    EXPECT_EQ(t.number(n, "x0"), x[0]);
    EXPECT_EQ(t.number(n, "err_u"), std::abs(t.number(n, "u0") - t.number(n, "u_star0")));
    worst = std::max(worst, t.number(n, "err_u"));
    x = plant->step(x, Eigen::VectorXd::Constant(1, t.number(n, "u0")), t.number(n, "t"));
  }
  EXPECT_EQ(worst, files.outcome.max_control_error);
  EXPECT_LE(worst, 0.05);
}

// ---- sweeps ----------------------------------------------------------------------------------

TEST(Sweep, SeedsFilesAndScheduling) {
  const auto dir = scratch("sweep");
  auto c = quick_cstr(dir);
  c.mpc.n_steps = 4;
  c.sweep.axis = SweepAxis::NAgents;
  c.sweep.values = {4, 6};
  c.sweep.repetitions = 3;
  c.sweep.seed_base = 100;
  c.jobs = 1;
  const auto serial = run_sweep(c);
  ASSERT_EQ(serial.records.size(), 6u);
  EXPECT_EQ(serial.records[4].seed, 100u + 1000000u + 1u);
  EXPECT_EQ(serial.records[4].point, 6u);
  const auto sweep_csv = slurp(dir / "sweep.csv");
  const auto summary_csv = slurp(dir / "sweep_summary.csv");
  EXPECT_EQ(read_csv((dir / "sweep.csv").string()).header,
            (std::vector<std::string>{"point", "repetition", "seed", "metric"}));
  EXPECT_EQ(read_csv((dir / "sweep_summary.csv").string()).header,
            (std::vector<std::string>{"point", "median", "p25", "p75"}));

  // The metric of a record equals a standalone run with that seed.
  auto single = c;
  single.cbo.n_agents = 6;
  single.cbo.seed = serial.records[4].seed;
  EXPECT_EQ(execute(single).total_loss, serial.records[4].metric);

  c.jobs = 3;
  run_sweep(c);
  EXPECT_EQ(slurp(dir / "sweep.csv"), sweep_csv);
  EXPECT_EQ(slurp(dir / "sweep_summary.csv"), summary_csv);
}

TEST(Sweep, KbarAxisAndDegenerateSummary) {
  const auto dir = scratch("sweep_k");
  auto c = quick_cstr(dir);
  c.mpc.n_steps = 3;
  c.sweep.axis = SweepAxis::KBar;
  c.sweep.values = {2};
  c.sweep.repetitions = 1;
  const auto r = run_sweep(c);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.points[0].summary.p25, r.points[0].summary.median);
  EXPECT_EQ(r.points[0].summary.p75, r.points[0].summary.median);
  auto none = c;
  none.sweep.axis = SweepAxis::None;
  EXPECT_EQ(key_of([&] { compute_sweep(none); }), "sweep.axis");
}

// ---- theory report -----------------------------------------------------------------------------

TEST(TheoryReport, LinearInstance) {
  auto c = default_config(PlantKind::Linear);
  const json r = theory_report(c);
  EXPECT_EQ(r["eta1"][0], 0.0);
  EXPECT_EQ(r["eta2"][0], 0.0);
  EXPECT_NEAR(r["u_star"][0].get<double>(), 0.5 / 1.1, 1e-15);
  EXPECT_NEAR(r["lambda_min_A"].get<double>(), 1.1, 1e-15);
  EXPECT_EQ(r["diam_U"], 2.0);
  EXPECT_EQ(r["kbar_min"], 37u);  // ceil(10 ln 40)
  for (const char* k : {"R_eps", "log_delta_R", "alpha0_n", "alpha0", "v_limit"}) EXPECT_TRUE(r.contains(k)) << k;
  EXPECT_GE(r["alpha0"].get<double>(), r["alpha0_n"].get<double>());
  c.theory_eps = 2.0;
  EXPECT_EQ(theory_report(c)["kbar_min"], 0u);
}

TEST(TheoryReport, RejectsCstr) {
  EXPECT_EQ(key_of([] { theory_report(default_config(PlantKind::Cstr)); }), "plant");
}

// ---- command line ---------------------------------------------------------------------------------

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  write_text(dir / "quick.json", R"({"plant": "linear", "mpc": {"n_steps": 5}, "cbo": {"n_agents": 10, "k_bar": 5}})");
  write_text(dir / "bad.json", R"({"cbo": {"n_agents": 0}})");
  const std::string d = dir.string();
  EXPECT_EQ(run_cli("run --config " + d + "/quick.json --out " + d + "/run"), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "run" / "summary.json"));
  EXPECT_EQ(run_cli("run --config " + d + "/quick.json --seed 4 --out " + d + "/run_again"), 0);
  EXPECT_EQ(json::parse(slurp(dir / "run_again" / "summary.json"))["seed"], 4);
  EXPECT_EQ(run_cli("theory-report --out " + d + "/tr"), 0);
  EXPECT_TRUE(fs::exists(dir / "tr" / "theory_report.json"));
  EXPECT_EQ(run_cli("sweep --config " + d + "/quick.json --sweep kbar --reps 1 --out " + d + "/sw"), 0);
  EXPECT_TRUE(fs::exists(dir / "sw" / "sweep_summary.csv"));

  EXPECT_NE(run_cli("run --config " + d + "/bad.json --out " + d + "/bad"), 0);
  EXPECT_NE(run_cli("theory-report --plant cstr --out " + d + "/tr2"), 0);
  EXPECT_NE(run_cli("sweep --config " + d + "/quick.json --out " + d + "/sw2"), 0);
  EXPECT_NE(run_cli("run --plant tank"), 0);
  EXPECT_NE(run_cli(""), 0);
  EXPECT_NE(run_cli("run --config " + d + "/does_not_exist.json"), 0);
}
