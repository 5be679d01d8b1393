#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "restless/channel.hpp"
#include "restless/config.hpp"
#include "restless/metrics.hpp"
#include "restless/model.hpp"
#include "restless/report_json.hpp"
#include "restless/stopping.hpp"

using namespace restless;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/" + name;
  std::ofstream out(path, std::ios::trunc);
  REQUIRE(out.good());
  out << body;
  out.close();
  return path;
}

}  // namespace

TEST_CASE("a minimal config fills defaults") {
  const auto path = write_temp("restless_cfg_minimal.json",
                               R"({"model":"channel","p":0.2,"q":0.3,"beta":0.8})");
  const auto cfg = load_config(path);
  CHECK(cfg.model == "channel");
  CHECK(cfg.p == 0.2);
  CHECK(cfg.q == 0.3);
  CHECK(cfg.beta == 0.8);
  CHECK(cfg.grid == 201);
  CHECK(cfg.tol == 1e-8);
  CHECK(cfg.horizon == 0);
  CHECK(cfg.lambda_count == 33);
  CHECK(cfg.seed == 12345u);
  CHECK_FALSE(cfg.strict);
  std::remove(path.c_str());
}

TEST_CASE("unknown configuration keys are rejected") {
  const auto path = write_temp("restless_cfg_typo.json",
                               R"({"model":"channel","betaa":0.8})");
  CHECK_THROWS_WITH(load_config(path), ContainsSubstring("betaa"));
  std::remove(path.c_str());

  CHECK_THROWS_WITH(
      config_from_json(nlohmann::json::parse(R"({"gird":41})")),
      ContainsSubstring("gird"));
}

TEST_CASE("invalid configuration values are rejected") {
  auto base = nlohmann::json::parse(R"({"model":"channel","p":0.2,"q":0.3,"beta":0.8})");

  auto with = [&](const char* key, nlohmann::json v) {
    auto j = base;
    j[key] = std::move(v);
    return j;
  };

  CHECK_THROWS_WITH(config_from_json(with("beta", 1.0)), ContainsSubstring("beta"));
  CHECK_THROWS_AS(config_from_json(with("beta", -0.1)), std::invalid_argument);
  CHECK_THROWS_WITH(config_from_json(with("tol", 0.0)), ContainsSubstring("tol"));
  CHECK_THROWS_WITH(config_from_json(with("grid", 2)), ContainsSubstring("grid"));
  CHECK_THROWS_AS(config_from_json(with("model", "fancy")), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(with("p", 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(with("epsilon", 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(with("horizon", -1)), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(with("lambda_count", 0)), std::invalid_argument);
  CHECK_THROWS_AS(
      config_from_json(nlohmann::json::parse(R"({"model":"stopping"})")),
      std::invalid_argument);
  // Wrong JSON types surface as configuration errors, not library aborts.
  CHECK_THROWS_AS(config_from_json(with("grid", "many")), std::invalid_argument);

  const auto bad_path = write_temp("restless_cfg_broken.json", "{not json");
  CHECK_THROWS_AS(load_config(bad_path), std::invalid_argument);
  std::remove(bad_path.c_str());
  CHECK_THROWS_AS(load_config("/tmp/no_such_config_file.json"), std::invalid_argument);
}

TEST_CASE("the effective config round-trips") {
  SECTION("channel") {
    RunConfig cfg;
    cfg.model = "channel";
    cfg.p = 0.25;
    cfg.q = 0.4;
    cfg.beta = 0.9;
    cfg.grid = 101;
    cfg.tol = 1e-6;
    cfg.horizon = 77;
    cfg.lambda_count = 9;
    cfg.pairs = 50;
    cfg.intervals = 7;
    cfg.seed = 99u;
    cfg.epsilon = 1e-3;
    cfg.dist = "pointmass:0.5";
    cfg.out = "report.json";
    cfg.svg = "plot.svg";
    cfg.strict = true;
    const RunConfig reloaded = config_from_json(config_to_json(cfg));
    CHECK(reloaded == cfg);
  }
  SECTION("stopping") {
    RunConfig cfg;
    cfg.model = "stopping";
    cfg.spec = "spec.json";
    cfg.out = "index.csv";
    const RunConfig reloaded = config_from_json(config_to_json(cfg));
    CHECK(reloaded == cfg);
  }
}

TEST_CASE("stopping specs load declarative fields and kernels") {
  SECTION("table reward, constant cost, reset kernel") {
    const auto path = write_temp("restless_spec_table.json", R"({
      "beta": 0.0,
      "reward": {"kind": "table", "x": [0.0, 1.0], "y": [0.0, 2.0]},
      "cost": {"kind": "constant", "value": 1.0},
      "kernel": {"kind": "reset", "to": 0.0}
    })");
    const auto spec = load_stopping_spec(path);
    std::remove(path.c_str());
    CHECK(spec.beta == 0.0);
    CHECK(spec.active_reward(0.25) == Approx(0.5).margin(1e-15));
    CHECK(spec.active_reward(0.75) == Approx(1.5).margin(1e-15));
    CHECK(spec.active_reward(-1.0) == 0.0);
    CHECK(spec.active_reward(2.0) == 2.0);
    CHECK(spec.active_cost(0.3) == 1.0);

    // With no discounting the index is the one-step reward/cost ratio.
    const auto project = stopping_project(spec);
    const auto curve = mp_index_curve(project, {0.25, 0.5}, 5);
    CHECK(curve.values[0] == Approx(0.5).margin(1e-12));
    CHECK(curve.values[1] == Approx(1.0).margin(1e-12));
  }

  SECTION("linear fields default their coefficients") {
    const auto path = write_temp("restless_spec_linear.json", R"({
      "beta": 0.5,
      "reward": {"kind": "linear", "slope": 2.0},
      "cost": {"kind": "linear", "intercept": 1.0, "slope": 0.0},
      "kernel": {"kind": "reset", "to": 0.25}
    })");
    const auto spec = load_stopping_spec(path);
    std::remove(path.c_str());
    CHECK(spec.active_reward(0.5) == 1.0);
    CHECK(spec.active_cost(0.9) == 1.0);
  }

  SECTION("the channel kernel form matches the worked model") {
    const auto path = write_temp("restless_spec_channel.json", R"({
      "beta": 0.8,
      "reward": {"kind": "linear", "slope": 1.0},
      "cost": {"kind": "constant", "value": 1.0},
      "kernel": {"kind": "channel", "p": 0.2, "q": 0.3}
    })");
    const auto spec = load_stopping_spec(path);
    std::remove(path.c_str());
    const auto reference = channel_project(ChannelParams{0.2, 0.3, 0.8});
    const Real loaded = kernel_expectation(spec.active_kernel, 0.4,
                                           [](Real y) { return y; });
    const Real expected = kernel_expectation(reference.kernel1, 0.4,
                                             [](Real y) { return y; });
    CHECK(loaded == expected);
  }

  SECTION("mix kernels validate their atom lists") {
    const auto good = write_temp("restless_spec_mix.json", R"({
      "beta": 0.5,
      "reward": {"kind": "linear"},
      "cost": {"kind": "constant", "value": 1.0},
      "kernel": {"kind": "mix", "to": [0.2, 0.8], "prob": [0.5, 0.5]}
    })");
    const auto spec = load_stopping_spec(good);
    std::remove(good.c_str());
    const Real mean = kernel_expectation(spec.active_kernel, 0.123,
                                         [](Real y) { return y; });
    CHECK(mean == Approx(0.5).margin(1e-15));

    const auto bad_sum = write_temp("restless_spec_mix_bad.json", R"({
      "beta": 0.5,
      "reward": {"kind": "linear"},
      "cost": {"kind": "constant", "value": 1.0},
      "kernel": {"kind": "mix", "to": [0.2, 0.8], "prob": [0.5, 0.4]}
    })");
    CHECK_THROWS_AS(load_stopping_spec(bad_sum), std::invalid_argument);
    std::remove(bad_sum.c_str());
  }

  SECTION("malformed specs are rejected with the offending field") {
    const auto unknown = write_temp("restless_spec_unknown.json", R"({
      "beta": 0.5, "rewardd": {"kind": "linear"},
      "cost": {"kind": "constant", "value": 1.0},
      "kernel": {"kind": "reset", "to": 0.0}
    })");
    CHECK_THROWS_WITH(load_stopping_spec(unknown), ContainsSubstring("rewardd"));
    std::remove(unknown.c_str());

    const auto bad_kind = write_temp("restless_spec_badkind.json", R"({
      "beta": 0.5, "reward": {"kind": "cubic"},
      "cost": {"kind": "constant", "value": 1.0},
      "kernel": {"kind": "reset", "to": 0.0}
    })");
    CHECK_THROWS_AS(load_stopping_spec(bad_kind), std::invalid_argument);
    std::remove(bad_kind.c_str());

    const auto bad_bounds = write_temp("restless_spec_bounds.json", R"({
      "beta": 0.5, "reward": {"kind": "linear"},
      "cost": {"kind": "constant", "value": 1.0},
      "kernel": {"kind": "reset", "to": 0.0},
      "lower": 1.0, "upper": 0.0
    })");
    CHECK_THROWS_AS(load_stopping_spec(bad_bounds), std::invalid_argument);
    std::remove(bad_bounds.c_str());
  }
}

TEST_CASE("distribution selectors parse all three forms") {
  const auto grid = linspace(0.0, 1.0, 5);

  const auto uniform = parse_distribution("uniform", grid);
  REQUIRE(uniform.states.size() == 5);
  CHECK(uniform.probs[0] == Approx(0.2).margin(1e-15));

  const auto mass = parse_distribution("pointmass:0.5", grid);
  REQUIRE(mass.states.size() == 1);
  CHECK(mass.states[0] == 0.5);
  CHECK(mass.probs[0] == 1.0);

  CHECK_THROWS_AS(parse_distribution("pointmass:abc", grid), std::invalid_argument);
  CHECK_THROWS_AS(parse_distribution("pointmass:0.5x", grid), std::invalid_argument);

  const auto path = write_temp("restless_dist.json",
                               R"({"states":[0.2,0.8],"probs":[0.25,0.75]})");
  const auto file_dist = parse_distribution(path, grid);
  std::remove(path.c_str());
  REQUIRE(file_dist.states.size() == 2);
  CHECK(file_dist.probs[1] == 0.75);

  const auto bad = write_temp("restless_dist_bad.json",
                              R"({"states":[0.2],"probs":[1.0],"mode":"x"})");
  CHECK_THROWS_WITH(parse_distribution(bad, grid), ContainsSubstring("mode"));
  std::remove(bad.c_str());

  CHECK_THROWS_AS(parse_distribution("/tmp/no_such_dist_file.json", grid),
                  std::invalid_argument);
}

TEST_CASE("atomic text writes land complete") {
  const std::string path = "/tmp/restless_atomic_test.txt";
  atomic_write_text(path, "hello\n");
  {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == "hello\n");
  }
  atomic_write_text(path, "replaced\n");
  {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == "replaced\n");
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(atomic_write_text("/no_such_dir_xq/file.txt", "x"),
                  std::runtime_error);
}

TEST_CASE("verification reports serialize with schema and verdicts") {
  PCLReport report;
  report.pcli1 = {0.19, 0.2, 0.01, true, 0.2, true};
  report.pcli2.pass = true;
  report.pcli2.max_decrease = 1e-13;
  report.pcli2.tolerance = 2e-9;
  report.pcli3.pass = true;
  report.pcli3.max_residual = 3e-8;
  report.pcli3.partitions = 12;
  report.identities.push_back({"volterra", 1e-9, 1e-6, true});
  report.identities.push_back({"sign-consistency", 0.0, 0.0, false});
  report.grid_meta = "9 states x 20 thresholds";

  const auto j = to_json(report);
  CHECK(j["schema"] == 1);
  CHECK(j["pcli1"]["pass"] == true);
  CHECK(j["pcli1"]["model_floor"] == 0.2);
  CHECK(j["pcli2"]["max_decrease"] == 1e-13);
  CHECK(j["pcli3"]["partitions"] == 12);
  CHECK(j["identities"][0]["name"] == "volterra");
  CHECK(j["identities"][1]["pass"] == false);
  CHECK(j["pass"] == false);

  CrossCheckReport cross;
  cross.lambdas = {0.25, 0.75};
  cross.agreements = {1.0, 0.9};
  cross.indifference_band = 1e-4;
  cross.failures.push_back({0.75, 0.5, 1, 0});
  const auto cj = to_json(cross);
  CHECK(cj["pass"] == false);
  CHECK(cj["failures"][0]["lambda"] == 0.75);
  CHECK(cj["agreements"][0] == 1.0);

  ValidationReport validation;
  validation.pass = true;
  validation.sample_count = 41;
  validation.checks.push_back({"cost-gap", 1.0, true, ""});
  const auto vj = to_json(validation);
  CHECK(vj["pass"] == true);
  CHECK(vj["checks"][0]["name"] == "cost-gap");
}

TEST_CASE("report context echoes tolerances and decay") {
  RunConfig cfg;
  const auto project = channel_project(ChannelParams{0.2, 0.3, 0.8});
  const auto ctx = report_context(cfg, project, 50);
  CHECK(ctx["horizon"] == 50);
  CHECK(ctx["rate_gamma"] == 0.8);
  CHECK(ctx["gamma_pow_k"].get<Real>() == Approx(std::pow(0.8, 50)).margin(0.0));
  CHECK(ctx["bound_M_gamma"].get<Real>() == Approx(5.0).margin(1e-12));
  CHECK(ctx["effective_config"]["model"] == "channel");
  // The embedded effective config reloads to an identical configuration.
  const RunConfig reloaded = config_from_json(
      nlohmann::json::parse(ctx["effective_config"].dump()));
  CHECK(reloaded == cfg);
}

TEST_CASE("the index CSV lists states with certified error bounds") {
  IndexCurve curve;
  curve.states = {0.25, 0.5};
  curve.values = {0.3, 0.6};
  curve.error_bounds = {1e-9, 2e-9};
  curve.g_lower = 0.2;
  curve.horizon = 80;
  curve.gamma_pow_k = std::pow(0.8, 80);

  const std::string csv = index_csv(curve);
  std::string expected = "x,m_star,err_bound\n";
  expected += detail::format_real(0.25);
  expected += ',';
  expected += detail::format_real(0.3);
  expected += ',';
  expected += detail::format_real(1e-9);
  expected += '\n';
  expected += detail::format_real(0.5);
  expected += ',';
  expected += detail::format_real(0.6);
  expected += ',';
  expected += detail::format_real(2e-9);
  expected += '\n';
  CHECK(csv == expected);
}
