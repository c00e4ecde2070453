#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/baselines.hpp"
#include "core/errors.hpp"
#include "core/harness.hpp"

using namespace zopo;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// matrix with one seed per cell holding the given per-task scores
ResultMatrix hand_matrix(const std::vector<std::string>& methods,
                         const std::vector<std::vector<double>>& scores) {
  std::vector<std::string> tasks;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    tasks.push_back("task" + std::to_string(t + 1));
  }
  ResultMatrix matrix(tasks, methods, 1);
  for (std::size_t t = 0; t < scores.size(); ++t) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      auto& cell = matrix.cell(t, m, 0);
      cell.ok = true;
      cell.final_best = scores[t][m];
      cell.queries_used = 1;
    }
  }
  return matrix;
}

// writes a temp pool file for the monotone 1-D task: scores in [0,1]
std::string write_grid_pool(const fs::path& path) {
  std::ofstream out(path);
  for (int i = 0; i < 100; ++i) {
    char line[128];
    std::snprintf(line, sizeof(line),
                  "{\"id\": \"p%02d\", \"embedding\": [%.4f], \"score\": %.4f}\n",
                  i, i / 10.0, i / 99.0);
    out << line;
  }
  return path.string();
}

}  // namespace

TEST_CASE("method tags round-trip") {
  for (const auto* name :
       {"zopo", "zopo-matern", "zopo-noexplore", "random", "fd-zoo"}) {
    CHECK(method_name(parse_method(name)) == name);
  }
  CHECK_THROWS_AS(parse_method("bogus"), Error);
}

TEST_CASE("method presets adjust the base configuration") {
  OptimizerConfig base;
  base.kernel.kind = KernelSpec::Kind::ntk;

  const auto matern = resolve_method_config(MethodTag::zopo_matern, base);
  CHECK(matern.kernel.kind == KernelSpec::Kind::matern52);
  CHECK_FALSE(matern.kernel.lengthscale.has_value());

  const auto noexplore = resolve_method_config(MethodTag::zopo_noexplore, base);
  CHECK(std::isinf(noexplore.lambda));

  const auto plain = resolve_method_config(MethodTag::zopo, base);
  CHECK(plain.kernel.kind == KernelSpec::Kind::ntk);
}

TEST_CASE("performance profile reproduces the hand-computed example") {
  // means: A = (0.9, 0.5, 0.7), B = (0.8, 0.6, 0.7)
  const auto matrix = hand_matrix({"A", "B"}, {{0.9, 0.8}, {0.5, 0.6}, {0.7, 0.7}});
  const auto profile = performance_profile(matrix, {0.0, 0.1});
  REQUIRE(profile.methods == std::vector<std::string>{"A", "B"});
  // r* = (0.9, 0.6, 0.7); gaps A = (0, 0.1, 0), B = (0.1, 0, 0);
  // the task-3 tie counts for both methods
  CHECK(profile.rho[0][0] == 2.0 / 3.0);
  CHECK(profile.rho[1][0] == 2.0 / 3.0);
  CHECK(profile.rho[0][1] == 1.0);
  CHECK(profile.rho[1][1] == 1.0);
}

TEST_CASE("single-method profiles are identically one") {
  const auto matrix = hand_matrix({"only"}, {{0.9}, {0.1}, {0.5}});
  const auto profile = performance_profile(matrix, {0.0, 0.05, 1.0});
  for (double rho : profile.rho[0]) CHECK(rho == 1.0);
}

TEST_CASE("profiles are monotone in tau and reach one beyond the max gap") {
  const auto matrix = hand_matrix(
      {"m1", "m2", "m3"},
      {{0.9, 0.2, 0.5}, {0.3, 0.8, 0.6}, {0.7, 0.7, 0.1}, {0.4, 0.35, 0.45}});
  const std::vector<double> taus = {0.0, 0.1, 0.2, 0.4, 0.8, 1.0};
  const auto profile = performance_profile(matrix, taus);
  for (const auto& rho : profile.rho) {
    for (std::size_t k = 1; k < rho.size(); ++k) CHECK(rho[k] >= rho[k - 1]);
    CHECK(rho.back() == 1.0);
  }
}

TEST_CASE("incomplete matrices are rejected with the missing cells named") {
  ResultMatrix matrix({"t1"}, {"m1", "m2"}, 2);
  matrix.cell(0, 0, 0).ok = true;
  matrix.cell(0, 0, 1).ok = true;
  matrix.cell(0, 1, 0).ok = true;  // m2 seed1 missing
  CHECK_THROWS_WITH_AS(performance_profile(matrix, {0.0}),
                       doctest::Contains("t1/m2/seed1"), Error);
}

TEST_CASE("single-cell experiments produce a matching matrix and files") {
  const fs::path dir = fs::temp_directory_path() / "zopo_harness_1cell";
  fs::remove_all(dir);

  nlohmann::json config_json = {
      {"master_seed", 11},
      {"seeds", 1},
      {"methods", {"random"}},
      {"tasks", {{{"name", "tiny"}, {"synthetic", "rkhs,d=4,pool=40,seed=2,noise=0"}}}},
      {"optimizer", {{"budget", 15}, {"init_queries", 5}}},
  };
  const auto config = BenchConfig::from_json(config_json);
  const auto matrix = run_experiment(config);
  REQUIRE(matrix.complete());
  CHECK(matrix.cell(0, 0, 0).queries_used == 15);
  CHECK(matrix.mean(0, 0) == matrix.cell(0, 0, 0).final_best);
  CHECK(matrix.cell(0, 0, 0).final_best ==
        matrix.cell(0, 0, 0).trace.best_score);

  emit_outputs(config, matrix, dir.string());
  const std::string results = read_file(dir / "results.csv");
  CHECK(results.rfind("task,method,seed,final_best,queries_used\n", 0) == 0);
  CHECK(std::count(results.begin(), results.end(), '\n') == 2);  // header + 1
  CHECK(fs::exists(dir / "curves.csv"));
  CHECK(fs::exists(dir / "profile.csv"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "traces" / "tiny__random__seed0.json"));
  fs::remove_all(dir);
}

TEST_CASE("random search with budget >= pool size finds the true maximum") {
  const auto task = make_synthetic_task(SyntheticSpec::parse("rkhs,d=4,pool=30,seed=6,noise=0"));
  OptimizerConfig cfg;
  cfg.budget = 30;
  cfg.init_queries = 1;
  Rng rng(4);
  const auto trace = run_random_search(cfg, task.pool, *task.objective, rng);
  CHECK(trace.queries_used == 30);
  CHECK(trace.best_id == task.true_best_id);
  CHECK(trace.best_score == doctest::Approx(task.true_best_score));
}

TEST_CASE("re-running an experiment is byte-identical") {
  const fs::path dir1 = fs::temp_directory_path() / "zopo_det_a";
  const fs::path dir2 = fs::temp_directory_path() / "zopo_det_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  nlohmann::json config_json = {
      {"master_seed", 5},
      {"seeds", 2},
      {"workers", 2},
      {"methods", {"zopo", "random"}},
      {"tasks", {{{"name", "detcheck"}, {"synthetic", "rkhs,d=4,pool=50,seed=3,noise=0.02"}}}},
      {"optimizer",
       {{"budget", 20},
        {"init_queries", 6},
        {"kernel", {{"kind", "rbf"}}}}},
  };
  const auto config = BenchConfig::from_json(config_json);
  emit_outputs(config, run_experiment(config), dir1.string());
  emit_outputs(config, run_experiment(config), dir2.string());

  for (const auto* name : {"results.csv", "curves.csv", "profile.csv", "summary.json"}) {
    CHECK(read_file(dir1 / name) == read_file(dir2 / name));
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("fd-zoo with budget equal to init matches the random-init trace") {
  const auto task = make_synthetic_task(SyntheticSpec::parse("rkhs,d=3,pool=40,seed=8,noise=0"));
  OptimizerConfig cfg;
  cfg.budget = 12;
  cfg.init_queries = 12;
  Rng r1(9), r2(9);
  const auto fd = run_fd_zoo(cfg, task.pool, *task.objective, r1);
  const auto random = run_random_search(cfg, task.pool, *task.objective, r2);
  REQUIRE(fd.entries.size() == random.entries.size());
  for (std::size_t i = 0; i < fd.entries.size(); ++i) {
    CHECK(fd.entries[i].id == random.entries[i].id);
    CHECK(fd.entries[i].score == random.entries[i].score);
  }
}

TEST_CASE("fd-zoo consumes exactly three queries per complete step") {
  const auto task = make_synthetic_task(SyntheticSpec::parse("rkhs,d=3,pool=60,seed=8,noise=0"));
  OptimizerConfig cfg;
  cfg.budget = 10 + 7;  // two full steps plus one spare probe
  cfg.init_queries = 10;
  Rng rng(2);
  const auto trace = run_fd_zoo(cfg, task.pool, *task.objective, rng);
  CHECK(trace.queries_used == 17);
  std::vector<StepKind> kinds;
  for (std::size_t i = 10; i < trace.entries.size(); ++i) {
    kinds.push_back(trace.entries[i].kind);
  }
  const std::vector<StepKind> expect = {
      StepKind::exploration, StepKind::exploration, StepKind::gradient_step,
      StepKind::exploration, StepKind::exploration, StepKind::gradient_step,
      StepKind::exploration};
  CHECK(kinds == expect);
}

TEST_CASE("gradient steps beat two-point probing on a monotone landscape") {
  const fs::path pool_file = fs::temp_directory_path() / "zopo_grid_pool.jsonl";
  write_grid_pool(pool_file);

  nlohmann::json config_json = {
      {"master_seed", 3},
      {"seeds", 20},
      {"methods", {"zopo", "fd-zoo"}},
      {"tasks", {{{"name", "monotone"}, {"pool_file", pool_file.string()}}}},
      {"optimizer",
       {{"budget", 60},
        {"init_queries", 10},
        {"learning_rate", 0.5},
        {"kernel", {{"kind", "rbf"}}}}},
  };
  const auto config = BenchConfig::from_json(config_json);
  const auto matrix = run_experiment(config);
  REQUIRE(matrix.complete());
  CHECK(matrix.median(0, 0) >= matrix.median(0, 1));
  fs::remove(pool_file);
}

TEST_CASE("profiles can be recomputed from results.csv") {
  const fs::path path = fs::temp_directory_path() / "zopo_results_test.csv";
  {
    std::ofstream out(path);
    out << "task,method,seed,final_best,queries_used\n";
    out << "task1,A,0,0.9,10\ntask1,B,0,0.8,10\n";
    out << "task2,A,0,0.5,10\ntask2,B,0,0.6,10\n";
    out << "task3,A,0,0.7,10\ntask3,B,0,0.7,10\n";
  }
  const auto profile = profile_from_results_csv(path.string(), {0.0, 0.1});
  CHECK(profile.rho[0][0] == 2.0 / 3.0);
  CHECK(profile.rho[1][0] == 2.0 / 3.0);
  CHECK(profile.rho[0][1] == 1.0);
  CHECK(profile.rho[1][1] == 1.0);

  // drop one row: the incomplete cell must be named
  {
    std::ofstream out(path);
    out << "task,method,seed,final_best,queries_used\n";
    out << "task1,A,0,0.9,10\ntask1,B,0,0.8,10\ntask2,A,0,0.5,10\n";
  }
  CHECK_THROWS_WITH_AS(profile_from_results_csv(path.string(), {0.0}),
                       doctest::Contains("task2/B"), Error);
  fs::remove(path);
}

TEST_CASE("bench configs validate task names and method overrides") {
  nlohmann::json base = {
      {"methods", {"random"}},
      {"tasks", {{{"name", "a"}, {"synthetic", "rkhs,d=2,pool=10,seed=1"}}}},
  };

  auto bad_name = base;
  bad_name["tasks"][0]["name"] = "has,comma";
  CHECK_THROWS_AS(BenchConfig::from_json(bad_name), Error);

  auto dup = base;
  dup["tasks"].push_back(dup["tasks"][0]);
  CHECK_THROWS_AS(BenchConfig::from_json(dup), Error);

  auto bad_override = base;
  bad_override["method_overrides"] = {{"not-a-method", {{"budget", 5}}}};
  CHECK_THROWS_AS(BenchConfig::from_json(bad_override), Error);

  auto good_override = base;
  good_override["methods"] = {"zopo-noexplore"};
  good_override["method_overrides"] = {{"zopo-noexplore", {{"xi", 2}}}};
  const auto cfg = BenchConfig::from_json(good_override);
  CHECK(cfg.method_overrides.size() == 1);
}

TEST_CASE("experiments record failing cells and keep going") {
  // a table task whose score file misses most pool ids: every run fails
  const fs::path pool_file = fs::temp_directory_path() / "zopo_bad_pool.jsonl";
  {
    std::ofstream out(pool_file);
    out << "{\"id\": \"a\", \"embedding\": [0.0], \"score\": 0.5}\n";
    out << "{\"id\": \"b\", \"embedding\": [1.0]}\n";
    out << "{\"id\": \"c\", \"embedding\": [2.0]}\n";
  }
  nlohmann::json config_json = {
      {"master_seed", 1},
      {"seeds", 2},
      {"methods", {"random"}},
      {"tasks", {{{"name", "broken"}, {"pool_file", pool_file.string()}}}},
      {"optimizer", {{"budget", 3}, {"init_queries", 1}}},
  };
  const auto config = BenchConfig::from_json(config_json);
  const auto matrix = run_experiment(config);
  CHECK_FALSE(matrix.complete());
  CHECK(matrix.missing_cells().size() == 2);

  const fs::path dir = fs::temp_directory_path() / "zopo_partial_out";
  fs::remove_all(dir);
  emit_outputs(config, matrix, dir.string());
  CHECK(fs::exists(dir / "summary.json"));
  CHECK_FALSE(fs::exists(dir / "profile.csv"));  // incomplete: no profile
  const std::string summary = read_file(dir / "summary.json");
  CHECK(summary.find("\"status\": \"error\"") != std::string::npos);
  fs::remove_all(dir);
  fs::remove(pool_file);
}

TEST_CASE("deterministic shortest-round-trip double formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0 / 3.0) == "0.6666666666666666");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.0) == "0");
}
