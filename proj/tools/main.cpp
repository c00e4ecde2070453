// Command-line front end; drives everything through the zopo C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zopo/zopo.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRunFatal = 2;
constexpr int kExitSelftest = 3;

int exit_code_for(zopo_status status) {
  if (status == ZOPO_OK) return kExitOk;
  if (status == ZOPO_ERR_ARGUMENT) return kExitUsage;
  return kExitRunFatal;
}

int report_failure(zopo_status status) {
  std::cerr << "error: " << zopo_last_error() << "\n";
  return exit_code_for(status);
}

struct PoolHandle {
  zopo_pool* ptr = nullptr;
  ~PoolHandle() { zopo_pool_free(ptr); }
};
struct ObjectiveHandle {
  zopo_objective* ptr = nullptr;
  ~ObjectiveHandle() { zopo_objective_free(ptr); }
};
struct TraceHandle {
  zopo_trace* ptr = nullptr;
  ~TraceHandle() { zopo_trace_free(ptr); }
};

struct OptimizeArgs {
  std::string config_file;
  std::string pool_file;
  std::string objective = "table";
  std::string method = "zopo";
  int budget = 165;
  int init_queries = 40;
  std::uint64_t seed = 0;
  std::string out_dir;
  double learning_rate = 0.01;
  double lambda = 0.1;
  int xi = 5;
  int n_local = 10;
  int knn_fit = 20;
  std::string kernel = "ntk";
  double noise = 0.01;  // estimator observation-noise sigma
  int timeout_ms = 30000;
  int retries = 3;
};

// Flags not given on the command line fall back to the config file when one
// is present; explicit flags always win.
void overlay_config_file(const CLI::App& cmd, OptimizeArgs& args) {
  if (args.config_file.empty()) return;
  std::ifstream in(args.config_file);
  if (!in) {
    throw CLI::ValidationError("--config", "cannot open " + args.config_file);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
  }
  auto take = [&](const char* flag, const char* key, auto& slot) {
    using T = std::decay_t<decltype(slot)>;
    if (cmd.count(flag) == 0 && j.contains(key)) slot = j.at(key).get<T>();
  };
  take("--pool", "pool", args.pool_file);
  take("--objective", "objective", args.objective);
  take("--method", "method", args.method);
  take("--budget", "budget", args.budget);
  take("--init", "init_queries", args.init_queries);
  take("--seed", "seed", args.seed);
  take("--out", "out", args.out_dir);
  take("--lr", "learning_rate", args.learning_rate);
  take("--lambda", "lambda", args.lambda);
  take("--xi", "xi", args.xi);
  take("--n-local", "n_local", args.n_local);
  take("--knn-fit", "knn_fit", args.knn_fit);
  take("--kernel", "kernel", args.kernel);
  take("--noise", "noise", args.noise);
  take("--timeout-ms", "timeout_ms", args.timeout_ms);
  take("--retries", "retries", args.retries);
}

int run_optimize(const CLI::App& cmd, OptimizeArgs args) {
  overlay_config_file(cmd, args);

  PoolHandle pool;
  ObjectiveHandle objective;

  if (args.objective.rfind("synthetic:", 0) == 0) {
    if (!args.pool_file.empty()) {
      std::cerr << "error: synthetic objectives generate their own pool; "
                   "drop --pool\n";
      return kExitUsage;
    }
    char best_id[32];
    double best_score = 0.0;
    long long optima = 0;
    const auto rc =
        zopo_synthetic_create(args.objective.substr(10).c_str(), &pool.ptr,
                              &objective.ptr, best_id, &best_score, &optima);
    if (rc != ZOPO_OK) return report_failure(rc);
    std::cout << "synthetic task: true best " << best_id << " (score "
              << best_score << "), " << optima << " local optima\n";
  } else {
    if (args.pool_file.empty()) {
      std::cerr << "error: --pool is required for non-synthetic objectives\n";
      return kExitUsage;
    }
    if (const auto rc = zopo_pool_load(args.pool_file.c_str(), 0, &pool.ptr);
        rc != ZOPO_OK) {
      return report_failure(rc);
    }
    zopo_status rc = ZOPO_OK;
    if (args.objective == "table") {
      rc = zopo_objective_table_from_pool(pool.ptr, 0.0, &objective.ptr);
    } else if (args.objective.rfind("table:", 0) == 0) {
      rc = zopo_objective_table_load(args.objective.substr(6).c_str(), 0.0,
                                     &objective.ptr);
    } else if (args.objective.rfind("external:http:", 0) == 0) {
      rc = zopo_objective_external_http(args.objective.substr(14).c_str(),
                                        args.timeout_ms, args.retries,
                                        &objective.ptr);
    } else if (args.objective.rfind("external:cmd:", 0) == 0) {
      rc = zopo_objective_external_subprocess(args.objective.substr(13).c_str(),
                                              args.timeout_ms, args.retries,
                                              &objective.ptr);
    } else {
      std::cerr << "error: unknown objective '" << args.objective
                << "' (expected table, table:FILE, external:http:URL, "
                   "external:cmd:COMMAND, or synthetic:SPEC)\n";
      return kExitUsage;
    }
    if (rc != ZOPO_OK) return report_failure(rc);
  }

  nlohmann::json config = {
      {"method", args.method},
      {"budget", args.budget},
      {"init_queries", args.init_queries},
      {"learning_rate", args.learning_rate},
      {"xi", args.xi},
      {"n_local", args.n_local},
      {"seed", args.seed},
      {"estimator",
       {{"noise_sigma", args.noise}, {"fit_neighbors", args.knn_fit}}},
      {"kernel", {{"kind", args.kernel}}},
  };
  if (std::isinf(args.lambda)) {
    config["lambda"] = "inf";
  } else {
    config["lambda"] = args.lambda;
  }

  TraceHandle trace;
  const std::string config_str = config.dump();
  if (const auto rc =
          zopo_optimize(config_str.c_str(), pool.ptr, objective.ptr, &trace.ptr);
      rc != ZOPO_OK) {
    return report_failure(rc);
  }

  const char* best_id = nullptr;
  double best_score = 0.0;
  zopo_trace_best(trace.ptr, &best_id, &best_score);
  int queries = 0, truncated = 0;
  zopo_trace_queries_used(trace.ptr, &queries);
  zopo_trace_truncated(trace.ptr, &truncated);
  std::cout << "best " << best_id << " score " << best_score << " after "
            << queries << " queries" << (truncated ? " (pool exhausted)" : "")
            << "\n";

  if (!args.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec) {
      std::cerr << "error: cannot create " << args.out_dir << "\n";
      return kExitRunFatal;
    }
    const std::string path = args.out_dir + "/trace.json";
    if (const auto rc = zopo_trace_write_json(trace.ptr, path.c_str());
        rc != ZOPO_OK) {
      return report_failure(rc);
    }
    std::cout << "trace written to " << path << "\n";
  }
  return kExitOk;
}

int run_bench(const std::string& config, const std::string& out, int workers) {
  const auto rc = zopo_bench_run(config.c_str(), out.c_str(), workers);
  if (rc != ZOPO_OK) return report_failure(rc);
  std::cout << "experiment outputs written to " << out << "\n";
  return kExitOk;
}

int run_profile(const std::string& results, const std::string& taus_text,
                const std::string& out) {
  std::vector<double> taus;
  std::stringstream ss(taus_text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      taus.push_back(std::stod(part));
    } catch (const std::logic_error&) {
      std::cerr << "error: bad tau value '" << part << "'\n";
      return kExitUsage;
    }
  }
  if (taus.empty()) {
    std::cerr << "error: --taus list is empty\n";
    return kExitUsage;
  }
  const auto rc = zopo_profile(results.c_str(), taus.data(), taus.size(), out.c_str());
  if (rc != ZOPO_OK) return report_failure(rc);
  std::cout << "profile written to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zopo: query-budgeted black-box optimization over candidate pools"};
  app.require_subcommand(1);

  OptimizeArgs oargs;
  auto* optimize = app.add_subcommand("optimize", "run one optimization");
  optimize->add_option("--config", oargs.config_file,
                       "JSON config file; explicit flags override it");
  optimize->add_option("--pool", oargs.pool_file, "pool file (JSON lines)");
  optimize->add_option("--objective", oargs.objective,
                       "table | table:FILE | external:http:URL | "
                       "external:cmd:COMMAND | synthetic:SPEC");
  optimize->add_option("--method", oargs.method,
                       "zopo | zopo-matern | zopo-noexplore | random | fd-zoo");
  optimize->add_option("--budget", oargs.budget, "total query budget");
  optimize->add_option("--init", oargs.init_queries, "random init queries");
  optimize->add_option("--seed", oargs.seed, "run seed");
  optimize->add_option("--out", oargs.out_dir, "output directory for trace.json");
  optimize->add_option("--lr", oargs.learning_rate, "gradient-step size");
  optimize->add_option("--lambda", oargs.lambda, "exploration threshold");
  optimize->add_option("--xi", oargs.xi, "exploration window length");
  optimize->add_option("--n-local", oargs.n_local, "neighbors per exploration burst");
  optimize->add_option("--knn-fit", oargs.knn_fit, "history neighbors for the GP fit");
  optimize->add_option("--kernel", oargs.kernel, "ntk | matern52 | rbf");
  optimize->add_option("--noise", oargs.noise, "assumed observation-noise sigma");
  optimize->add_option("--timeout-ms", oargs.timeout_ms, "external evaluator timeout");
  optimize->add_option("--retries", oargs.retries, "external evaluator retries");

  std::string bench_config, bench_out;
  int bench_workers = 0;
  auto* bench = app.add_subcommand("bench", "run a benchmark experiment");
  bench->add_option("--config", bench_config, "experiment config file")->required();
  bench->add_option("--out", bench_out, "output directory")->required();
  bench->add_option("--workers", bench_workers, "parallel cells (default from config)");

  std::string profile_results, profile_taus = "0,0.01,0.02,0.05,0.1,0.2";
  std::string profile_out;
  auto* profile = app.add_subcommand("profile", "performance profile from results.csv");
  profile->add_option("--results", profile_results, "results.csv path")->required();
  profile->add_option("--taus", profile_taus, "comma-separated tau grid");
  profile->add_option("--out", profile_out, "output profile.csv path")->required();

  auto* selftest = app.add_subcommand(
      "selftest", "kernel finite-difference checks and posterior oracles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (optimize->parsed()) return run_optimize(*optimize, oargs);
    if (bench->parsed()) return run_bench(bench_config, bench_out, bench_workers);
    if (profile->parsed()) return run_profile(profile_results, profile_taus, profile_out);
    if (selftest->parsed()) {
      return zopo_selftest(1) == ZOPO_OK ? kExitOk : kExitSelftest;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFatal;
  }
  return kExitUsage;
}
