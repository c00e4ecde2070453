#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/external.hpp"
#include "core/objective.hpp"
#include "core/optimizer.hpp"

namespace zopo {

enum class MethodTag { zopo, zopo_matern, zopo_noexplore, random_search, fd_zoo };

std::string method_name(MethodTag tag);
MethodTag parse_method(const std::string& name);

/// Applies a method tag's preset on top of a base configuration:
/// zopo keeps the configured kernel (ntk by default), zopo-matern swaps in a
/// Matern 5/2 kernel, zopo-noexplore makes the exploration threshold
/// unreachable; random and fd-zoo reuse budget/init/seed accounting.
OptimizerConfig resolve_method_config(MethodTag tag,
                                      const OptimizerConfig& base);

/// One benchmark task: either a generated synthetic task or a pool file with
/// a table or external objective.
struct TaskSpec {
  std::string name;
  std::optional<std::string> synthetic;  // SyntheticSpec::parse input
  std::optional<std::string> pool_file;
  std::optional<std::string> score_file;
  std::optional<ExternalEndpoint> evaluator;

  static TaskSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  bool is_external() const { return evaluator.has_value(); }
};

/// A bound task: pool plus objective factory. Synthetic and table objectives
/// are shared across cells; external objectives are created per run so every
/// run gets an isolated connection and cache.
struct BoundTask {
  std::string name;
  std::shared_ptr<const CandidatePool> pool;
  std::shared_ptr<const Objective> shared_objective;  // null for external
  std::optional<ExternalEndpoint> evaluator;

  std::shared_ptr<const Objective> make_objective() const;
};

BoundTask bind_task(const TaskSpec& spec);

struct BenchConfig {
  std::uint64_t master_seed = 0;
  int seeds = 3;
  int workers = 1;
  std::vector<MethodTag> methods;
  std::vector<TaskSpec> tasks;
  OptimizerConfig base;
  std::map<std::string, nlohmann::json> method_overrides;
  std::vector<double> taus = {0.0, 0.01, 0.02, 0.05, 0.1, 0.2};
  double fd_zoo_h_factor = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static BenchConfig from_json(const nlohmann::json& j);
  static BenchConfig load_file(const std::string& path);
};

struct CellResult {
  bool ok = false;
  std::string error;
  double final_best = 0.0;
  int queries_used = 0;
  bool truncated = false;
  RunTrace trace;
};

/// Scores for every (task, method, seed) cell of an experiment.
class ResultMatrix {
 public:
  ResultMatrix(std::vector<std::string> tasks, std::vector<std::string> methods,
               int seeds);

  CellResult& cell(std::size_t task, std::size_t method, int seed);
  const CellResult& cell(std::size_t task, std::size_t method, int seed) const;

  const std::vector<std::string>& tasks() const { return tasks_; }
  const std::vector<std::string>& methods() const { return methods_; }
  int seeds() const { return seeds_; }

  double mean(std::size_t task, std::size_t method) const;
  double std_error(std::size_t task, std::size_t method) const;
  double median(std::size_t task, std::size_t method) const;

  bool complete() const;
  std::vector<std::string> missing_cells() const;

 private:
  std::vector<std::string> tasks_, methods_;
  int seeds_;
  std::vector<CellResult> cells_;
};

/// rho(tau) per method over the task set: the fraction of tasks whose
/// mean score is within tau of the best method's mean on that task
/// (ties count for every tied method).
struct ProfileTable {
  std::vector<std::string> methods;
  std::vector<double> taus;
  std::vector<std::vector<double>> rho;  // [method][tau]
};

ProfileTable performance_profile(const ResultMatrix& matrix,
                                 const std::vector<double>& taus);

/// Executes every (task, method, seed) cell, seeds derived independently
/// from the master seed; cells failing with run-fatal errors are recorded
/// and the rest continue. Deterministic given the config, including under
/// parallel execution.
ResultMatrix run_experiment(const BenchConfig& config);

/// Writes results.csv, curves.csv, profile.csv (complete matrices only) and
/// summary.json, plus one trace JSON per cell under traces/.
void emit_outputs(const BenchConfig& config, const ResultMatrix& matrix,
                  const std::string& out_dir);

/// Rebuilds the per-(task,method) mean table from a results.csv and computes
/// the profile; rejects incomplete matrices naming the missing cells.
ProfileTable profile_from_results_csv(const std::string& results_path,
                                      const std::vector<double>& taus);
void write_profile_csv(const ProfileTable& profile, const std::string& path);

/// Fast self-checks: kernel derivatives against central finite differences
/// and the gradient posterior against closed forms. Returns true when all
/// checks pass; prints one line per check when verbose.
bool selftest(bool verbose);

/// Shortest round-trip decimal formatting (deterministic across runs).
std::string format_double(double v);

}  // namespace zopo
