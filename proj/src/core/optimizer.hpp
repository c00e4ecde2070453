#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/estimator.hpp"
#include "core/kernel.hpp"
#include "core/objective.hpp"
#include "core/pool.hpp"
#include "core/rng.hpp"

namespace zopo {

struct OptimizerConfig {
  int budget = 165;        // total query count
  int init_queries = 40;   // random-initialization queries
  double learning_rate = 0.01;
  double lambda = 0.1;     // uncertainty threshold; +inf disables exploration
  int xi = 5;              // trigger window length (xi+1 readings required)
  int n_local = 10;        // neighbors queried per exploration burst
  EstimatorConfig estimator;
  KernelSpec kernel;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

enum class StepKind { init, gradient_step, exploration };

const char* step_kind_name(StepKind kind);

struct TraceEntry {
  int step = 0;  // 0-based query index
  std::string id;
  double score = 0.0;
  double best_so_far = 0.0;
  StepKind kind = StepKind::init;
  std::optional<double> uncertainty;
};

/// Per-run log: one entry per consumed query, the final best candidate, and
/// the resolved configuration the run actually used.
struct RunTrace {
  std::vector<TraceEntry> entries;
  std::string best_id;
  double best_score = 0.0;
  int queries_used = 0;
  bool truncated = false;       // pool exhausted before the budget
  int numerical_fallbacks = 0;  // estimator failures recovered by projection
  nlohmann::json resolved_config;

  nlohmann::json to_json() const;
};

/// True iff at least xi+1 uncertainties have been recorded since the last
/// burst and every one of the most recent xi+1 is >= lambda. `window` holds
/// the readings since the last burst, oldest first.
bool exploration_trigger(std::span<const double> window, double lambda, int xi);

/// Queries the min(n_local, budget_left, available) nearest unqueried pool
/// candidates to z, ascending distance order, appending each to the history.
/// Returns the new records in query order.
std::vector<QueryRecord> local_explore(const CandidatePool& pool,
                                       History& history,
                                       const Eigen::VectorXd& z, int n_local,
                                       int budget_left,
                                       const Objective& objective, Rng& rng);

/// Projected gradient ascent over the pool with derived-GP gradient
/// estimates and uncertainty-informed local exploration.
RunTrace run_optimizer(const OptimizerConfig& config, const CandidatePool& pool,
                       const Objective& objective, Rng& rng);

/// Same, with an externally constructed kernel (tests inject doubles here).
RunTrace run_optimizer(const OptimizerConfig& config, const CandidatePool& pool,
                       const Objective& objective, const Kernel& kernel,
                       Rng& rng, nlohmann::json resolved_config = {});

}  // namespace zopo
