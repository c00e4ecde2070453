#include "core/baselines.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace zopo {

namespace {

struct BestTracker {
  void update(RunTrace& trace, const Candidate& c, double score, StepKind kind,
              std::optional<double> unc) {
    TraceEntry e;
    e.step = static_cast<int>(trace.entries.size());
    e.id = c.id;
    e.score = score;
    e.kind = kind;
    e.uncertainty = unc;
    if (trace.entries.empty() || score > trace.best_score) {
      trace.best_score = score;
      trace.best_id = c.id;
    }
    e.best_so_far = trace.best_score;
    trace.entries.push_back(std::move(e));
    trace.queries_used = static_cast<int>(trace.entries.size());
  }
};

}  // namespace

RunTrace run_random_search(const OptimizerConfig& config,
                           const CandidatePool& pool,
                           const Objective& objective, Rng& rng) {
  config.validate();
  RunTrace trace;
  trace.resolved_config = config.to_json();
  trace.resolved_config["method"] = "random";
  BestTracker best;

  const std::size_t n =
      std::min<std::size_t>(pool.size(), static_cast<std::size_t>(config.budget));
  const auto idx = rng.sample_without_replacement(pool.size(), n);
  for (std::size_t i : idx) {
    const Candidate& c = pool.at(i);
    best.update(trace, c, objective.evaluate(c, rng), StepKind::init,
                std::nullopt);
  }
  trace.truncated = trace.queries_used < config.budget;
  return trace;
}

RunTrace run_fd_zoo(const OptimizerConfig& config, const CandidatePool& pool,
                    const Objective& objective, Rng& rng, double h_factor) {
  config.validate();
  if (pool.size() < static_cast<std::size_t>(config.init_queries)) {
    throw Error(Errc::invalid_argument, "fd-zoo: pool smaller than init_queries");
  }
  RunTrace trace;
  trace.resolved_config = config.to_json();
  trace.resolved_config["method"] = "fd-zoo";
  BestTracker best;
  History history;

  const auto init_idx = rng.sample_without_replacement(
      pool.size(), static_cast<std::size_t>(config.init_queries));
  const Candidate* best_init = nullptr;
  double best_init_score = 0.0;
  for (std::size_t i : init_idx) {
    const Candidate& c = pool.at(i);
    const double r = objective.evaluate(c, rng);
    history.observe(c.id, c.embedding, r);
    best.update(trace, c, r, StepKind::init, std::nullopt);
    if (best_init == nullptr || r > best_init_score) {
      best_init = &c;
      best_init_score = r;
    }
  }

  const double h = h_factor * pool.median_nn_distance();
  Eigen::VectorXd incumbent = best_init->embedding;
  const int d = pool.dimension();

  auto query = [&](const Candidate& c, StepKind kind) {
    const double r = objective.evaluate(c, rng);
    history.observe(c.id, c.embedding, r);
    best.update(trace, c, r, kind, std::nullopt);
    return r;
  };

  while (trace.queries_used < config.budget) {
    Eigen::VectorXd u = rng.gauss_vector(d);
    double norm = u.norm();
    while (norm < 1e-12) {
      u = rng.gauss_vector(d);
      norm = u.norm();
    }
    u /= norm;

    const Candidate* plus = pool.project(incumbent + h * u, history.ids());
    if (plus == nullptr) {
      trace.truncated = true;
      break;
    }
    const double r_plus = query(*plus, StepKind::exploration);
    if (trace.queries_used >= config.budget) break;

    const Candidate* minus = pool.project(incumbent - h * u, history.ids());
    if (minus == nullptr) {
      trace.truncated = true;
      break;
    }
    const double r_minus = query(*minus, StepKind::exploration);
    if (trace.queries_used >= config.budget) break;

    const double s_plus = (plus->embedding - incumbent).dot(u);
    const double s_minus = (minus->embedding - incumbent).dot(u);
    const double denom = s_plus - s_minus;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    if (std::abs(denom) > 1e-12) {
      grad = ((r_plus - r_minus) / denom) * u;
    }

    const Candidate* next =
        pool.project(incumbent + config.learning_rate * grad, history.ids());
    if (next == nullptr) {
      trace.truncated = true;
      break;
    }
    query(*next, StepKind::gradient_step);
    incumbent = next->embedding;
  }
  return trace;
}

}  // namespace zopo
