#include "core/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"

namespace zopo {

void OptimizerConfig::validate() const {
  if (budget < 1) {
    throw Error(Errc::invalid_argument, "optimizer: budget must be >= 1");
  }
  if (init_queries < 1 || init_queries > budget) {
    throw Error(Errc::invalid_argument,
                "optimizer: init_queries must satisfy 0 < init <= budget");
  }
  if (!(learning_rate > 0.0)) {
    throw Error(Errc::invalid_argument, "optimizer: learning_rate must be > 0");
  }
  if (std::isnan(lambda) || lambda < 0.0) {
    throw Error(Errc::invalid_argument, "optimizer: lambda must be >= 0");
  }
  if (xi < 0) {
    throw Error(Errc::invalid_argument, "optimizer: xi must be >= 0");
  }
  if (n_local < 1) {
    throw Error(Errc::invalid_argument, "optimizer: n_local must be >= 1");
  }
  estimator.validate();
  kernel.validate();
}

namespace {

// infinity is not representable in JSON; "inf" round-trips instead
nlohmann::json lambda_to_json(double lambda) {
  if (std::isinf(lambda)) return "inf";
  return lambda;
}

double lambda_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") {
      return std::numeric_limits<double>::infinity();
    }
    throw Error(Errc::invalid_argument, "lambda: expected a number or \"inf\"");
  }
  return j.get<double>();
}

}  // namespace

nlohmann::json OptimizerConfig::to_json() const {
  nlohmann::json j;
  j["budget"] = budget;
  j["init_queries"] = init_queries;
  j["learning_rate"] = learning_rate;
  j["lambda"] = lambda_to_json(lambda);
  j["xi"] = xi;
  j["n_local"] = n_local;
  j["seed"] = seed;
  j["estimator"] = {
      {"noise_sigma", estimator.noise_sigma},
      {"fit_neighbors", estimator.fit_neighbors},
      {"uncertainty",
       estimator.uncertainty == UncertaintyKind::trace_rms ? "trace" : "spectral"},
  };
  if (estimator.jitter) j["estimator"]["jitter"] = *estimator.jitter;
  j["kernel"] = kernel.to_json();
  return j;
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig cfg;
  if (j.contains("budget")) cfg.budget = j.at("budget").get<int>();
  if (j.contains("init_queries")) cfg.init_queries = j.at("init_queries").get<int>();
  if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("lambda")) cfg.lambda = lambda_from_json(j.at("lambda"));
  if (j.contains("xi")) cfg.xi = j.at("xi").get<int>();
  if (j.contains("n_local")) cfg.n_local = j.at("n_local").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    if (e.contains("noise_sigma")) cfg.estimator.noise_sigma = e.at("noise_sigma").get<double>();
    if (e.contains("fit_neighbors")) cfg.estimator.fit_neighbors = e.at("fit_neighbors").get<int>();
    if (e.contains("jitter")) cfg.estimator.jitter = e.at("jitter").get<double>();
    if (e.contains("uncertainty")) {
      const auto u = e.at("uncertainty").get<std::string>();
      if (u == "trace") {
        cfg.estimator.uncertainty = UncertaintyKind::trace_rms;
      } else if (u == "spectral") {
        cfg.estimator.uncertainty = UncertaintyKind::spectral;
      } else {
        throw Error(Errc::invalid_argument, "unknown uncertainty kind: " + u);
      }
    }
  }
  if (j.contains("kernel")) cfg.kernel = KernelSpec::from_json(j.at("kernel"));
  cfg.validate();
  return cfg;
}

const char* step_kind_name(StepKind kind) {
  switch (kind) {
    case StepKind::init: return "init";
    case StepKind::gradient_step: return "gradient-step";
    case StepKind::exploration: return "exploration";
  }
  return "init";
}

nlohmann::json RunTrace::to_json() const {
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json je;
    je["step"] = e.step;
    je["id"] = e.id;
    je["score"] = e.score;
    je["best_so_far"] = e.best_so_far;
    je["kind"] = step_kind_name(e.kind);
    if (e.uncertainty) {
      je["uncertainty"] = *e.uncertainty;
    } else {
      je["uncertainty"] = nullptr;
    }
    entries_json.push_back(std::move(je));
  }
  return nlohmann::json{{"entries", std::move(entries_json)},
                        {"best_id", best_id},
                        {"best_score", best_score},
                        {"queries_used", queries_used},
                        {"truncated", truncated},
                        {"numerical_fallbacks", numerical_fallbacks},
                        {"config", resolved_config}};
}

bool exploration_trigger(std::span<const double> window, double lambda, int xi) {
  const std::size_t need = static_cast<std::size_t>(xi) + 1;
  if (window.size() < need) return false;
  for (std::size_t i = window.size() - need; i < window.size(); ++i) {
    if (!(window[i] >= lambda)) return false;
  }
  return true;
}

namespace {

class TraceBuilder {
 public:
  explicit TraceBuilder(int budget) : budget_(budget) {}

  void record(const Candidate& c, double score, StepKind kind,
              std::optional<double> unc) {
    TraceEntry e;
    e.step = static_cast<int>(trace_.entries.size());
    e.id = c.id;
    e.score = score;
    e.kind = kind;
    e.uncertainty = unc;
    if (trace_.entries.empty() || score > trace_.best_score) {
      trace_.best_score = score;
      trace_.best_id = c.id;
    }
    e.best_so_far = trace_.best_score;
    trace_.entries.push_back(std::move(e));
    trace_.queries_used = static_cast<int>(trace_.entries.size());
  }

  int budget_left() const { return budget_ - trace_.queries_used; }
  RunTrace take() && { return std::move(trace_); }
  RunTrace& trace() { return trace_; }

 private:
  int budget_;
  RunTrace trace_;
};

}  // namespace

std::vector<QueryRecord> local_explore(const CandidatePool& pool,
                                       History& history,
                                       const Eigen::VectorXd& z, int n_local,
                                       int budget_left,
                                       const Objective& objective, Rng& rng) {
  if (n_local < 1) {
    throw Error(Errc::invalid_argument, "local_explore: n_local must be >= 1");
  }
  std::vector<QueryRecord> out;
  if (budget_left <= 0) return out;
  const std::size_t want =
      std::min<std::size_t>(static_cast<std::size_t>(n_local),
                            static_cast<std::size_t>(budget_left));
  const auto neighbors = pool.nearest(z, want, history.ids());
  out.reserve(neighbors.size());
  for (const Candidate* c : neighbors) {
    const double r = objective.evaluate(*c, rng);
    history.observe(c->id, c->embedding, r);
    out.push_back(QueryRecord{c->id, c->embedding, r});
  }
  return out;
}

RunTrace run_optimizer(const OptimizerConfig& config, const CandidatePool& pool,
                       const Objective& objective, Rng& rng) {
  KernelSpec resolved;
  const auto kernel = make_kernel(config.kernel, pool.dimension(), &pool, &resolved);
  nlohmann::json cfg = config.to_json();
  cfg["kernel"] = resolved.to_json();
  return run_optimizer(config, pool, objective, *kernel, rng, std::move(cfg));
}

RunTrace run_optimizer(const OptimizerConfig& config, const CandidatePool& pool,
                       const Objective& objective, const Kernel& kernel,
                       Rng& rng, nlohmann::json resolved_config) {
  config.validate();
  if (pool.size() < static_cast<std::size_t>(config.init_queries)) {
    throw Error(Errc::invalid_argument,
                "optimizer: pool smaller than init_queries");
  }

  TraceBuilder trace(config.budget);
  History history;

  // (1) uniform random initialization without replacement
  const auto init_idx = rng.sample_without_replacement(
      pool.size(), static_cast<std::size_t>(config.init_queries));
  const Candidate* best_init = nullptr;
  double best_init_score = 0.0;
  for (std::size_t idx : init_idx) {
    const Candidate& c = pool.at(idx);
    const double r = objective.evaluate(c, rng);
    history.observe(c.id, c.embedding, r);
    trace.record(c, r, StepKind::init, std::nullopt);
    if (best_init == nullptr || r > best_init_score) {
      best_init = &c;
      best_init_score = r;
    }
  }

  // (2) incumbent starts at the best initial candidate
  Eigen::VectorXd incumbent = best_init->embedding;
  std::vector<double> window;  // uncertainties since the last burst

  // (3) gradient ascent restricted to the pool
  while (trace.budget_left() > 0) {
    if (history.size() == pool.size()) {
      trace.trace().truncated = true;
      break;
    }

    std::optional<GradientPosterior> posterior;
    double sigma_t = 0.0;
    bool have_sigma = false;
    try {
      posterior = posterior_grad(config.estimator, kernel, history, incumbent);
      sigma_t = uncertainty(*posterior, config.estimator.uncertainty);
      have_sigma = true;
    } catch (const NumericalError&) {
      ++trace.trace().numerical_fallbacks;
      window.clear();
    }

    if (have_sigma) {
      window.push_back(sigma_t);
      if (exploration_trigger(window, config.lambda, config.xi)) {
        const auto burst =
            local_explore(pool, history, incumbent, config.n_local,
                          trace.budget_left(), objective, rng);
        for (const auto& rec : burst) {
          trace.record(*pool.find(rec.id), rec.score, StepKind::exploration,
                       sigma_t);
        }
        window.clear();
        if (trace.budget_left() <= 0) break;
        if (!burst.empty()) {
          try {
            posterior =
                posterior_grad(config.estimator, kernel, history, incumbent);
          } catch (const NumericalError&) {
            ++trace.trace().numerical_fallbacks;
            posterior.reset();
          }
        }
      }
    }

    // Eq.-style update: project z_t + eta * mu_t(z_t) onto the unqueried
    // pool; a failed posterior degrades to stepping to the nearest
    // unqueried candidate (mu = 0).
    Eigen::VectorXd target = incumbent;
    std::optional<double> step_unc;
    if (posterior) {
      target += config.learning_rate * posterior->mean;
      step_unc = uncertainty(*posterior, config.estimator.uncertainty);
    }
    const Candidate* next = pool.project(target, history.ids());
    if (next == nullptr) {
      trace.trace().truncated = true;
      break;
    }
    const double r = objective.evaluate(*next, rng);
    history.observe(next->id, next->embedding, r);
    trace.record(*next, r, StepKind::gradient_step, step_unc);
    incumbent = next->embedding;
  }

  RunTrace result = std::move(trace).take();
  result.resolved_config = std::move(resolved_config);
  return result;
}

}  // namespace zopo
