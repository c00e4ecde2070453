#include "zopo/zopo.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <string>

#include <json.hpp>

#include "core/baselines.hpp"
#include "core/errors.hpp"
#include "core/external.hpp"
#include "core/harness.hpp"
#include "core/objective.hpp"
#include "core/optimizer.hpp"
#include "core/pool.hpp"

using zopo::Errc;
using zopo::Error;

struct zopo_pool {
  zopo::CandidatePool pool;
};

struct zopo_objective {
  std::shared_ptr<const zopo::Objective> objective;
};

struct zopo_trace {
  zopo::RunTrace trace;
};

namespace {

thread_local std::string g_last_error = "no error";

zopo_status set_error(Errc code, const std::string& message) {
  g_last_error = message;
  return static_cast<zopo_status>(code);
}

zopo_status fail(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return set_error(err->code(), err->what());
  }
  return set_error(Errc::run, e.what());
}

template <typename Fn>
zopo_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return fail(e);
  } catch (...) {
    return set_error(Errc::run, "unknown error");
  }
}

zopo_status require(bool cond, const char* message) {
  if (cond) return ZOPO_OK;
  return set_error(Errc::invalid_argument, message);
}

zopo::IdSet make_exclude(const char* const* exclude, size_t n) {
  zopo::IdSet set;
  for (size_t i = 0; i < n; ++i) {
    if (exclude[i] != nullptr) set.insert(exclude[i]);
  }
  return set;
}

}  // namespace

extern "C" {

const char* zopo_version(void) { return "0.1.0"; }

const char* zopo_last_error(void) { return g_last_error.c_str(); }

// ---------------------------------------------------------------- pools

zopo_status zopo_pool_load(const char* path, int dimension_hint,
                           zopo_pool** out) {
  if (auto rc = require(path && out, "zopo_pool_load: NULL argument")) return rc;
  return guarded([&]() {
    std::optional<int> hint;
    if (dimension_hint > 0) hint = dimension_hint;
    auto handle = std::make_unique<zopo_pool>();
    handle->pool = zopo::CandidatePool::load_file(path, hint);
    *out = handle.release();
    return ZOPO_OK;
  });
}

zopo_status zopo_synthetic_create(const char* spec, zopo_pool** out_pool,
                                  zopo_objective** out_objective,
                                  char* true_best_id, double* true_best_score,
                                  long long* local_optima_count) {
  if (auto rc = require(spec && out_pool && out_objective,
                        "zopo_synthetic_create: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    zopo::SyntheticTask task =
        zopo::make_synthetic_task(zopo::SyntheticSpec::parse(spec));
    if (true_best_id != nullptr) {
      std::snprintf(true_best_id, 32, "%s", task.true_best_id.c_str());
    }
    if (true_best_score != nullptr) *true_best_score = task.true_best_score;
    if (local_optima_count != nullptr) {
      *local_optima_count = task.local_optima_count;
    }
    auto pool_handle = std::make_unique<zopo_pool>();
    pool_handle->pool = std::move(task.pool);
    auto obj_handle = std::make_unique<zopo_objective>();
    obj_handle->objective = task.objective;
    *out_pool = pool_handle.release();
    *out_objective = obj_handle.release();
    return ZOPO_OK;
  });
}

void zopo_pool_free(zopo_pool* pool) { delete pool; }

zopo_status zopo_pool_size(const zopo_pool* pool, size_t* out) {
  if (auto rc = require(pool && out, "zopo_pool_size: NULL argument")) return rc;
  *out = pool->pool.size();
  return ZOPO_OK;
}

zopo_status zopo_pool_dimension(const zopo_pool* pool, int* out) {
  if (auto rc = require(pool && out, "zopo_pool_dimension: NULL argument")) return rc;
  *out = pool->pool.dimension();
  return ZOPO_OK;
}

zopo_status zopo_pool_dropped(const zopo_pool* pool, size_t* out) {
  if (auto rc = require(pool && out, "zopo_pool_dropped: NULL argument")) return rc;
  *out = pool->pool.dropped();
  return ZOPO_OK;
}

zopo_status zopo_pool_candidate_id(const zopo_pool* pool, size_t index,
                                   const char** out_id) {
  if (auto rc = require(pool && out_id, "zopo_pool_candidate_id: NULL argument")) {
    return rc;
  }
  if (index >= pool->pool.size()) {
    return set_error(Errc::invalid_argument,
                     "zopo_pool_candidate_id: index out of range");
  }
  *out_id = pool->pool.at(index).id.c_str();
  return ZOPO_OK;
}

zopo_status zopo_pool_project(const zopo_pool* pool, const double* z,
                              size_t z_len, const char* const* exclude,
                              size_t n_exclude, const char** out_id) {
  if (auto rc = require(pool && z && out_id, "zopo_pool_project: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    const Eigen::Map<const Eigen::VectorXd> zv(z, static_cast<Eigen::Index>(z_len));
    const auto set = make_exclude(exclude, n_exclude);
    const zopo::Candidate* c = pool->pool.project(zv, set);
    if (c == nullptr) {
      return set_error(Errc::exhausted, "pool exhausted: every candidate excluded");
    }
    *out_id = c->id.c_str();
    return ZOPO_OK;
  });
}

zopo_status zopo_pool_nearest(const zopo_pool* pool, const double* z,
                              size_t z_len, size_t k,
                              const char* const* exclude, size_t n_exclude,
                              const char** out_ids, size_t* out_count) {
  if (auto rc = require(pool && z && out_ids && out_count,
                        "zopo_pool_nearest: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    const Eigen::Map<const Eigen::VectorXd> zv(z, static_cast<Eigen::Index>(z_len));
    const auto set = make_exclude(exclude, n_exclude);
    const auto found = pool->pool.nearest(zv, k, set);
    for (std::size_t i = 0; i < found.size(); ++i) {
      out_ids[i] = found[i]->id.c_str();
    }
    *out_count = found.size();
    return ZOPO_OK;
  });
}

// ------------------------------------------------------------- objectives

zopo_status zopo_objective_table_from_pool(const zopo_pool* pool,
                                           double noise_sigma,
                                           zopo_objective** out) {
  if (auto rc = require(pool && out,
                        "zopo_objective_table_from_pool: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    auto handle = std::make_unique<zopo_objective>();
    handle->objective = zopo::TableObjective::from_pool(pool->pool, noise_sigma);
    *out = handle.release();
    return ZOPO_OK;
  });
}

zopo_status zopo_objective_table_load(const char* path, double noise_sigma,
                                      zopo_objective** out) {
  if (auto rc = require(path && out, "zopo_objective_table_load: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    auto handle = std::make_unique<zopo_objective>();
    handle->objective = zopo::TableObjective::from_file(path, noise_sigma);
    *out = handle.release();
    return ZOPO_OK;
  });
}

namespace {

zopo_status make_external(zopo::ExternalEndpoint::Transport transport,
                          const char* address, int timeout_ms, int retries,
                          zopo_objective** out) {
  return guarded([&]() {
    zopo::ExternalEndpoint ep;
    ep.transport = transport;
    ep.address = address;
    if (timeout_ms > 0) ep.timeout_ms = timeout_ms;
    if (retries >= 0) ep.retries = retries;
    auto handle = std::make_unique<zopo_objective>();
    handle->objective = std::make_shared<zopo::ExternalObjective>(ep);
    *out = handle.release();
    return ZOPO_OK;
  });
}

}  // namespace

zopo_status zopo_objective_external_subprocess(const char* command,
                                               int timeout_ms, int retries,
                                               zopo_objective** out) {
  if (auto rc = require(command && out,
                        "zopo_objective_external_subprocess: NULL argument")) {
    return rc;
  }
  return make_external(zopo::ExternalEndpoint::Transport::subprocess, command,
                       timeout_ms, retries, out);
}

zopo_status zopo_objective_external_http(const char* url, int timeout_ms,
                                         int retries, zopo_objective** out) {
  if (auto rc = require(url && out,
                        "zopo_objective_external_http: NULL argument")) {
    return rc;
  }
  return make_external(zopo::ExternalEndpoint::Transport::http, url, timeout_ms,
                       retries, out);
}

void zopo_objective_free(zopo_objective* objective) { delete objective; }

zopo_status zopo_objective_evaluate(const zopo_objective* objective,
                                    const zopo_pool* pool, const char* id,
                                    uint64_t seed, double* out_score) {
  if (auto rc = require(objective && pool && id && out_score,
                        "zopo_objective_evaluate: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    const zopo::Candidate* c = pool->pool.find(id);
    if (c == nullptr) {
      return set_error(Errc::invalid_argument,
                       std::string("unknown candidate id: ") + id);
    }
    zopo::Rng rng(seed);
    *out_score = objective->objective->evaluate(*c, rng);
    return ZOPO_OK;
  });
}

// ------------------------------------------------------------------- runs

zopo_status zopo_optimize(const char* config_json, const zopo_pool* pool,
                          const zopo_objective* objective, zopo_trace** out) {
  if (auto rc = require(config_json && pool && objective && out,
                        "zopo_optimize: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
      return set_error(Errc::invalid_argument,
                       std::string("config is not valid JSON: ") + e.what());
    }
    zopo::MethodTag tag = zopo::MethodTag::zopo;
    if (j.contains("method")) {
      tag = zopo::parse_method(j.at("method").get<std::string>());
      j.erase("method");
    }
    double h_factor = 0.1;
    if (j.contains("fd_zoo_h_factor")) {
      h_factor = j.at("fd_zoo_h_factor").get<double>();
      j.erase("fd_zoo_h_factor");
    }
    zopo::OptimizerConfig cfg = zopo::resolve_method_config(
        tag, zopo::OptimizerConfig::from_json(j));
    zopo::Rng rng(cfg.seed);

    auto handle = std::make_unique<zopo_trace>();
    switch (tag) {
      case zopo::MethodTag::random_search:
        handle->trace = zopo::run_random_search(cfg, pool->pool,
                                                *objective->objective, rng);
        break;
      case zopo::MethodTag::fd_zoo:
        handle->trace = zopo::run_fd_zoo(cfg, pool->pool,
                                         *objective->objective, rng, h_factor);
        break;
      default:
        handle->trace =
            zopo::run_optimizer(cfg, pool->pool, *objective->objective, rng);
        handle->trace.resolved_config["method"] = zopo::method_name(tag);
        break;
    }
    *out = handle.release();
    return ZOPO_OK;
  });
}

void zopo_trace_free(zopo_trace* trace) { delete trace; }

zopo_status zopo_trace_length(const zopo_trace* trace, size_t* out) {
  if (auto rc = require(trace && out, "zopo_trace_length: NULL argument")) return rc;
  *out = trace->trace.entries.size();
  return ZOPO_OK;
}

zopo_status zopo_trace_best(const zopo_trace* trace, const char** out_id,
                            double* out_score) {
  if (auto rc = require(trace != nullptr, "zopo_trace_best: NULL argument")) return rc;
  if (out_id != nullptr) *out_id = trace->trace.best_id.c_str();
  if (out_score != nullptr) *out_score = trace->trace.best_score;
  return ZOPO_OK;
}

zopo_status zopo_trace_queries_used(const zopo_trace* trace, int* out) {
  if (auto rc = require(trace && out, "zopo_trace_queries_used: NULL argument")) {
    return rc;
  }
  *out = trace->trace.queries_used;
  return ZOPO_OK;
}

zopo_status zopo_trace_truncated(const zopo_trace* trace, int* out) {
  if (auto rc = require(trace && out, "zopo_trace_truncated: NULL argument")) {
    return rc;
  }
  *out = trace->trace.truncated ? 1 : 0;
  return ZOPO_OK;
}

zopo_status zopo_trace_entry(const zopo_trace* trace, size_t index,
                             const char** out_id, double* out_score,
                             double* out_best_so_far, const char** out_kind,
                             double* out_uncertainty) {
  if (auto rc = require(trace != nullptr, "zopo_trace_entry: NULL argument")) {
    return rc;
  }
  if (index >= trace->trace.entries.size()) {
    return set_error(Errc::invalid_argument, "zopo_trace_entry: index out of range");
  }
  const auto& e = trace->trace.entries[index];
  if (out_id != nullptr) *out_id = e.id.c_str();
  if (out_score != nullptr) *out_score = e.score;
  if (out_best_so_far != nullptr) *out_best_so_far = e.best_so_far;
  if (out_kind != nullptr) *out_kind = zopo::step_kind_name(e.kind);
  if (out_uncertainty != nullptr) {
    *out_uncertainty =
        e.uncertainty ? *e.uncertainty : std::numeric_limits<double>::quiet_NaN();
  }
  return ZOPO_OK;
}

zopo_status zopo_trace_write_json(const zopo_trace* trace, const char* path) {
  if (auto rc = require(trace && path, "zopo_trace_write_json: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      return set_error(Errc::io, std::string("cannot write: ") + path);
    }
    out << trace->trace.to_json().dump(2) << "\n";
    if (!out) {
      return set_error(Errc::io, std::string("write failed: ") + path);
    }
    return ZOPO_OK;
  });
}

// ---------------------------------------------------------------- harness

zopo_status zopo_bench_run(const char* config_path, const char* out_dir,
                           int workers_override) {
  if (auto rc = require(config_path && out_dir, "zopo_bench_run: NULL argument")) {
    return rc;
  }
  return guarded([&]() {
    zopo::BenchConfig config = zopo::BenchConfig::load_file(config_path);
    if (workers_override > 0) config.workers = workers_override;
    const zopo::ResultMatrix matrix = zopo::run_experiment(config);
    zopo::emit_outputs(config, matrix, out_dir);
    if (!matrix.complete()) {
      std::string msg = "experiment finished with failed cells:";
      for (const auto& m : matrix.missing_cells()) msg += " " + m;
      return set_error(Errc::run, msg);
    }
    return ZOPO_OK;
  });
}

zopo_status zopo_profile(const char* results_csv_path, const double* taus,
                         size_t n_taus, const char* out_path) {
  if (auto rc = require(results_csv_path && taus && out_path && n_taus > 0,
                        "zopo_profile: NULL or empty argument")) {
    return rc;
  }
  return guarded([&]() {
    const std::vector<double> tau_list(taus, taus + n_taus);
    const auto table = zopo::profile_from_results_csv(results_csv_path, tau_list);
    zopo::write_profile_csv(table, out_path);
    return ZOPO_OK;
  });
}

zopo_status zopo_selftest(int verbose) {
  return guarded([&]() {
    if (!zopo::selftest(verbose != 0)) {
      return set_error(Errc::run, "selftest failed");
    }
    return ZOPO_OK;
  });
}

}  // extern "C"
