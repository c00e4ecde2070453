#include "core/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "core/baselines.hpp"
#include "core/errors.hpp"
#include "core/ntk.hpp"
#include "core/rng.hpp"

namespace zopo {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Methods

std::string method_name(MethodTag tag) {
  switch (tag) {
    case MethodTag::zopo: return "zopo";
    case MethodTag::zopo_matern: return "zopo-matern";
    case MethodTag::zopo_noexplore: return "zopo-noexplore";
    case MethodTag::random_search: return "random";
    case MethodTag::fd_zoo: return "fd-zoo";
  }
  return "zopo";
}

MethodTag parse_method(const std::string& name) {
  if (name == "zopo") return MethodTag::zopo;
  if (name == "zopo-matern") return MethodTag::zopo_matern;
  if (name == "zopo-noexplore") return MethodTag::zopo_noexplore;
  if (name == "random") return MethodTag::random_search;
  if (name == "fd-zoo") return MethodTag::fd_zoo;
  throw Error(Errc::invalid_argument, "unknown method tag: " + name);
}

OptimizerConfig resolve_method_config(MethodTag tag, const OptimizerConfig& base) {
  OptimizerConfig cfg = base;
  switch (tag) {
    case MethodTag::zopo:
    case MethodTag::random_search:
    case MethodTag::fd_zoo:
      break;
    case MethodTag::zopo_matern: {
      KernelSpec spec;
      spec.kind = KernelSpec::Kind::matern52;
      spec.variance = base.kernel.kind == KernelSpec::Kind::ntk
                          ? 1.0
                          : base.kernel.variance;
      spec.lengthscale = base.kernel.kind == KernelSpec::Kind::ntk
                             ? std::nullopt
                             : base.kernel.lengthscale;
      cfg.kernel = spec;
      break;
    }
    case MethodTag::zopo_noexplore:
      cfg.lambda = std::numeric_limits<double>::infinity();
      break;
  }
  return cfg;
}

namespace {

void deep_merge(nlohmann::json& base, const nlohmann::json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      deep_merge(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

RunTrace run_method(MethodTag tag, const OptimizerConfig& cfg,
                    const CandidatePool& pool, const Objective& objective,
                    Rng& rng, double h_factor) {
  switch (tag) {
    case MethodTag::random_search:
      return run_random_search(cfg, pool, objective, rng);
    case MethodTag::fd_zoo:
      return run_fd_zoo(cfg, pool, objective, rng, h_factor);
    default: {
      RunTrace trace = run_optimizer(cfg, pool, objective, rng);
      trace.resolved_config["method"] = method_name(tag);
      return trace;
    }
  }
}

std::string sanitize_filename(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tasks

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
  TaskSpec spec;
  if (j.contains("name")) spec.name = j.at("name").get<std::string>();
  if (j.contains("synthetic")) spec.synthetic = j.at("synthetic").get<std::string>();
  if (j.contains("pool_file")) spec.pool_file = j.at("pool_file").get<std::string>();
  if (j.contains("score_file")) spec.score_file = j.at("score_file").get<std::string>();
  if (j.contains("evaluator")) {
    const auto& e = j.at("evaluator");
    ExternalEndpoint ep;
    const auto transport = e.at("transport").get<std::string>();
    if (transport == "subprocess") {
      ep.transport = ExternalEndpoint::Transport::subprocess;
    } else if (transport == "http") {
      ep.transport = ExternalEndpoint::Transport::http;
    } else {
      throw Error(Errc::invalid_argument,
                  "task evaluator: unknown transport '" + transport + "'");
    }
    ep.address = e.at("address").get<std::string>();
    if (e.contains("timeout_ms")) ep.timeout_ms = e.at("timeout_ms").get<int>();
    if (e.contains("retries")) ep.retries = e.at("retries").get<int>();
    if (e.contains("backoff_ms")) ep.backoff_ms = e.at("backoff_ms").get<int>();
    spec.evaluator = ep;
  }
  if (!spec.synthetic && !spec.pool_file) {
    throw Error(Errc::invalid_argument,
                "task '" + spec.name + "': needs 'synthetic' or 'pool_file'");
  }
  if (spec.synthetic && spec.pool_file) {
    throw Error(Errc::invalid_argument,
                "task '" + spec.name + "': 'synthetic' and 'pool_file' conflict");
  }
  return spec;
}

nlohmann::json TaskSpec::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  if (synthetic) j["synthetic"] = *synthetic;
  if (pool_file) j["pool_file"] = *pool_file;
  if (score_file) j["score_file"] = *score_file;
  if (evaluator) {
    j["evaluator"] = {
        {"transport", evaluator->transport == ExternalEndpoint::Transport::http
                          ? "http"
                          : "subprocess"},
        {"address", evaluator->address},
        {"timeout_ms", evaluator->timeout_ms},
        {"retries", evaluator->retries},
    };
  }
  return j;
}

std::shared_ptr<const Objective> BoundTask::make_objective() const {
  if (shared_objective) return shared_objective;
  return std::make_shared<ExternalObjective>(*evaluator);
}

BoundTask bind_task(const TaskSpec& spec) {
  BoundTask task;
  task.name = spec.name;
  if (spec.synthetic) {
    SyntheticTask gen = make_synthetic_task(SyntheticSpec::parse(*spec.synthetic));
    task.pool = std::make_shared<CandidatePool>(std::move(gen.pool));
    task.shared_objective = gen.objective;
    return task;
  }
  task.pool = std::make_shared<CandidatePool>(CandidatePool::load_file(*spec.pool_file));
  if (spec.evaluator) {
    task.evaluator = spec.evaluator;
    return task;
  }
  if (spec.score_file) {
    task.shared_objective = TableObjective::from_file(*spec.score_file, 0.0);
  } else {
    task.shared_objective = TableObjective::from_pool(*task.pool, 0.0);
  }
  return task;
}

// ---------------------------------------------------------------------------
// BenchConfig

void BenchConfig::validate() const {
  if (seeds < 1) throw Error(Errc::invalid_argument, "bench: seeds must be >= 1");
  if (workers < 1) throw Error(Errc::invalid_argument, "bench: workers must be >= 1");
  if (methods.empty()) throw Error(Errc::invalid_argument, "bench: no methods");
  if (tasks.empty()) throw Error(Errc::invalid_argument, "bench: no tasks");
  std::unordered_set<std::string> names;
  for (const auto& t : tasks) {
    if (t.name.empty() || t.name.find(',') != std::string::npos ||
        t.name.find('\n') != std::string::npos) {
      throw Error(Errc::invalid_argument,
                  "bench: task names must be non-empty and comma-free");
    }
    if (!names.insert(t.name).second) {
      throw Error(Errc::invalid_argument, "bench: duplicate task name " + t.name);
    }
  }
  if (taus.empty() || !std::is_sorted(taus.begin(), taus.end())) {
    throw Error(Errc::invalid_argument, "bench: taus must be ascending");
  }
  base.validate();
}

nlohmann::json BenchConfig::to_json() const {
  nlohmann::json j;
  j["master_seed"] = master_seed;
  j["seeds"] = seeds;
  j["workers"] = workers;
  nlohmann::json ms = nlohmann::json::array();
  for (auto m : methods) ms.push_back(method_name(m));
  j["methods"] = std::move(ms);
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : tasks) ts.push_back(t.to_json());
  j["tasks"] = std::move(ts);
  j["optimizer"] = base.to_json();
  if (!method_overrides.empty()) {
    nlohmann::json mo;
    for (const auto& [k, v] : method_overrides) mo[k] = v;
    j["method_overrides"] = std::move(mo);
  }
  j["taus"] = taus;
  j["fd_zoo_h_factor"] = fd_zoo_h_factor;
  return j;
}

BenchConfig BenchConfig::from_json(const nlohmann::json& j) {
  BenchConfig cfg;
  if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<int>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
  if (j.contains("methods")) {
    for (const auto& m : j.at("methods")) {
      cfg.methods.push_back(parse_method(m.get<std::string>()));
    }
  }
  if (j.contains("tasks")) {
    std::size_t index = 0;
    for (const auto& t : j.at("tasks")) {
      TaskSpec spec = TaskSpec::from_json(t);
      ++index;
      if (spec.name.empty()) spec.name = "task" + std::to_string(index);
      cfg.tasks.push_back(std::move(spec));
    }
  }
  if (j.contains("optimizer")) cfg.base = OptimizerConfig::from_json(j.at("optimizer"));
  if (j.contains("method_overrides")) {
    for (auto it = j.at("method_overrides").begin();
         it != j.at("method_overrides").end(); ++it) {
      parse_method(it.key());  // reject unknown method keys
      cfg.method_overrides[it.key()] = *it;
    }
  }
  if (j.contains("taus")) cfg.taus = j.at("taus").get<std::vector<double>>();
  if (j.contains("fd_zoo_h_factor")) cfg.fd_zoo_h_factor = j.at("fd_zoo_h_factor").get<double>();
  cfg.validate();
  return cfg;
}

BenchConfig BenchConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument,
                std::string("config file is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// ResultMatrix

ResultMatrix::ResultMatrix(std::vector<std::string> tasks,
                           std::vector<std::string> methods, int seeds)
    : tasks_(std::move(tasks)), methods_(std::move(methods)), seeds_(seeds) {
  cells_.resize(tasks_.size() * methods_.size() * static_cast<std::size_t>(seeds_));
}

CellResult& ResultMatrix::cell(std::size_t task, std::size_t method, int seed) {
  return cells_[(task * methods_.size() + method) * seeds_ + seed];
}

const CellResult& ResultMatrix::cell(std::size_t task, std::size_t method,
                                     int seed) const {
  return cells_[(task * methods_.size() + method) * seeds_ + seed];
}

double ResultMatrix::mean(std::size_t task, std::size_t method) const {
  double sum = 0.0;
  int n = 0;
  for (int s = 0; s < seeds_; ++s) {
    const auto& c = cell(task, method, s);
    if (c.ok) {
      sum += c.final_best;
      ++n;
    }
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

double ResultMatrix::std_error(std::size_t task, std::size_t method) const {
  std::vector<double> xs;
  for (int s = 0; s < seeds_; ++s) {
    const auto& c = cell(task, method, s);
    if (c.ok) xs.push_back(c.final_best);
  }
  if (xs.size() < 2) return 0.0;
  const double m = mean(task, method);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / (xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

double ResultMatrix::median(std::size_t task, std::size_t method) const {
  std::vector<double> xs;
  for (int s = 0; s < seeds_; ++s) {
    const auto& c = cell(task, method, s);
    if (c.ok) xs.push_back(c.final_best);
  }
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size();
  return m % 2 == 1 ? xs[m / 2] : 0.5 * (xs[m / 2 - 1] + xs[m / 2]);
}

bool ResultMatrix::complete() const { return missing_cells().empty(); }

std::vector<std::string> ResultMatrix::missing_cells() const {
  std::vector<std::string> missing;
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    for (std::size_t m = 0; m < methods_.size(); ++m) {
      for (int s = 0; s < seeds_; ++s) {
        if (!cell(t, m, s).ok) {
          missing.push_back(tasks_[t] + "/" + methods_[m] + "/seed" +
                            std::to_string(s));
        }
      }
    }
  }
  return missing;
}

// ---------------------------------------------------------------------------
// Performance profile

ProfileTable performance_profile(const ResultMatrix& matrix,
                                 const std::vector<double>& taus) {
  if (!matrix.complete()) {
    std::string msg = "performance_profile: incomplete matrix, missing:";
    for (const auto& m : matrix.missing_cells()) msg += " " + m;
    throw Error(Errc::invalid_argument, msg);
  }
  const std::size_t T = matrix.tasks().size();
  const std::size_t M = matrix.methods().size();

  std::vector<std::vector<double>> means(T, std::vector<double>(M));
  std::vector<double> best(T, -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < M; ++m) {
      means[t][m] = matrix.mean(t, m);
      best[t] = std::max(best[t], means[t][m]);
    }
  }

  ProfileTable table;
  table.methods = matrix.methods();
  table.taus = taus;
  table.rho.assign(M, std::vector<double>(taus.size(), 0.0));
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < taus.size(); ++k) {
      int count = 0;
      for (std::size_t t = 0; t < T; ++t) {
        if (best[t] - means[t][m] <= taus[k]) ++count;
      }
      table.rho[m][k] = static_cast<double>(count) / static_cast<double>(T);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Experiment runner

ResultMatrix run_experiment(const BenchConfig& config) {
  config.validate();

  std::vector<BoundTask> tasks;
  tasks.reserve(config.tasks.size());
  bool any_external = false;
  for (const auto& spec : config.tasks) {
    tasks.push_back(bind_task(spec));
    any_external = any_external || spec.is_external();
  }

  std::vector<OptimizerConfig> method_cfgs;
  for (MethodTag tag : config.methods) {
    OptimizerConfig cfg = resolve_method_config(tag, config.base);
    const auto it = config.method_overrides.find(method_name(tag));
    if (it != config.method_overrides.end()) {
      nlohmann::json j = cfg.to_json();
      deep_merge(j, it->second);
      cfg = OptimizerConfig::from_json(j);
    }
    method_cfgs.push_back(std::move(cfg));
  }

  std::vector<std::string> task_names, method_names;
  for (const auto& t : config.tasks) task_names.push_back(t.name);
  for (MethodTag m : config.methods) method_names.push_back(method_name(m));
  ResultMatrix matrix(task_names, method_names, config.seeds);

  const std::size_t total =
      tasks.size() * method_cfgs.size() * static_cast<std::size_t>(config.seeds);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      const std::size_t t = i / (method_cfgs.size() * config.seeds);
      const std::size_t rem = i % (method_cfgs.size() * config.seeds);
      const std::size_t m = rem / config.seeds;
      const int s = static_cast<int>(rem % config.seeds);

      CellResult result;
      try {
        OptimizerConfig cfg = method_cfgs[m];
        cfg.seed = derive_seed(config.master_seed, t, m, static_cast<std::uint64_t>(s));
        Rng rng(cfg.seed);
        const auto objective = tasks[t].make_objective();
        RunTrace trace = run_method(config.methods[m], cfg, *tasks[t].pool,
                                    *objective, rng, config.fd_zoo_h_factor);
        result.ok = true;
        result.final_best = trace.best_score;
        result.queries_used = trace.queries_used;
        result.truncated = trace.truncated;
        result.trace = std::move(trace);
      } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
      }
      matrix.cell(t, m, s) = std::move(result);
    }
  };

  int workers = config.workers;
  if (any_external) workers = 1;  // respect evaluator rate limits
  workers = std::min<int>(workers, static_cast<int>(total));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int i = 0; i < workers; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  return matrix;
}

// ---------------------------------------------------------------------------
// Output files

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h = (h ^ c) * 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(Errc::io, "cannot write: " + path.string());
  }
  out << content;
  if (!out) {
    throw Error(Errc::io, "write failed: " + path.string());
  }
}

}  // namespace

void emit_outputs(const BenchConfig& config, const ResultMatrix& matrix,
                  const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "traces", ec);
  if (ec) {
    throw Error(Errc::io, "cannot create output directory: " + out_dir);
  }

  std::ostringstream results;
  results << "task,method,seed,final_best,queries_used\n";
  std::ostringstream curves;
  curves << "task,method,seed,step,best_so_far\n";
  nlohmann::json cell_statuses = nlohmann::json::array();

  for (std::size_t t = 0; t < matrix.tasks().size(); ++t) {
    for (std::size_t m = 0; m < matrix.methods().size(); ++m) {
      for (int s = 0; s < matrix.seeds(); ++s) {
        const auto& cell = matrix.cell(t, m, s);
        nlohmann::json status = {{"task", matrix.tasks()[t]},
                                 {"method", matrix.methods()[m]},
                                 {"seed", s},
                                 {"status", cell.ok ? "ok" : "error"}};
        if (!cell.ok) {
          status["message"] = cell.error;
          cell_statuses.push_back(std::move(status));
          continue;
        }
        status["queries_used"] = cell.queries_used;
        status["truncated"] = cell.truncated;
        cell_statuses.push_back(std::move(status));

        results << matrix.tasks()[t] << ',' << matrix.methods()[m] << ',' << s
                << ',' << format_double(cell.final_best) << ','
                << cell.queries_used << '\n';
        for (const auto& e : cell.trace.entries) {
          curves << matrix.tasks()[t] << ',' << matrix.methods()[m] << ',' << s
                 << ',' << e.step << ',' << format_double(e.best_so_far) << '\n';
        }
        const std::string trace_name = sanitize_filename(matrix.tasks()[t]) +
                                       "__" + matrix.methods()[m] + "__seed" +
                                       std::to_string(s) + ".json";
        write_file(fs::path(out_dir) / "traces" / trace_name,
                   cell.trace.to_json().dump(2) + "\n");
      }
    }
  }

  write_file(fs::path(out_dir) / "results.csv", results.str());
  write_file(fs::path(out_dir) / "curves.csv", curves.str());

  if (matrix.complete()) {
    const ProfileTable profile = performance_profile(matrix, config.taus);
    write_profile_csv(profile, (fs::path(out_dir) / "profile.csv").string());
  }

  nlohmann::json summary;
  summary["config"] = config.to_json();
  summary["config_hash"] = hex64(fnv1a(config.to_json().dump()));
  summary["cells"] = std::move(cell_statuses);
  summary["incomplete_cells"] = matrix.missing_cells();
  write_file(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
}

void write_profile_csv(const ProfileTable& profile, const std::string& path) {
  std::ostringstream out;
  out << "method,tau,rho\n";
  for (std::size_t m = 0; m < profile.methods.size(); ++m) {
    for (std::size_t k = 0; k < profile.taus.size(); ++k) {
      out << profile.methods[m] << ',' << format_double(profile.taus[k]) << ','
          << format_double(profile.rho[m][k]) << '\n';
    }
  }
  write_file(path, out.str());
}

ProfileTable profile_from_results_csv(const std::string& results_path,
                                      const std::vector<double>& taus) {
  std::ifstream in(results_path);
  if (!in) throw Error(Errc::io, "cannot open results file: " + results_path);

  std::string line;
  if (!std::getline(in, line)) {
    throw Error(Errc::invalid_argument, "results file is empty");
  }
  if (line.rfind("task,method,seed,final_best", 0) != 0) {
    throw Error(Errc::invalid_argument,
                "results file: unexpected header '" + line + "'");
  }

  std::vector<std::string> tasks, methods;
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string task, method, seed, final_best;
    if (!std::getline(ss, task, ',') || !std::getline(ss, method, ',') ||
        !std::getline(ss, seed, ',') || !std::getline(ss, final_best, ',')) {
      throw Error(Errc::invalid_argument,
                  "results file line " + std::to_string(line_no) + ": bad row");
    }
    if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
      tasks.push_back(task);
    }
    if (std::find(methods.begin(), methods.end(), method) == methods.end()) {
      methods.push_back(method);
    }
    try {
      cells[{task, method}].push_back(std::stod(final_best));
    } catch (const std::logic_error&) {
      throw Error(Errc::invalid_argument,
                  "results file line " + std::to_string(line_no) +
                      ": bad final_best value");
    }
  }
  if (tasks.empty()) {
    throw Error(Errc::invalid_argument, "results file has no rows");
  }

  std::size_t seeds = 0;
  for (const auto& [key, values] : cells) {
    seeds = std::max(seeds, values.size());
  }
  std::vector<std::string> missing;
  for (const auto& t : tasks) {
    for (const auto& m : methods) {
      const auto it = cells.find({t, m});
      const std::size_t have = it == cells.end() ? 0 : it->second.size();
      if (have < seeds) {
        missing.push_back(t + "/" + m + " (" + std::to_string(have) + "/" +
                          std::to_string(seeds) + " seeds)");
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "profile: incomplete results, missing:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(Errc::invalid_argument, msg);
  }

  ResultMatrix matrix(tasks, methods, static_cast<int>(seeds));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto& values = cells[{tasks[t], methods[m]}];
      for (std::size_t s = 0; s < values.size(); ++s) {
        auto& cell = matrix.cell(t, m, static_cast<int>(s));
        cell.ok = true;
        cell.final_best = values[s];
      }
    }
  }
  return performance_profile(matrix, taus);
}

// ---------------------------------------------------------------------------
// Selftest

namespace {

Eigen::VectorXd fd_grad1(const Kernel& k, const Eigen::VectorXd& a,
                         const Eigen::VectorXd& b, double h) {
  Eigen::VectorXd out(a.size());
  Eigen::VectorXd ap = a;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    ap[i] = a[i] + h;
    const double kp = k.eval(ap, b);
    ap[i] = a[i] - h;
    const double km = k.eval(ap, b);
    ap[i] = a[i];
    out[i] = (kp - km) / (2.0 * h);
  }
  return out;
}

Eigen::MatrixXd fd_grad12(const Kernel& k, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b, double h) {
  const Eigen::Index d = a.size();
  Eigen::MatrixXd out(d, d);
  Eigen::VectorXd ap = a, bp = b;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      ap[i] = a[i] + h; bp[j] = b[j] + h;
      const double kpp = k.eval(ap, bp);
      bp[j] = b[j] - h;
      const double kpm = k.eval(ap, bp);
      ap[i] = a[i] - h; bp[j] = b[j] + h;
      const double kmp = k.eval(ap, bp);
      bp[j] = b[j] - h;
      const double kmm = k.eval(ap, bp);
      ap[i] = a[i]; bp[j] = b[j];
      out(i, j) = (kpp - kpm - kmp + kmm) / (4.0 * h * h);
    }
  }
  return out;
}

double kernel_fd_max_rel_err(const Kernel& k, int d, int pairs, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const Eigen::VectorXd a = rng.gauss_vector(d);
    const Eigen::VectorXd b = rng.gauss_vector(d);
    const Eigen::VectorXd g = k.grad1(a, b);
    const Eigen::VectorXd gfd = fd_grad1(k, a, b, 1e-4);
    const double gscale = std::max(gfd.cwiseAbs().maxCoeff(), 1e-8);
    worst = std::max(worst, (g - gfd).cwiseAbs().maxCoeff() / gscale);

    const Eigen::MatrixXd m = k.grad12(a, b);
    const Eigen::MatrixXd mfd = fd_grad12(k, a, b, 5e-4);
    const double mscale = std::max(mfd.cwiseAbs().maxCoeff(), 1e-8);
    worst = std::max(worst, (m - mfd).cwiseAbs().maxCoeff() / mscale);
  }
  return worst;
}

bool report(bool verbose, const char* name, bool ok, double value) {
  if (verbose) {
    std::cout << (ok ? "[ ok ] " : "[FAIL] ") << name << " (" << value << ")\n";
  }
  return ok;
}

}  // namespace

bool selftest(bool verbose) {
  bool all = true;
  Rng rng(20240229);

  {
    RbfKernel k(1.0, 0.8);
    const double err = kernel_fd_max_rel_err(k, 4, 20, rng);
    all &= report(verbose, "rbf derivatives vs finite differences", err <= 1e-5, err);
  }
  {
    Matern52Kernel k(1.3, 1.1);
    const double err = kernel_fd_max_rel_err(k, 4, 20, rng);
    all &= report(verbose, "matern52 derivatives vs finite differences", err <= 1e-5, err);
  }
  {
    NtkKernel k(FeedforwardNet::init(4, {16, 16}, KernelSpec::Activation::tanh, 7));
    const double err = kernel_fd_max_rel_err(k, 4, 10, rng);
    all &= report(verbose, "ntk derivatives vs finite differences", err <= 1e-3, err);
  }
  {
    // single noiseless observation: mean = grad1(z, z1) * r1 / (k(z1,z1)+jitter)
    RbfKernel k(1.0, 1.0);
    History h;
    Eigen::VectorXd z1 = Eigen::VectorXd::Zero(2);
    h.observe("a", z1, 2.0);
    Eigen::VectorXd z(2);
    z << 1.0, 0.0;
    EstimatorConfig cfg;
    cfg.noise_sigma = 0.0;
    cfg.jitter = 1e-10;
    const auto post = posterior_grad(cfg, k, h, z);
    const Eigen::VectorXd expect = k.grad1(z, z1) * (2.0 / (1.0 + 1e-10));
    const double err = (post.mean - expect).norm();
    all &= report(verbose, "posterior mean closed form", err <= 1e-12, err);
  }
  {
    const double bound = prop1_bound(1, std::exp(-1.0), 1.0);
    all &= report(verbose, "error-bound arithmetic", std::abs(bound - 5.0) <= 1e-12,
                  bound);
  }
  return all;
}

}  // namespace zopo
