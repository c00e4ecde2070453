// Exercises the shared-library surface exactly as an external consumer
// would: only zopo/zopo.h, no internal headers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "zopo/zopo.h"

namespace fs = std::filesystem;

namespace {

std::string write_temp_pool() {
  const fs::path path = fs::temp_directory_path() / "zopo_capi_pool.jsonl";
  std::ofstream out(path);
  out << R"({"id": "a", "embedding": [0.0, 0.0], "score": 0.2})" << "\n";
  out << R"({"id": "b", "embedding": [1.0, 0.0], "score": 0.9})" << "\n";
  out << R"({"id": "c", "embedding": [0.0, 1.0], "score": 0.5})" << "\n";
  out << R"({"id": "dup", "embedding": [0.0, 0.0], "score": 0.1})" << "\n";
  return path.string();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("version and error strings are always available") {
  CHECK(zopo_version() != nullptr);
  CHECK(zopo_last_error() != nullptr);
}

TEST_CASE("pool loading, queries, and error codes") {
  const std::string path = write_temp_pool();

  zopo_pool* pool = nullptr;
  REQUIRE(zopo_pool_load(path.c_str(), 0, &pool) == ZOPO_OK);

  size_t size = 0, dropped = 0;
  int dim = 0;
  CHECK(zopo_pool_size(pool, &size) == ZOPO_OK);
  CHECK(zopo_pool_dimension(pool, &dim) == ZOPO_OK);
  CHECK(zopo_pool_dropped(pool, &dropped) == ZOPO_OK);
  CHECK(size == 3);
  CHECK(dim == 2);
  CHECK(dropped == 1);

  const char* id = nullptr;
  CHECK(zopo_pool_candidate_id(pool, 1, &id) == ZOPO_OK);
  CHECK(std::string(id) == "b");

  const double z[2] = {0.9, 0.1};
  CHECK(zopo_pool_project(pool, z, 2, nullptr, 0, &id) == ZOPO_OK);
  CHECK(std::string(id) == "b");

  const char* exclude[] = {"b"};
  CHECK(zopo_pool_project(pool, z, 2, exclude, 1, &id) == ZOPO_OK);
  CHECK(std::string(id) == "a");

  const char* all[] = {"a", "b", "c"};
  CHECK(zopo_pool_project(pool, z, 2, all, 3, &id) == ZOPO_ERR_EXHAUSTED);

  const char* ids[3] = {nullptr, nullptr, nullptr};
  size_t count = 0;
  CHECK(zopo_pool_nearest(pool, z, 2, 3, nullptr, 0, ids, &count) == ZOPO_OK);
  REQUIRE(count == 3);
  CHECK(std::string(ids[0]) == "b");

  zopo_pool_free(pool);
  std::remove(path.c_str());
}

TEST_CASE("failure paths set codes and messages") {
  zopo_pool* pool = nullptr;
  CHECK(zopo_pool_load("/no/such/file.jsonl", 0, &pool) == ZOPO_ERR_IO);
  CHECK(std::string(zopo_last_error()).find("file") != std::string::npos);
  CHECK(zopo_pool_load(nullptr, 0, &pool) == ZOPO_ERR_ARGUMENT);

  zopo_objective* obj = nullptr;
  CHECK(zopo_objective_table_load("/no/such/scores.jsonl", 0.0, &obj) ==
        ZOPO_ERR_IO);
  CHECK(zopo_synthetic_create("bogus-family", &pool, &obj, nullptr, nullptr,
                              nullptr) == ZOPO_ERR_ARGUMENT);
}

TEST_CASE("table objective evaluation through the C surface") {
  const std::string path = write_temp_pool();
  zopo_pool* pool = nullptr;
  REQUIRE(zopo_pool_load(path.c_str(), 0, &pool) == ZOPO_OK);
  zopo_objective* obj = nullptr;
  REQUIRE(zopo_objective_table_from_pool(pool, 0.0, &obj) == ZOPO_OK);

  double score = 0.0;
  CHECK(zopo_objective_evaluate(obj, pool, "b", 0, &score) == ZOPO_OK);
  CHECK(score == 0.9);
  CHECK(zopo_objective_evaluate(obj, pool, "nope", 0, &score) ==
        ZOPO_ERR_ARGUMENT);

  zopo_objective_free(obj);
  zopo_pool_free(pool);
  std::remove(path.c_str());
}

TEST_CASE("synthetic task through the C surface") {
  zopo_pool* pool = nullptr;
  zopo_objective* obj = nullptr;
  char best_id[32] = {0};
  double best_score = 0.0;
  long long optima = 0;
  REQUIRE(zopo_synthetic_create("rkhs,d=4,pool=50,seed=2,noise=0", &pool, &obj,
                                best_id, &best_score, &optima) == ZOPO_OK);
  size_t size = 0;
  zopo_pool_size(pool, &size);
  CHECK(size == 50);
  CHECK(best_score == doctest::Approx(1.0));
  CHECK(optima >= 1);
  CHECK(best_id[0] == 'c');

  double v = 0.0;
  CHECK(zopo_objective_evaluate(obj, pool, best_id, 1, &v) == ZOPO_OK);
  CHECK(v == doctest::Approx(best_score));

  zopo_objective_free(obj);
  zopo_pool_free(pool);
}

TEST_CASE("optimization runs and trace accessors") {
  const std::string path = write_temp_pool();
  zopo_pool* pool = nullptr;
  zopo_objective* obj = nullptr;
  REQUIRE(zopo_pool_load(path.c_str(), 0, &pool) == ZOPO_OK);
  REQUIRE(zopo_objective_table_from_pool(pool, 0.0, &obj) == ZOPO_OK);

  const char* config = R"({
    "method": "zopo", "budget": 3, "init_queries": 2, "seed": 7,
    "kernel": {"kind": "rbf"}
  })";
  zopo_trace* trace = nullptr;
  REQUIRE(zopo_optimize(config, pool, obj, &trace) == ZOPO_OK);

  size_t len = 0;
  CHECK(zopo_trace_length(trace, &len) == ZOPO_OK);
  CHECK(len == 3);
  int queries = 0, truncated = -1;
  CHECK(zopo_trace_queries_used(trace, &queries) == ZOPO_OK);
  CHECK(queries == 3);
  CHECK(zopo_trace_truncated(trace, &truncated) == ZOPO_OK);
  CHECK(truncated == 0);

  const char* best_id = nullptr;
  double best = 0.0;
  CHECK(zopo_trace_best(trace, &best_id, &best) == ZOPO_OK);
  CHECK(best == 0.9);  // budget 3 == pool size: the best entry is found

  const char* kind = nullptr;
  const char* entry_id = nullptr;
  double score = 0.0, best_so_far = 0.0, unc = 0.0;
  CHECK(zopo_trace_entry(trace, 0, &entry_id, &score, &best_so_far, &kind,
                         &unc) == ZOPO_OK);
  CHECK(std::string(kind) == "init");
  CHECK(std::isnan(unc));
  CHECK(zopo_trace_entry(trace, 99, &entry_id, nullptr, nullptr, nullptr,
                         nullptr) == ZOPO_ERR_ARGUMENT);

  const fs::path trace_path = fs::temp_directory_path() / "zopo_capi_trace.json";
  CHECK(zopo_trace_write_json(trace, trace_path.string().c_str()) == ZOPO_OK);
  CHECK(read_file(trace_path).find("\"entries\"") != std::string::npos);
  fs::remove(trace_path);

  // bad method tag is an argument error
  zopo_trace* trace2 = nullptr;
  CHECK(zopo_optimize("{\"method\": \"nope\"}", pool, obj, &trace2) ==
        ZOPO_ERR_ARGUMENT);

  zopo_trace_free(trace);
  zopo_objective_free(obj);
  zopo_pool_free(pool);
  std::remove(path.c_str());
}

TEST_CASE("subprocess evaluator objective through the C surface") {
  const char* mock = std::getenv("MOCK_EVALUATOR");
  REQUIRE(mock != nullptr);

  const fs::path pool_path = fs::temp_directory_path() / "zopo_capi_textpool.jsonl";
  {
    std::ofstream out(pool_path);
    out << R"({"id": "t1", "embedding": [0.0], "text": "0.3"})" << "\n";
    out << R"({"id": "t2", "embedding": [1.0], "text": "0.8"})" << "\n";
  }
  zopo_pool* pool = nullptr;
  REQUIRE(zopo_pool_load(pool_path.string().c_str(), 0, &pool) == ZOPO_OK);

  const std::string command = std::string(mock) + " --score-from-text";
  zopo_objective* obj = nullptr;
  REQUIRE(zopo_objective_external_subprocess(command.c_str(), 5000, 2, &obj) ==
          ZOPO_OK);
  double score = 0.0;
  CHECK(zopo_objective_evaluate(obj, pool, "t2", 0, &score) == ZOPO_OK);
  CHECK(score == 0.8);

  zopo_objective_free(obj);
  zopo_pool_free(pool);
  fs::remove(pool_path);
}

TEST_CASE("bench and profile through the C surface") {
  const fs::path dir = fs::temp_directory_path() / "zopo_capi_bench";
  fs::remove_all(dir);
  const fs::path config_path = fs::temp_directory_path() / "zopo_capi_bench.json";
  {
    std::ofstream out(config_path);
    out << R"({
      "master_seed": 4,
      "seeds": 2,
      "methods": ["random", "zopo"],
      "tasks": [{"name": "t", "synthetic": "rkhs,d=3,pool=30,seed=5,noise=0"}],
      "optimizer": {"budget": 12, "init_queries": 4, "kernel": {"kind": "rbf"}}
    })";
  }
  REQUIRE(zopo_bench_run(config_path.string().c_str(), dir.string().c_str(), 1) ==
          ZOPO_OK);
  CHECK(fs::exists(dir / "results.csv"));
  CHECK(fs::exists(dir / "profile.csv"));

  const double taus[] = {0.0, 0.1};
  const fs::path profile_path = dir / "reprofiled.csv";
  REQUIRE(zopo_profile((dir / "results.csv").string().c_str(), taus, 2,
                       profile_path.string().c_str()) == ZOPO_OK);
  const std::string text = read_file(profile_path);
  CHECK(text.rfind("method,tau,rho\n", 0) == 0);

  CHECK(zopo_bench_run("/no/such/config.json", dir.string().c_str(), 0) ==
        ZOPO_ERR_IO);

  fs::remove_all(dir);
  fs::remove(config_path);
}
