#include "core/pool.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace zopo {

namespace {

bool all_finite(const Eigen::VectorXd& v) {
  return v.allFinite();
}

struct EmbeddingHash {
  std::size_t operator()(const Eigen::VectorXd& v) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits;
      const double x = v[i];
      std::memcpy(&bits, &x, sizeof(bits));
      h = (h ^ bits) * 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct EmbeddingEq {
  bool operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return a.size() == b.size() && a == b;
  }
};

}  // namespace

CandidatePool CandidatePool::from_records(std::vector<Candidate> records,
                                          std::optional<int> dimension_hint) {
  if (records.empty()) {
    throw Error(Errc::invalid_argument, "candidate pool source is empty");
  }
  CandidatePool pool;
  pool.dim_ = dimension_hint.value_or(static_cast<int>(records.front().embedding.size()));
  if (pool.dim_ <= 0) {
    throw Error(Errc::invalid_argument, "pool dimension must be positive");
  }

  std::unordered_set<Eigen::VectorXd, EmbeddingHash, EmbeddingEq> seen_embeddings;
  pool.candidates_.reserve(records.size());
  std::size_t line = 0;
  for (auto& rec : records) {
    ++line;
    if (rec.id.empty()) {
      throw Error(Errc::invalid_argument,
                  "record " + std::to_string(line) + " has an empty id");
    }
    if (rec.embedding.size() != pool.dim_) {
      throw Error(Errc::invalid_argument,
                  "record '" + rec.id + "' has embedding length " +
                      std::to_string(rec.embedding.size()) + ", expected " +
                      std::to_string(pool.dim_));
    }
    if (!all_finite(rec.embedding)) {
      throw Error(Errc::invalid_argument,
                  "record '" + rec.id + "' has non-finite embedding entries");
    }
    if (pool.by_id_.count(rec.id) || seen_embeddings.count(rec.embedding)) {
      ++pool.dropped_;
      continue;
    }
    seen_embeddings.insert(rec.embedding);
    pool.by_id_.emplace(rec.id, pool.candidates_.size());
    pool.candidates_.push_back(std::move(rec));
  }
  if (pool.candidates_.empty()) {
    throw Error(Errc::invalid_argument, "all pool records were duplicates");
  }
  return pool;
}

CandidatePool CandidatePool::load(std::istream& in,
                                  std::optional<int> dimension_hint) {
  std::vector<Candidate> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_argument,
                  "pool line " + std::to_string(line_no) +
                      ": invalid JSON: " + e.what());
    }
    Candidate c;
    if (!j.contains("id") || !j["id"].is_string()) {
      throw Error(Errc::invalid_argument,
                  "pool line " + std::to_string(line_no) + ": missing string 'id'");
    }
    c.id = j["id"].get<std::string>();
    if (!j.contains("embedding") || !j["embedding"].is_array()) {
      throw Error(Errc::invalid_argument,
                  "pool record '" + c.id + "': missing 'embedding' array");
    }
    const auto& arr = j["embedding"];
    c.embedding.resize(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) {
        throw Error(Errc::invalid_argument,
                    "pool record '" + c.id + "': embedding entry " +
                        std::to_string(i) + " is not a number");
      }
      c.embedding[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    if (j.contains("text")) {
      if (!j["text"].is_string()) {
        throw Error(Errc::invalid_argument,
                    "pool record '" + c.id + "': 'text' must be a string");
      }
      c.text = j["text"].get<std::string>();
    }
    if (j.contains("score")) {
      if (!j["score"].is_number()) {
        throw Error(Errc::invalid_argument,
                    "pool record '" + c.id + "': 'score' must be a number");
      }
      const double s = j["score"].get<double>();
      if (!std::isfinite(s)) {
        throw Error(Errc::invalid_argument,
                    "pool record '" + c.id + "': non-finite score");
      }
      c.score = s;
    }
    records.push_back(std::move(c));
  }
  return from_records(std::move(records), dimension_hint);
}

CandidatePool CandidatePool::load_file(const std::string& path,
                                       std::optional<int> dimension_hint) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::io, "cannot open pool file: " + path);
  }
  return load(in, dimension_hint);
}

const Candidate* CandidatePool::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &candidates_[it->second];
}

namespace {

// distance first, then id; exact comparisons so ordering is total and stable
bool closer(double d2a, const std::string& ida, double d2b,
            const std::string& idb) {
  if (d2a != d2b) return d2a < d2b;
  return ida < idb;
}

}  // namespace

const Candidate* CandidatePool::project(const Eigen::VectorXd& z,
                                        const IdSet& exclude) const {
  if (z.size() != dim_) {
    throw Error(Errc::invalid_argument, "query point dimension mismatch");
  }
  const Candidate* best = nullptr;
  double best_d2 = 0.0;
  for (const auto& c : candidates_) {
    if (exclude.count(c.id)) continue;
    const double d2 = (c.embedding - z).squaredNorm();
    if (best == nullptr || closer(d2, c.id, best_d2, best->id)) {
      best = &c;
      best_d2 = d2;
    }
  }
  return best;
}

std::vector<const Candidate*> CandidatePool::nearest(const Eigen::VectorXd& z,
                                                     std::size_t k,
                                                     const IdSet& exclude) const {
  if (k < 1) {
    throw Error(Errc::invalid_argument, "nearest(): k must be >= 1");
  }
  if (z.size() != dim_) {
    throw Error(Errc::invalid_argument, "query point dimension mismatch");
  }
  std::vector<std::pair<double, const Candidate*>> ranked;
  ranked.reserve(candidates_.size());
  for (const auto& c : candidates_) {
    if (exclude.count(c.id)) continue;
    ranked.emplace_back((c.embedding - z).squaredNorm(), &c);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return closer(a.first, a.second->id, b.first, b.second->id);
  });
  if (ranked.size() > k) ranked.resize(k);
  std::vector<const Candidate*> out;
  out.reserve(ranked.size());
  for (const auto& [d2, c] : ranked) out.push_back(c);
  return out;
}

std::vector<std::size_t> CandidatePool::sample_indices(std::size_t cap) const {
  const std::size_t n = candidates_.size();
  if (n <= cap) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  Rng rng(0x9e1dc0de);  // fixed seed: heuristics must not depend on run seeds
  auto idx = rng.sample_without_replacement(n, cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double CandidatePool::median_pairwise_distance(std::size_t sample_cap) const {
  const auto idx = sample_indices(sample_cap);
  std::vector<double> dists;
  dists.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      dists.push_back(
          (candidates_[idx[i]].embedding - candidates_[idx[j]].embedding).norm());
    }
  }
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  return m % 2 == 1 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
}

double CandidatePool::median_nn_distance(std::size_t sample_cap) const {
  if (candidates_.size() < 2) return 1.0;
  const auto idx = sample_indices(sample_cap);
  std::vector<double> nn;
  nn.reserve(idx.size());
  for (std::size_t i : idx) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < candidates_.size(); ++j) {
      if (j == i) continue;
      best = std::min(best,
                      (candidates_[i].embedding - candidates_[j].embedding)
                          .squaredNorm());
    }
    nn.push_back(std::sqrt(best));
  }
  std::sort(nn.begin(), nn.end());
  const std::size_t m = nn.size();
  return m % 2 == 1 ? nn[m / 2] : 0.5 * (nn[m / 2 - 1] + nn[m / 2]);
}

}  // namespace zopo
