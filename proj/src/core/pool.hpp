#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace zopo {

using IdSet = std::unordered_set<std::string>;

/// One pool member: a unique id, its embedding in R^d, an optional text
/// payload, and an optional precomputed score (consumed by the table
/// objective only).
struct Candidate {
  std::string id;
  Eigen::VectorXd embedding;
  std::optional<std::string> text;
  std::optional<double> score;
};

/// The finite search domain: an ordered, deduplicated set of candidates with
/// exact nearest-neighbor queries under the Euclidean norm.
///
/// Immutable after construction; all queries are const and safe to call
/// concurrently. Lookups are exact linear scans (pools up to ~1e5 members),
/// with ties broken toward the lexicographically smaller id so that every
/// query is deterministic.
class CandidatePool {
 public:
  CandidatePool() = default;  // empty; fill via from_records/load

  /// Builds a pool from parsed records. Records that repeat an earlier id or
  /// an earlier embedding (exact equality) are dropped, keeping the first
  /// occurrence; the drop count is retained.
  static CandidatePool from_records(std::vector<Candidate> records,
                                    std::optional<int> dimension_hint = {});

  /// Reads line-delimited JSON records:
  ///   {"id": str, "embedding": [num,...], "text": str?, "score": num?}
  static CandidatePool load(std::istream& in,
                            std::optional<int> dimension_hint = {});
  static CandidatePool load_file(const std::string& path,
                                 std::optional<int> dimension_hint = {});

  int dimension() const { return dim_; }
  std::size_t size() const { return candidates_.size(); }
  std::size_t dropped() const { return dropped_; }
  const std::vector<Candidate>& candidates() const { return candidates_; }
  const Candidate& at(std::size_t i) const { return candidates_[i]; }

  /// Returns nullptr when the id is unknown.
  const Candidate* find(const std::string& id) const;

  /// Nearest non-excluded candidate to z, or nullptr when every candidate is
  /// excluded (pool exhausted).
  const Candidate* project(const Eigen::VectorXd& z,
                           const IdSet& exclude) const;

  /// The min(k, available) nearest non-excluded candidates in ascending
  /// distance order, same tie rule as project. nearest(z,1,ex) front equals
  /// project(z,ex).
  std::vector<const Candidate*> nearest(const Eigen::VectorXd& z,
                                        std::size_t k,
                                        const IdSet& exclude) const;

  /// Median pairwise distance over (a deterministic subsample of) the pool;
  /// the default lengthscale heuristic for stationary kernels.
  double median_pairwise_distance(std::size_t sample_cap = 512) const;

  /// Median over pool members of the distance to their nearest other member.
  double median_nn_distance(std::size_t sample_cap = 512) const;

 private:
  std::vector<std::size_t> sample_indices(std::size_t cap) const;

  int dim_ = 0;
  std::vector<Candidate> candidates_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::size_t dropped_ = 0;
};

}  // namespace zopo
