#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/kernel.hpp"
#include "core/ntk.hpp"
#include "core/pool.hpp"
#include "core/rng.hpp"

namespace zopo {

/// Black-box score function over candidates. evaluate() adds Gaussian
/// observation noise of the configured standard deviation to the clean value;
/// with noise_sigma = 0 it is a pure function of the candidate.
class Objective {
 public:
  enum class Kind { rkhs, mlp, table, external };

  virtual ~Objective() = default;

  Kind kind() const { return kind_; }
  double noise_sigma() const { return noise_sigma_; }

  /// Deterministic score before observation noise. May throw Errc::run
  /// (table miss, evaluator failure).
  virtual double evaluate_clean(const Candidate& candidate) const = 0;

  double evaluate(const Candidate& candidate, Rng& rng) const;

 protected:
  Objective(Kind kind, double noise_sigma, bool clamp_to_unit)
      : kind_(kind), noise_sigma_(noise_sigma), clamp_to_unit_(clamp_to_unit) {}

  Kind kind_;
  double noise_sigma_;
  // accuracy-style objectives keep observed scores inside [0,1]
  bool clamp_to_unit_;
};

/// Score lookup by candidate id; a missing id is a run-fatal error.
class TableObjective : public Objective {
 public:
  TableObjective(std::unordered_map<std::string, double> scores,
                 double noise_sigma);
  /// Scores taken from the pool records that carry a "score" field.
  static std::unique_ptr<TableObjective> from_pool(const CandidatePool& pool,
                                                   double noise_sigma);
  /// Line-delimited JSON {"id": str, "score": num}.
  static std::unique_ptr<TableObjective> from_file(const std::string& path,
                                                   double noise_sigma);

  double evaluate_clean(const Candidate& candidate) const override;
  std::size_t size() const { return scores_.size(); }

 private:
  std::unordered_map<std::string, double> scores_;
};

/// Finite kernel expansion f(z) = sum_i w_i k(z, c_i) with an RBF kernel;
/// carries its own closed-form gradient, which makes it the reference
/// objective for gradient-estimation checks. An optional affine rescale
/// (applied after the expansion) maps raw scores onto [0,1].
class RkhsObjective : public Objective {
 public:
  RkhsObjective(Eigen::MatrixXd centers, Eigen::VectorXd weights,
                double lengthscale, double noise_sigma);

  double evaluate_clean(const Candidate& candidate) const override;
  double value(VecCRef z) const;
  Eigen::VectorXd gradient(VecCRef z) const;

  void set_affine(double scale, double offset, bool clamp_to_unit);
  double scale() const { return scale_; }
  int dimension() const { return static_cast<int>(centers_.rows()); }

 private:
  Eigen::MatrixXd centers_;  // d x m
  Eigen::VectorXd weights_;  // m
  RbfKernel kernel_;
  double scale_ = 1.0, offset_ = 0.0;
};

/// Random frozen network as a rugged synthetic landscape. Inputs are divided
/// by input_scale before the forward pass so pools far from the origin still
/// land in the responsive range of the activations.
class MlpObjective : public Objective {
 public:
  MlpObjective(FeedforwardNet net, double input_scale, double noise_sigma);

  double evaluate_clean(const Candidate& candidate) const override;
  double value(VecCRef z) const;
  void set_affine(double scale, double offset, bool clamp_to_unit);
  const FeedforwardNet& network() const { return net_; }

 private:
  FeedforwardNet net_;
  double input_scale_;
  double scale_ = 1.0, offset_ = 0.0;
};

// ---------------------------------------------------------------------------

enum class SyntheticFamily { rkhs, mlp, mlp_matched };

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::rkhs;
  int d = 32;
  int pool_size = 500;
  std::uint64_t seed = 1;
  double noise_sigma = 0.02;
  int n_centers = 8;

  /// Parses "rkhs,d=32,pool=500,seed=1,noise=0.02,centers=8" (family first,
  /// remaining key=value pairs optional, any order).
  static SyntheticSpec parse(const std::string& text);
  std::string to_string() const;
  void validate() const;
};

/// A generated benchmark task: pool, objective, and the exhaustively computed
/// ground truth (best member plus a census of local optima under k-nearest
/// neighborhoods).
struct SyntheticTask {
  std::string name;
  CandidatePool pool;
  std::shared_ptr<Objective> objective;
  std::string true_best_id;
  double true_best_score = 0.0;
  int local_optima_count = 0;
  int local_optima_k = 10;
};

/// Samples pool embeddings from a mixture of Gaussians, builds the family
/// objective, rescales scores onto [0,1] over the pool, and records the
/// exhaustive ground truth. Deterministic given the spec.
SyntheticTask make_synthetic_task(const SyntheticSpec& spec);

}  // namespace zopo
