#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "core/kernel.hpp"

namespace zopo {

/// One observed query: which candidate, where, and the (noisy) score.
struct QueryRecord {
  std::string id;
  Eigen::VectorXd embedding;
  double score = 0.0;
};

/// Ordered query history. Ids are unique: re-querying a candidate is a
/// protocol violation (redundant queries are eliminated at the source).
/// Single-writer; readers may share immutable snapshots.
class History {
 public:
  void observe(std::string id, Eigen::VectorXd embedding, double score);
  const std::vector<QueryRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool contains(const std::string& id) const { return ids_.count(id) != 0; }
  const std::unordered_set<std::string>& ids() const { return ids_; }

 private:
  std::vector<QueryRecord> records_;
  std::unordered_set<std::string> ids_;
};

/// Gradient posterior at a point: mean in R^d, covariance in R^{d x d}
/// (symmetric, PSD up to numerical tolerance), and how many history records
/// conditioned it.
struct GradientPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  int neighborhood_size = 0;
};

enum class UncertaintyKind { trace_rms, spectral };

struct EstimatorConfig {
  double noise_sigma = 0.01;  // observation noise std dev
  int fit_neighbors = 20;     // history k-NN used for local conditioning
  // absolute diagonal jitter; unset resolves to 1e-8 * max diag of the Gram
  std::optional<double> jitter;
  UncertaintyKind uncertainty = UncertaintyKind::trace_rms;

  void validate() const;
};

/// Gradient posterior of the derived GP at z, conditioned on the
/// min(fit_neighbors, t) history records nearest to z:
///   mean = B (K + sigma^2 I + jitter I)^{-1} r
///   cov  = C - B (K + sigma^2 I + jitter I)^{-1} B'
/// where K is the kernel Gram over the neighborhood, B collects d/dz k(z, .)
/// columns and C = d^2 k(z,z). An empty history returns the prior
/// (zero mean, covariance C).
///
/// Throws NumericalError, carrying a condition estimate, if the symmetric
/// solve fails even with jitter.
GradientPosterior posterior_grad(const EstimatorConfig& config,
                                 const Kernel& kernel, const History& history,
                                 VecCRef z);

/// Scalar uncertainty of a posterior: sqrt(trace(cov)/d) by default,
/// sqrt(spectral norm) behind the config switch.
double uncertainty(const GradientPosterior& posterior,
                   UncertaintyKind kind = UncertaintyKind::trace_rms);

/// High-probability gradient-error budget: with omega = d + 2(sqrt(d)+1)
/// ln(1/delta), the squared estimation error is bounded by omega * cov_norm
/// with probability at least 1 - delta. Diagnostic only.
double prop1_bound(int d, double delta, double cov_norm);

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
double spectral_norm(const Eigen::MatrixXd& symmetric);

}  // namespace zopo
