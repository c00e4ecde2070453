#include "core/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace zopo {

void History::observe(std::string id, Eigen::VectorXd embedding, double score) {
  if (id.empty()) {
    throw Error(Errc::invalid_argument, "history: empty candidate id");
  }
  if (ids_.count(id)) {
    throw Error(Errc::invalid_argument,
                "history: candidate '" + id + "' was already queried");
  }
  if (!embedding.allFinite() || !std::isfinite(score)) {
    throw Error(Errc::invalid_argument,
                "history: non-finite embedding or score for '" + id + "'");
  }
  if (!records_.empty() && records_.front().embedding.size() != embedding.size()) {
    throw Error(Errc::invalid_argument,
                "history: embedding dimension mismatch for '" + id + "'");
  }
  ids_.insert(id);
  records_.push_back(QueryRecord{std::move(id), std::move(embedding), score});
}

void EstimatorConfig::validate() const {
  if (noise_sigma < 0.0) {
    throw Error(Errc::invalid_argument, "estimator: noise_sigma must be >= 0");
  }
  if (fit_neighbors < 1) {
    throw Error(Errc::invalid_argument, "estimator: fit_neighbors must be >= 1");
  }
  if (jitter && *jitter < 0.0) {
    throw Error(Errc::invalid_argument, "estimator: jitter must be >= 0");
  }
  if (noise_sigma == 0.0 && jitter && *jitter == 0.0) {
    throw Error(Errc::invalid_argument,
                "estimator: jitter must be > 0 when noise_sigma is 0");
  }
}

namespace {

double condition_estimate(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

GradientPosterior posterior_grad(const EstimatorConfig& config,
                                 const Kernel& kernel, const History& history,
                                 VecCRef z) {
  config.validate();
  if (!z.allFinite()) {
    throw Error(Errc::invalid_argument, "posterior_grad: non-finite query point");
  }
  const Eigen::Index d = z.size();

  const std::size_t t = history.size();
  const std::size_t n =
      std::min<std::size_t>(static_cast<std::size_t>(config.fit_neighbors), t);

  GradientPosterior post;
  post.neighborhood_size = static_cast<int>(n);
  if (n == 0) {
    post.mean = Eigen::VectorXd::Zero(d);
    post.covariance = kernel.grad12(z, z);
    return post;
  }

  // local conditioning: the n history records nearest to z
  std::vector<std::size_t> order(t);
  for (std::size_t i = 0; i < t; ++i) order[i] = i;
  const auto& recs = history.records();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = (recs[a].embedding - z).squaredNorm();
    const double db = (recs[b].embedding - z).squaredNorm();
    if (da != db) return da < db;
    return recs[a].id < recs[b].id;
  });
  order.resize(n);

  std::vector<Eigen::VectorXd> points(n);
  Eigen::VectorXd scores(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    points[i] = recs[order[i]].embedding;
    scores[static_cast<Eigen::Index>(i)] = recs[order[i]].score;
  }

  Eigen::MatrixXd K, B, C;
  kernel.gram_blocks(z, points, K, B, C);

  const double max_diag = K.diagonal().maxCoeff();
  const double jitter =
      config.jitter ? *config.jitter : 1e-8 * std::max(max_diag, 1.0);
  Eigen::MatrixXd S = K;
  S.diagonal().array() += config.noise_sigma * config.noise_sigma + jitter;

  Eigen::MatrixXd rhs(S.rows(), d + 1);
  rhs.col(0) = scores;
  rhs.rightCols(d) = B.transpose();

  Eigen::MatrixXd solved;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() == Eigen::Success) {
    solved = llt.solve(rhs);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success) {
      throw NumericalError("gradient posterior: factorization failed",
                           condition_estimate(S));
    }
    solved = ldlt.solve(rhs);
  }
  if (!solved.allFinite()) {
    throw NumericalError("gradient posterior: singular system after jitter",
                         condition_estimate(S));
  }

  post.mean = B * solved.col(0);
  Eigen::MatrixXd cov = C - B * solved.rightCols(d);
  post.covariance = 0.5 * (cov + cov.transpose());
  if (!post.mean.allFinite() || !post.covariance.allFinite()) {
    throw NumericalError("gradient posterior: non-finite result",
                         condition_estimate(S));
  }
  return post;
}

double uncertainty(const GradientPosterior& posterior, UncertaintyKind kind) {
  const Eigen::Index d = posterior.covariance.rows();
  if (d == 0) return 0.0;
  if (kind == UncertaintyKind::spectral) {
    return std::sqrt(std::max(0.0, spectral_norm(posterior.covariance)));
  }
  const double mean_var = posterior.covariance.trace() / static_cast<double>(d);
  return std::sqrt(std::max(0.0, mean_var));
}

double prop1_bound(int d, double delta, double cov_norm) {
  if (d < 1) {
    throw Error(Errc::invalid_argument, "prop1_bound: d must be >= 1");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error(Errc::invalid_argument, "prop1_bound: delta must be in (0,1)");
  }
  if (cov_norm < 0.0) {
    throw Error(Errc::invalid_argument, "prop1_bound: cov_norm must be >= 0");
  }
  const double omega =
      d + 2.0 * (std::sqrt(static_cast<double>(d)) + 1.0) * std::log(1.0 / delta);
  return omega * cov_norm;
}

double spectral_norm(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric,
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError("spectral_norm: eigensolve failed",
                         std::numeric_limits<double>::infinity());
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace zopo
