#include "core/kernel.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/ntk.hpp"
#include "core/pool.hpp"

namespace zopo {

void Kernel::check_pair(VecCRef a, VecCRef b) {
  if (a.size() != b.size()) {
    throw Error(Errc::invalid_argument, "kernel inputs have different lengths");
  }
  if (!a.allFinite() || !b.allFinite()) {
    throw Error(Errc::invalid_argument, "kernel inputs must be finite");
  }
}

void Kernel::gram_blocks(VecCRef z, const std::vector<Eigen::VectorXd>& points,
                         Eigen::MatrixXd& K, Eigen::MatrixXd& B,
                         Eigen::MatrixXd& C) const {
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = z.size();
  K.resize(n, n);
  B.resize(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      K(i, j) = K(j, i) = eval(points[i], points[j]);
    }
    B.col(i) = grad1(z, points[i]);
  }
  C = grad12(z, z);
}

// ---------------------------------------------------------------------------
// KernelSpec

void KernelSpec::validate() const {
  if (kind != Kind::ntk) {
    if (lengthscale && *lengthscale <= 0.0) {
      throw Error(Errc::invalid_argument, "kernel lengthscale must be > 0");
    }
    if (variance <= 0.0) {
      throw Error(Errc::invalid_argument, "kernel variance must be > 0");
    }
  } else {
    if (widths.empty()) {
      throw Error(Errc::invalid_argument, "ntk widths must be non-empty");
    }
    for (int w : widths) {
      if (w <= 0) {
        throw Error(Errc::invalid_argument, "ntk widths must be positive");
      }
    }
  }
}

std::string KernelSpec::kind_name(Kind k) {
  switch (k) {
    case Kind::ntk: return "ntk";
    case Kind::matern52: return "matern52";
    case Kind::rbf: return "rbf";
  }
  return "ntk";
}

KernelSpec::Kind KernelSpec::parse_kind(const std::string& s) {
  if (s == "ntk") return Kind::ntk;
  if (s == "matern52") return Kind::matern52;
  if (s == "rbf") return Kind::rbf;
  throw Error(Errc::invalid_argument, "unknown kernel kind: " + s);
}

nlohmann::json KernelSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind_name(kind);
  if (kind == Kind::ntk) {
    j["widths"] = widths;
    j["activation"] = activation == Activation::tanh ? "tanh" : "relu";
    j["init_seed"] = init_seed;
    j["input_derivs"] =
        input_derivs == InputDerivs::analytic ? "analytic" : "fd";
  } else {
    if (lengthscale) j["lengthscale"] = *lengthscale;
    j["variance"] = variance;
  }
  return j;
}

KernelSpec KernelSpec::from_json(const nlohmann::json& j) {
  KernelSpec spec;
  if (j.contains("kind")) spec.kind = parse_kind(j.at("kind").get<std::string>());
  if (j.contains("lengthscale")) spec.lengthscale = j.at("lengthscale").get<double>();
  if (j.contains("variance")) spec.variance = j.at("variance").get<double>();
  if (j.contains("widths")) spec.widths = j.at("widths").get<std::vector<int>>();
  if (j.contains("activation")) {
    const auto a = j.at("activation").get<std::string>();
    if (a == "tanh") {
      spec.activation = Activation::tanh;
    } else if (a == "relu") {
      spec.activation = Activation::relu;
    } else {
      throw Error(Errc::invalid_argument, "unknown ntk activation: " + a);
    }
  }
  if (j.contains("init_seed")) spec.init_seed = j.at("init_seed").get<std::uint64_t>();
  if (j.contains("input_derivs")) {
    const auto m = j.at("input_derivs").get<std::string>();
    if (m == "analytic") {
      spec.input_derivs = InputDerivs::analytic;
    } else if (m == "fd") {
      spec.input_derivs = InputDerivs::finite_difference;
    } else {
      throw Error(Errc::invalid_argument, "unknown input_derivs mode: " + m);
    }
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Stationary kernels
//
// For an isotropic kernel k(a,b) = f(r) with u = a - b, r = |u|:
//   grad1  = phi(r) u                     with phi = f'(r)/r
//   grad12 = -phi(r) I - (phi'(r)/r) u u'
// Each kernel below supplies phi and phi'/r in forms that stay finite at r=0.

RbfKernel::RbfKernel(double variance, double lengthscale)
    : variance_(variance), lengthscale_(lengthscale) {
  if (variance <= 0.0 || lengthscale <= 0.0) {
    throw Error(Errc::invalid_argument, "rbf: variance and lengthscale must be > 0");
  }
}

double RbfKernel::eval(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  const double r2 = (a - b).squaredNorm();
  return variance_ * std::exp(-0.5 * r2 / (lengthscale_ * lengthscale_));
}

Eigen::VectorXd RbfKernel::grad1(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  const Eigen::VectorXd u = a - b;
  const double l2 = lengthscale_ * lengthscale_;
  const double e = variance_ * std::exp(-0.5 * u.squaredNorm() / l2);
  return (-e / l2) * u;
}

Eigen::MatrixXd RbfKernel::grad12(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  const Eigen::VectorXd u = a - b;
  const double l2 = lengthscale_ * lengthscale_;
  const double e = variance_ * std::exp(-0.5 * u.squaredNorm() / l2);
  Eigen::MatrixXd out = (e / l2) *
      (Eigen::MatrixXd::Identity(a.size(), a.size()) - (u * u.transpose()) / l2);
  return out;
}

Matern52Kernel::Matern52Kernel(double variance, double lengthscale)
    : variance_(variance), lengthscale_(lengthscale) {
  if (variance <= 0.0 || lengthscale <= 0.0) {
    throw Error(Errc::invalid_argument,
                "matern52: variance and lengthscale must be > 0");
  }
}

double Matern52Kernel::eval(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  const double r = (a - b).norm();
  const double s = std::sqrt(5.0) / lengthscale_;
  return variance_ * (1.0 + s * r + s * s * r * r / 3.0) * std::exp(-s * r);
}

Eigen::VectorXd Matern52Kernel::grad1(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  const Eigen::VectorXd u = a - b;
  const double r = u.norm();
  const double s = std::sqrt(5.0) / lengthscale_;
  // phi(r) = -(v s^2 / 3) (1 + s r) e^{-s r}
  const double phi = -(variance_ * s * s / 3.0) * (1.0 + s * r) * std::exp(-s * r);
  return phi * u;
}

Eigen::MatrixXd Matern52Kernel::grad12(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  const Eigen::VectorXd u = a - b;
  const double r = u.norm();
  const double s = std::sqrt(5.0) / lengthscale_;
  const double e = std::exp(-s * r);
  const double phi = -(variance_ * s * s / 3.0) * (1.0 + s * r) * e;
  const double dphi_over_r = (variance_ * s * s * s * s / 3.0) * e;
  return -phi * Eigen::MatrixXd::Identity(a.size(), a.size()) -
         dphi_over_r * (u * u.transpose());
}

// ---------------------------------------------------------------------------

std::unique_ptr<Kernel> make_kernel(const KernelSpec& spec, int dimension,
                                    const CandidatePool* pool,
                                    KernelSpec* resolved) {
  spec.validate();
  if (dimension <= 0) {
    throw Error(Errc::invalid_argument, "kernel dimension must be positive");
  }
  KernelSpec eff = spec;
  if (spec.kind != KernelSpec::Kind::ntk && !eff.lengthscale) {
    eff.lengthscale = pool != nullptr ? pool->median_pairwise_distance() : 1.0;
    if (*eff.lengthscale <= 0.0) eff.lengthscale = 1.0;
  }
  if (resolved != nullptr) *resolved = eff;
  switch (eff.kind) {
    case KernelSpec::Kind::rbf:
      return std::make_unique<RbfKernel>(eff.variance, *eff.lengthscale);
    case KernelSpec::Kind::matern52:
      return std::make_unique<Matern52Kernel>(eff.variance, *eff.lengthscale);
    case KernelSpec::Kind::ntk:
      return std::make_unique<NtkKernel>(
          FeedforwardNet::init(dimension, eff.widths, eff.activation,
                               eff.init_seed),
          eff.input_derivs);
  }
  throw Error(Errc::invalid_argument, "unreachable kernel kind");
}

}  // namespace zopo
