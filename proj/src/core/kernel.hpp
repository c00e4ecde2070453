#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace zopo {

class CandidatePool;

using VecCRef = Eigen::Ref<const Eigen::VectorXd>;

/// Twice-differentiable kernel contract for the derived gradient GP:
/// the value k(a,b), the first input-derivative d/da k(a,b), and the mixed
/// second derivative d^2/(da db') k(a,b).
///
/// Kernel state is immutable after construction; every method is pure and
/// safe to call concurrently.
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual double eval(VecCRef a, VecCRef b) const = 0;

  /// d/da k(a,b), a d-vector.
  virtual Eigen::VectorXd grad1(VecCRef a, VecCRef b) const = 0;

  /// d^2/(da db') k(a,b), a d x d matrix; grad12(z,z) is symmetric PSD.
  virtual Eigen::MatrixXd grad12(VecCRef a, VecCRef b) const = 0;

  /// All blocks needed to condition the gradient GP at z on `points`:
  ///   K(i,j) = k(p_i, p_j)          (n x n)
  ///   B.col(i) = d/dz k(z, p_i)     (d x n)
  ///   C = d^2/(dz dz') k(z, z)      (d x d)
  /// The default loops over the scalar entry points; implementations with a
  /// feature map override it to share per-point work.
  virtual void gram_blocks(VecCRef z,
                           const std::vector<Eigen::VectorXd>& points,
                           Eigen::MatrixXd& K, Eigen::MatrixXd& B,
                           Eigen::MatrixXd& C) const;

 protected:
  static void check_pair(VecCRef a, VecCRef b);
};

/// Declarative kernel description, expressible in run configuration files.
struct KernelSpec {
  enum class Kind { ntk, matern52, rbf };
  enum class Activation { tanh, relu };
  enum class InputDerivs { analytic, finite_difference };

  Kind kind = Kind::ntk;

  // matern52 / rbf; an unset lengthscale resolves to the median pairwise
  // distance of the pool at bind time
  std::optional<double> lengthscale;
  double variance = 1.0;

  // ntk
  std::vector<int> widths = {32, 32};
  Activation activation = Activation::tanh;
  std::uint64_t init_seed = 0;
  InputDerivs input_derivs = InputDerivs::analytic;

  void validate() const;
  nlohmann::json to_json() const;
  static KernelSpec from_json(const nlohmann::json& j);

  static std::string kind_name(Kind k);
  static Kind parse_kind(const std::string& s);
};

/// Isotropic RBF (squared exponential), k = v * exp(-r^2 / (2 l^2)).
class RbfKernel : public Kernel {
 public:
  RbfKernel(double variance, double lengthscale);
  double eval(VecCRef a, VecCRef b) const override;
  Eigen::VectorXd grad1(VecCRef a, VecCRef b) const override;
  Eigen::MatrixXd grad12(VecCRef a, VecCRef b) const override;

 private:
  double variance_, lengthscale_;
};

/// Matern with smoothness 5/2, the smallest standard Matern whose mixed
/// second derivative exists everywhere:
///   k = v (1 + sqrt(5) r/l + 5 r^2 / (3 l^2)) exp(-sqrt(5) r/l).
class Matern52Kernel : public Kernel {
 public:
  Matern52Kernel(double variance, double lengthscale);
  double eval(VecCRef a, VecCRef b) const override;
  Eigen::VectorXd grad1(VecCRef a, VecCRef b) const override;
  Eigen::MatrixXd grad12(VecCRef a, VecCRef b) const override;

 private:
  double variance_, lengthscale_;
};

/// Instantiates a kernel for inputs of the given dimension. `pool` supplies
/// the median-distance lengthscale heuristic when the spec leaves the
/// lengthscale unset; `resolved` (when non-null) receives the spec with every
/// defaulted value filled in.
std::unique_ptr<Kernel> make_kernel(const KernelSpec& spec, int dimension,
                                    const CandidatePool* pool = nullptr,
                                    KernelSpec* resolved = nullptr);

}  // namespace zopo
