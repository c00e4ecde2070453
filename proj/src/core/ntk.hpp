#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "core/kernel.hpp"

namespace zopo {

/// Fully connected scalar-output network in the parameterization used for
/// empirical tangent kernels: weights drawn standard normal scaled by
/// 1/sqrt(fan-in), biases zero, parameters frozen after initialization.
///
/// theta packs, layer by layer, the weight matrix in row-major order
/// followed by the bias vector.
struct FeedforwardNet {
  int input_dim = 0;
  std::vector<int> widths;       // hidden layer sizes
  KernelSpec::Activation activation = KernelSpec::Activation::tanh;
  Eigen::VectorXd theta;

  static FeedforwardNet init(int input_dim, std::vector<int> widths,
                             KernelSpec::Activation activation,
                             std::uint64_t seed);
  /// Same shapes, explicit parameters (used to probe the parameter space).
  static FeedforwardNet from_parameters(int input_dim, std::vector<int> widths,
                                        KernelSpec::Activation activation,
                                        Eigen::VectorXd theta);

  /// Layer input/output sizes: [d, widths..., 1].
  std::vector<int> layer_dims() const;
  int parameter_count() const;

  double forward(VecCRef z) const;

  /// phi(theta, z) and g = d phi / d theta (length p).
  double value_and_grad_theta(VecCRef z, Eigen::VectorXd& g) const;

  /// Additionally J = d g / d z (p x d), the mixed parameter-input Jacobian.
  double value_grad_and_input_jacobian(VecCRef z, Eigen::VectorXd& g,
                                       Eigen::MatrixXd& J) const;

 private:
  double backprop(VecCRef z, Eigen::VectorXd& g, Eigen::MatrixXd* J) const;
};

/// Empirical tangent kernel of a frozen network:
///   k(a,b) = g(a) . g(b),          g(z) = d phi / d theta at theta0
///   d/da k = J(a)' g(b),           J(z) = d g / d z
///   d^2/(da db') k = J(a)' J(b)
/// so the Gram matrix is PSD by construction. Input derivatives come from the
/// layer-wise chain rule; a finite-difference mode is selectable for
/// cross-checking.
class NtkKernel : public Kernel {
 public:
  NtkKernel(FeedforwardNet net,
            KernelSpec::InputDerivs mode = KernelSpec::InputDerivs::analytic);

  double eval(VecCRef a, VecCRef b) const override;
  Eigen::VectorXd grad1(VecCRef a, VecCRef b) const override;
  Eigen::MatrixXd grad12(VecCRef a, VecCRef b) const override;
  void gram_blocks(VecCRef z, const std::vector<Eigen::VectorXd>& points,
                   Eigen::MatrixXd& K, Eigen::MatrixXd& B,
                   Eigen::MatrixXd& C) const override;

  const FeedforwardNet& network() const { return net_; }

 private:
  FeedforwardNet net_;
  KernelSpec::InputDerivs mode_;
};

}  // namespace zopo
