#include "core/ntk.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace zopo {

namespace {

using Activation = KernelSpec::Activation;

inline Eigen::ArrayXd act_value(Activation a, const Eigen::ArrayXd& x) {
  if (a == Activation::tanh) return x.tanh();
  return x.max(0.0);
}

inline Eigen::ArrayXd act_deriv(Activation a, const Eigen::ArrayXd& x) {
  if (a == Activation::tanh) {
    const Eigen::ArrayXd t = x.tanh();
    return 1.0 - t.square();
  }
  return (x > 0.0).cast<double>();
}

// second derivative; for relu the convention sigma'' = 0 (valid a.e.)
inline Eigen::ArrayXd act_deriv2(Activation a, const Eigen::ArrayXd& x) {
  if (a == Activation::tanh) {
    const Eigen::ArrayXd t = x.tanh();
    return -2.0 * t * (1.0 - t.square());
  }
  return Eigen::ArrayXd::Zero(x.size());
}

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                   Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

std::vector<int> FeedforwardNet::layer_dims() const {
  std::vector<int> dims;
  dims.reserve(widths.size() + 2);
  dims.push_back(input_dim);
  for (int w : widths) dims.push_back(w);
  dims.push_back(1);
  return dims;
}

int FeedforwardNet::parameter_count() const {
  const auto dims = layer_dims();
  int p = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p += dims[l] * dims[l + 1] + dims[l + 1];
  }
  return p;
}

FeedforwardNet FeedforwardNet::init(int input_dim, std::vector<int> widths,
                                    KernelSpec::Activation activation,
                                    std::uint64_t seed) {
  if (input_dim <= 0) {
    throw Error(Errc::invalid_argument, "network input dimension must be > 0");
  }
  for (int w : widths) {
    if (w <= 0) throw Error(Errc::invalid_argument, "network widths must be > 0");
  }
  FeedforwardNet net;
  net.input_dim = input_dim;
  net.widths = std::move(widths);
  net.activation = activation;

  const auto dims = net.layer_dims();
  net.theta.resize(net.parameter_count());
  Rng rng(seed);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < fan_out * fan_in; ++i) {
      net.theta[off++] = scale * rng.gauss();
    }
    for (int i = 0; i < fan_out; ++i) {
      net.theta[off++] = 0.0;  // biases
    }
  }
  return net;
}

FeedforwardNet FeedforwardNet::from_parameters(int input_dim,
                                               std::vector<int> widths,
                                               KernelSpec::Activation activation,
                                               Eigen::VectorXd theta) {
  FeedforwardNet net;
  net.input_dim = input_dim;
  net.widths = std::move(widths);
  net.activation = activation;
  net.theta = std::move(theta);
  if (net.theta.size() != net.parameter_count()) {
    throw Error(Errc::invalid_argument,
                "parameter vector length does not match network shapes");
  }
  if (!net.theta.allFinite()) {
    throw Error(Errc::invalid_argument, "network parameters must be finite");
  }
  return net;
}

double FeedforwardNet::forward(VecCRef z) const {
  if (z.size() != input_dim) {
    throw Error(Errc::invalid_argument, "network input dimension mismatch");
  }
  const auto dims = layer_dims();
  Eigen::VectorXd x = z;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int m_in = dims[l];
    const int m_out = dims[l + 1];
    RowMajorMap W(theta.data() + off, m_out, m_in);
    off += static_cast<Eigen::Index>(m_out) * m_in;
    Eigen::Map<const Eigen::VectorXd> b(theta.data() + off, m_out);
    off += m_out;
    Eigen::VectorXd s = W * x + b;
    if (l + 2 < dims.size()) {
      x = act_value(activation, s.array()).matrix();
    } else {
      x = s;
    }
  }
  return x[0];
}

double FeedforwardNet::value_and_grad_theta(VecCRef z, Eigen::VectorXd& g) const {
  return backprop(z, g, nullptr);
}

double FeedforwardNet::value_grad_and_input_jacobian(VecCRef z,
                                                     Eigen::VectorXd& g,
                                                     Eigen::MatrixXd& J) const {
  return backprop(z, g, &J);
}

double FeedforwardNet::backprop(VecCRef z, Eigen::VectorXd& g,
                                Eigen::MatrixXd* J) const {
  if (z.size() != input_dim) {
    throw Error(Errc::invalid_argument, "network input dimension mismatch");
  }
  const bool want_jacobian = J != nullptr;
  const auto dims = layer_dims();
  const std::size_t L = dims.size() - 1;  // number of linear layers
  const int d = input_dim;
  const int p = parameter_count();

  // forward pass, keeping layer inputs, preactivations and their tangents
  std::vector<Eigen::VectorXd> inputs(L);       // x_l
  std::vector<Eigen::VectorXd> preacts(L);      // s_l
  std::vector<Eigen::MatrixXd> input_tangents;  // dx_l/dz (m_l x d)
  std::vector<Eigen::MatrixXd> preact_tangents; // ds_l/dz (m_{l+1} x d)
  input_tangents.resize(L);
  preact_tangents.resize(L);

  std::vector<Eigen::Index> w_off(L), b_off(L);
  {
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < L; ++l) {
      w_off[l] = off;
      off += static_cast<Eigen::Index>(dims[l]) * dims[l + 1];
      b_off[l] = off;
      off += dims[l + 1];
    }
  }

  Eigen::VectorXd x = z;
  Eigen::MatrixXd xdot;
  if (want_jacobian) xdot = Eigen::MatrixXd::Identity(d, d);
  for (std::size_t l = 0; l < L; ++l) {
    RowMajorMap W(theta.data() + w_off[l], dims[l + 1], dims[l]);
    Eigen::Map<const Eigen::VectorXd> b(theta.data() + b_off[l], dims[l + 1]);
    inputs[l] = x;
    Eigen::VectorXd s = W * x + b;
    preacts[l] = s;
    if (want_jacobian) {
      input_tangents[l] = xdot;
      preact_tangents[l] = W * xdot;
    }
    if (l + 1 < L) {
      x = act_value(activation, s.array()).matrix();
      if (want_jacobian) {
        xdot = act_deriv(activation, s.array()).matrix().asDiagonal() *
               preact_tangents[l];
      }
    } else {
      x = s;
    }
  }
  const double value = x[0];

  // backward pass: delta_l = dphi/ds_l and its z-tangent
  g.resize(p);
  if (want_jacobian) J->resize(p, d);
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd delta_dot = Eigen::MatrixXd::Zero(1, d);
  for (std::size_t li = L; li-- > 0;) {
    const int m_in = dims[li];
    const int m_out = dims[li + 1];

    // parameter gradients for this layer
    for (int i = 0; i < m_out; ++i) {
      g.segment(w_off[li] + static_cast<Eigen::Index>(i) * m_in, m_in) =
          delta[i] * inputs[li];
    }
    g.segment(b_off[li], m_out) = delta;
    if (want_jacobian) {
      for (int i = 0; i < m_out; ++i) {
        J->middleRows(w_off[li] + static_cast<Eigen::Index>(i) * m_in, m_in) =
            inputs[li] * delta_dot.row(i) + delta[i] * input_tangents[li];
      }
      J->middleRows(b_off[li], m_out) = delta_dot;
    }

    if (li == 0) break;
    RowMajorMap W(theta.data() + w_off[li], m_out, m_in);
    const Eigen::VectorXd q = W.transpose() * delta;
    const Eigen::ArrayXd a1 = act_deriv(activation, preacts[li - 1].array());
    delta = (q.array() * a1).matrix();
    if (want_jacobian) {
      const Eigen::MatrixXd qdot = W.transpose() * delta_dot;
      const Eigen::ArrayXd a2 = act_deriv2(activation, preacts[li - 1].array());
      delta_dot = a1.matrix().asDiagonal() * qdot +
                  (q.array() * a2).matrix().asDiagonal() *
                      preact_tangents[li - 1];
    }
  }
  return value;
}

// ---------------------------------------------------------------------------

NtkKernel::NtkKernel(FeedforwardNet net, KernelSpec::InputDerivs mode)
    : net_(std::move(net)), mode_(mode) {}

double NtkKernel::eval(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  Eigen::VectorXd ga, gb;
  net_.value_and_grad_theta(a, ga);
  net_.value_and_grad_theta(b, gb);
  return ga.dot(gb);
}

Eigen::VectorXd NtkKernel::grad1(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  if (mode_ == KernelSpec::InputDerivs::finite_difference) {
    const double h = 1e-4;
    Eigen::VectorXd out(a.size());
    Eigen::VectorXd ap = a;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      ap[i] = a[i] + h;
      const double kp = eval(ap, b);
      ap[i] = a[i] - h;
      const double km = eval(ap, b);
      ap[i] = a[i];
      out[i] = (kp - km) / (2.0 * h);
    }
    return out;
  }
  Eigen::VectorXd ga, gb;
  Eigen::MatrixXd Ja;
  net_.value_grad_and_input_jacobian(a, ga, Ja);
  net_.value_and_grad_theta(b, gb);
  return Ja.transpose() * gb;
}

Eigen::MatrixXd NtkKernel::grad12(VecCRef a, VecCRef b) const {
  check_pair(a, b);
  if (mode_ == KernelSpec::InputDerivs::finite_difference) {
    const double h = 1e-4;
    const Eigen::Index d = a.size();
    Eigen::MatrixXd out(d, d);
    Eigen::VectorXd ap = a, bp = b;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        ap[i] = a[i] + h; bp[j] = b[j] + h;
        const double kpp = eval(ap, bp);
        bp[j] = b[j] - h;
        const double kpm = eval(ap, bp);
        ap[i] = a[i] - h; bp[j] = b[j] + h;
        const double kmp = eval(ap, bp);
        bp[j] = b[j] - h;
        const double kmm = eval(ap, bp);
        ap[i] = a[i]; bp[j] = b[j];
        out(i, j) = (kpp - kpm - kmp + kmm) / (4.0 * h * h);
      }
    }
    return out;
  }
  Eigen::VectorXd ga, gb;
  Eigen::MatrixXd Ja, Jb;
  net_.value_grad_and_input_jacobian(a, ga, Ja);
  net_.value_grad_and_input_jacobian(b, gb, Jb);
  return Ja.transpose() * Jb;
}

void NtkKernel::gram_blocks(VecCRef z, const std::vector<Eigen::VectorXd>& points,
                            Eigen::MatrixXd& K, Eigen::MatrixXd& B,
                            Eigen::MatrixXd& C) const {
  if (mode_ == KernelSpec::InputDerivs::finite_difference) {
    Kernel::gram_blocks(z, points, K, B, C);
    return;
  }
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = z.size();
  Eigen::VectorXd gz;
  Eigen::MatrixXd Jz;
  net_.value_grad_and_input_jacobian(z, gz, Jz);

  Eigen::MatrixXd feats(net_.parameter_count(), n);
  Eigen::VectorXd gi;
  for (Eigen::Index i = 0; i < n; ++i) {
    net_.value_and_grad_theta(points[i], gi);
    feats.col(i) = gi;
  }
  K.noalias() = feats.transpose() * feats;
  B.resize(d, n);
  B.noalias() = Jz.transpose() * feats;
  C.resize(d, d);
  C.noalias() = Jz.transpose() * Jz;
}

}  // namespace zopo
