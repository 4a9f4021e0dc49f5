#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace fsmle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
inline double sym_op_norm(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Symmetric positive semidefinite matrix with cached eigendecomposition.
// Eigenvalues below rel_clip * lambda_max are clipped to zero; the pre-clip
// minimum is kept so callers can distinguish "numerically zero" from
// "genuinely indefinite".  Inverse square roots refuse clipped directions.
class Spd {
 public:
  static constexpr double rel_clip = 1e-10;

  Spd() = default;

  explicit Spd(const MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("Spd: not square");
    MatrixXd sym = 0.5 * (m + m.transpose());
    if ((m - sym).cwiseAbs().maxCoeff() >
        1e-8 * (1.0 + sym.cwiseAbs().maxCoeff())) {
      throw std::invalid_argument("Spd: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    if (es.info() != Eigen::Success) {
      throw std::runtime_error("Spd: eigendecomposition failed");
    }
    vecs_ = es.eigenvectors();
    raw_vals_ = es.eigenvalues();
    raw_min_ = raw_vals_.minCoeff();
    double lmax = raw_vals_.maxCoeff();
    double clip = rel_clip * std::max(lmax, 0.0);
    vals_ = raw_vals_.cwiseMax(0.0);
    for (int i = 0; i < vals_.size(); ++i) {
      if (vals_[i] < clip) vals_[i] = 0.0;
    }
  }

  int dim() const { return static_cast<int>(vals_.size()); }
  double raw_min_eig() const { return raw_min_; }
  double min_eig() const { return vals_.minCoeff(); }
  double max_eig() const { return vals_.maxCoeff(); }
  double trace() const { return vals_.sum(); }

  // PSD up to the clip tolerance.
  bool is_psd() const {
    return raw_min_ >= -rel_clip * std::max(vals_.maxCoeff(), 0.0);
  }
  bool is_invertible() const { return vals_.minCoeff() > 0.0; }

  MatrixXd mat() const {
    return vecs_ * vals_.asDiagonal() * vecs_.transpose();
  }
  MatrixXd sqrt() const { return transform([](double v) { return std::sqrt(v); }); }
  MatrixXd inverse() const {
    require_invertible("inverse");
    return transform([](double v) { return 1.0 / v; });
  }
  MatrixXd inv_sqrt() const {
    require_invertible("inv_sqrt");
    return transform([](double v) { return 1.0 / std::sqrt(v); });
  }

  VectorXd apply_inv_sqrt(const VectorXd& x) const {
    require_invertible("apply_inv_sqrt");
    VectorXd y = vecs_.transpose() * x;
    for (int i = 0; i < y.size(); ++i) y[i] /= std::sqrt(vals_[i]);
    return vecs_ * y;
  }

  double quad(const VectorXd& x) const {
    VectorXd y = vecs_.transpose() * x;
    return (y.array().square() * vals_.array()).sum();
  }

  double log_det() const {
    require_invertible("log_det");
    return vals_.array().log().sum();
  }

 private:
  template <class F>
  MatrixXd transform(F f) const {
    VectorXd t = vals_;
    for (int i = 0; i < t.size(); ++i) t[i] = t[i] > 0.0 ? f(t[i]) : 0.0;
    return vecs_ * t.asDiagonal() * vecs_.transpose();
  }

  void require_invertible(const char* what) const {
    if (!is_invertible()) {
      throw std::domain_error(std::string("Spd::") + what +
                              ": matrix is singular after clipping");
    }
  }

  MatrixXd vecs_;
  VectorXd vals_;
  VectorXd raw_vals_;
  double raw_min_ = 0.0;
};

}  // namespace fsmle
