#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "tdlab/errors.hpp"
#include "tdlab/features.hpp"
#include "tdlab/mrp.hpp"

namespace tdlab {

// The projected linear system A theta = b whose solution is the fixed point
// of the projected Bellman operator in span(Phi):
//   A = Phi' Psi (I - beta P) Phi,  b = Phi' Psi r,
// with Psi = diag(psi). Also carries the exact value function and the scale
// used for normalized error reporting.
struct ProjectedSystem {
  Eigen::MatrixXd a_matrix;
  Eigen::VectorXd b_vector;
  Eigen::VectorXd theta_star;
  Eigen::MatrixXd feature_gram;   // Phi' Psi Phi
  double mu = 0.0;                // smallest eigenvalue of the gram matrix
  Eigen::VectorXd value_exact;    // V = (I - beta P)^{-1} r
  double value_psi_norm = 0.0;    // || Phi theta_star ||_Psi
  double fixed_point_residual = 0.0;
};

// Weighted norm sqrt(v' Psi v).
inline double psi_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& psi) {
  if (v.size() != psi.size()) {
    throw DimensionMismatch("psi_norm: vector and weights differ in length");
  }
  return std::sqrt(v.cwiseProduct(v).dot(psi));
}

// One application of the Bellman operator, r + beta P v.
inline Eigen::VectorXd bellman_apply(const MarkovRewardProcess& mrp,
                                     const Eigen::VectorXd& v) {
  if (v.size() != mrp.n_states()) {
    throw DimensionMismatch("bellman_apply: value vector has wrong length");
  }
  return mrp.reward + mrp.discount * (mrp.transition * v);
}

// Psi-orthogonal projection of v onto span(Phi).
inline Eigen::VectorXd project(const Eigen::VectorXd& v,
                               const FeatureMap& features,
                               const Eigen::VectorXd& psi) {
  if (v.size() != features.n_states() || psi.size() != features.n_states()) {
    throw DimensionMismatch("project: inconsistent vector lengths");
  }
  const Eigen::MatrixXd& phi = features.matrix();
  const Eigen::MatrixXd gram = phi.transpose() * psi.asDiagonal() * phi;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw SingularSystem("project: gram matrix is not positive definite");
  }
  return phi * ldlt.solve(phi.transpose() * (psi.asDiagonal() * v));
}

inline ProjectedSystem build_system(const MarkovRewardProcess& mrp,
                                    const FeatureMap& features,
                                    const Eigen::VectorXd& psi) {
  const int S = mrp.n_states();
  if (features.n_states() != S) {
    std::ostringstream os;
    os << "feature matrix has " << features.n_states() << " rows for " << S
       << " states";
    throw DimensionMismatch(os.str());
  }
  if (psi.size() != S) throw DimensionMismatch("stationary weights have wrong length");

  ProjectedSystem sys;
  const Eigen::MatrixXd& phi = features.matrix();
  const Eigen::MatrixXd weighted = psi.asDiagonal() * phi;  // Psi Phi
  sys.feature_gram = phi.transpose() * weighted;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sys.feature_gram);
  if (eig.info() != Eigen::Success) {
    throw SolverFailure("gram matrix eigendecomposition failed");
  }
  sys.mu = eig.eigenvalues().minCoeff();
  if (sys.mu < 1e-12) {
    throw SingularSystem("gram matrix is numerically singular (mu < 1e-12)");
  }
  sys.a_matrix = weighted.transpose() *
                 (Eigen::MatrixXd::Identity(S, S) - mrp.discount * mrp.transition) *
                 phi;
  sys.b_vector = weighted.transpose() * mrp.reward;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.a_matrix);
  if (!lu.isInvertible()) {
    throw SingularSystem("projected system matrix is numerically singular");
  }
  sys.theta_star = lu.solve(sys.b_vector);

  Eigen::PartialPivLU<Eigen::MatrixXd> value_lu(
      Eigen::MatrixXd::Identity(S, S) - mrp.discount * mrp.transition);
  sys.value_exact = value_lu.solve(mrp.reward);

  const Eigen::VectorXd approx = phi * sys.theta_star;
  sys.value_psi_norm = psi_norm(approx, psi);
  sys.fixed_point_residual =
      psi_norm(approx - project(bellman_apply(mrp, approx), features, psi), psi);
  if (!(sys.fixed_point_residual <= 1e-9 * std::max(1.0, sys.value_psi_norm))) {
    throw SolverFailure("projected fixed-point residual " +
                        std::to_string(sys.fixed_point_residual) +
                        " is implausibly large");
  }
  return sys;
}

// Fixed-point iteration of the projected Bellman operator, expressed on the
// weight vector. Independent route to theta_star: the composed map is a
// beta-contraction in the Psi-weighted geometry, so the iteration converges
// from any start. Stops when successive weights move less than tol.
inline Eigen::VectorXd projected_value_iteration(const MarkovRewardProcess& mrp,
                                                 const FeatureMap& features,
                                                 const Eigen::VectorXd& psi,
                                                 double tol = 1e-10,
                                                 int max_iter = 10000) {
  if (!(tol > 0.0)) throw InvalidParameter("tolerance must be positive");
  const Eigen::MatrixXd& phi = features.matrix();
  if (phi.rows() != mrp.n_states() || psi.size() != mrp.n_states()) {
    throw DimensionMismatch("projected_value_iteration: inconsistent shapes");
  }
  const Eigen::MatrixXd gram = phi.transpose() * psi.asDiagonal() * phi;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw SingularSystem("projected_value_iteration: gram matrix not positive definite");
  }
  const Eigen::MatrixXd reader = psi.asDiagonal() * phi;  // Psi Phi
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(phi.cols());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd next =
        ldlt.solve(reader.transpose() * bellman_apply(mrp, phi * theta));
    const double move = (next - theta).norm();
    theta = next;
    if (move <= tol) return theta;
  }
  throw MaxIterExceeded("projected value iteration did not settle within " +
                        std::to_string(max_iter) + " sweeps");
}

}  // namespace tdlab
