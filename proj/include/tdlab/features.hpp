#pragma once

#include <Eigen/Dense>
#include <sstream>
#include <string>
#include <vector>

#include "tdlab/errors.hpp"
#include "tdlab/mrp.hpp"

namespace tdlab {

// State-feature matrix, one row per state. Construction verifies full column
// rank; a rank-deficient map would make the projected fixed point ambiguous.
// With strict set, row norms must not exceed 1.
class FeatureMap {
 public:
  explicit FeatureMap(Eigen::MatrixXd phi, bool strict = false)
      : phi_(std::move(phi)) {
    if (phi_.rows() < 1 || phi_.cols() < 1) {
      throw DimensionMismatch("feature matrix must be non-empty");
    }
    if (!phi_.allFinite()) throw SpecError("feature matrix has non-finite entries");
    if (phi_.cols() > phi_.rows()) {
      std::ostringstream os;
      os << "more features (" << phi_.cols() << ") than states (" << phi_.rows()
         << "); columns cannot be independent";
      throw RankDeficientFeatures(os.str());
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi_);
    if (qr.rank() < phi_.cols()) {
      std::ostringstream os;
      os << "feature matrix has rank " << qr.rank() << " < " << phi_.cols();
      throw RankDeficientFeatures(os.str());
    }
    if (strict && max_row_norm() > 1.0 + 1e-12) {
      std::ostringstream os;
      os << "strict mode: feature row norm " << max_row_norm() << " exceeds 1";
      throw AssumptionViolated(os.str());
    }
  }

  static FeatureMap identity(int n_states) {
    return FeatureMap(Eigen::MatrixXd::Identity(n_states, n_states));
  }

  const Eigen::MatrixXd& matrix() const { return phi_; }
  int n_states() const { return static_cast<int>(phi_.rows()); }
  int dim() const { return static_cast<int>(phi_.cols()); }
  double max_row_norm() const { return phi_.rowwise().norm().maxCoeff(); }

 private:
  Eigen::MatrixXd phi_;
};

// Rescales the whole map so the largest row norm becomes 1. Values and fixed
// points are unchanged up to the matching rescaling of the weights.
inline FeatureMap normalize_features(const FeatureMap& features) {
  const double m = features.max_row_norm();
  if (m <= 0.0) throw RankDeficientFeatures("cannot normalize an all-zero feature map");
  return FeatureMap(features.matrix() / m);
}

// Diagnostics for the boundedness conventions many of the error bounds
// assume (|reward| <= 1, feature row norms <= 1). Violations are legal but
// worth surfacing next to any bound computed from such a model.
inline std::vector<std::string> assumption_warnings(
    const MarkovRewardProcess& mrp, const FeatureMap& features) {
  std::vector<std::string> out;
  const double r_max = mrp.reward.cwiseAbs().maxCoeff();
  if (r_max > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "reward magnitude " << r_max << " exceeds 1; bound constants assume |r| <= 1";
    out.push_back(os.str());
  }
  const double f_max = features.max_row_norm();
  if (f_max > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "feature row norm " << f_max
       << " exceeds 1; bound constants assume unit-ball features";
    out.push_back(os.str());
  }
  return out;
}

}  // namespace tdlab
