#pragma once

// Shape features of a discharge curve: high plateau, dip, low plateau.
//
// The curve is resampled on a uniform specific-capacity grid and smoothed
// with a 21-point running median. The dip is the lowest point between the
// first and last local maxima of the smoothed curve (endpoints count as
// maxima). Samples before the dip form the high plateau; samples after it
// and above the cutoff voltage plus 50 mV form the low plateau.

#include <Eigen/Dense>

#include <optional>

#include "lis/dae.hpp"

namespace lis {

struct CurveFeatures {
  double specific_capacity = 0;  // mAh/g
  double duration = 0;           // s
  std::optional<double> high_plateau_mean;  // V
  std::optional<double> low_plateau_mean;   // V
  std::optional<double> dip_voltage;        // V
  std::optional<double> dip_capacity;       // mAh/g
  std::optional<double> dip_time;           // s
  // |dV/dQ| in V per mAh/g at the middle of the high plateau, and the largest
  // value between there and the dip.
  std::optional<double> mid_plateau_slope;
  std::optional<double> terminal_plateau_slope;

  bool has_dip() const { return dip_voltage.has_value(); }
  std::optional<double> slope_ratio() const;
};

inline constexpr int kFeatureGridPoints = 1000;
inline constexpr int kMedianWindow = 21;
inline constexpr double kLowPlateauMargin = 0.05;  // V above cutoff
inline constexpr double kMinDipDepth = 1e-3;       // V

/// Running median with a centered odd window, shrinking at the edges.
Eigen::VectorXd running_median(const Eigen::VectorXd& x, int window);

/// Linear interpolation of (x, y) at `at`; x ascending, clamps at the ends.
Eigen::VectorXd interpolate(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& at);

CurveFeatures extract_features(const SimulationTrace& trace, double v_cutoff);

}  // namespace lis
