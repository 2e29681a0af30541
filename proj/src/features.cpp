#include "lis/features.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lis {

std::optional<double> CurveFeatures::slope_ratio() const {
  if (!mid_plateau_slope || !terminal_plateau_slope || *mid_plateau_slope <= 0) return std::nullopt;
  return *terminal_plateau_slope / *mid_plateau_slope;
}

Eigen::VectorXd running_median(const Eigen::VectorXd& x, int window) {
  const Eigen::Index n = x.size();
  const Eigen::Index half = window / 2;
  Eigen::VectorXd out(n);
  std::vector<double> buf;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, k - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, k + half);
    buf.assign(x.data() + lo, x.data() + hi + 1);
    const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    if (buf.size() % 2 == 1) {
      out(k) = *mid;
    } else {
      const double upper = *mid;
      const double lower = *std::max_element(buf.begin(), mid);
      out(k) = 0.5 * (lower + upper);
    }
  }
  return out;
}

Eigen::VectorXd interpolate(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& at) {
  Eigen::VectorXd out(at.size());
  const Eigen::Index n = x.size();
  for (Eigen::Index k = 0; k < at.size(); ++k) {
    const double a = at(k);
    if (a <= x(0)) {
      out(k) = y(0);
      continue;
    }
    if (a >= x(n - 1)) {
      out(k) = y(n - 1);
      continue;
    }
    const auto it = std::upper_bound(x.data(), x.data() + n, a);
    const Eigen::Index hi = it - x.data();
    const Eigen::Index lo = hi - 1;
    const double span = x(hi) - x(lo);
    const double w = span > 0 ? (a - x(lo)) / span : 0.0;
    out(k) = y(lo) + w * (y(hi) - y(lo));
  }
  return out;
}

CurveFeatures extract_features(const SimulationTrace& trace, double v_cutoff) {
  CurveFeatures f;
  f.specific_capacity = trace.specific_capacity;
  f.duration = trace.end_time() - (trace.samples.empty() ? 0.0 : trace.samples.front().state.t);
  if (trace.size() < 10) return f;

  const Eigen::VectorXd cap = trace.capacities();
  const Eigen::VectorXd volt = trace.voltages();
  const double q_end = cap(cap.size() - 1);
  if (!(q_end > 0)) return f;

  const Eigen::Index n = kFeatureGridPoints;
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(n, 0.0, q_end);
  const Eigen::VectorXd v = interpolate(cap, volt, grid);
  const Eigen::VectorXd smooth = running_median(v, kMedianWindow);

  std::vector<Eigen::Index> maxima;
  for (Eigen::Index k = 0; k < n; ++k) {
    const bool left = k == 0 || smooth(k) >= smooth(k - 1);
    const bool right = k == n - 1 || smooth(k) > smooth(k + 1);
    if (left && right) maxima.push_back(k);
  }
  if (maxima.size() < 2) return f;
  const Eigen::Index first = maxima.front();
  const Eigen::Index last = maxima.back();
  Eigen::Index dip = first;
  smooth.segment(first, last - first + 1).minCoeff(&dip);
  dip += first;
  if (dip <= first || dip >= last) return f;
  if (smooth(last) - smooth(dip) < kMinDipDepth || smooth(first) - smooth(dip) < kMinDipDepth) return f;

  f.dip_voltage = smooth(dip);
  f.dip_capacity = grid(dip);
  f.dip_time = trace.samples.front().state.t + grid(dip) * 3.6 * trace.sulfur_mass / trace.current;
  f.high_plateau_mean = v.head(dip).mean();

  double low_sum = 0;
  int low_count = 0;
  for (Eigen::Index k = dip + 1; k < n; ++k) {
    if (v(k) > v_cutoff + kLowPlateauMargin) {
      low_sum += v(k);
      ++low_count;
    }
  }
  if (low_count > 0) f.low_plateau_mean = low_sum / low_count;

  const double dq = grid(1) - grid(0);
  const Eigen::Index mid = dip / 2;
  constexpr Eigen::Index reach = 5;
  if (mid - reach >= 0 && mid + reach < dip) {
    f.mid_plateau_slope = std::abs(smooth(mid + reach) - smooth(mid - reach)) / (2 * reach * dq);
    double steepest = 0;
    for (Eigen::Index k = std::max<Eigen::Index>(mid, 1); k < dip; ++k)
      steepest = std::max(steepest, std::abs(smooth(k + 1) - smooth(k - 1)) / (2 * dq));
    f.terminal_plateau_slope = steepest;
  }
  return f;
}

}  // namespace lis
