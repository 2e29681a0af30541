#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace lis {

template <typename Scalar>
struct RootResult {
  Scalar x;
  Scalar fx;
  int iterations;
};

/// Newton's method safeguarded by bisection on a sign-changing bracket.
///
/// `fn(x)` returns the pair (f(x), f'(x)). `lo` and `hi` must bracket a root
/// (f(lo) and f(hi) of opposite sign or zero); `guess` is clamped into the
/// bracket. Iteration stops once the bracket or the Newton step is below
/// `xtol`, or |f| <= `ftol`. Returns nullopt if the bracket does not hold
/// or f is not finite somewhere inside it.
template <typename Scalar, typename Fn>
std::optional<RootResult<Scalar>> newton_bisect(Fn&& fn, Scalar lo, Scalar hi, Scalar guess, Scalar xtol, Scalar ftol,
                                                int max_iter = 100) {
  auto [flo, dlo] = fn(lo);
  auto [fhi, dhi] = fn(hi);
  (void)dlo;
  (void)dhi;
  if (!std::isfinite(flo) || !std::isfinite(fhi)) return std::nullopt;
  if (flo == Scalar(0)) return RootResult<Scalar>{lo, flo, 0};
  if (fhi == Scalar(0)) return RootResult<Scalar>{hi, fhi, 0};
  if ((flo > 0) == (fhi > 0)) return std::nullopt;
  // Orient so that f(lo) < 0 < f(hi).
  if (flo > 0) std::swap(lo, hi);

  Scalar x = guess;
  if (!(x > std::min(lo, hi) && x < std::max(lo, hi))) x = (lo + hi) / 2;
  // Step before last; a Newton step that fails to halve it gives way to bisection.
  Scalar dx_old = std::abs(hi - lo);
  Scalar dx = dx_old;
  for (int it = 1; it <= max_iter; ++it) {
    auto [fx, dfx] = fn(x);
    if (!std::isfinite(fx)) return std::nullopt;
    if (std::abs(fx) <= ftol) return RootResult<Scalar>{x, fx, it};
    if (fx < 0)
      lo = x;
    else
      hi = x;

    Scalar next = x;
    bool newton_ok = std::isfinite(dfx) && dfx != Scalar(0);
    if (newton_ok) {
      next = x - fx / dfx;
      newton_ok = next > std::min(lo, hi) && next < std::max(lo, hi) && std::abs(next - x) <= dx_old / 2;
    }
    if (!newton_ok) next = (lo + hi) / 2;
    const Scalar step = std::abs(next - x);
    dx_old = dx;
    dx = step;
    x = next;
    if (step <= xtol || std::abs(hi - lo) <= xtol) {
      auto [fn_x, dfn_x] = fn(x);
      (void)dfn_x;
      return RootResult<Scalar>{x, fn_x, it};
    }
  }
  auto [fx, dfx] = fn(x);
  (void)dfx;
  return RootResult<Scalar>{x, fx, max_iter};
}

}  // namespace lis
