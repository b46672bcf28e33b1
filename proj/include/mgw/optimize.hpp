#pragma once

#include <cmath>
#include <utility>

namespace mgw {

/// Golden-section minimisation of a convex function on [a, b], then the
/// endpoints are compared so boundary minima are returned exactly.
/// Returns (argmin, min).
template <class F>
std::pair<double, double> golden_section_min(F&& f, double a, double b, double tol = 1e-10) {
  const double invphi = (std::sqrt(5.0) - 1) / 2;
  double lo = a, hi = b;
  double c = hi - invphi * (hi - lo), d = lo + invphi * (hi - lo);
  double fc = f(c), fd = f(d);
  while (hi - lo > tol) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = f(d);
    }
  }
  double x = (lo + hi) / 2, fx = f(x);
  const double fa = f(a), fb = f(b);
  if (fa <= fx) {
    x = a;
    fx = fa;
  }
  if (fb < fx) {
    x = b;
    fx = fb;
  }
  return {x, fx};
}

/// Root of a function with f(lo) and f(hi) of opposite signs.
template <class F>
double bisect(F&& f, double lo, double hi, double tol = 1e-12) {
  double flo = f(lo);
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = (lo + hi) / 2;
    const double fm = f(mid);
    if (fm == 0) return mid;
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return (lo + hi) / 2;
}

}  // namespace mgw
