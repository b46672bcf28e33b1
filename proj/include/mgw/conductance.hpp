#pragma once

#include "mgw/model.hpp"
#include "mgw/optimize.hpp"
#include "mgw/parallel.hpp"
#include "mgw/sampler.hpp"
#include "mgw/stats.hpp"
#include "mgw/tree.hpp"
#include "mgw/walk.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace mgw {

// Two conductance conventions appear:
//  * plain walk RW_λ: c(parent, v) = λ^{1−|v|}, so the reversible measure has
//    mass d_o at the root and λ^{−k}(λ + d_v) at a depth-k vertex;
//  * weighted walk RWRE_λ: c(parent, v) = λ^{1−|v|} C_v with C_v the product of
//    the edge weights from o to v.
// The kernel's walk kind selects which one applies.

namespace detail {

// Virtual or materialised vertex for depth-first sweeps that must not grow
// the arena.
struct Cursor {
  std::uint64_t key;
  TypeIndex type;
  Growth growth;
  NodeId id;  // no_node when virtual
};

class Sweep {
 public:
  explicit Sweep(const Tree& t) : t_(t), k_(t.kernel()) {}

  template <class F>
  void children(const Cursor& v, int depth, F&& f) {
    if (static_cast<std::size_t>(depth) >= bufs_.size()) bufs_.resize(static_cast<std::size_t>(depth) + 1);
    if (v.id != no_node && t_.grown(v.id)) {
      const Node& n = t_.node(v.id);
      const std::uint32_t first = n.first_child, cnt = n.child_count;
      for (std::uint32_t j = 0; j < cnt; ++j) {
        const Node& c = t_.node(first + j);
        f(Cursor{c.key, c.type, c.growth, first + j}, c.weight);
      }
      return;
    }
    if (v.id != no_node && t_.frozen()) return;  // frozen frontier acts as a leaf
    // f recurses and may resize bufs_, so index afresh on every access.
    const auto slot = static_cast<std::size_t>(depth);
    k_.sample_offspring(v.key, v.type, v.growth, bufs_[slot]);
    const std::size_t n = bufs_[slot].size();
    for (std::size_t j = 0; j < n; ++j) {
      const ChildSpec c = bufs_[static_cast<std::size_t>(depth)][j];
      f(Cursor{derive_key(v.key, j + 1), c.type, c.growth, no_node}, c.weight);
    }
  }

  static Cursor root(const Tree& t) {
    const Node& n = t.node(t.root());
    return Cursor{n.key, n.type, n.growth, t.root()};
  }

 private:
  const Tree& t_;
  const GrowthKernel& k_;
  std::vector<std::vector<ChildSpec>> bufs_;
};

// Conductance of subtree(v) between v and level k (v at depth `depth`,
// edge into v carrying path weight `cv`). Returns 0 if level k is unreachable.
inline double subtree_conductance(Sweep& sw, const Cursor& v, int depth, int k, double lambda, double cv,
                                  bool weighted) {
  double c_sub = 0;
  sw.children(v, depth, [&](const Cursor& w, double alpha) {
    const double cw = weighted ? cv * alpha : 1.0;
    const double edge = std::pow(lambda, -depth) * cw;  // λ^{1−|w|}, |w| = depth+1
    if (depth + 1 == k) {
      c_sub += edge;
      return;
    }
    const double below = subtree_conductance(sw, w, depth + 1, k, lambda, cw, weighted);
    if (below > 0) c_sub += 1.0 / (1.0 / edge + 1.0 / below);
  });
  return c_sub;
}

}  // namespace detail

/// Effective conductance between the root and level k, by the series/parallel
/// recursion. Vertices below the materialised part are regenerated from their
/// keys (the arena is not grown); on a frozen tree the frontier is a leaf.
inline double effective_conductance(const Tree& t, int k, double lambda) {
  if (t.rayed()) throw TreeError("effective conductance needs a rooted tree");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  detail::Sweep sw(t);
  return detail::subtree_conductance(sw, detail::Sweep::root(t), 0, k, lambda, 1.0, t.kernel().weighted_walk());
}

/// Effective conductances to every level 1..kmax in one call.
inline std::vector<double> effective_conductances(const Tree& t, const std::vector<int>& ks, double lambda) {
  std::vector<double> out;
  for (int k : ks) out.push_back(effective_conductance(t, k, lambda));
  return out;
}

/// CSV: k,C,1/(kC).
inline void write_conductance_csv(std::ostream& os, const std::vector<int>& ks, const std::vector<double>& cs) {
  os << "k,C,inv_kC\n";
  char buf[96];
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", ks[i], cs[i], 1.0 / (ks[i] * cs[i]));
    os << buf;
  }
}

struct ResistanceGrowthReport {
  std::vector<int> ks;
  std::vector<double> median_kC;
  std::vector<double> exceedance;  // fraction with 1/C ≥ k^{1+ε}
  double epsilon = 0.5;
  TestReport trend;
  nlohmann::json to_json() const {
    return {{"k", ks}, {"median_kC", median_kC}, {"exceedance", exceedance}, {"epsilon", epsilon},
            {"trend", trend.to_json()}};
  }
};

/// k·C(o↔k) over N survival-conditioned trees (λ = ρ): medians per k, a
/// Mann–Kendall test for an upward trend, and the k^{1+ε} exceedance rates.
inline ResistanceGrowthReport resistance_growth_check(const KernelPtr& k, const std::vector<int>& ks, std::size_t N,
                                                      std::uint64_t seed, unsigned workers = 1, double eps = 0.5,
                                                      double alpha = 0.05) {
  const double lambda = k->rho();
  auto rows = parallel_map<std::vector<double>>(N, workers, [&](std::size_t i) {
    Stream rng = Stream::for_replica(seed, i);
    Tree t = sample_mgw_nonextinct(k, MeasureSpec{Measure::mgw_nonextinct, RootPolicy::canonical}, rng);
    return effective_conductances(t, ks, lambda);
  });
  ResistanceGrowthReport r;
  r.ks = ks;
  r.epsilon = eps;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    std::vector<double> kc;
    double exceed = 0;
    for (const auto& row : rows) {
      kc.push_back(ks[j] * row[j]);
      if (1.0 / row[j] >= std::pow(ks[j], 1 + eps)) exceed += 1;
    }
    r.median_kC.push_back(median(kc));
    r.exceedance.push_back(exceed / static_cast<double>(N));
  }
  r.trend = trend_test(r.median_kC, alpha);
  r.trend.name = "median_kC_trend";
  // An upward trend is the failure mode; a significant downward one is not.
  r.trend.pass = r.trend.pass || r.trend.extra["direction"].get<int>() < 0;
  return r;
}

struct LevelConductanceSums {
  std::vector<double> sums;  // Σ_{v∈D_ℓ} C_v^γ, ℓ = 0..n
  double zfrak = 0;          // ρ̄(γ)^{−n} Σ_{D_n} r̄_{χ_v} C_v^γ
};

namespace detail {
inline void conductance_levels(Sweep& sw, const Cursor& v, int depth, int n, double cg, double gamma,
                               const SpectralData& s, LevelConductanceSums& out) {
  out.sums[static_cast<std::size_t>(depth)] += cg;
  if (depth == n) {
    out.zfrak += s.r(v.type) * cg;
    return;
  }
  sw.children(v, depth, [&](const Cursor& w, double alpha) {
    conductance_levels(sw, w, depth + 1, n, cg * std::pow(alpha, gamma), gamma, s, out);
  });
}
}  // namespace detail

/// Per-level sums of C_v^γ and the multi-type Mandelbrot martingale at level n.
inline LevelConductanceSums level_conductance_sums(const Tree& t, double gamma, int n, GammaCurve& curve) {
  if (t.rayed()) throw TreeError("level sums need a rooted tree");
  const SpectralData& s = curve.at(gamma);
  LevelConductanceSums out;
  out.sums.assign(static_cast<std::size_t>(n) + 1, 0.0);
  detail::Sweep sw(t);
  detail::conductance_levels(sw, detail::Sweep::root(t), 0, n, 1.0, gamma, s, out);
  out.zfrak /= std::pow(s.rho, n);
  return out;
}

struct MandelbrotCheck {
  TypeIndex root_type = 0;
  double gamma = 0;
  int n = 0;
  double expected = 0;  // r̄^{(γ)}_a
  MeanCI mean;
  bool pass = false;
  nlohmann::json to_json() const {
    return {{"root_type", root_type}, {"gamma", gamma}, {"n", n}, {"expected", expected},
            {"zfrak", mean.to_json()}, {"pass", pass}};
  }
};

/// Monte Carlo mean of 𝔷^{(γ)}_n over N MGW trees rooted at type a, against
/// E^a 𝔷^{(γ)}_n = r̄^{(γ)}_a. A zero-variance sample must match to 1e-12.
inline MandelbrotCheck mandelbrot_check(const KernelPtr& k, TypeIndex a, double gamma, int n, std::size_t N,
                                        std::uint64_t seed, unsigned workers = 1, double band = 3.0) {
  GammaCurve curve(k->model());
  const SpectralData& s = curve.at(gamma);
  auto z = parallel_map_with_state<double>(
      N, workers, [&] { return GammaCurve(k->model()); },
      [&](GammaCurve& c, std::size_t i) {
        Tree t(k, derive_key(seed, i));
        t.make_root(a);
        return level_conductance_sums(t, gamma, n, c).zfrak;
      });
  MandelbrotCheck r;
  r.root_type = a;
  r.gamma = gamma;
  r.n = n;
  r.expected = s.r(a);
  r.mean = mean_ci(z);
  r.pass = r.mean.se < 1e-12 ? std::abs(r.mean.mean - r.expected) < 1e-12 : r.mean.covers(r.expected, band);
  return r;
}

struct ClassifierReport {
  double lambda = 0;
  double p_lambda = 0;
  double gamma_star = 0;
  std::string verdict;
  double rho_circ = NAN;
  double kappa = NAN;
  nlohmann::json to_json() const {
    auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json("inf"); };
    return {{"lambda", lambda}, {"p_lambda", p_lambda}, {"gamma_star", gamma_star}, {"verdict", verdict},
            {"rho_circ", num(rho_circ)}, {"kappa", num(kappa)}};
  }
};

/// p_λ = inf_{γ∈[0,1]} ρ̄(γ)/λ^γ and its minimiser.
inline std::pair<double, double> p_lambda(GammaCurve& curve, double lambda, double tol = 1e-10) {
  const double ll = std::log(lambda);
  auto [g, v] = golden_section_min([&](double x) { return curve.log_rho(x) - x * ll; }, 0.0, 1.0, tol);
  return {std::exp(v), g};
}

inline std::string verdict_for(double p, double band = 1e-9) {
  if (std::abs(p - 1) < band) return "critical-indeterminate";
  return p < 1 ? "positive-recurrent" : "transient";
}

/// ρ°: the bias with p_{ρ°} = 1 (p_λ is nonincreasing in λ).
inline double critical_bias(GammaCurve& curve) {
  auto p = [&](double l) { return p_lambda(curve, l).first; };
  double lo = 1, hi = 1;
  for (int i = 0; i < 200 && p(lo) <= 1; ++i) lo /= 2;
  for (int i = 0; i < 200 && p(hi) >= 1; ++i) hi *= 2;
  const double x = bisect([&](double ll) { return std::log(p(std::exp(ll))); }, std::log(lo), std::log(hi), 1e-13);
  return std::exp(x);
}

/// κ: first γ ≥ 0 with ρ̄(γ) = (ρ°)^γ; +∞ when log ρ̄(γ) − γ log ρ° stays
/// positive on [0, γ_max].
inline double kappa(GammaCurve& curve, double rho_circ, double gamma_max = 50.0) {
  const double lr = std::log(rho_circ);
  auto g = [&](double x) { return curve.log_rho(x) - x * lr; };
  const auto [arg, val] = golden_section_min(g, 0.0, gamma_max, 1e-10);
  if (val > 1e-12) return std::numeric_limits<double>::infinity();
  if (val >= 0) return arg;
  return bisect(g, 0.0, arg, 1e-13);
}

inline ClassifierReport classify_rwre(const Model& m, double lambda, double band = 1e-9) {
  GammaCurve curve(m);
  ClassifierReport r;
  r.lambda = lambda;
  std::tie(r.p_lambda, r.gamma_star) = p_lambda(curve, lambda);
  r.verdict = verdict_for(r.p_lambda, band);
  r.rho_circ = critical_bias(curve);
  r.kappa = kappa(curve, r.rho_circ);
  return r;
}

struct RecurrenceCheck {
  double lambda = 0;
  std::string verdict;  // analytic
  std::vector<std::uint64_t> times;
  std::vector<double> root_fraction;     // mean fraction of time at the root
  std::vector<double> mean_max_depth;
  std::vector<double> mean_last_return;  // mean of (last visit to root)/T
  bool pass = false;
  std::string criterion;
  nlohmann::json to_json() const {
    return {{"lambda", lambda}, {"verdict", verdict}, {"T", times}, {"root_fraction", root_fraction},
            {"mean_max_depth", mean_max_depth}, {"mean_last_return_over_T", mean_last_return},
            {"criterion", criterion}, {"pass", pass}};
  }
};

/// N walks of RWRE_λ (weights used when the kernel is weighted) on
/// independent trees, observed at the checkpoint times. The pass rule follows
/// the analytic verdict: recurrent — root occupation stays positive and the
/// max depth grows sub-diffusively; transient — the last-return fraction
/// decreases in T; critical — max depth scales like √T within a factor 2.
inline RecurrenceCheck recurrence_simulation_check(const KernelPtr& k, double lambda,
                                                   const std::vector<std::uint64_t>& times, std::size_t N,
                                                   std::uint64_t seed, unsigned workers = 1) {
  RecurrenceCheck r;
  r.lambda = lambda;
  r.times = times;
  GammaCurve curve(k->model());
  r.verdict = k->weighted_walk() ? verdict_for(p_lambda(curve, lambda).first)
                                 : verdict_for(std::min(k->rho(), k->rho() / lambda));
  const std::uint64_t Tmax = times.back();
  struct Row {
    std::vector<double> root, depth, last;
  };
  auto rows = parallel_map<Row>(N, workers, [&](std::size_t i) {
    Stream rng = Stream::for_replica(seed, i);
    Tree t = sample_mgw_nonextinct(k, MeasureSpec{Measure::mgw_nonextinct, RootPolicy::canonical}, rng);
    Row row;
    NodeId v = t.root();
    std::uint64_t at_root = 1, last = 0;
    int maxd = 0;
    std::size_t next = 0;
    for (std::uint64_t s = 1; s <= Tmax; ++s) {
      v = step(t, v, lambda, rng);
      if (v == t.root()) {
        ++at_root;
        last = s;
      }
      maxd = std::max(maxd, t.depth(v));
      while (next < times.size() && times[next] == s) {
        row.root.push_back(static_cast<double>(at_root) / static_cast<double>(s + 1));
        row.depth.push_back(maxd);
        row.last.push_back(static_cast<double>(last) / static_cast<double>(s));
        ++next;
      }
    }
    return row;
  });
  for (std::size_t j = 0; j < times.size(); ++j) {
    double a = 0, b = 0, c = 0;
    for (const auto& row : rows) {
      a += row.root[j];
      b += row.depth[j];
      c += row.last[j];
    }
    r.root_fraction.push_back(a / static_cast<double>(N));
    r.mean_max_depth.push_back(b / static_cast<double>(N));
    r.mean_last_return.push_back(c / static_cast<double>(N));
  }
  const std::size_t J = times.size();
  const double growth = std::log(r.mean_max_depth[J - 1] / r.mean_max_depth[0]) /
                        std::log(static_cast<double>(times[J - 1]) / static_cast<double>(times[0]));
  if (r.verdict == "positive-recurrent") {
    r.criterion = "root fraction > 0.01 at every T and max-depth growth exponent < 0.25";
    r.pass = growth < 0.25 && *std::min_element(r.root_fraction.begin(), r.root_fraction.end()) > 0.01;
  } else if (r.verdict == "transient") {
    r.criterion = "last-return/T strictly decreasing in T";
    r.pass = true;
    for (std::size_t j = 1; j < J; ++j) r.pass = r.pass && r.mean_last_return[j] < r.mean_last_return[j - 1];
  } else {
    r.criterion = "max depth / sqrt(T) ratio between first and last T within a factor 2";
    const double ratio = (r.mean_max_depth[J - 1] / std::sqrt(static_cast<double>(times[J - 1]))) /
                         (r.mean_max_depth[0] / std::sqrt(static_cast<double>(times[0])));
    r.pass = ratio >= 0.5 && ratio <= 2.0;
  }
  return r;
}

struct OccupationCheck {
  NodeId vertex = no_node;
  int depth = 0;
  std::uint32_t d_v = 0, d_o = 0;
  double expected = 0;
  MeanCI visits;
  bool pass = false;
  nlohmann::json to_json() const {
    return {{"vertex", vertex}, {"depth", depth}, {"d_v", d_v}, {"d_o", d_o}, {"expected", expected},
            {"visits", visits.to_json()}, {"pass", pass}};
  }
};

/// Mean number of visits to v per excursion of RW_λ from the root on a frozen
/// rooted tree, against the reversible-measure ratio (λ + d_v)/(d_o λ^{|v|}).
inline OccupationCheck occupation_check(Tree& t, NodeId v, double lambda, std::size_t excursions, Stream& rng,
                                        double band = 3.0) {
  if (!t.frozen() || t.rayed()) throw TreeError("occupation check needs a frozen rooted tree");
  OccupationCheck r;
  r.vertex = v;
  r.depth = t.depth(v);
  r.d_v = t.degree(v);
  r.d_o = t.degree(t.root());
  if (r.d_o == 0) throw TreeError("root has no children");
  r.expected = (lambda + r.d_v) / (r.d_o * std::pow(lambda, r.depth));
  std::vector<double> counts;
  counts.reserve(excursions);
  NodeId x = t.root();
  for (std::size_t e = 0; e < excursions; ++e) {
    double c = 0;
    do {
      x = step(t, x, lambda, rng);
      if (x == v) c += 1;
    } while (x != t.root());
    counts.push_back(c);
  }
  r.visits = mean_ci(counts);
  r.pass = r.visits.covers(r.expected, band);
  return r;
}

/// c(v,parent)·P(v→w) − c(v,w)·P(v→parent) at a non-root vertex, maximised
/// over children w; zero for a reversible network.
inline double detailed_balance_defect(Tree& t, NodeId v, double lambda) {
  t.ensure_grown(v);
  const bool weighted = t.kernel().weighted_walk();
  double cv = 1;
  int depth = t.depth(v);
  if (weighted)
    for (NodeId u = v; u != t.root(); u = t.parent_if_present(u)) cv *= t.weight(u);
  const double c_up = std::pow(lambda, 1 - depth) * cv;
  const double total = lambda + child_mass(t, v);
  double worst = 0;
  for (std::uint32_t j = 0; j < t.degree(v); ++j) {
    const NodeId w = t.child(v, j);
    const double c_down = std::pow(lambda, -depth) * cv * (weighted ? t.weight(w) : 1.0);
    const double p_down = (weighted ? t.weight(w) : 1.0) / total;
    const double p_up = lambda / total;
    worst = std::max(worst, std::abs(c_up * p_down - c_down * p_up) / (c_up * p_down));
  }
  return worst;
}

}  // namespace mgw
