#pragma once

#include "mgw/sampler.hpp"
#include "mgw/stats.hpp"
#include "mgw/tree.hpp"
#include "mgw/walk.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mgw {

/// Truncated normalised population sizes Ŵ_v and harmonic coordinates S_v.
///
/// fixed(m):  Ŵ_v = Ŵ^{(m)}_v for every v.
/// tiered(L): Ŵ_v = Ŵ^{(L − level(v))}_v, so ρŴ_v = Σ_w α_w Ŵ_w holds exactly
///            and M_t = S_{Y_t} is an exact martingale below level L.
/// Ŵ^{(0)}_v = r_{χ_v}, Ŵ^{(m)}_v = (1/ρ) Σ_children α_w Ŵ^{(m−1)}_w (α ≡ 1 for
/// the plain walk). Below the materialised part of the tree the recursion
/// regenerates offspring from node keys, so nothing is grown.
class HarmonicMap {
 public:
  enum class Policy { fixed, tiered };

  HarmonicMap(Tree& t, int horizon, Policy policy = Policy::fixed)
      : t_(&t), k_(&t.kernel()), horizon_(horizon), policy_(policy), bufs_(64) {
    if (horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
  }

  static HarmonicMap fixed(Tree& t, int m) { return HarmonicMap(t, m, Policy::fixed); }
  static HarmonicMap tiered(Tree& t, int level) { return HarmonicMap(t, level, Policy::tiered); }

  int horizon() const { return horizon_; }
  Policy policy() const { return policy_; }

  /// Horizon used at v.
  int horizon_at(NodeId v) const {
    if (policy_ == Policy::fixed) return horizon_;
    const int m = horizon_ - t_->level(v);
    if (m < 0) throw std::out_of_range("vertex below the tiered horizon");
    return m;
  }

  double w(NodeId v) {
    grow_memo();
    if (!std::isnan(w_[v])) return w_[v];
    const double value = w_at(v, horizon_at(v));
    grow_memo();
    w_[v] = value;
    return value;
  }

  /// Ŵ^{(m)}_v for an explicit horizon (not memoised except when it is v's own).
  double w_at(NodeId v, int m) {
    if (m == 0) return k_->r(t_->type(v));
    if (!t_->grown(v)) {
      if (t_->frozen()) throw std::runtime_error("insufficient growth: frontier vertex above the horizon");
      const Node& n = t_->node(v);
      return virtual_w(n.key, n.type, n.growth, m);
    }
    const bool memo_ok = (policy_ == Policy::tiered);
    double s = 0;
    const std::uint32_t d = t_->degree(v);
    for (std::uint32_t j = 0; j < d; ++j) {
      const NodeId c = t_->child(v, j);
      const double wc = memo_ok ? w(c) : w_at(c, m - 1);
      s += k_->edge_weight(t_->weight(c)) * wc;
    }
    return s / k_->rho();
  }

  /// Ŵ^{(m)} of a vertex that exists only as (key, type, growth mode).
  double virtual_w(std::uint64_t key, TypeIndex a, Growth g, int m) {
    if (m == 0) return k_->r(a);
    if (static_cast<std::size_t>(m) >= bufs_.size()) bufs_.resize(static_cast<std::size_t>(m) + 1);
    const auto slot = static_cast<std::size_t>(m);
    k_->sample_offspring(key, a, g, bufs_[slot]);
    const std::size_t n = bufs_[slot].size();
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const ChildSpec c = bufs_[static_cast<std::size_t>(m)][j];
      s += k_->edge_weight(c.weight) * virtual_w(derive_key(key, j + 1), c.type, c.growth, m - 1);
    }
    return s / k_->rho();
  }

  /// S_o = 0; off the ray S_v = S_parent + Ŵ_v; on the ray
  /// S_{v_i} = S_{v_{i−1}} − Ŵ_{v_{i−1}}, i.e. −Σ_{j<i} Ŵ_{v_j}.
  double s(NodeId v) {
    grow_memo();
    chain_.clear();
    NodeId u = v;
    while (std::isnan(s_[u])) {
      if (u == t_->root()) {
        s_[u] = 0;
        break;
      }
      chain_.push_back(u);
      u = t_->on_ray(u) ? t_->child(u, t_->degree(u) - 1) : t_->parent_if_present(u);
    }
    for (auto it = chain_.rbegin(); it != chain_.rend(); ++it) {
      const NodeId x = *it;
      double value;
      if (t_->on_ray(x)) {
        const NodeId below = t_->child(x, t_->degree(x) - 1);
        value = -w(below);
        value += s_[below];
      } else {
        value = w(x);
        value += s_[t_->parent_if_present(x)];
      }
      s_[x] = value;
    }
    return s_[v];
  }

  /// One-step law of the walk at v as (probability, S increment) pairs, with
  /// λ = ρ of the kernel. Grows v (and the ray above it) if needed.
  template <class F>
  void for_each_move(NodeId v, F&& f) {
    t_->ensure_grown(v);
    const double lambda = k_->rho();
    const bool up = has_parent(*t_, v);
    const double mass = child_mass(*t_, v);
    const double total = (up ? lambda : 0.0) + mass;
    const double wv = w(v);
    if (up) f(lambda / total, -wv);
    const std::uint32_t d = t_->degree(v);
    for (std::uint32_t j = 0; j < d; ++j) {
      const NodeId c = t_->child(v, j);
      f(k_->edge_weight(t_->weight(c)) / total, w(c));
    }
  }

  /// E[M_{t+1} − M_t | Y_t = v].
  double drift(NodeId v) {
    double s = 0;
    for_each_move(v, [&](double p, double inc) { s += p * inc; });
    return s;
  }

  /// φ(v) = E[(M_{t+1} − M_t)² | Y_t = v]; at a non-root vertex of the plain
  /// walk this is (ρŴ_v² + Σ_w Ŵ_w²)/(ρ + d_v).
  double phi(NodeId v) {
    double s = 0;
    for_each_move(v, [&](double p, double inc) { s += p * inc * inc; });
    return s;
  }

  Tree& tree() { return *t_; }

 private:
  void grow_memo() {
    if (w_.size() < t_->size()) {
      const std::size_t n = std::max(t_->size(), 2 * w_.size());
      w_.resize(n, std::numeric_limits<double>::quiet_NaN());
      s_.resize(n, std::numeric_limits<double>::quiet_NaN());
    }
  }

  Tree* t_;
  const GrowthKernel* k_;
  int horizon_;
  Policy policy_;
  std::vector<double> w_, s_;
  std::vector<NodeId> chain_;
  std::vector<std::vector<ChildSpec>> bufs_;
};

/// Ŵ for the requested vertices (all materialised vertices by default).
inline std::vector<double> w_estimates(HarmonicMap& h, const std::vector<NodeId>& vs) {
  std::vector<double> out;
  out.reserve(vs.size());
  for (NodeId v : vs) out.push_back(h.w(v));
  return out;
}

/// S for the requested vertices.
inline std::vector<double> s_coordinates(HarmonicMap& h, const std::vector<NodeId>& vs) {
  std::vector<double> out;
  out.reserve(vs.size());
  for (NodeId v : vs) out.push_back(h.s(v));
  return out;
}

/// Horizon used by the CLT experiments: m = ⌈c log n / log ρ⌉, capped so
/// that ρ^m stays at most `max_population`.
inline int default_horizon(double n, double rho, double c = 2.0, double max_population = 1024.0) {
  const int m = static_cast<int>(std::ceil(c * std::log(n) / std::log(rho)));
  const int cap = static_cast<int>(std::floor(std::log(max_population) / std::log(rho) + 1e-9));
  return std::max(1, std::min(m, cap));
}

struct MartingaleSeries {
  std::vector<double> M;           // M_t = S_{Y_t}
  std::vector<double> phi_prefix;  // phi_prefix[n] = Σ_{t<n} φ(Y_t)
  double V(std::size_t n) const { return n == 0 ? 0.0 : phi_prefix[n] / static_cast<double>(n); }
};

inline MartingaleSeries martingale_series(const Trajectory& tr, HarmonicMap& h) {
  if (tr.vertices.empty()) throw std::invalid_argument("martingale series needs a full trajectory");
  MartingaleSeries out;
  out.M.reserve(tr.vertices.size());
  out.phi_prefix.reserve(tr.vertices.size() + 1);
  out.phi_prefix.push_back(0.0);
  double acc = 0;
  for (NodeId v : tr.vertices) {
    out.M.push_back(h.s(v));
    acc += h.phi(v);
    out.phi_prefix.push_back(acc);
  }
  return out;
}

/// ε_t = M_t/η − level_t.
inline std::vector<double> corrector_series(const Trajectory& tr, const MartingaleSeries& ms, double eta) {
  std::vector<double> eps(ms.M.size());
  for (std::size_t t = 0; t < eps.size(); ++t) eps[t] = ms.M[t] / eta - tr.levels[t];
  return eps;
}

/// max_{t ≤ n} |ε_t| / √n.
inline double corrector_max(const std::vector<double>& eps, std::size_t n) {
  double m = 0;
  for (std::size_t t = 0; t <= n && t < eps.size(); ++t) m = std::max(m, std::abs(eps[t]));
  return m / std::sqrt(static_cast<double>(n));
}

/// CSV: t,M_t,level,eps_t.
inline void write_series_csv(std::ostream& os, const Trajectory& tr, const MartingaleSeries& ms,
                             const std::vector<double>& eps, bool rayed) {
  os << "t,M_t," << (rayed ? "height" : "depth") << ",eps_t\n";
  char buf[96];
  for (std::size_t t = 0; t < ms.M.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,%.17g\n", t, ms.M[t], tr.levels[t], eps[t]);
    os << buf;
  }
}

struct EtaSigma {
  double eta = 0, sigma = 0;
  double ew2 = 0;   // E_MGW[W_o²]
  double eg_r = 0;  // E_g[r_χ]
  std::vector<double> m2;  // E^a[W²] per type (closed form)
  std::string method;
  double eta_se = 0, sigma_se = 0;  // jackknife (Monte Carlo only)

  nlohmann::json to_json() const {
    nlohmann::json j = {{"eta", eta}, {"sigma", sigma}, {"m2_per_type", m2}, {"method", method}};
    j["e_w2"] = ew2;
    j["e_g_r"] = eg_r;
    if (method == "monte-carlo") {
      j["eta_se"] = eta_se;
      j["sigma_se"] = sigma_se;
    }
    return j;
  }
};

class SingularMomentSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Second moments of W from m2 = (1/ρ²)(B m2 + c), with
/// B(a,b) = E Σ_j 1{y_j=b} α_j² and c_a = E Σ_{j≠k} α_j α_k r_{y_j} r_{y_k}.
inline EtaSigma eta_sigma_closed_form(const GrowthKernel& k) {
  const auto& s = k.spectral();
  const auto q = static_cast<Eigen::Index>(k.type_count());
  Matrix B = Matrix::Zero(q, q);
  Vector c = Vector::Zero(q);
  for (Eigen::Index a = 0; a < q; ++a)
    for (const auto& x : k.model().offspring[a]) {
      double sum = 0, sumsq = 0;
      for (const auto& ch : x.children) {
        const double al = k.edge_weight(ch);
        B(a, ch.type) += x.p * al * al;
        sum += al * s.r(ch.type);
        sumsq += al * al * s.r(ch.type) * s.r(ch.type);
      }
      c(a) += x.p * (sum * sum - sumsq);
    }
  const Matrix L = s.rho * s.rho * Matrix::Identity(q, q) - B;
  Eigen::FullPivLU<Matrix> lu(L);
  if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-14) throw SingularMomentSystem("singular second-moment system");
  const Vector m2 = lu.solve(c);
  if ((m2.array() < 0).any()) throw SingularMomentSystem("second-moment system has no nonnegative solution");
  EtaSigma e;
  e.method = "closed-form";
  e.m2.assign(m2.data(), m2.data() + q);
  e.ew2 = s.l.dot(m2);
  e.eg_r = s.l.dot(s.r);
  e.eta = e.ew2 / e.eg_r;
  e.sigma = std::sqrt(e.eg_r * e.eg_r / e.ew2);
  return e;
}

/// Plug-in moments of 𝔷_m over N MGW trees (root ~ l), jackknife errors
/// over `blocks` blocks.
inline EtaSigma eta_sigma_monte_carlo(const KernelPtr& k, int m, std::size_t N, std::uint64_t seed,
                                      std::size_t blocks = 20) {
  std::vector<double> z(N);
  for (std::size_t i = 0; i < N; ++i) {
    Stream rng = Stream::for_replica(seed, i);
    Tree t = sample_mgw(k, MeasureSpec{Measure::mgw, RootPolicy::canonical}, rng);
    HarmonicMap h(t, m);
    z[i] = h.w(t.root());
  }
  auto stats = [](double s1, double s2, double n) {
    const double ew2 = s2 / n, egr = s1 / n;
    return std::pair{ew2 / egr, std::sqrt(egr * egr / ew2)};
  };
  double s1 = 0, s2 = 0;
  for (double v : z) {
    s1 += v;
    s2 += v * v;
  }
  EtaSigma e;
  e.method = "monte-carlo";
  e.ew2 = s2 / static_cast<double>(N);
  e.eg_r = s1 / static_cast<double>(N);
  std::tie(e.eta, e.sigma) = stats(s1, s2, static_cast<double>(N));
  blocks = std::max<std::size_t>(2, std::min(blocks, N));
  std::vector<double> je, js;
  for (std::size_t b = 0; b < blocks; ++b) {
    double b1 = 0, b2 = 0, cnt = 0;
    for (std::size_t i = b * N / blocks; i < (b + 1) * N / blocks; ++i) {
      b1 += z[i];
      b2 += z[i] * z[i];
      ++cnt;
    }
    auto [et, sg] = stats(s1 - b1, s2 - b2, static_cast<double>(N) - cnt);
    je.push_back(et);
    js.push_back(sg);
  }
  auto jk = [&](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt((static_cast<double>(v.size()) - 1) / static_cast<double>(v.size()) * ss);
  };
  e.eta_se = jk(je);
  e.sigma_se = jk(js);
  return e;
}

/// Closed form when the moment system is solvable, Monte Carlo otherwise.
inline EtaSigma estimate_eta_sigma(const KernelPtr& k, const std::string& method = "closed-form", int m = 10,
                                   std::size_t N = 10000, std::uint64_t seed = 1) {
  if (method == "closed-form") {
    try {
      return eta_sigma_closed_form(*k);
    } catch (const SingularMomentSystem&) {
    }
  }
  return eta_sigma_monte_carlo(k, m, N, seed);
}

/// Fraction of level-k vertices v with |S_v/k − η| > ε, pooled over N
/// survival-conditioned trees.
inline double bad_set_fraction(const KernelPtr& k, int level, double eps, double eta, int m, std::size_t N,
                               std::uint64_t seed) {
  double bad = 0, total = 0;
  for (std::size_t i = 0; i < N; ++i) {
    Stream rng = Stream::for_replica(seed, i);
    Tree t = sample_mgw_nonextinct(k, MeasureSpec{Measure::mgw_nonextinct, RootPolicy::canonical, 0, level}, rng);
    HarmonicMap h(t, m);
    for (NodeId v = 0; v < t.size(); ++v)
      if (t.level(v) == level) {
        total += 1;
        if (std::abs(h.s(v) / level - eta) > eps) bad += 1;
      }
  }
  return total > 0 ? bad / total : 0.0;
}

}  // namespace mgw
