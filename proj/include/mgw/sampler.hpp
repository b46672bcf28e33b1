#pragma once

#include "mgw/kernel.hpp"
#include "mgw/stats.hpp"
#include "mgw/tree.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace mgw {

enum class Measure { mgw, mgw_nonextinct, imgw0, imgw, imgwr, qnstar };

/// Root type: a fixed type, the canonical mixture (l, or l(1−𝔵) when
/// conditioned on survival), or the ray-chain stationary law π.
enum class RootPolicy { fixed, canonical, stationary };

struct MeasureSpec {
  Measure which = Measure::mgw;
  RootPolicy root = RootPolicy::canonical;
  TypeIndex root_type = 0;
  int depth = 0;      // grow everything with level < depth
  int ray_depth = 0;  // ray vertices built eagerly
  int level = 1;      // n for Q_{n★}
};

struct MarkedSample {
  Tree tree;
  std::vector<NodeId> marked;  // o = v_0, …, v_n
  double weight = 1.0;
};

namespace detail {

inline TypeIndex draw_root_type(const GrowthKernel& k, const MeasureSpec& spec, Stream& rng, bool conditioned) {
  switch (spec.root) {
    case RootPolicy::fixed:
      if (spec.root_type >= k.type_count()) throw ModelError("root type out of range");
      return spec.root_type;
    case RootPolicy::stationary:
      return GrowthKernel::draw_type(k.spectral().pi, rng);
    case RootPolicy::canonical:
      break;
  }
  if (!conditioned) return GrowthKernel::draw_type(k.spectral().l, rng);
  Vector w = k.spectral().l.cwiseProduct((Vector::Ones(k.spectral().l.size()) - k.extinction()));
  return GrowthKernel::draw_type(w, rng);
}

inline void finish(Tree& t, const MeasureSpec& spec) {
  if (t.rayed() && spec.ray_depth > 0) t.ray_vertex(static_cast<std::size_t>(spec.ray_depth));
  if (spec.depth > 0) t.grow_to_level(spec.depth);
}

inline std::vector<ChildSpec> atom_children(const Atom& x, Growth g = Growth::mgw) {
  std::vector<ChildSpec> out;
  for (const auto& c : x.children) out.push_back({c.type, c.weight, g});
  return out;
}

}  // namespace detail

inline Tree sample_mgw(const KernelPtr& k, const MeasureSpec& spec, Stream& rng) {
  const TypeIndex a = detail::draw_root_type(*k, spec, rng, false);
  Tree t(k, rng.next());
  t.make_root(a, Growth::mgw);
  detail::finish(t, spec);
  return t;
}

/// MGW conditioned on survival. The root grows in survivor mode: its atom is
/// drawn ∝ q(x)(1 − Π𝔵), the survival pattern of its children conditioned on
/// at least one survivor, surviving children recurse in survivor mode and the
/// others in doomed mode (law tilted by Π𝔵). This is the infinite-descent
/// skeleton dressed with extinct bushes.
inline Tree sample_mgw_nonextinct(const KernelPtr& k, const MeasureSpec& spec, Stream& rng) {
  if (!(k->rho() > 1)) throw ModelError("conditioning on survival needs rho > 1");
  const TypeIndex a = detail::draw_root_type(*k, spec, rng, true);
  Tree t(k, rng.next());
  t.make_root(a, Growth::survivor);
  detail::finish(t, spec);
  return t;
}

/// IMGW₀: root type ~ π, MGW below o; the ray above o follows the reversed
/// ray chain and its vertices carry the size-biased configurations.
inline Tree sample_imgw0(const KernelPtr& k, const MeasureSpec& spec, Stream& rng) {
  MeasureSpec s = spec;
  if (s.root == RootPolicy::canonical) s.root = RootPolicy::stationary;
  const TypeIndex a = detail::draw_root_type(*k, s, rng, false);
  Tree t(k, rng.next());
  t.make_root(a, Growth::mgw);
  t.make_rayed();
  detail::finish(t, spec);
  return t;
}

namespace detail {

inline Tree sample_reweighted(const KernelPtr& k, const MeasureSpec& spec, Stream& rng, bool degree_biased) {
  const RootDraw d = spec.root == RootPolicy::fixed ? k->draw_root_given_type(degree_biased, spec.root_type, rng)
                                                    : k->draw_root(degree_biased, rng);
  Tree t(k, rng.next());
  t.make_root(d.type, Growth::mgw);
  const auto children = atom_children(k->model().offspring[d.type][d.atom]);
  t.grow_with(t.root(), children);
  t.make_rayed();
  finish(t, spec);
  return t;
}

}  // namespace detail

/// IMGW: IMGW₀ reweighted by E_g[r]/r_{χ_o}; (χ_o, x^o) drawn exactly.
inline Tree sample_imgw(const KernelPtr& k, const MeasureSpec& spec, Stream& rng) {
  return detail::sample_reweighted(k, spec, rng, false);
}

/// IMGWR: IMGW further reweighted by (d_o + ρ)/(2ρ); the reversing measure of
/// the environment seen from the walker at λ = ρ.
inline Tree sample_imgwr(const KernelPtr& k, const MeasureSpec& spec, Stream& rng) {
  return detail::sample_reweighted(k, spec, rng, true);
}

/// Q_{n★}: spine vertices v_0 … v_{n−1} draw offspring from q̂ and pass the
/// mark to a child chosen ∝ α_w r_{χ_w}; everything else is MGW.
inline MarkedSample sample_qnstar(const KernelPtr& k, const MeasureSpec& spec, Stream& rng) {
  if (spec.level < 1) throw ModelError("Q_n* needs n >= 1");
  const TypeIndex a = detail::draw_root_type(*k, spec, rng, false);
  MarkedSample s{Tree(k, rng.next()), {}, 1.0};
  Tree& t = s.tree;
  t.make_root(a, Growth::mgw);
  s.marked.push_back(t.root());
  for (int i = 0; i < spec.level; ++i) {
    const NodeId v = s.marked.back();
    Stream node_rng(derive_key(t.node(v).key, stream_tag::offspring));
    const TypeIndex b = t.type(v);
    const auto& x = k->model().offspring[b][k->draw_inflated(b, node_rng)];
    const auto slot = k->draw_marked(x, node_rng);
    t.grow_with(v, detail::atom_children(x));
    s.marked.push_back(t.child(v, static_cast<std::uint32_t>(slot)));
  }
  detail::finish(t, spec);
  return s;
}

inline Tree sample_tree(const KernelPtr& k, const MeasureSpec& spec, Stream& rng) {
  switch (spec.which) {
    case Measure::mgw: return sample_mgw(k, spec, rng);
    case Measure::mgw_nonextinct: return sample_mgw_nonextinct(k, spec, rng);
    case Measure::imgw0: return sample_imgw0(k, spec, rng);
    case Measure::imgw: return sample_imgw(k, spec, rng);
    case Measure::imgwr: return sample_imgwr(k, spec, rng);
    case Measure::qnstar: return std::move(sample_qnstar(k, spec, rng).tree);
  }
  throw ModelError("unknown measure");
}

namespace detail {

inline void append_type(std::string& out, const Tree& t, NodeId v) {
  out += std::to_string(t.type(v));
  if (t.kernel().weighted_walk()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "@%.6g", t.weight(v));
    out += buf;
  }
}

inline std::string subtree_code(Tree& t, NodeId v, int radius, NodeId skip) {
  std::string out;
  append_type(out, t, v);
  if (radius <= 0) return out;
  t.ensure_grown(v);
  std::vector<std::string> kids;
  const std::uint32_t d = t.degree(v);
  for (std::uint32_t j = 0; j < d; ++j) {
    const NodeId c = t.child(v, j);
    if (c != skip) kids.push_back(subtree_code(t, c, radius - 1, no_node));
  }
  std::sort(kids.begin(), kids.end());
  out += '(';
  for (const auto& s : kids) out += s + ',';
  out += ')';
  return out;
}

}  // namespace detail

/// Canonical code of the radius-k ball around v, oriented by parent links
/// ("up" is the parent or next ray vertex). Child order is forgotten.
inline std::string ball_signature(Tree& t, NodeId v, int k) {
  std::string out;
  NodeId prev = no_node, u = v;
  for (int j = 0; j <= k; ++j) {
    out += '[' + detail::subtree_code(t, u, k - j, prev) + ']';
    if (j == k) break;
    const NodeId p = t.parent(u);
    if (p == no_node) {
      out += '#';
      break;
    }
    prev = u;
    u = p;
  }
  return out;
}

/// Radius-k neighbourhoods of v_n under Q_{n★} (root type ~ π) against those
/// of o under IMGW₀: two-sample chi-square.
inline TestReport weak_limit_check(const KernelPtr& k, int n, int radius, std::size_t N, std::uint64_t seed,
                                   double p_min = 0.01) {
  std::map<std::string, double> lhs, rhs;
  MeasureSpec q{Measure::qnstar, RootPolicy::stationary, 0, 0, 0, n};
  MeasureSpec z{Measure::imgw0, RootPolicy::stationary};
  for (std::size_t i = 0; i < N; ++i) {
    Stream r1 = Stream::for_replica(derive_key(seed, 1), i);
    auto s = sample_qnstar(k, q, r1);
    lhs[ball_signature(s.tree, s.marked.back(), radius)] += 1;
    Stream r2 = Stream::for_replica(derive_key(seed, 2), i);
    auto t = sample_imgw0(k, z, r2);
    rhs[ball_signature(t, t.root(), radius)] += 1;
  }
  if (lhs.size() + rhs.size() <= 2 && lhs == rhs) {
    TestReport r;
    r.name = "weak_limit";
    r.p_value = 1.0;
    r.threshold = p_min;
    r.n1 = r.n2 = N;
    r.pass = true;
    r.extra["categories"] = 1;
    return r;
  }
  auto r = chi_square_two_sample(lhs, rhs, p_min);
  r.name = "weak_limit";
  r.extra["categories"] = std::max(lhs.size(), rhs.size());
  return r;
}

}  // namespace mgw
