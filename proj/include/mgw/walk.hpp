#pragma once

#include "mgw/rng.hpp"
#include "mgw/tree.hpp"

#include <cstdint>
#include <ostream>
#include <vector>

namespace mgw {

/// What run_walk keeps.
enum class Record : std::uint8_t { full, levels, endpoint };

struct Trajectory {
  double lambda = 0;
  std::vector<NodeId> vertices;      // Record::full
  std::vector<std::int32_t> levels;  // depth (rooted) or height (rayed); full and levels
  std::vector<double> jump_times;    // continuous time only; jump_times[0] = 0
  NodeId last = no_node;
  std::int32_t last_level = 0;
  std::uint64_t steps = 0;           // number of jumps performed
  bool absorbed = false;             // stuck at a childless root
};

/// Whether v has a neighbour of decreasing level. Top ray vertices count as
/// having one (it is built on demand) unless the tree is frozen.
inline bool has_parent(const Tree& t, NodeId v) {
  return t.parent_if_present(v) != no_node || (t.on_ray(v) && !t.frozen());
}

/// Sum of the conductance factors of v's increasing-level edges: d_v for the
/// plain walk, Σ α_w for the weighted one.
inline double child_mass(const Tree& t, NodeId v) {
  const std::uint32_t d = t.degree(v);
  if (!t.kernel().weighted_walk()) return d;
  double s = 0;
  for (std::uint32_t j = 0; j < d; ++j) s += t.weight(t.child(v, j));
  return s;
}

/// One step of RW_λ (or RWRE_λ on a weighted kernel): to the parent with
/// probability λ/(λ+d_v), to each child with probability 1/(λ+d_v) (resp.
/// α_w/(λ+Σα)); uniform among children at a root without parent. Returns
/// no_node if v is a childless root (absorbing).
inline NodeId step(Tree& t, NodeId v, double lambda, Stream& rng) {
  t.ensure_grown(v);
  const std::uint32_t d = t.degree(v);
  const bool up = has_parent(t, v);
  if (!t.kernel().weighted_walk()) {
    if (!up) {
      if (d == 0) return no_node;
      return t.child(v, static_cast<std::uint32_t>(rng.below(d)));
    }
    const double u = rng.uniform() * (lambda + d);
    if (u < lambda) return t.parent(v);
    auto j = static_cast<std::uint32_t>(u - lambda);
    return t.child(v, j < d ? j : d - 1);
  }
  const double mass = child_mass(t, v);
  const double base = up ? lambda : 0.0;
  if (!up && d == 0) return no_node;
  double u = rng.uniform() * (base + mass);
  if (u < base) return t.parent(v);
  u -= base;
  for (std::uint32_t j = 0; j < d; ++j) {
    const NodeId c = t.child(v, j);
    u -= t.weight(c);
    if (u < 0) return c;
  }
  return t.child(v, d - 1);
}

/// Rooted and rayed trees share the rule; these names follow the two settings.
inline NodeId step_rooted(Tree& t, NodeId v, double lambda, Stream& rng) { return step(t, v, lambda, rng); }
inline NodeId step_rayed(Tree& t, NodeId v, double lambda, Stream& rng) { return step(t, v, lambda, rng); }

/// T steps from `start` (default: the root).
inline Trajectory run_walk(Tree& t, double lambda, std::uint64_t T, Stream& rng, Record rec = Record::full,
                           NodeId start = 0) {
  Trajectory tr;
  tr.lambda = lambda;
  if (rec != Record::endpoint) tr.levels.reserve(T + 1);
  if (rec == Record::full) tr.vertices.reserve(T + 1);
  NodeId v = start;
  auto push = [&](NodeId x) {
    if (rec == Record::full) tr.vertices.push_back(x);
    if (rec != Record::endpoint) tr.levels.push_back(t.level(x));
  };
  push(v);
  for (std::uint64_t s = 0; s < T; ++s) {
    const NodeId w = step(t, v, lambda, rng);
    if (w == no_node) {
      tr.absorbed = true;
      break;
    }
    v = w;
    ++tr.steps;
    push(v);
  }
  tr.last = v;
  tr.last_level = t.level(v);
  return tr;
}

/// Continuous-time walk up to real time T: rate λ to the parent and rate 1
/// (α_w when weighted) to each child; holding rate λ+d_v, d_o at a root.
inline Trajectory run_walk_cts(Tree& t, double lambda, double T, Stream& rng, Record rec = Record::full,
                               NodeId start = 0) {
  Trajectory tr;
  tr.lambda = lambda;
  NodeId v = start;
  auto push = [&](NodeId x, double time) {
    if (rec == Record::full) tr.vertices.push_back(x);
    if (rec != Record::endpoint) {
      tr.levels.push_back(t.level(x));
      tr.jump_times.push_back(time);
    }
  };
  push(v, 0.0);
  double now = 0;
  for (;;) {
    t.ensure_grown(v);
    const double rate = (has_parent(t, v) ? lambda : 0.0) + child_mass(t, v);
    if (rate <= 0) {
      tr.absorbed = true;
      break;
    }
    now += rng.exponential(rate);
    if (now > T) break;
    v = step(t, v, lambda, rng);
    ++tr.steps;
    push(v, now);
  }
  tr.last = v;
  tr.last_level = t.level(v);
  return tr;
}

/// CSV: t,vertex,level[,jump_time]. Needs Record::full.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, bool rayed) {
  const bool cts = !tr.jump_times.empty();
  os << "t,vertex," << (rayed ? "height" : "depth") << (cts ? ",jump_time" : "") << '\n';
  for (std::size_t i = 0; i < tr.vertices.size(); ++i) {
    os << i << ',' << tr.vertices[i] << ',' << tr.levels[i];
    if (cts) {
      char buf[40];
      std::snprintf(buf, sizeof buf, ",%.17g", tr.jump_times[i]);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace mgw
