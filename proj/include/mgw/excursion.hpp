#pragma once

#include "mgw/sampler.hpp"
#include "mgw/walk.hpp"

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

namespace mgw {

/// ℓ(n) = 4⌊(log(1+n))^{3/2}⌋.
inline int excursion_depth(std::uint64_t n) {
  return 4 * static_cast<int>(std::floor(std::pow(std::log1p(static_cast<double>(n)), 1.5)));
}

struct ExcursionRecord {
  std::uint64_t tau = 0;  // start: first visit of a deep a0 vertex
  std::uint64_t eta = 0;  // end: first hit of the parent of X_tau
  std::vector<NodeId> explored;  // X_tau and the offspring revealed in [tau, eta)
};

struct ExcursionDecomposition {
  std::uint64_t n = 0;
  TypeIndex a0 = 0;
  int ell = 0;
  std::vector<ExcursionRecord> records;
};

/// Fresh excursions of a rooted walk. A vertex counts as an unexplored leaf
/// of the explored set exactly when it is being visited for the first time
/// (its offspring are not yet revealed). Excursions still open at the end of
/// the trajectory are dropped.
inline ExcursionDecomposition excursion_decompose(const Trajectory& tr, const Tree& t, std::uint64_t n,
                                                  TypeIndex a0) {
  if (t.rayed()) throw TreeError("excursion decomposition needs a rooted tree");
  if (tr.vertices.empty() && tr.steps > 0) throw TreeError("excursion decomposition needs a full trajectory");
  ExcursionDecomposition dec;
  dec.n = n;
  dec.a0 = a0;
  dec.ell = excursion_depth(n);
  std::vector<char> seen(t.size(), 0);
  const std::size_t T = tr.vertices.size();
  std::size_t s = 0;
  while (s < T) {
    const NodeId v = tr.vertices[s];
    if (!seen[v] && v != t.root() && 2 * t.depth(v) > dec.ell && t.type(v) == a0) {
      const NodeId p = t.parent_if_present(v);
      std::size_t e = s;
      ExcursionRecord rec;
      rec.tau = s;
      rec.explored.push_back(v);
      while (e < T && tr.vertices[e] != p) {
        const NodeId u = tr.vertices[e];
        if (!seen[u]) {
          seen[u] = 1;
          for (std::uint32_t j = 0; j < t.node(u).child_count; ++j) rec.explored.push_back(t.node(u).first_child + j);
        }
        ++e;
      }
      if (e == T) break;
      rec.eta = e;
      dec.records.push_back(std::move(rec));
      s = e;
      continue;
    }
    seen[v] = 1;
    ++s;
  }
  return dec;
}

/// Rooted side of the coupling: an MGW tree and RW_ρ on it, advanced on demand.
class ExcursionSource {
 public:
  ExcursionSource(const KernelPtr& k, std::uint64_t key, std::uint64_t n, TypeIndex a0, std::uint64_t budget)
      : rng_(key), tree_(sample_mgw(k, MeasureSpec{Measure::mgw, RootPolicy::canonical}, rng_)),
        ell_(excursion_depth(n)), a0_(a0), budget_(budget) {
    traj_.lambda = k->rho();
    traj_.vertices.push_back(tree_.root());
    traj_.levels.push_back(0);
  }

  /// Advances to the next excursion start and replays at most `max_len`
  /// steps of it. Returns false when the walk is stuck or over budget.
  bool next(std::uint64_t max_len, std::vector<NodeId>& path, bool& complete) {
    path.clear();
    complete = false;
    for (;;) {
      const NodeId v = traj_.vertices.back();
      if (fresh(v) && v != tree_.root() && 2 * tree_.depth(v) > ell_ && tree_.type(v) == a0_) break;
      mark(v);
      if (!advance()) return false;
    }
    const NodeId start = traj_.vertices.back();
    const NodeId p = tree_.parent_if_present(start);
    path.push_back(start);
    mark(start);
    while (path.size() < max_len) {
      if (!advance()) return false;
      const NodeId u = traj_.vertices.back();
      if (u == p) {
        complete = true;
        return true;
      }
      mark(u);
      path.push_back(u);
    }
    return true;
  }

  Tree& tree() { return tree_; }
  const Trajectory& trajectory() const { return traj_; }
  Trajectory&& take_trajectory() {
    traj_.last = traj_.vertices.back();
    traj_.last_level = traj_.levels.back();
    return std::move(traj_);
  }

 private:
  bool fresh(NodeId v) const { return v >= seen_.size() || !seen_[v]; }
  void mark(NodeId v) {
    if (v >= seen_.size()) seen_.resize(std::max<std::size_t>(2 * seen_.size(), v + 1), 0);
    seen_[v] = 1;
  }
  bool advance() {
    if (traj_.steps >= budget_) return false;
    const NodeId w = step(tree_, traj_.vertices.back(), traj_.lambda, rng_);
    if (w == no_node) {
      traj_.absorbed = true;
      return false;
    }
    ++traj_.steps;
    traj_.vertices.push_back(w);
    traj_.levels.push_back(tree_.depth(w));
    return true;
  }

  Stream rng_;
  Tree tree_;
  int ell_;
  TypeIndex a0_;
  std::uint64_t budget_;
  Trajectory traj_;
  std::vector<char> seen_;
};

/// The uncoupled rooted run that the coupling's X-side must reproduce.
inline std::pair<Tree, Trajectory> coupling_reference_walk(const KernelPtr& k, std::uint64_t seed, std::uint64_t T) {
  Stream rng(derive_key(seed, 1));
  Tree t = sample_mgw(k, MeasureSpec{Measure::mgw, RootPolicy::canonical}, rng);
  auto tr = run_walk(t, k->rho(), T, rng, Record::full);
  return {std::move(t), std::move(tr)};
}

struct CoupledPair {
  Tree x_tree;
  Trajectory x;
  ExcursionDecomposition x_excursions;
  Tree y_tree;
  Trajectory y;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> y_intervals;  // [τ⋄_i, η⋄_i)
  std::size_t matched = 0;        // excursions replayed on the Y side
  bool increments_equal = true;   // |X| increments equal d(Y, ξ) increments on matched intervals
};

/// Shifted coupling. Y runs RW_ρ on an IMGW₀ tree for T steps; whenever it
/// first visits an off-ray vertex of type a0 at distance > ℓ(n)/2 from the
/// ray, the next fresh excursion of the rooted walk X is copied below it
/// through a type-preserving isomorphism, after which Y moves to the parent of
/// the start vertex. Everything else grows and steps natively from Y's own
/// streams. X never reads Y.
inline CoupledPair shifted_coupling(const KernelPtr& k, std::uint64_t n, std::uint64_t T, TypeIndex a0,
                                    std::uint64_t seed, std::uint64_t x_budget_factor = 100) {
  ExcursionSource xs(k, derive_key(seed, 1), n, a0, x_budget_factor * std::max<std::uint64_t>(T, 1));
  Stream ys(derive_key(seed, 2));
  Tree yt = sample_imgw0(k, MeasureSpec{Measure::imgw0, RootPolicy::stationary}, ys);
  const double rho = k->rho();
  const int ell = excursion_depth(n);

  Trajectory y;
  y.lambda = rho;
  NodeId cur = yt.root();
  y.vertices.push_back(cur);
  y.levels.push_back(yt.level(cur));
  std::vector<std::pair<std::uint64_t, std::uint64_t>> intervals;
  bool equal = true;
  bool x_alive = true;
  std::vector<NodeId> path;
  std::vector<ChildSpec> specs;
  std::unordered_map<NodeId, NodeId> f;

  auto push = [&](NodeId v) {
    y.vertices.push_back(v);
    y.levels.push_back(yt.level(v));
    ++y.steps;
  };

  while (y.steps < T) {
    if (x_alive && !yt.grown(cur) && !yt.on_ray(cur) && yt.type(cur) == a0 && 2 * yt.spine_distance(cur) > ell) {
      bool complete = false;
      const std::uint64_t room = T - y.steps;
      x_alive = xs.next(room + 1, path, complete);
      if (x_alive) {
        Tree& xt = xs.tree();
        const std::uint64_t tau = y.steps;
        const NodeId start = cur;
        const int y0 = yt.spine_distance(start), x0 = xt.depth(path.front());
        f.clear();
        f[path.front()] = start;
        for (std::size_t s = 0; s < path.size(); ++s) {
          const NodeId xv = path[s];
          const NodeId yv = f.at(xv);
          if (s > 0) push(yv);
          if (!yt.grown(yv)) {
            specs.clear();
            for (const auto& c : xt.children_span(xv)) specs.push_back({c.type, c.weight, Growth::mgw});
            yt.grow_with(yv, specs);
            for (std::uint32_t j = 0; j < xt.node(xv).child_count; ++j)
              f[xt.node(xv).first_child + j] = yt.node(yv).first_child + j;
          }
          equal = equal && (yt.spine_distance(yv) - y0 == xt.depth(xv) - x0) && yt.type(yv) == xt.type(xv);
        }
        if (complete && y.steps < T) {
          cur = yt.parent(start);
          push(cur);
        } else {
          cur = y.vertices.back();
        }
        intervals.emplace_back(tau, y.steps);
        continue;
      }
    }
    const NodeId w = step(yt, cur, rho, ys);
    cur = w;
    push(cur);
  }
  y.last = cur;
  y.last_level = yt.level(cur);

  Trajectory xtraj = xs.take_trajectory();
  auto dec = excursion_decompose(xtraj, xs.tree(), n, a0);
  CoupledPair out{std::move(xs.tree()), std::move(xtraj), std::move(dec), std::move(yt), std::move(y),
                  std::move(intervals), 0, equal};
  out.matched = out.y_intervals.size();
  return out;
}

/// Explored part of the first `levels` levels of subtree(o): per level and
/// type, the number of vertices whose offspring have been revealed (capped).
inline std::string explored_profile(const Tree& t, int levels, std::uint32_t cap = 3) {
  const std::size_t q = t.kernel().type_count();
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(levels) * q, 0);
  std::vector<NodeId> stack{t.root()};
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    if (!t.grown(v)) continue;
    const int d = t.level(v);
    if (d >= 1 && d <= levels) {
      auto& c = counts[static_cast<std::size_t>(d - 1) * q + t.type(v)];
      c = std::min(c + 1, cap);
    }
    if (d < levels)
      for (std::uint32_t j = 0; j < t.node(v).child_count; ++j) stack.push_back(t.node(v).first_child + j);
  }
  std::string s;
  for (auto c : counts) s += static_cast<char>('0' + c);
  return s;
}

}  // namespace mgw
