#pragma once

#include "mgw/kernel.hpp"
#include "mgw/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace mgw {

using NodeId = std::uint32_t;
inline constexpr NodeId no_node = std::numeric_limits<NodeId>::max();

class TreeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node {
  std::uint64_t key = 0;           // seeds this node's offspring stream
  double weight = 1.0;             // α of the edge to the parent
  NodeId parent = no_node;
  NodeId first_child = no_node;    // off-ray children are contiguous
  std::uint32_t child_count = 0;   // off-ray children only
  std::int32_t level = 0;          // depth (rooted) or height (rayed)
  std::int32_t spine_dist = 0;     // distance to the ray (rayed) or to the root
  TypeIndex type = 0;
  Growth growth = Growth::mgw;
  std::uint8_t flags = 0;

  static constexpr std::uint8_t grown_bit = 1;
  static constexpr std::uint8_t ray_bit = 2;
};

/// Lazily grown typed tree, optionally with a marked ray ξ.
///
/// Every node's offspring are a deterministic function of its key, and keys
/// are derived from the tree seed, so the whole (infinite) tree is fixed by
/// (kernel, seed, root construction). The arena only caches the part that has
/// been looked at; two Tree objects built the same way describe the same tree
/// no matter which parts each has materialised.
///
/// On a rayed tree the ray vertex v_i (i ≥ 1) has v_{i-1} as an extra child
/// listed after its off-ray children, and v_{i+1} as parent. Levels are
/// heights: h(v_i) = −i.
class Tree {
 public:
  Tree(KernelPtr kernel, std::uint64_t seed) : kernel_(std::move(kernel)), seed_(seed) {}

  const GrowthKernel& kernel() const { return *kernel_; }
  const KernelPtr& kernel_ptr() const { return kernel_; }
  std::uint64_t seed() const { return seed_; }

  // --- construction -------------------------------------------------------

  NodeId make_root(TypeIndex type, Growth growth = Growth::mgw) {
    if (!nodes_.empty()) throw TreeError("root already present");
    Node n;
    n.key = derive_key(seed_, stream_tag::root);
    n.type = type;
    n.growth = growth;
    nodes_.push_back(n);
    return 0;
  }

  /// Turns the root into v_0 of a ray; the ray above it is built on demand.
  void make_rayed() {
    if (nodes_.empty()) throw TreeError("no root");
    nodes_[0].flags |= Node::ray_bit;
    ray_.assign(1, 0);
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  bool rayed() const { return !ray_.empty(); }

  /// Samples the node's offspring from its own growth mode.
  std::span<const Node> grow(NodeId v) {
    check(v);
    if (grown(v)) throw TreeError("node already grown");
    kernel_->sample_offspring(nodes_[v].key, nodes_[v].type, nodes_[v].growth, buf_);
    attach(v, buf_);
    return children_span(v);
  }

  /// Grows the node from a caller-supplied configuration (size-biased laws,
  /// copied excursions). The node is marked fixed.
  std::span<const Node> grow_with(NodeId v, std::span<const ChildSpec> children) {
    check(v);
    if (grown(v)) throw TreeError("node already grown");
    nodes_[v].growth = Growth::fixed;
    attach(v, children);
    return children_span(v);
  }

  /// Grows v unless it is grown already or the tree is frozen.
  void ensure_grown(NodeId v) {
    if (!(nodes_[v].flags & Node::grown_bit) && !frozen_) grow(v);
  }

  /// Grows every node with level < L in subtree(o) and in the off-ray bushes
  /// of the ray built so far.
  void grow_to_level(int L) {
    std::vector<NodeId> stack;
    if (rayed())
      for (NodeId u : ray_) stack.push_back(u);
    else
      stack.push_back(0);
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      if (nodes_[v].level >= L) continue;
      if (!grown(v)) grow(v);
      const Node& n = nodes_[v];
      for (std::uint32_t j = 0; j < n.child_count; ++j) stack.push_back(n.first_child + j);
    }
  }

  /// Adds `count` vertices on top of the ray.
  std::vector<NodeId> extend_ray(std::size_t count) {
    if (!rayed()) throw TreeError("tree has no ray");
    std::vector<NodeId> added;
    for (std::size_t c = 0; c < count; ++c) added.push_back(extend_ray_once());
    return added;
  }

  // --- access -------------------------------------------------------------

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId v) const { return nodes_[v]; }
  NodeId root() const { return 0; }
  bool grown(NodeId v) const { return nodes_[v].flags & Node::grown_bit; }
  bool on_ray(NodeId v) const { return nodes_[v].flags & Node::ray_bit; }
  TypeIndex type(NodeId v) const { return nodes_[v].type; }
  double weight(NodeId v) const { return nodes_[v].weight; }
  int level(NodeId v) const { return nodes_[v].level; }
  int depth(NodeId v) const { return nodes_[v].level; }
  /// Height on a rayed tree; checked.
  int height(NodeId v) const {
    check(v);
    if (!rayed()) throw TreeError("height needs a rayed tree");
    return nodes_[v].level;
  }
  int spine_distance(NodeId v) const { return nodes_[v].spine_dist; }

  std::size_t ray_length() const { return ray_.size(); }
  /// v_i, extending the ray if needed.
  NodeId ray_vertex(std::size_t i) {
    while (ray_.size() <= i) extend_ray_once();
    return ray_[i];
  }
  const std::vector<NodeId>& ray() const { return ray_; }

  /// Number of increasing-level neighbours (children, plus the ray child).
  std::uint32_t degree(NodeId v) const {
    const Node& n = nodes_[v];
    return n.child_count + ((n.flags & Node::ray_bit) && v != 0 ? 1u : 0u);
  }

  NodeId child(NodeId v, std::uint32_t j) const {
    const Node& n = nodes_[v];
    if (j < n.child_count) return n.first_child + j;
    return ray_[static_cast<std::size_t>(-n.level) - 1];
  }

  /// Parent, or the next ray vertex (built on demand unless frozen).
  NodeId parent(NodeId v) {
    if (nodes_[v].parent == no_node && on_ray(v) && !frozen_) extend_ray_once();
    return nodes_[v].parent;
  }
  NodeId parent_if_present(NodeId v) const { return nodes_[v].parent; }

  /// Graph distance to the root o.
  int distance_to_root(NodeId v) const {
    if (!rayed()) return nodes_[v].level;
    int d = 0;
    while (!on_ray(v)) {
      v = nodes_[v].parent;
      ++d;
    }
    return d - nodes_[v].level;  // ray index of R_v
  }

  std::span<const Node> children_span(NodeId v) const {
    const Node& n = nodes_[v];
    if (n.child_count == 0) return {};
    return {nodes_.data() + n.first_child, n.child_count};
  }

  void reserve(std::size_t n) { nodes_.reserve(n); }

  /// JSON lines: {id, parent, type, w, depth[, h]}.
  void dump_jsonl(std::ostream& os) const {
    for (NodeId v = 0; v < nodes_.size(); ++v) {
      const Node& n = nodes_[v];
      nlohmann::json j;
      j["id"] = v;
      j["parent"] = n.parent == no_node ? nlohmann::json(nullptr) : nlohmann::json(n.parent);
      j["type"] = kernel_->model().types[n.type];
      j["w"] = n.weight;
      j["depth"] = distance_to_root(v);
      if (rayed()) j["h"] = n.level;
      os << j.dump() << '\n';
    }
  }

 private:
  void check(NodeId v) const {
    if (v >= nodes_.size()) throw TreeError("unknown node id");
  }

  void attach(NodeId v, std::span<const ChildSpec> children) {
    const auto first = static_cast<NodeId>(nodes_.size());
    const std::uint64_t key = nodes_[v].key;
    const int level = nodes_[v].level + 1;
    const int dist = nodes_[v].spine_dist + 1;
    for (std::size_t j = 0; j < children.size(); ++j) {
      Node c;
      c.key = derive_key(key, j + 1);
      c.weight = children[j].weight;
      c.parent = v;
      c.level = level;
      c.spine_dist = dist;
      c.type = children[j].type;
      c.growth = children[j].growth;
      nodes_.push_back(c);
    }
    Node& n = nodes_[v];
    n.first_child = children.empty() ? no_node : first;
    n.child_count = static_cast<std::uint32_t>(children.size());
    n.flags |= Node::grown_bit;
  }

  NodeId extend_ray_once() {
    const NodeId top = ray_.back();
    const std::size_t i = ray_.size();
    const std::uint64_t key = derive_key(derive_key(seed_, stream_tag::ray), i);
    Stream rng(key);
    const TypeIndex b = nodes_[top].type;
    const TypeIndex a = kernel_->draw_reversed(b, rng);
    const auto [atom, slot] = kernel_->draw_ray_config(a, b, rng);
    const auto& x = kernel_->model().offspring[a][atom];

    Node u;
    u.key = key;
    u.type = a;
    u.level = -static_cast<int>(i);
    u.spine_dist = 0;
    u.growth = Growth::fixed;
    u.flags = Node::grown_bit | Node::ray_bit;
    const auto uid = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(u);
    const auto first = static_cast<NodeId>(nodes_.size());
    std::uint32_t count = 0;
    for (std::size_t j = 0; j < x.children.size(); ++j) {
      if (j == slot) continue;
      Node c;
      c.key = derive_key(key, j + 1);
      c.weight = x.children[j].weight;
      c.parent = uid;
      c.level = u.level + 1;
      c.spine_dist = 1;
      c.type = x.children[j].type;
      c.growth = Growth::mgw;
      nodes_.push_back(c);
      ++count;
    }
    nodes_[uid].first_child = count ? first : no_node;
    nodes_[uid].child_count = count;
    nodes_[top].parent = uid;
    nodes_[top].weight = x.children[slot].weight;
    ray_.push_back(uid);
    return uid;
  }

  KernelPtr kernel_;
  std::uint64_t seed_;
  std::vector<Node> nodes_;
  std::vector<NodeId> ray_;
  std::vector<ChildSpec> buf_;
  bool frozen_ = false;
};

/// Per-type counts at depth n of a rooted tree, and ⟨Z_n, r⟩/ρⁿ.
struct LevelCensus {
  std::vector<std::uint64_t> counts;
  double zfrak = 0;
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

inline LevelCensus level_census(const Tree& t, int n, const SpectralData& s) {
  if (t.rayed()) throw TreeError("level census needs a rooted tree");
  LevelCensus c;
  c.counts.assign(t.kernel().type_count(), 0);
  std::vector<NodeId> stack{t.root()};
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    const Node& nd = t.node(v);
    if (nd.level == n) {
      ++c.counts[nd.type];
      continue;
    }
    if (!t.grown(v)) throw TreeError("level census beyond the grown region");
    for (std::uint32_t j = 0; j < nd.child_count; ++j) stack.push_back(nd.first_child + j);
  }
  double z = 0;
  for (std::size_t a = 0; a < c.counts.size(); ++a) z += static_cast<double>(c.counts[a]) * s.r(static_cast<Eigen::Index>(a));
  c.zfrak = z / std::pow(s.rho, n);
  return c;
}

inline LevelCensus level_census(const Tree& t, int n) { return level_census(t, n, t.kernel().spectral()); }

}  // namespace mgw
