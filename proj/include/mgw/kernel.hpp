#pragma once

#include "mgw/model.hpp"
#include "mgw/rng.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <vector>

namespace mgw {

/// Which walk the environment is built for. `plain` ignores edge weights
/// (γ=0 eigen-data); `rwre` uses them (γ=1 eigen-data, weighted steps).
enum class WalkKind : std::uint8_t { plain, rwre };

/// How a node's offspring are drawn when it is first grown.
///  mgw      — from q^a
///  survivor — from q^a conditioned on the node's subtree being infinite
///  doomed   — from q^a conditioned on the node's subtree being finite
///  fixed    — never regrown (ray vertices, spine vertices, copied nodes)
enum class Growth : std::uint8_t { mgw, survivor, doomed, fixed };

struct ChildSpec {
  TypeIndex type = 0;
  double weight = 1.0;
  Growth growth = Growth::mgw;
};

/// Cumulative table for inverse-cdf draws.
class Discrete {
 public:
  Discrete() = default;
  explicit Discrete(const std::vector<double>& w) : cum_(w.size()) {
    std::partial_sum(w.begin(), w.end(), cum_.begin());
  }
  bool empty() const { return cum_.empty() || !(cum_.back() > 0); }
  std::size_t size() const { return cum_.size(); }
  double total() const { return cum_.empty() ? 0.0 : cum_.back(); }
  std::size_t draw(Stream& rng) const {
    const double u = rng.uniform() * cum_.back();
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    auto i = static_cast<std::size_t>(it - cum_.begin());
    if (i >= cum_.size()) {  // u rounded up to the total: take the last entry with mass
      i = cum_.size() - 1;
      while (i > 0 && cum_[i] == cum_[i - 1]) --i;
    }
    return i;
  }

 private:
  std::vector<double> cum_;
};

/// (type, atom) pair drawn from an enumerated root law.
struct RootDraw {
  TypeIndex type = 0;
  std::size_t atom = 0;
};

/// Everything needed to grow environments of one model for one walk kind:
/// eigen-data, extinction vector and all per-type sampling tables.
/// Immutable after construction; share freely across threads.
class GrowthKernel {
 public:
  GrowthKernel(Model model, WalkKind kind) : model_(std::move(model)), kind_(kind) {
    require_valid(model_);
    spec_ = spectral_data(model_, kind_ == WalkKind::rwre ? 1.0 : 0.0);
    ext_ = extinction_probs(model_).x;
    never_dies_ = (ext_.array() == 0.0).all();
    const auto q = model_.type_count();
    mgw_.resize(q);
    survivor_.resize(q);
    doomed_.resize(q);
    inflated_.resize(q);
    ray_config_.assign(q, std::vector<Discrete>(q));
    reversed_.resize(q);
    for (std::size_t a = 0; a < q; ++a) {
      const auto& atoms = model_.offspring[a];
      std::vector<double> w_mgw, w_surv, w_doom;
      for (const auto& x : atoms) {
        double dead = 1;
        for (const auto& c : x.children) dead *= ext_(c.type);
        w_mgw.push_back(x.p);
        w_surv.push_back(x.p * (1 - dead));
        w_doom.push_back(x.p * dead);
      }
      mgw_[a] = Discrete(w_mgw);
      survivor_[a] = Discrete(w_surv);
      doomed_[a] = Discrete(w_doom);
      std::vector<double> w_inf;
      for (const auto& x : inflated_law(model_, static_cast<TypeIndex>(a), spec_)) w_inf.push_back(x.p);
      inflated_[a] = Discrete(w_inf);
      for (std::size_t b = 0; b < q; ++b) {
        std::vector<double> w;
        for (const auto& x : atoms) {
          double s = 0;
          for (const auto& c : x.children)
            if (c.type == b) s += edge_weight(c);
          w.push_back(x.p * s);
        }
        ray_config_[a][b] = Discrete(w);
      }
      std::vector<double> rev(q);
      for (std::size_t b = 0; b < q; ++b) rev[b] = spec_.K_reversed(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      reversed_[a] = Discrete(rev);
    }
    for (int law = 0; law < 2; ++law) {
      std::vector<double> w;
      for (std::size_t a = 0; a < q; ++a)
        for (const auto& x : model_.offspring[a]) {
          double v = spec_.pi(static_cast<Eigen::Index>(a)) / spec_.r(static_cast<Eigen::Index>(a)) * x.p;
          if (law == 1) v *= spec_.rho + weighted_degree(x);
          w.push_back(v);
          if (law == 0) root_index_.push_back({static_cast<TypeIndex>(a), static_cast<std::size_t>(&x - model_.offspring[a].data())});
        }
      root_law_[law] = Discrete(w);
      root_weights_[law] = w;
    }
  }

  const Model& model() const { return model_; }
  WalkKind kind() const { return kind_; }
  bool weighted_walk() const { return kind_ == WalkKind::rwre; }
  const SpectralData& spectral() const { return spec_; }
  double rho() const { return spec_.rho; }
  double r(TypeIndex a) const { return spec_.r(a); }
  const Vector& extinction() const { return ext_; }
  std::size_t type_count() const { return model_.type_count(); }

  /// Conductance factor of a child edge as seen by the walk.
  double edge_weight(const Child& c) const { return kind_ == WalkKind::rwre ? c.weight : 1.0; }
  double edge_weight(double w) const { return kind_ == WalkKind::rwre ? w : 1.0; }
  double weighted_degree(const Atom& x) const {
    double s = 0;
    for (const auto& c : x.children) s += edge_weight(c);
    return s;
  }

  /// Offspring of a node grown with mode g, drawn from the node's own stream.
  void sample_offspring(std::uint64_t key, TypeIndex a, Growth g, std::vector<ChildSpec>& out) const {
    out.clear();
    Stream rng(derive_key(key, stream_tag::offspring));
    if (g == Growth::survivor && never_dies_) g = Growth::mgw;
    switch (g) {
      case Growth::mgw: {
        const auto& x = model_.offspring[a][mgw_[a].draw(rng)];
        for (const auto& c : x.children) out.push_back({c.type, c.weight, Growth::mgw});
        break;
      }
      case Growth::doomed: {
        const auto& x = model_.offspring[a][doomed_[a].draw(rng)];
        for (const auto& c : x.children) out.push_back({c.type, c.weight, Growth::doomed});
        break;
      }
      case Growth::survivor: {
        const auto& x = model_.offspring[a][survivor_[a].draw(rng)];
        // Survival pattern conditioned on at least one survivor, child by child.
        const std::size_t k = x.children.size();
        std::vector<double> tail_dead(k + 1, 1.0);
        for (std::size_t j = k; j-- > 0;) tail_dead[j] = tail_dead[j + 1] * ext_(x.children[j].type);
        bool any = false;
        for (std::size_t j = 0; j < k; ++j) {
          const auto& c = x.children[j];
          const double live = 1 - ext_(c.type);
          const double p = any ? live : live / (1 - tail_dead[j]);
          const bool s = rng.uniform() < p;
          any = any || s;
          out.push_back({c.type, c.weight, s ? Growth::survivor : Growth::doomed});
        }
        break;
      }
      case Growth::fixed:
        break;
    }
  }

  /// Draw a type from an arbitrary probability vector.
  static TypeIndex draw_type(const Vector& p, Stream& rng) {
    std::vector<double> w(p.data(), p.data() + p.size());
    return static_cast<TypeIndex>(Discrete(w).draw(rng));
  }

  /// Next ray type upward: K̃(b, ·).
  TypeIndex draw_reversed(TypeIndex b, Stream& rng) const { return static_cast<TypeIndex>(reversed_[b].draw(rng)); }

  /// Configuration of a type-a ray vertex whose ray child has type b, and the
  /// slot of that ray child: atom ∝ p Σ_{j: y_j=b} α_j, slot ∝ α_j.
  std::pair<std::size_t, std::size_t> draw_ray_config(TypeIndex a, TypeIndex b, Stream& rng) const {
    const auto i = ray_config_[a][b].draw(rng);
    const auto& x = model_.offspring[a][i];
    std::vector<double> w;
    for (const auto& c : x.children) w.push_back(c.type == b ? edge_weight(c) : 0.0);
    return {i, Discrete(w).draw(rng)};
  }

  /// Atom index under q̂^a.
  std::size_t draw_inflated(TypeIndex a, Stream& rng) const { return inflated_[a].draw(rng); }

  /// Spine successor among the children of x, ∝ α_w r_{χ_w}.
  std::size_t draw_marked(const Atom& x, Stream& rng) const {
    std::vector<double> w;
    for (const auto& c : x.children) w.push_back(edge_weight(c) * spec_.r(c.type));
    return Discrete(w).draw(rng);
  }

  /// Root (type, configuration) law: IMGW (degree_biased=false) or IMGWR.
  RootDraw draw_root(bool degree_biased, Stream& rng) const {
    return root_index_[root_law_[degree_biased ? 1 : 0].draw(rng)];
  }
  RootDraw draw_root_given_type(bool degree_biased, TypeIndex a, Stream& rng) const {
    std::vector<double> w = root_weights_[degree_biased ? 1 : 0];
    for (std::size_t i = 0; i < w.size(); ++i)
      if (root_index_[i].type != a) w[i] = 0;
    return root_index_[Discrete(w).draw(rng)];
  }
  /// Enumerated root law, normalised: (type, atom, probability).
  std::vector<std::pair<RootDraw, double>> root_law(bool degree_biased) const {
    const auto& w = root_weights_[degree_biased ? 1 : 0];
    const double tot = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<std::pair<RootDraw, double>> out;
    for (std::size_t i = 0; i < w.size(); ++i) out.push_back({root_index_[i], w[i] / tot});
    return out;
  }

 private:
  Model model_;
  WalkKind kind_;
  SpectralData spec_;
  Vector ext_;
  bool never_dies_ = true;
  std::vector<Discrete> mgw_, survivor_, doomed_, inflated_, reversed_;
  std::vector<std::vector<Discrete>> ray_config_;
  std::vector<RootDraw> root_index_;
  Discrete root_law_[2];
  std::vector<double> root_weights_[2];
};

using KernelPtr = std::shared_ptr<const GrowthKernel>;

inline KernelPtr make_kernel(const Model& m, WalkKind kind = WalkKind::plain) {
  return std::make_shared<const GrowthKernel>(m, kind);
}

}  // namespace mgw
