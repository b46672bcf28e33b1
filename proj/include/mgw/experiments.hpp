#pragma once

#include "mgw/conductance.hpp"
#include "mgw/excursion.hpp"
#include "mgw/harmonic.hpp"
#include "mgw/parallel.hpp"
#include "mgw/sampler.hpp"
#include "mgw/stats.hpp"
#include "mgw/walk.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mgw {

/// Environment built from a seed; rebuilding it gives the same tree, so
/// workers keep private copies and drop them when they grow too large.
class EnvironmentCache {
 public:
  EnvironmentCache(KernelPtr k, MeasureSpec spec, std::uint64_t seed, std::size_t max_nodes = std::size_t{1} << 22)
      : k_(std::move(k)), spec_(spec), seed_(seed), max_nodes_(max_nodes) {}

  Tree& get() {
    if (!tree_ || tree_->size() > max_nodes_) {
      Stream rng(seed_);
      tree_.emplace(sample_tree(k_, spec_, rng));
    }
    return *tree_;
  }

 private:
  KernelPtr k_;
  MeasureSpec spec_;
  std::uint64_t seed_;
  std::size_t max_nodes_;
  std::optional<Tree> tree_;
};

enum class CltMode { quenched, annealed, cts };

struct CltConfig {
  CltMode mode = CltMode::quenched;
  bool rayed = false;       // IMGWR environment, heights instead of depths
  std::uint64_t n = 10000;  // steps (or real time in cts mode)
  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double sigma = 0;         // 0: closed form
  double ks_max = 0.03;
};

struct CltResult {
  double sigma = 0, scale = 0;
  std::vector<std::array<double, 3>> samples;  // rescaled level at t = 0.25, 0.5, 1
  TestReport ks;
  std::size_t absorbed = 0;

  nlohmann::json to_json() const {
    return {{"sigma", sigma}, {"scale", scale}, {"absorbed", absorbed}, {"ks", ks.to_json()}};
  }
  void write_csv(std::ostream& os) const {
    os << "path,t025,t050,t100\n";
    char buf[96];
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, samples[i][0], samples[i][1], samples[i][2]);
      os << buf;
    }
  }
};

inline MeasureSpec clt_environment(bool rayed) {
  return rayed ? MeasureSpec{Measure::imgwr, RootPolicy::canonical}
               : MeasureSpec{Measure::mgw_nonextinct, RootPolicy::canonical};
}

/// Rescaled endpoints of RW_ρ: |X_n|/(σ√n) on survival-conditioned MGW
/// trees, h(Y_n)/(σ√n) on IMGWR rayed trees, |X^cts_n|/(σ√(2ρn)) in
/// continuous time. KS against |N(0,1)| (rooted) or N(0,1) (rayed).
inline CltResult run_clt(const KernelPtr& k, const CltConfig& cfg) {
  CltResult res;
  res.sigma = cfg.sigma > 0 ? cfg.sigma : eta_sigma_closed_form(*k).sigma;
  const double rho = k->rho();
  const double nn = static_cast<double>(cfg.n);
  res.scale = res.sigma * std::sqrt(cfg.mode == CltMode::cts ? 2 * rho * nn : nn);
  const MeasureSpec env = clt_environment(cfg.rayed);
  const std::uint64_t tree_seed = derive_key(cfg.seed, stream_tag::tree);
  const std::uint64_t walk_seed = derive_key(cfg.seed, stream_tag::walk);
  const std::array<double, 3> fr{0.25, 0.5, 1.0};

  struct Out {
    std::array<double, 3> v;
    bool absorbed;
  };
  auto rows = parallel_map_with_state<Out>(
      cfg.paths, cfg.workers, [&] { return EnvironmentCache(k, env, tree_seed); },
      [&](EnvironmentCache& cache, std::size_t i) {
        std::optional<Tree> own;
        if (cfg.mode == CltMode::annealed) {
          Stream trng = Stream::for_replica(tree_seed, i);
          own.emplace(sample_tree(k, env, trng));
        }
        Tree& t = own ? *own : cache.get();
        Stream rng = Stream::for_replica(walk_seed, i);
        Out o{};
        if (cfg.mode == CltMode::cts) {
          auto tr = run_walk_cts(t, rho, nn, rng, Record::levels);
          std::size_t idx = 0;
          for (int j = 0; j < 3; ++j) {
            const double time = fr[j] * nn;
            while (idx + 1 < tr.jump_times.size() && tr.jump_times[idx + 1] <= time) ++idx;
            o.v[j] = std::abs(tr.levels[idx]) / (res.sigma * std::sqrt(2 * rho * time));
          }
          o.absorbed = tr.absorbed;
        } else {
          auto tr = run_walk(t, rho, cfg.n, rng, Record::levels);
          for (int j = 0; j < 3; ++j) {
            const auto step_index = static_cast<std::size_t>(std::floor(fr[j] * nn));
            const double lvl = tr.levels[std::min(step_index, tr.levels.size() - 1)];
            const double denom = res.sigma * std::sqrt(std::floor(fr[j] * nn));
            o.v[j] = (cfg.rayed ? lvl : std::abs(lvl)) / denom;
          }
          o.absorbed = tr.absorbed;
        }
        return o;
      });
  std::vector<double> last;
  for (const auto& o : rows) {
    res.samples.push_back(o.v);
    last.push_back(o.v[2]);
    res.absorbed += o.absorbed;
  }
  res.ks = cfg.rayed ? ks_test(last, normal_cdf, cfg.ks_max) : ks_test(last, reflected_normal_cdf, cfg.ks_max);
  res.ks.name = cfg.rayed ? "ks_normal" : "ks_reflected_normal";
  return res;
}

/// (type, sorted configuration) of the increasing-level neighbourhood of v.
inline std::string root_observable(Tree& t, NodeId v) {
  t.ensure_grown(v);
  std::vector<std::string> kids;
  for (std::uint32_t j = 0; j < t.degree(v); ++j) {
    std::string s;
    detail::append_type(s, t, t.child(v, j));
    kids.push_back(s);
  }
  std::sort(kids.begin(), kids.end());
  std::string out = std::to_string(t.type(v)) + ":";
  for (const auto& s : kids) out += s + ",";
  return out;
}

struct StationarityReport {
  TestReport before, after, degree_before, degree_after;
  std::map<int, double> degree_law;
  bool pass() const { return before.pass && after.pass && degree_before.pass && degree_after.pass; }
  nlohmann::json to_json() const {
    nlohmann::json law;
    for (auto [d, p] : degree_law) law[std::to_string(d)] = p;
    return {{"before", before.to_json()}, {"after", after.to_json()}, {"degree_before", degree_before.to_json()},
            {"degree_after", degree_after.to_json()}, {"degree_law", law}, {"pass", pass()}};
  }
};

/// Samples (T, ξ) ~ IMGWR, records the root observable, takes one RW_ρ step
/// and records the observable at the new position. Both are tested against
/// the exact finite law of (χ_o, x^o) under IMGWR, jointly and by degree.
inline StationarityReport stationarity_check(const KernelPtr& k, std::size_t N, std::uint64_t seed,
                                             unsigned workers = 1, double p_min = 0.01) {
  // Exact law, keyed like root_observable.
  std::map<std::string, double> exact;
  StationarityReport rep;
  for (const auto& [d, p] : k->root_law(true)) {
    const auto& x = k->model().offspring[d.type][d.atom];
    std::vector<std::string> kids;
    for (const auto& c : x.children) {
      std::string s = std::to_string(c.type);
      if (k->weighted_walk()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "@%.6g", c.weight);
        s += buf;
      }
      kids.push_back(s);
    }
    std::sort(kids.begin(), kids.end());
    std::string key = std::to_string(d.type) + ":";
    for (const auto& s : kids) key += s + ",";
    exact[key] += p;
    rep.degree_law[static_cast<int>(x.children.size())] += p;
  }
  struct Obs {
    std::string before, after;
    int d0, d1;
  };
  auto obs = parallel_map<Obs>(N, workers, [&](std::size_t i) {
    Stream rng = Stream::for_replica(seed, i);
    Tree t = sample_imgwr(k, MeasureSpec{Measure::imgwr, RootPolicy::canonical}, rng);
    Obs o;
    o.before = root_observable(t, t.root());
    o.d0 = static_cast<int>(t.degree(t.root()));
    const NodeId y = step(t, t.root(), k->rho(), rng);
    o.after = root_observable(t, y);
    o.d1 = static_cast<int>(t.degree(y));
    return o;
  });
  std::vector<std::string> keys;
  std::vector<double> probs;
  for (auto& [key, p] : exact) {
    keys.push_back(key);
    probs.push_back(p);
  }
  std::vector<int> degs;
  std::vector<double> dprobs;
  for (auto& [d, p] : rep.degree_law) {
    degs.push_back(d);
    dprobs.push_back(p);
  }
  auto tally = [&](auto field, const auto& ks) {
    std::vector<double> counts(ks.size() + 1, 0.0);  // last slot: impossible outcomes
    for (const auto& o : obs) {
      auto it = std::find(ks.begin(), ks.end(), field(o));
      counts[static_cast<std::size_t>(it - ks.begin())] += 1;
    }
    return counts;
  };
  auto test = [&](std::vector<double> counts, std::vector<double> p, const char* name) {
    const double impossible = counts.back();
    counts.pop_back();
    auto r = chi_square_gof(counts, p, p_min);
    r.name = name;
    r.extra["impossible"] = impossible;
    if (impossible > 0) {
      r.pass = false;
      r.p_value = 0.0;
    }
    return r;
  };
  rep.before = test(tally([](const Obs& o) { return o.before; }, keys), probs, "config_before");
  rep.after = test(tally([](const Obs& o) { return o.after; }, keys), probs, "config_after");
  rep.degree_before = test(tally([](const Obs& o) { return o.d0; }, degs), dprobs, "degree_before");
  rep.degree_after = test(tally([](const Obs& o) { return o.d1; }, degs), dprobs, "degree_after");
  return rep;
}

/// One long walk on one IMGWR environment with the quantities derived from it.
struct LongRun {
  std::uint64_t steps = 0;
  double ergodic_average = 0;  // (1/n) Σ_{t<n} 1/(ρ + d_{Y_t})
  double V = 0;                // V_n
  std::vector<std::uint64_t> corrector_n;
  std::vector<double> corrector_max;  // max_{t≤n}|ε_t|/√n
  int horizon = 0;
  double eta = 0;
  nlohmann::json to_json() const {
    return {{"steps", steps}, {"ergodic_average", ergodic_average}, {"V_n", V}, {"horizon", horizon},
            {"eta", eta}, {"corrector_n", corrector_n}, {"corrector_max_over_sqrt_n", corrector_max}};
  }
};

/// RW_ρ for `steps` steps on one IMGWR tree: ergodic average of the degree
/// functional, quadratic variation of M_t = S_{Y_t} with a fixed horizon, and
/// the corrector ε_t = M_t/η − h(Y_t).
inline LongRun long_run(const KernelPtr& k, std::uint64_t steps, std::uint64_t seed, int horizon,
                        const std::vector<std::uint64_t>& corrector_n, bool harmonic = true) {
  LongRun out;
  out.steps = steps;
  Stream trng(derive_key(seed, stream_tag::tree));
  Tree t = sample_imgwr(k, MeasureSpec{Measure::imgwr, RootPolicy::canonical}, trng);
  Stream rng(derive_key(seed, stream_tag::walk));
  auto tr = run_walk(t, k->rho(), steps, rng, Record::full);
  const double rho = k->rho();
  double acc = 0;
  for (std::uint64_t s = 0; s < steps; ++s) acc += 1.0 / (rho + t.degree(tr.vertices[s]));
  out.ergodic_average = acc / static_cast<double>(steps);
  if (!harmonic) return out;
  out.horizon = horizon;
  out.eta = eta_sigma_closed_form(*k).eta;
  HarmonicMap h(t, horizon);
  auto ms = martingale_series(tr, h);
  out.V = ms.V(steps);
  auto eps = corrector_series(tr, ms, out.eta);
  out.corrector_n = corrector_n;
  for (auto n : corrector_n) out.corrector_max.push_back(corrector_max(eps, n));
  return out;
}

struct CorrectorTrend {
  std::vector<std::uint64_t> n;
  std::vector<double> mean_max;  // mean over walks of max_{t≤n}|ε_t|/√n
  int horizon = 0;
  double eta = 0;
  bool strictly_decreasing = false;
  nlohmann::json to_json() const {
    return {{"n", n}, {"mean_corrector_max_over_sqrt_n", mean_max}, {"horizon", horizon}, {"eta", eta},
            {"strictly_decreasing", strictly_decreasing}};
  }
};

/// Rooted corrector ε_t = M_t/η − |X_t| for `walks` walks of RW_ρ on one
/// survival-conditioned tree (quenched), observed at the checkpoints.
inline CorrectorTrend corrector_trend(const KernelPtr& k, const std::vector<std::uint64_t>& ns, std::size_t walks,
                                      std::uint64_t seed, int horizon, unsigned workers = 1) {
  CorrectorTrend out;
  out.n = ns;
  out.horizon = horizon;
  out.eta = eta_sigma_closed_form(*k).eta;
  const std::uint64_t tree_seed = derive_key(seed, stream_tag::tree);
  const std::uint64_t walk_seed = derive_key(seed, stream_tag::walk);
  const MeasureSpec env = clt_environment(false);
  struct State {
    std::optional<Tree> tree;
    std::optional<HarmonicMap> h;
  };
  auto rows = parallel_map_with_state<std::vector<double>>(
      walks, workers, [] { return State{}; },
      [&](State& st, std::size_t i) {
        if (!st.tree || st.tree->size() > (std::size_t{1} << 22)) {
          st.h.reset();
          Stream trng(tree_seed);
          st.tree.emplace(sample_tree(k, env, trng));
          st.h.emplace(*st.tree, horizon);
        }
        Stream rng = Stream::for_replica(walk_seed, i);
        auto tr = run_walk(*st.tree, k->rho(), ns.back(), rng, Record::full);
        auto ms = martingale_series(tr, *st.h);
        auto eps = corrector_series(tr, ms, out.eta);
        std::vector<double> m;
        for (auto n : ns) m.push_back(corrector_max(eps, n));
        return m;
      });
  out.mean_max.assign(ns.size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < ns.size(); ++j) out.mean_max[j] += r[j] / static_cast<double>(walks);
  out.strictly_decreasing = true;
  for (std::size_t j = 1; j < ns.size(); ++j)
    out.strictly_decreasing = out.strictly_decreasing && out.mean_max[j] < out.mean_max[j - 1];
  return out;
}

struct CouplingReport {
  TestReport marginal;
  std::size_t x_identical = 0, runs = 0, matched = 0;
  bool increments_equal = true;
  bool pass() const { return marginal.pass && x_identical == runs && increments_equal; }
  nlohmann::json to_json() const {
    return {{"marginal", marginal.to_json()}, {"x_identical", x_identical}, {"runs", runs},
            {"matched_excursions", matched}, {"increments_equal", increments_equal}, {"pass", pass()}};
  }
};

/// N coupled runs against N direct IMGW₀ ⊗ RW_ρ runs of T steps, compared
/// through explored_profile; every X-side is checked against the uncoupled
/// reference walk.
inline CouplingReport coupling_check(const KernelPtr& k, std::uint64_t n, std::uint64_t T, TypeIndex a0,
                                     std::size_t N, std::uint64_t seed, unsigned workers = 1, int levels = 3,
                                     double p_min = 0.01) {
  struct Row {
    std::string coupled, direct;
    bool x_same, inc;
    std::size_t matched;
  };
  auto rows = parallel_map<Row>(N, workers, [&](std::size_t i) {
    Row r;
    const std::uint64_t s1 = derive_key(derive_key(seed, 1), i);
    auto pair = shifted_coupling(k, n, T, a0, s1);
    r.coupled = explored_profile(pair.y_tree, levels);
    r.inc = pair.increments_equal;
    r.matched = pair.matched;
    auto [rt, rtr] = coupling_reference_walk(k, s1, pair.x.steps);
    r.x_same = rtr.vertices == pair.x.vertices;
    Stream ys(derive_key(derive_key(derive_key(seed, 2), i), 2));
    Tree y = sample_imgw0(k, MeasureSpec{Measure::imgw0, RootPolicy::stationary}, ys);
    run_walk(y, k->rho(), T, ys, Record::endpoint);
    r.direct = explored_profile(y, levels);
    return r;
  });
  std::map<std::string, double> a, b;
  CouplingReport rep;
  rep.runs = N;
  for (const auto& r : rows) {
    a[r.coupled] += 1;
    b[r.direct] += 1;
    rep.x_identical += r.x_same;
    rep.matched += r.matched;
    rep.increments_equal = rep.increments_equal && r.inc;
  }
  rep.marginal = chi_square_two_sample(a, b, p_min);
  rep.marginal.name = "coupled_vs_direct_profile";
  return rep;
}

}  // namespace mgw
