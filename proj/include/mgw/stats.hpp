#pragma once

#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgw {

/// Acceptance knobs in one place. Loadable from JSON so runs can be retuned
/// without recompiling; every field has the documented default.
struct Thresholds {
  double p_min = 0.01;            // chi-square / KS p-value floor
  double trend_p_min = 0.05;      // Mann–Kendall "no trend" floor
  double sigma_band = 3.0;        // CI half-width in standard errors
  double ks_rooted_e0 = 0.02;
  double ks_default = 0.03;
  double ergodic_rel_tol = 0.01;
  double quadratic_variation_rel_tol = 0.02;
  double exact_tol = 1e-10;
  double extinction_tol = 1e-12;
  double harmonic_tol = 1e-12;
  double classifier_tol = 1e-8;
  double critical_band = 1e-9;

  static Thresholds from_json(const nlohmann::json& j) {
    Thresholds t;
    auto get = [&](const char* k, double& v) {
      if (j.contains(k)) v = j.at(k).get<double>();
    };
    get("p_min", t.p_min);
    get("trend_p_min", t.trend_p_min);
    get("sigma_band", t.sigma_band);
    get("ks_rooted_e0", t.ks_rooted_e0);
    get("ks_default", t.ks_default);
    get("ergodic_rel_tol", t.ergodic_rel_tol);
    get("quadratic_variation_rel_tol", t.quadratic_variation_rel_tol);
    get("exact_tol", t.exact_tol);
    get("extinction_tol", t.extinction_tol);
    get("harmonic_tol", t.harmonic_tol);
    get("classifier_tol", t.classifier_tol);
    get("critical_band", t.critical_band);
    return t;
  }

  static Thresholds from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open thresholds file " + path);
    return from_json(nlohmann::json::parse(in));
  }

  nlohmann::json to_json() const {
    return {{"p_min", p_min},
            {"trend_p_min", trend_p_min},
            {"sigma_band", sigma_band},
            {"ks_rooted_e0", ks_rooted_e0},
            {"ks_default", ks_default},
            {"ergodic_rel_tol", ergodic_rel_tol},
            {"quadratic_variation_rel_tol", quadratic_variation_rel_tol},
            {"exact_tol", exact_tol},
            {"extinction_tol", extinction_tol},
            {"harmonic_tol", harmonic_tol},
            {"classifier_tol", classifier_tol},
            {"critical_band", critical_band}};
  }
};

struct TestReport {
  std::string name;
  double statistic = 0;
  std::optional<double> p_value;
  double threshold = 0;
  std::size_t n1 = 0, n2 = 0;
  int dof = 0;
  bool pass = false;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j = {{"name", name}, {"statistic", statistic}, {"threshold", threshold},
                        {"n1", n1}, {"pass", pass}};
    j["p_value"] = p_value ? nlohmann::json(*p_value) : nlohmann::json(nullptr);
    if (n2) j["n2"] = n2;
    if (dof) j["dof"] = dof;
    if (!extra.empty()) j["extra"] = extra;
    return j;
  }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Law of |N(0,1)|: 2Φ(x) − 1 for x ≥ 0.
inline double reflected_normal_cdf(double x) { return x <= 0 ? 0.0 : std::erf(x / std::sqrt(2.0)); }

/// Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  if (lambda < 1.18) {
    // Small-λ form from the theta-function identity converges faster here.
    const double y = std::exp(-M_PI * M_PI / (8 * lambda * lambda));
    double s = 0;
    for (int k = 1; k <= 51; k += 2) s += std::pow(y, k * k);
    return std::clamp(1.0 - std::sqrt(2 * M_PI) / lambda * s, 0.0, 1.0);
  }
  double s = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 1 : -1) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2 * s, 0.0, 1.0);
}

/// One-sample Kolmogorov–Smirnov statistic with the asymptotic p-value
/// (Stephens' finite-n correction).
inline TestReport ks_test(std::vector<double> sample, const std::function<double(double)>& cdf,
                          double max_distance = 1.0) {
  if (sample.empty()) throw std::invalid_argument("ks_test: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  TestReport r;
  r.name = "ks";
  r.statistic = d;
  r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
  r.threshold = max_distance;
  r.n1 = sample.size();
  r.pass = d < max_distance;
  return r;
}

inline double chi_square_p(double stat, int dof) {
  if (dof <= 0) return 1.0;
  if (stat <= 0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, stat / 2.0);
}

namespace detail {

// Pools the bins whose expectation is below `min_expected` (smallest first)
// until every pooled bin reaches it. Returns bin → group index.
inline std::vector<std::size_t> merge_sparse_bins(const std::vector<double>& expected, double min_expected) {
  const std::size_t k = expected.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return expected[a] < expected[b]; });
  std::vector<std::size_t> group(k, 0);
  std::size_t next = 0;
  double pool = 0;
  bool pool_open = false;
  std::size_t pool_id = 0;
  for (std::size_t idx : order) {
    if (expected[idx] >= min_expected && !pool_open) {
      group[idx] = next++;
      continue;
    }
    if (!pool_open) {
      pool_open = true;
      pool_id = next++;
      pool = 0;
    }
    group[idx] = pool_id;
    pool += expected[idx];
    if (pool >= min_expected) pool_open = false;
  }
  // A short trailing pool joins the last full group.
  if (pool_open && next >= 2) {
    const std::size_t target = pool_id - 1;
    for (auto& g : group)
      if (g == pool_id) g = target;
    --next;
  }
  return group;
}

}  // namespace detail

/// Pearson goodness of fit with pooling of sparse bins.
inline TestReport chi_square_gof(const std::vector<double>& observed, const std::vector<double>& probs,
                                 double p_min = 0.01, double min_expected = 5.0) {
  if (observed.size() != probs.size() || observed.empty()) throw std::invalid_argument("chi_square_gof: size mismatch");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  const double ptot = std::accumulate(probs.begin(), probs.end(), 0.0);
  std::vector<double> expected(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) expected[i] = n * probs[i] / ptot;
  const auto group = detail::merge_sparse_bins(expected, min_expected);
  const std::size_t g = *std::max_element(group.begin(), group.end()) + 1;
  TestReport r;
  r.name = "chi_square_gof";
  r.threshold = p_min;
  r.n1 = static_cast<std::size_t>(n);
  if (g < 2) {
    // Degenerate law (or a sample too small to split): only observations
    // outside the support can count against it.
    double outside = 0;
    for (std::size_t i = 0; i < observed.size(); ++i)
      if (probs[i] <= 0) outside += observed[i];
    r.statistic = outside > 0 ? INFINITY : 0.0;
    r.dof = 0;
    r.p_value = outside > 0 ? 0.0 : 1.0;
    r.pass = *r.p_value > p_min;
    return r;
  }
  std::vector<double> o(g, 0.0), e(g, 0.0);
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o[group[i]] += observed[i];
    e[group[i]] += expected[i];
  }
  double stat = 0;
  for (std::size_t i = 0; i < g; ++i)
    if (e[i] > 0) stat += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
    else if (o[i] > 0) stat = INFINITY;
  r.statistic = stat;
  r.dof = static_cast<int>(g) - 1;
  r.p_value = std::isfinite(stat) ? chi_square_p(stat, r.dof) : 0.0;
  r.pass = *r.p_value > p_min;
  return r;
}

/// Two-sample Pearson test of homogeneity over categorical counts.
inline TestReport chi_square_two_sample(const std::map<std::string, double>& a, const std::map<std::string, double>& b,
                                        double p_min = 0.01, double min_expected = 5.0) {
  std::map<std::string, std::pair<double, double>> joint;
  for (const auto& [k, v] : a) joint[k].first += v;
  for (const auto& [k, v] : b) joint[k].second += v;
  double na = 0, nb = 0;
  for (const auto& [k, v] : joint) {
    na += v.first;
    nb += v.second;
  }
  if (na == 0 || nb == 0) throw std::invalid_argument("chi_square_two_sample: empty sample");
  const double n = na + nb;
  // Pool on the smaller of the two expectations of each category.
  std::vector<std::pair<double, double>> cells;
  std::vector<double> expected;
  for (const auto& [k, v] : joint) {
    cells.push_back(v);
    expected.push_back((v.first + v.second) * std::min(na, nb) / n);
  }
  const auto group = detail::merge_sparse_bins(expected, min_expected);
  const std::size_t g = *std::max_element(group.begin(), group.end()) + 1;
  if (g < 2) throw std::invalid_argument("chi_square_two_sample: all mass in one bin after merging");
  std::vector<double> oa(g, 0.0), ob(g, 0.0);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    oa[group[i]] += cells[i].first;
    ob[group[i]] += cells[i].second;
  }
  double stat = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const double tot = oa[i] + ob[i];
    const double ea = tot * na / n, eb = tot * nb / n;
    if (ea > 0) stat += (oa[i] - ea) * (oa[i] - ea) / ea;
    if (eb > 0) stat += (ob[i] - eb) * (ob[i] - eb) / eb;
  }
  TestReport r;
  r.name = "chi_square_two_sample";
  r.statistic = stat;
  r.dof = static_cast<int>(g) - 1;
  r.p_value = chi_square_p(stat, r.dof);
  r.threshold = p_min;
  r.n1 = static_cast<std::size_t>(na);
  r.n2 = static_cast<std::size_t>(nb);
  r.pass = *r.p_value > p_min;
  return r;
}

/// Mann–Kendall trend test. Without ties (and n ≤ 60) the null law of S is exact (via
/// the inversion-count distribution); otherwise the tie-corrected normal
/// approximation with continuity correction is used. `pass` means "no
/// monotone trend detected at level alpha"; extra.direction gives sign(S).
inline TestReport trend_test(const std::vector<double>& x, double alpha = 0.05) {
  const std::size_t n = x.size();
  if (n < 4) throw std::invalid_argument("trend_test: needs at least 4 points");
  long long s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += (x[j] > x[i]) - (x[j] < x[i]);
  std::map<double, int> ties;
  for (double v : x) ++ties[v];
  bool has_ties = false;
  for (const auto& [v, c] : ties) has_ties = has_ties || c > 1;

  double p = 1;
  const bool exact = !has_ties && n <= 60;
  if (exact) {
    // Distribution of inversions I of a random permutation; S = C(n,2) − 2I.
    const std::size_t m = n * (n - 1) / 2;
    std::vector<long double> dist(m + 1, 0.0L);
    dist[0] = 1;
    std::size_t hi = 0;
    for (std::size_t k = 2; k <= n; ++k) {
      std::vector<long double> next(m + 1, 0.0L);
      for (std::size_t i = 0; i <= hi; ++i)
        for (std::size_t add = 0; add < k; ++add) next[i + add] += dist[i] / static_cast<long double>(k);
      hi += k - 1;
      dist.swap(next);
    }
    long double tail = 0;
    const long long abs_s = std::llabs(s);
    for (std::size_t i = 0; i <= m; ++i) {
      const long long si = static_cast<long long>(m) - 2 * static_cast<long long>(i);
      if (std::llabs(si) >= abs_s) tail += dist[i];
    }
    p = std::min(1.0, static_cast<double>(tail));
  } else {
    double var = static_cast<double>(n) * (n - 1) * (2 * n + 5);
    for (const auto& [v, c] : ties) var -= static_cast<double>(c) * (c - 1) * (2 * c + 5);
    var /= 18.0;
    if (var <= 0) {
      p = 1;
    } else {
      const double z = s == 0 ? 0.0 : (std::abs(static_cast<double>(s)) - 1) / std::sqrt(var);
      p = std::min(1.0, 2 * (1 - normal_cdf(z)));
    }
  }
  TestReport r;
  r.name = "mann_kendall";
  r.statistic = static_cast<double>(s);
  r.p_value = p;
  r.threshold = alpha;
  r.n1 = n;
  r.pass = p > alpha;
  r.extra["direction"] = s > 0 ? 1 : (s < 0 ? -1 : 0);
  r.extra["exact"] = exact;
  return r;
}

/// Sample mean with its standard error.
struct MeanCI {
  double mean = 0;
  double sd = 0;
  double se = 0;
  std::size_t n = 0;
  bool covers(double value, double band) const { return std::abs(mean - value) <= band * se + 1e-15; }
  nlohmann::json to_json() const { return {{"mean", mean}, {"sd", sd}, {"se", se}, {"n", n}}; }
};

inline MeanCI mean_ci(const std::vector<double>& v) {
  MeanCI c;
  c.n = v.size();
  if (v.empty()) return c;
  // Welford
  double mean = 0, m2 = 0;
  std::size_t k = 0;
  for (double x : v) {
    ++k;
    const double d = x - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (x - mean);
  }
  c.mean = mean;
  c.sd = v.size() > 1 ? std::sqrt(m2 / static_cast<double>(v.size() - 1)) : 0.0;
  c.se = c.sd / std::sqrt(static_cast<double>(v.size()));
  return c;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace mgw
