#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgw {

using TypeIndex = std::uint16_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad input: unreadable, malformed or inconsistent model description.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Child {
  TypeIndex type = 0;
  double weight = 1.0;
  bool operator==(const Child&) const = default;
};

struct Atom {
  double p = 0.0;
  std::vector<Child> children;
};

/// Finite-support multi-type offspring law.
struct Model {
  std::vector<std::string> types;
  std::vector<std::vector<Atom>> offspring;  // indexed by parent type

  std::size_t type_count() const { return types.size(); }

  bool weighted() const {
    for (const auto& atoms : offspring)
      for (const auto& x : atoms)
        for (const auto& c : x.children)
          if (c.weight != 1.0) return true;
    return false;
  }

  TypeIndex type_index(const std::string& name) const {
    auto it = std::find(types.begin(), types.end(), name);
    if (it == types.end()) throw ModelError("unknown type \"" + name + "\"");
    return static_cast<TypeIndex>(it - types.begin());
  }
};

namespace detail {

inline double parse_probability(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ModelError("probability \"" + s + "\" is not a decimal number");
    return v;
  }
  throw ModelError("probability must be a number or a decimal string");
}

}  // namespace detail

inline Model model_from_json(const nlohmann::json& doc) {
  Model m;
  if (!doc.is_object() || !doc.contains("types") || !doc.contains("offspring"))
    throw ModelError("model needs \"types\" and \"offspring\"");
  if (!doc["types"].is_array() || doc["types"].empty()) throw ModelError("\"types\" must be a nonempty array");
  for (const auto& t : doc["types"]) {
    if (!t.is_string()) throw ModelError("type names must be strings");
    const auto name = t.get<std::string>();
    if (std::find(m.types.begin(), m.types.end(), name) != m.types.end())
      throw ModelError("duplicate type \"" + name + "\"");
    m.types.push_back(name);
  }
  if (m.types.size() > 0xffff) throw ModelError("too many types");
  const auto& off = doc["offspring"];
  if (!off.is_object()) throw ModelError("\"offspring\" must be an object");
  for (auto it = off.begin(); it != off.end(); ++it) m.type_index(it.key());  // rejects unknown keys
  m.offspring.resize(m.types.size());
  for (std::size_t a = 0; a < m.types.size(); ++a) {
    if (!off.contains(m.types[a])) throw ModelError("no offspring law for type \"" + m.types[a] + "\"");
    const auto& atoms = off[m.types[a]];
    if (!atoms.is_array() || atoms.empty())
      throw ModelError("offspring law of \"" + m.types[a] + "\" must be a nonempty array");
    for (const auto& aj : atoms) {
      if (!aj.contains("p") || !aj.contains("children")) throw ModelError("atom needs \"p\" and \"children\"");
      Atom x;
      x.p = detail::parse_probability(aj["p"]);
      if (!(x.p > 0)) throw ModelError("nonpositive probability in law of \"" + m.types[a] + "\"");
      if (!aj["children"].is_array()) throw ModelError("\"children\" must be an array");
      for (const auto& cj : aj["children"]) {
        if (!cj.contains("type") || !cj["type"].is_string()) throw ModelError("child needs a \"type\" string");
        Child c;
        c.type = m.type_index(cj["type"].get<std::string>());
        if (cj.contains("w")) {
          c.weight = detail::parse_probability(cj["w"]);
          if (!(c.weight > 0) || !std::isfinite(c.weight)) throw ModelError("nonpositive weight");
        }
        x.children.push_back(c);
      }
      m.offspring[a].push_back(std::move(x));
    }
  }
  return m;
}

inline Model load_model(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError(std::string("parse error: ") + e.what());
  }
  return model_from_json(doc);
}

inline Model load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json off = nlohmann::json::object();
  for (std::size_t a = 0; a < m.type_count(); ++a) {
    auto atoms = nlohmann::json::array();
    for (const auto& x : m.offspring[a]) {
      auto ch = nlohmann::json::array();
      for (const auto& c : x.children) {
        nlohmann::json cj = {{"type", m.types[c.type]}};
        if (c.weight != 1.0) cj["w"] = c.weight;
        ch.push_back(cj);
      }
      atoms.push_back({{"p", x.p}, {"children", ch}});
    }
    off[m.types[a]] = atoms;
  }
  return {{"types", m.types}, {"offspring", off}};
}

/// Entry (a,b) = Σ_atoms p Σ_j 1{y_j=b} α_j^γ.
inline Matrix mean_matrix(const Model& m, double gamma = 0.0) {
  const auto q = static_cast<Eigen::Index>(m.type_count());
  Matrix A = Matrix::Zero(q, q);
  for (Eigen::Index a = 0; a < q; ++a)
    for (const auto& x : m.offspring[a])
      for (const auto& c : x.children) A(a, c.type) += x.p * (gamma == 0.0 ? 1.0 : std::pow(c.weight, gamma));
  return A;
}

struct PerronFrobenius {
  double rho = 0;
  Vector r;  // right eigenvector, sums to 1
  Vector l;  // left eigenvector, sums to 1
  std::size_t iterations = 0;
};

namespace detail {

// Power iteration on (M + I)/2, sum-normalised. The shift makes irreducible
// periodic matrices primitive without moving eigenvectors.
inline Vector power_vector(const Matrix& M, double& rho, std::size_t& iters) {
  const auto q = M.rows();
  constexpr double tol = 1e-12;
  constexpr std::size_t max_iter = 1'000'000;
  Vector x = Vector::Constant(q, 1.0 / static_cast<double>(q));
  double prev = -1;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Vector y = 0.5 * (M * x + x);
    const double s = y.sum();
    if (!(s > 0)) throw ModelError("power iteration collapsed (matrix not irreducible?)");
    y /= s;
    const double change = (y - x).cwiseAbs().maxCoeff();
    x = y;
    if (std::abs(s - prev) < tol && change < tol) {
      rho = 2 * s - 1;
      iters = it;
      return x;
    }
    prev = s;
  }
  throw ModelError("power iteration did not converge");
}

}  // namespace detail

inline PerronFrobenius perron_frobenius(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw ModelError("matrix must be square and nonempty");
  if ((A.array() < 0).any()) throw ModelError("matrix must be nonnegative");
  PerronFrobenius pf;
  std::size_t it_r = 0, it_l = 0;
  double rho_l = 0;
  pf.r = detail::power_vector(A, pf.rho, it_r);
  pf.l = detail::power_vector(A.transpose(), rho_l, it_l);
  pf.iterations = std::max(it_r, it_l);
  return pf;
}

/// Mean matrix at tilt γ with its Perron–Frobenius data and the ray chain.
struct SpectralData {
  double gamma = 0;
  Matrix matrix;
  double rho = 0;
  Vector r, l;
  Matrix K;   // K(a,b) = r_b A(a,b) / (ρ r_a)
  Vector pi;  // ∝ r_a l_a
  Matrix K_reversed;  // K̃(a,b) = π(b) K(b,a) / π(a)
};

inline SpectralData spectral_data(const Model& m, double gamma = 0.0) {
  SpectralData s;
  s.gamma = gamma;
  s.matrix = mean_matrix(m, gamma);
  const auto pf = perron_frobenius(s.matrix);
  s.rho = pf.rho;
  s.r = pf.r;
  s.l = pf.l;
  const auto q = s.matrix.rows();
  s.K = Matrix::Zero(q, q);
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index b = 0; b < q; ++b) s.K(a, b) = s.r(b) * s.matrix(a, b) / (s.rho * s.r(a));
    s.K.row(a) /= s.K.row(a).sum();
  }
  s.pi = s.r.cwiseProduct(s.l);
  s.pi /= s.pi.sum();
  s.K_reversed = Matrix::Zero(q, q);
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index b = 0; b < q; ++b) s.K_reversed(a, b) = s.pi(b) * s.K(b, a) / s.pi(a);
    s.K_reversed.row(a) /= s.K_reversed.row(a).sum();
  }
  return s;
}

/// Ray chain of the plain walk (γ=0) or of the weighted walk (γ=1).
inline std::pair<Matrix, Vector> ray_chain(const Model& m, double gamma = 0.0) {
  auto s = spectral_data(m, gamma);
  return {s.K, s.pi};
}

inline std::vector<std::string> validate(const Model& m) {
  std::vector<std::string> out;
  const auto q = m.type_count();
  if (q == 0 || m.offspring.size() != q) {
    out.push_back("model has no types or a missing offspring law");
    return out;
  }
  for (std::size_t a = 0; a < q; ++a) {
    double s = 0;
    for (const auto& x : m.offspring[a]) {
      if (x.p < 0) out.push_back("negative probability in law of " + m.types[a]);
      for (const auto& c : x.children)
        if (!(c.weight > 0)) out.push_back("nonpositive weight in law of " + m.types[a]);
      s += x.p;
    }
    if (std::abs(s - 1.0) > 1e-12) out.push_back("probabilities of " + m.types[a] + " sum to " + std::to_string(s));
  }
  const Matrix A = mean_matrix(m, 0.0);
  // Reachability closure on the support graph.
  std::vector<std::vector<char>> reach(q, std::vector<char>(q, 0));
  for (std::size_t a = 0; a < q; ++a)
    for (std::size_t b = 0; b < q; ++b) reach[a][b] = A(a, b) > 0;
  for (std::size_t k = 0; k < q; ++k)
    for (std::size_t a = 0; a < q; ++a)
      if (reach[a][k])
        for (std::size_t b = 0; b < q; ++b)
          if (reach[k][b]) reach[a][b] = 1;
  bool irreducible = true;
  for (std::size_t a = 0; a < q; ++a)
    for (std::size_t b = 0; b < q; ++b) irreducible = irreducible && reach[a][b];
  if (!irreducible) {
    out.push_back("mean matrix is reducible");
    return out;
  }
  Eigen::MatrixXi P = (A.array() > 0).cast<int>();
  const Eigen::MatrixXi S = P;
  bool positive = (P.array() > 0).all();
  for (std::size_t n = 2; !positive && n <= 2 * q * q; ++n) {
    P = ((P * S).array() > 0).cast<int>();
    positive = (P.array() > 0).all();
  }
  if (!positive) out.push_back("mean matrix is not positive regular");
  try {
    const auto pf = perron_frobenius(A);
    if (pf.rho <= 1.0) out.push_back("rho <= 1 (not supercritical): rho = " + std::to_string(pf.rho));
  } catch (const ModelError& e) {
    out.push_back(e.what());
  }
  return out;
}

inline void require_valid(const Model& m) {
  const auto v = validate(m);
  if (!v.empty()) throw ModelError("invalid model: " + v.front());
}

/// F^a(s) = Σ_atoms p Π_j s_{y_j}.
inline Vector generating_function_eval(const Model& m, const Vector& s) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m.type_count()));
  for (std::size_t a = 0; a < m.type_count(); ++a)
    for (const auto& x : m.offspring[a]) {
      double prod = x.p;
      for (const auto& c : x.children) prod *= s(c.type);
      out(static_cast<Eigen::Index>(a)) += prod;
    }
  return out;
}

struct ExtinctionData {
  Vector x;
  std::size_t iterations = 0;
};

inline ExtinctionData extinction_probs(const Model& m) {
  ExtinctionData e;
  e.x = Vector::Zero(static_cast<Eigen::Index>(m.type_count()));
  constexpr std::size_t max_iter = 100'000'000;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Vector next = generating_function_eval(m, e.x);
    const double change = (next - e.x).cwiseAbs().maxCoeff();
    e.x = next;
    e.iterations = it;
    if (change < 1e-14) break;
  }
  return e;
}

namespace detail {

inline double binomial(int n, int k) {
  double b = 1;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

// Children grouped by (type, weight); order of first appearance.
struct ChildGroup {
  Child child;
  int count;
};

inline std::vector<ChildGroup> group_children(const std::vector<Child>& cs) {
  std::vector<ChildGroup> g;
  for (const auto& c : cs) {
    auto it = std::find_if(g.begin(), g.end(), [&](const ChildGroup& x) { return x.child == c; });
    if (it == g.end())
      g.push_back({c, 1});
    else
      ++it->count;
  }
  return g;
}

}  // namespace detail

/// Law of the surviving-children configuration given at least one survivor:
/// generating function (F(𝔵 + (1−𝔵)s) − 𝔵)/(1−𝔵). Identical configurations
/// (as multisets) are merged.
inline Model infinite_descent_transform(const Model& m) {
  const auto ext = extinction_probs(m);
  Model out;
  out.types = m.types;
  out.offspring.resize(m.type_count());
  for (std::size_t a = 0; a < m.type_count(); ++a) {
    const double xa = ext.x(static_cast<Eigen::Index>(a));
    std::map<std::vector<std::pair<TypeIndex, double>>, std::pair<double, std::vector<Child>>> merged;
    for (const auto& x : m.offspring[a]) {
      const auto groups = detail::group_children(x.children);
      std::vector<int> keep(groups.size(), 0);
      // Odometer over survivor counts per group.
      for (;;) {
        double prob = x.p;
        int survivors = 0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
          const double xb = ext.x(groups[g].child.type);
          const int n = groups[g].count, k = keep[g];
          prob *= detail::binomial(n, k) * std::pow(1 - xb, k) * std::pow(xb, n - k);
          survivors += k;
        }
        if (survivors > 0 && prob > 0) {
          std::vector<Child> cfg;
          for (std::size_t g = 0; g < groups.size(); ++g)
            for (int k = 0; k < keep[g]; ++k) cfg.push_back(groups[g].child);
          std::vector<std::pair<TypeIndex, double>> key;
          for (const auto& c : cfg) key.emplace_back(c.type, c.weight);
          std::sort(key.begin(), key.end());
          auto& slot = merged[key];
          if (slot.second.empty()) slot.second = cfg;
          slot.first += prob / (1 - xa);
        }
        std::size_t g = 0;
        while (g < groups.size() && keep[g] == groups[g].count) keep[g++] = 0;
        if (g == groups.size()) break;
        ++keep[g];
      }
    }
    for (auto& [key, v] : merged) out.offspring[a].push_back({v.first, v.second});
  }
  return out;
}

/// Size-biased law q̂^a(x) = q^a(x) ⟨x, r⟩_α / (ρ r_a), in the atom order of
/// the input; ⟨x, r⟩_α = Σ_j α_j^γ r_{y_j}. The empty configuration gets 0.
inline std::vector<Atom> inflated_law(const Model& m, TypeIndex a, const SpectralData& s) {
  std::vector<Atom> out = m.offspring[a];
  double total = 0, comp = 0;  // Neumaier summation
  for (auto& x : out) {
    double dot = 0;
    for (const auto& c : x.children) dot += (s.gamma == 0.0 ? 1.0 : std::pow(c.weight, s.gamma)) * s.r(c.type);
    x.p = x.children.empty() ? 0.0 : x.p * dot / (s.rho * s.r(a));
    const double t = total + x.p;
    comp += std::abs(total) >= std::abs(x.p) ? (total - t) + x.p : (x.p - t) + total;
    total = t;
  }
  total += comp;
  for (auto& x : out) x.p /= total;
  return out;
}

/// γ ↦ ρ̄(γ), with memoised eigen-data. Not thread-safe; copy per worker.
class GammaCurve {
 public:
  explicit GammaCurve(Model m) : model_(std::move(m)) {}

  const SpectralData& at(double gamma) {
    auto it = cache_.find(gamma);
    if (it == cache_.end()) {
      auto s = spectral_data(model_, gamma);
      if (!(s.rho > 0) || !std::isfinite(s.rho)) throw ModelError("eigenvalue lost at gamma = " + std::to_string(gamma));
      it = cache_.emplace(gamma, std::move(s)).first;
    }
    return it->second;
  }

  double rho(double gamma) { return at(gamma).rho; }
  double log_rho(double gamma) { return std::log(rho(gamma)); }
  const Model& model() const { return model_; }

 private:
  Model model_;
  std::map<double, SpectralData> cache_;
};

inline GammaCurve gamma_curve(const Model& m) { return GammaCurve(m); }

}  // namespace mgw
