// mgw — batch front-end: spectral data, samplers, walks and the statistical
// checks, with CSV for bulk samples and JSON for reports.
//
// Exit codes: 0 all contained checks pass, 1 a check failed, 2 usage or model error.

#include "mgw/mgw.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace mgw;
using nlohmann::json;

struct Global {
  std::string model;
  std::uint64_t seed = 1;
  std::size_t replicas = 1;
  unsigned workers = 1;
  std::string out;
  std::string format = "json";
  std::string thresholds;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw UsageError("cannot open output " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

Model load(const Global& g) {
  if (g.model.empty()) throw UsageError("--model is required");
  return load_model_file(g.model);
}

Thresholds thresholds(const Global& g) { return g.thresholds.empty() ? Thresholds{} : Thresholds::from_file(g.thresholds); }

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r;
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Measure parse_measure(const std::string& s) {
  static const std::map<std::string, Measure> names{{"mgw", Measure::mgw},
                                                    {"mgw-nonextinct", Measure::mgw_nonextinct},
                                                    {"imgw0", Measure::imgw0},
                                                    {"imgw", Measure::imgw},
                                                    {"imgwr", Measure::imgwr},
                                                    {"qnstar", Measure::qnstar}};
  auto it = names.find(s);
  if (it == names.end()) throw UsageError("unknown measure " + s);
  return it->second;
}

TypeIndex parse_type(const Model& m, const std::string& name) {
  return m.type_index(name);
}

int emit(Output& out, const json& report, bool pass) {
  out.stream() << report.dump(2) << '\n';
  return pass ? 0 : 1;
}

// --- subcommands ------------------------------------------------------------

int cmd_spectral(const Global& g) {
  const Model m = load(g);
  const auto problems = validate(m);
  json rep;
  rep["types"] = m.types;
  rep["valid"] = problems.empty();
  rep["problems"] = problems;
  if (!problems.empty()) {
    for (const auto& p : problems) std::cerr << "invalid model: " << p << '\n';
    Output out(g.out);
    emit(out, rep, false);
    return 2;
  }
  const auto s = spectral_data(m);
  rep["A"] = mat(s.matrix);
  rep["rho"] = s.rho;
  rep["r"] = vec(s.r);
  rep["l"] = vec(s.l);
  rep["K"] = mat(s.K);
  rep["pi"] = vec(s.pi);
  const auto ext = extinction_probs(m);
  rep["extinction"] = vec(ext.x);
  if ((ext.x.array() > 0).any()) rep["infinite_descent"] = model_to_json(infinite_descent_transform(m));
  GammaCurve curve(m);
  json grid = json::array();
  for (int i = 0; i <= 20; ++i) {
    const double gam = (3 * i - 20) / 20.0;
    grid.push_back({{"gamma", gam}, {"rho_bar", curve.rho(gam)}});
  }
  rep["rho_bar_curve"] = grid;
  try {
    rep["moments"] = eta_sigma_closed_form(*make_kernel(m, WalkKind::plain)).to_json();
  } catch (const SingularMomentSystem& e) {
    rep["moments"] = {{"error", e.what()}};
  }
  Output out(g.out);
  return emit(out, rep, true);
}

struct SampleOpts {
  std::string measure = "mgw";
  std::string root_type;
  int depth = 4;
  int ray_depth = 0;
  int level = 1;
  std::string walk = "plain";
};

MeasureSpec make_spec(const Model& m, const SampleOpts& o) {
  MeasureSpec s;
  s.which = parse_measure(o.measure);
  if (!o.root_type.empty()) {
    s.root = RootPolicy::fixed;
    s.root_type = parse_type(m, o.root_type);
  }
  s.depth = o.depth;
  s.ray_depth = o.ray_depth;
  s.level = o.level;
  return s;
}

KernelPtr kernel_for(const Model& m, const std::string& walk) {
  if (walk != "plain" && walk != "rwre") throw UsageError("--walk must be plain or rwre");
  return make_kernel(m, walk == "rwre" ? WalkKind::rwre : WalkKind::plain);
}

int cmd_sample(const Global& g, const SampleOpts& o) {
  const Model m = load(g);
  auto k = kernel_for(m, o.walk);
  const MeasureSpec spec = make_spec(m, o);
  auto trees = parallel_map<std::string>(g.replicas, g.workers, [&](std::size_t i) {
    Stream rng = Stream::for_replica(g.seed, i);
    Tree t = sample_tree(k, spec, rng);
    std::ostringstream os;
    if (g.format == "csv") {
      std::vector<std::map<int, std::uint64_t>> by_type(k->type_count());
      for (NodeId v = 0; v < t.size(); ++v) ++by_type[t.type(v)][t.level(v)];
      for (std::size_t a = 0; a < by_type.size(); ++a)
        for (auto [lvl, c] : by_type[a]) os << i << ',' << lvl << ',' << m.types[a] << ',' << c << '\n';
    } else {
      std::ostringstream lines;
      t.dump_jsonl(lines);
      std::istringstream in(lines.str());
      for (std::string line; std::getline(in, line);) {
        json j = json::parse(line);
        j["replica"] = i;
        os << j.dump() << '\n';
      }
    }
    return os.str();
  });
  Output out(g.out);
  if (g.format == "csv") out.stream() << "replica,level,type,count\n";
  for (const auto& s : trees) out.stream() << s;
  return 0;
}

struct WalkOpts {
  SampleOpts sample;
  double lambda = 0;
  std::uint64_t steps = 1000;
  bool cts = false;
};

int cmd_walk(const Global& g, const WalkOpts& o) {
  const Model m = load(g);
  auto k = kernel_for(m, o.sample.walk);
  const MeasureSpec spec = make_spec(m, o.sample);
  const double lambda = o.lambda > 0 ? o.lambda : k->rho();
  auto runs = parallel_map<std::pair<std::string, json>>(g.replicas, g.workers, [&](std::size_t i) {
    Stream trng = Stream::for_replica(derive_key(g.seed, stream_tag::tree), i);
    Tree t = sample_tree(k, spec, trng);
    Stream rng = Stream::for_replica(derive_key(g.seed, stream_tag::walk), i);
    auto tr = o.cts ? run_walk_cts(t, lambda, static_cast<double>(o.steps), rng)
                    : run_walk(t, lambda, o.steps, rng);
    std::ostringstream os;
    if (g.format == "csv") write_trajectory_csv(os, tr, t.rayed());
    json j = {{"replica", i}, {"steps", tr.steps}, {"last_level", tr.last_level}, {"absorbed", tr.absorbed},
              {"visited", t.size()}};
    return std::pair{os.str(), j};
  });
  Output out(g.out);
  if (g.format == "csv") {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      std::istringstream in(runs[i].first);
      std::string line;
      std::getline(in, line);
      if (i == 0) out.stream() << "replica," << line << '\n';
      while (std::getline(in, line)) out.stream() << i << ',' << line << '\n';
    }
    return 0;
  }
  json rep = {{"lambda", lambda}, {"runs", json::array()}};
  for (auto& r : runs) rep["runs"].push_back(r.second);
  return emit(out, rep, true);
}

struct CltOpts {
  std::string mode = "quenched";
  bool rayed = false;
  std::uint64_t n = 10000;
  std::size_t paths = 10000;
  double ks_max = 0;
  double sigma = 0;
};

int cmd_clt(const Global& g, const CltOpts& o) {
  const Model m = load(g);
  auto k = make_kernel(m, WalkKind::plain);
  const Thresholds th = thresholds(g);
  CltConfig cfg;
  if (o.mode == "quenched") cfg.mode = CltMode::quenched;
  else if (o.mode == "annealed") cfg.mode = CltMode::annealed;
  else if (o.mode == "cts") cfg.mode = CltMode::cts;
  else throw UsageError("--mode must be quenched, annealed or cts");
  cfg.rayed = o.rayed;
  cfg.n = o.n;
  cfg.paths = o.paths;
  cfg.seed = g.seed;
  cfg.workers = g.workers;
  cfg.sigma = o.sigma;
  cfg.ks_max = o.ks_max > 0 ? o.ks_max : th.ks_default;
  auto res = run_clt(k, cfg);
  Output out(g.out);
  if (g.format == "csv") {
    res.write_csv(out.stream());
    std::cerr << res.to_json().dump() << '\n';
    return res.ks.pass ? 0 : 1;
  }
  return emit(out, res.to_json(), res.ks.pass);
}

struct ReverseOpts {
  std::size_t N = 100000;
  std::uint64_t steps = 1000000;
  int horizon = 0;
};

int cmd_reverse_check(const Global& g, const ReverseOpts& o) {
  const Model m = load(g);
  auto k = make_kernel(m, WalkKind::plain);
  const Thresholds th = thresholds(g);
  auto st = stationarity_check(k, o.N, derive_key(g.seed, 1), g.workers, th.p_min);
  const int horizon = o.horizon > 0 ? o.horizon : default_horizon(static_cast<double>(o.steps), k->rho());
  auto run = long_run(k, o.steps, derive_key(g.seed, 2), horizon, {}, true);
  const double target = 1.0 / (2 * k->rho());
  const double qv = std::pow(eta_sigma_closed_form(*k).eta * eta_sigma_closed_form(*k).sigma, 2);
  const bool erg = std::abs(run.ergodic_average - target) <= th.ergodic_rel_tol * target;
  const bool vq = std::abs(run.V - qv) <= th.quadratic_variation_rel_tol * qv;
  json rep = {{"stationarity", st.to_json()},
              {"long_run", run.to_json()},
              {"ergodic_target", target},
              {"ergodic_pass", erg},
              {"quadratic_variation_target", qv},
              {"quadratic_variation_pass", vq}};
  const bool pass = st.pass() && erg && vq;
  rep["pass"] = pass;
  Output out(g.out);
  return emit(out, rep, pass);
}

struct RwreOpts {
  std::vector<double> lambdas;
  std::vector<double> sweep;  // lo hi step
  std::vector<std::uint64_t> simulate;
  std::size_t N = 200;
};

int cmd_rwre(const Global& g, const RwreOpts& o) {
  const Model m = load(g);
  const Thresholds th = thresholds(g);
  std::vector<double> ls = o.lambdas;
  if (!o.sweep.empty()) {
    if (o.sweep.size() != 3 || !(o.sweep[2] > 0)) throw UsageError("--sweep takes LO HI STEP");
    for (double l = o.sweep[0]; l <= o.sweep[1] + 1e-12; l += o.sweep[2]) ls.push_back(l);
  }
  if (ls.empty()) throw UsageError("give --lambda or --sweep");
  auto k = make_kernel(m, WalkKind::rwre);
  json rep = {{"reports", json::array()}};
  bool pass = true;
  for (double l : ls) {
    json j = classify_rwre(m, l, th.critical_band).to_json();
    if (!o.simulate.empty()) {
      auto sim = recurrence_simulation_check(k, l, o.simulate, o.N, g.seed, g.workers);
      j["simulation"] = sim.to_json();
      pass = pass && sim.pass;
    }
    rep["reports"].push_back(j);
  }
  rep["pass"] = pass;
  Output out(g.out);
  return emit(out, rep, pass);
}

struct CoupleOpts {
  std::uint64_t n = 2;
  std::uint64_t T = 200;
  std::string a0;
  std::size_t N = 10000;
  int levels = 3;
};

int cmd_couple(const Global& g, const CoupleOpts& o) {
  const Model m = load(g);
  auto k = make_kernel(m, WalkKind::plain);
  const TypeIndex a0 = o.a0.empty() ? 0 : parse_type(m, o.a0);
  auto rep = coupling_check(k, o.n, o.T, a0, o.N, g.seed, g.workers, o.levels, thresholds(g).p_min);
  Output out(g.out);
  return emit(out, rep.to_json(), rep.pass());
}

struct ConductanceOpts {
  std::vector<int> ks{1, 2, 4, 8};
  double lambda = 0;
  std::string walk = "plain";
  bool trend = false;
  double gamma = -1;
  int n = 6;
  std::string root_type;
};

int cmd_conductance(const Global& g, const ConductanceOpts& o) {
  const Model m = load(g);
  auto k = kernel_for(m, o.walk);
  const Thresholds th = thresholds(g);
  Output out(g.out);
  if (o.gamma >= 0) {
    const TypeIndex a = o.root_type.empty() ? 0 : parse_type(m, o.root_type);
    auto r = mandelbrot_check(k, a, o.gamma, o.n, g.replicas, g.seed, g.workers, th.sigma_band);
    return emit(out, r.to_json(), r.pass);
  }
  if (o.trend) {
    auto r = resistance_growth_check(k, o.ks, g.replicas, g.seed, g.workers, 0.5, th.trend_p_min);
    return emit(out, r.to_json(), r.trend.pass);
  }
  const double lambda = o.lambda > 0 ? o.lambda : k->rho();
  auto rows = parallel_map<std::vector<double>>(g.replicas, g.workers, [&](std::size_t i) {
    Stream rng = Stream::for_replica(g.seed, i);
    Tree t = sample_mgw_nonextinct(k, MeasureSpec{Measure::mgw_nonextinct, RootPolicy::canonical}, rng);
    return effective_conductances(t, o.ks, lambda);
  });
  if (g.format == "csv") {
    out.stream() << "replica,";
    std::ostringstream os;
    write_conductance_csv(os, o.ks, rows.at(0));
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    out.stream() << line << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::ostringstream r;
      write_conductance_csv(r, o.ks, rows[i]);
      std::istringstream rin(r.str());
      std::getline(rin, line);
      while (std::getline(rin, line)) out.stream() << i << ',' << line << '\n';
    }
    return 0;
  }
  json rep = {{"lambda", lambda}, {"k", o.ks}, {"C", rows}};
  return emit(out, rep, true);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-type Galton-Watson trees, biased walks and their limit checks"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--model", g.model, "model JSON file");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--replicas", g.replicas, "number of replicas")->check(CLI::PositiveNumber);
  app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output file (default stdout)");
  app.add_option("--format", g.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--thresholds", g.thresholds, "JSON file overriding acceptance thresholds");
  app.fallthrough();

  auto* spectral = app.add_subcommand("spectral", "mean matrix, eigen-data, extinction, ray chain, moments");

  SampleOpts so;
  auto add_sample = [](CLI::App* c, SampleOpts& o) {
    c->add_option("--measure", o.measure, "mgw|mgw-nonextinct|imgw0|imgw|imgwr|qnstar");
    c->add_option("--root-type", o.root_type, "fixed root type (default: the measure's law)");
    c->add_option("--depth", o.depth, "grow every vertex above this level");
    c->add_option("--ray-depth", o.ray_depth, "ray vertices built eagerly");
    c->add_option("--level", o.level, "n for qnstar");
    c->add_option("--walk", o.walk, "plain or rwre (weights)");
  };
  auto* sample = app.add_subcommand("sample", "sample trees (JSON lines or per-level CSV)");
  add_sample(sample, so);

  WalkOpts wo;
  auto* walk = app.add_subcommand("walk", "run RW_lambda on sampled trees");
  add_sample(walk, wo.sample);
  walk->add_option("--lambda", wo.lambda, "bias (default rho)");
  walk->add_option("--steps", wo.steps, "steps (or real time with --cts)");
  walk->add_flag("--cts", wo.cts, "continuous time");

  CltOpts co;
  auto* clt = app.add_subcommand("clt", "rescaled endpoints and KS report");
  clt->add_option("--mode", co.mode, "quenched|annealed|cts");
  clt->add_flag("--rayed", co.rayed, "IMGWR environment, heights");
  clt->add_option("--n", co.n, "steps");
  clt->add_option("--paths", co.paths, "walks");
  clt->add_option("--ks-max", co.ks_max, "KS distance bound");
  clt->add_option("--sigma", co.sigma, "override sigma");

  ReverseOpts ro;
  auto* reverse = app.add_subcommand("reverse-check", "IMGWR stationarity and ergodic averages");
  reverse->add_option("--N", ro.N, "samples for the stationarity test");
  reverse->add_option("--steps", ro.steps, "length of the ergodic run");
  reverse->add_option("--horizon", ro.horizon, "harmonic horizon (default from steps)");

  RwreOpts wro;
  auto* rwre = app.add_subcommand("rwre", "transience/recurrence classifier");
  rwre->add_option("--lambda", wro.lambdas, "biases")->expected(1, -1);
  rwre->add_option("--sweep", wro.sweep, "LO HI STEP")->expected(3);
  rwre->add_option("--simulate", wro.simulate, "checkpoint times T1 < T2 < ...")->expected(2, -1);
  rwre->add_option("--N", wro.N, "walks per simulation");

  CoupleOpts cpo;
  auto* couple = app.add_subcommand("couple", "shifted coupling marginal check");
  couple->add_option("--n", cpo.n, "scale n (sets the excursion depth)");
  couple->add_option("--T", cpo.T, "steps of the rayed walk");
  couple->add_option("--a0", cpo.a0, "excursion type");
  couple->add_option("--N", cpo.N, "coupled runs");
  couple->add_option("--levels", cpo.levels, "levels in the compared profile");

  ConductanceOpts cdo;
  auto* cond = app.add_subcommand("conductance", "effective conductances, resistance trend, Mandelbrot mean");
  cond->add_option("--k", cdo.ks, "levels")->expected(1, -1);
  cond->add_option("--lambda", cdo.lambda, "bias (default rho)");
  cond->add_option("--walk", cdo.walk, "plain or rwre");
  cond->add_flag("--trend", cdo.trend, "Mann-Kendall test of k*C(o<->k) over --replicas trees");
  cond->add_option("--gamma", cdo.gamma, "Mandelbrot martingale at this gamma");
  cond->add_option("--n", cdo.n, "level of the Mandelbrot martingale");
  cond->add_option("--root-type", cdo.root_type, "root type for the Mandelbrot martingale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*spectral) return cmd_spectral(g);
    if (*sample) return cmd_sample(g, so);
    if (*walk) return cmd_walk(g, wo);
    if (*clt) return cmd_clt(g, co);
    if (*reverse) return cmd_reverse_check(g, ro);
    if (*rwre) return cmd_rwre(g, wro);
    if (*couple) return cmd_couple(g, cpo);
    if (*cond) return cmd_conductance(g, cdo);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
