#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "refqkd/refqkd.hpp"
#include "refqkd/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace refqkd;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kDomain = 3,
  kInconsistent = 4,
  kTruncation = 5,
  kIo = 6,
  kVerifyFailed = 7,
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON config: top-level keys are option names (underscores or dashes) for
// the chosen subcommand. A nested object named after a subcommand is also
// accepted. Flags on the command line win because CLI11 only fills options
// that are still empty.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config must be a JSON object");
    const auto subs = root_->get_subcommands();
    const std::string active = subs.empty() ? "" : subs.front()->get_name();

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (key == "subcommand") {
        if (!value.is_string() || (!active.empty() && value.get<std::string>() != active)) {
          throw CLI::ConfigError("config subcommand '" + value.dump() + "' does not match '" + active + "'");
        }
        continue;
      }
      if (value.is_object()) {
        if (key != active) continue;
        for (const auto& [k2, v2] : value.items()) items.push_back(item(active, k2, v2));
        continue;
      }
      const std::string name = dashed(key);
      const bool on_sub = !active.empty() && subs.front()->get_option_no_throw("--" + name) != nullptr;
      if (!on_sub && root_->get_option_no_throw("--" + name) == nullptr) {
        throw CLI::ConfigError("unknown config key '" + key + "'" + (active.empty() ? "" : " for " + active));
      }
      items.push_back(item(on_sub ? active : "", key, value));
    }
    return items;
  }

 private:
  static std::string dashed(std::string s) {
    for (auto& c : s) {
      if (c == '_') c = '-';
    }
    return s;
  }

  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConfigError("config values must be numbers, strings, booleans or arrays of those");
  }

  static CLI::ConfigItem item(const std::string& parent, const std::string& key, const json& v) {
    CLI::ConfigItem it;
    if (!parent.empty()) it.parents.push_back(parent);
    it.name = dashed(key);
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }

  const CLI::App* root_;
};

struct Common {
  std::string format = "json";
  std::string out_dir;
  int threads = 1;
};

fs::path output_dir(const Common& c) {
  std::string dir = c.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("REFQKD_OUT_DIR");
    dir = env && *env ? env : ".";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing; check --out-dir or REFQKD_OUT_DIR");
  os << text;
  os.flush();
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

void write_csv_file(const fs::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  write_csv(os, header, rows);
  write_file(path, os.str());
}

void announce(const json& summary) { std::cout << summary.dump() << '\n'; }

BoundSolverConfig solver_from(double ph_tol, int m_grid, double slack) {
  BoundSolverConfig cfg;
  cfg.ph_tolerance = ph_tol;
  cfg.m_grid = m_grid;
  cfg.epsilon_slack = slack;
  return cfg;
}

json params_json(const ProtocolParams& p) {
  return {{"alpha_sq", num(p.alpha_sq)}, {"eta", num(p.eta)}, {"n_pairs", p.n_pairs}};
}

const std::vector<std::string>& key_header() {
  static const std::vector<std::string> h{"n_fil_frac", "n_err_frac", "n_ph_bound_frac", "key_frac", "gain",
                                          "shortening"};
  return h;
}

std::vector<double> key_row(const KeyRateResult& r) {
  return {r.tallies.n_fil_frac, r.tallies.n_err_frac, r.n_ph_bound_frac, r.key_frac, r.gain, r.shortening()};
}

// -- verify -----------------------------------------------------------------

struct VerifyArgs {
  double beta_sq = 0.01;
  int n_max = 32;
  double tol = 1e-8;
  double max_tail = 1e-6;
};

int run_verify(const Common& c, const VerifyArgs& a) {
  if (!(a.beta_sq > 0.0)) throw DomainError("--beta-sq must be > 0");
  FockTolerances ft;
  ft.max_tail_mass = a.max_tail;
  const auto rep = build_fock_rep(std::sqrt(a.beta_sq), a.n_max, ft);
  const auto report = verify_identities(rep, a.tol);
  const auto dir = output_dir(c);
  const json j = report;
  if (c.format == "json") {
    write_json(dir / "verify.json", j);
  } else {
    std::ostringstream os;
    os << "quantity,value\n";
    for (const auto& [k, v] : j.items()) {
      os << k << ',' << (v.is_boolean() ? (v.get<bool>() ? "1" : "0") : v.is_null() ? "nan" : format_number(v.get<double>()))
         << '\n';
    }
    write_file(dir / "verify.csv", os.str());
  }
  announce({{"subcommand", "verify"}, {"pass", report.pass}, {"dev_kraus_k0", j["dev_kraus_k0"]},
            {"dev_kraus_k1", j["dev_kraus_k1"]}});
  return report.pass ? kOk : kVerifyFailed;
}

// -- region -----------------------------------------------------------------

struct RegionArgs {
  double alpha_sq = 0.5;
  double eta = 0.01;
  int columns = 200;
  int rows = 200;
  double x_max = 2.0;
  double y_max = 0.15;
  double rel_tol = 1e-4;
  double ph_tol = 1e-9;
  int m_grid = 33;
};

json trace_json(const std::vector<TracePoint>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({{"n_fil_over_nfil0", num(p.x)}, {"err_rate", num(p.y)}, {"gain", num(p.gain)}});
  return a;
}

int run_region(const Common& c, const RegionArgs& a) {
  RegionGrid g;
  g.columns = a.columns;
  g.rows = a.rows;
  g.x_max = a.x_max;
  g.y_max = a.y_max;
  g.rel_tol = a.rel_tol;
  g.threads = c.threads;
  g.solver = solver_from(a.ph_tol, a.m_grid, 0.0);
  if (!(a.x_max > 0.0 && a.y_max > 0.0 && a.y_max <= 1.0 && a.rel_tol > 0.0)) {
    throw DomainError("region window needs x_max > 0, 0 < y_max <= 1 and rel_tol > 0");
  }
  const auto region = security_region({a.alpha_sq, a.eta, 1}, g);
  const auto dir = output_dir(c);
  const auto summary = region_summary(region);
  if (c.format == "json") {
    json j = {{"summary", summary},
              {"contour", trace_json(region.contour())},
              {"curve_a", trace_json(region.curve_a)},
              {"curve_b", trace_json(region.curve_b)}};
    write_json(dir / "region.json", j);
  } else {
    write_csv_file(dir / "region_contour.csv", region_csv_header(), trace_rows(region.contour()));
    write_csv_file(dir / "region_curve_a.csv", region_csv_header(), trace_rows(region.curve_a));
    write_csv_file(dir / "region_curve_b.csv", region_csv_header(), trace_rows(region.curve_b));
  }
  json s = summary;
  s["subcommand"] = "region";
  announce(s);
  return kOk;
}

// -- gain -------------------------------------------------------------------

struct GainArgs {
  double alpha_sq = 0.23;
  double eta = 0.01;
  double gamma = 0.0;
  double zeta = 0.0;
  double lambda = 0.0;
  double delta_phi = 0.0;
  double n_fil = 0.0;
  double n_err = 0.0;
  double n_pairs = 0.0;
  double epsilon_slack = 0.0;
  double ph_tol = 1e-9;
  int m_grid = 33;
};

int run_gain(const Common& c, const GainArgs& a, const CLI::App& sub) {
  const bool curve_a_lambda = sub.count("--lambda") > 0;
  const bool curve_a_model = sub.count("--gamma") > 0 || sub.count("--zeta") > 0;
  const bool curve_b = sub.count("--delta-phi") > 0;
  const bool manual = sub.count("--n-fil") > 0 || sub.count("--n-err") > 0;
  if (curve_a_lambda && curve_a_model) throw UsageError("give either --lambda or --gamma/--zeta, not both");
  if ((curve_a_lambda || curve_a_model) + curve_b + manual > 1) {
    throw UsageError("choose one model: curve A (--lambda or --gamma/--zeta), curve B (--delta-phi) or manual (--n-fil/--n-err)");
  }
  if (manual && sub.count("--n-fil") == 0) throw UsageError("manual tallies need --n-fil");
  if (!manual && sub.count("--n-pairs") > 0) throw UsageError("--n-pairs only applies to manual tallies");

  const ProtocolParams p{a.alpha_sq, a.eta, 1};
  Tallies t;
  json model;
  if (curve_b) {
    t = curve_B_tallies(a.delta_phi, p);
    model = {{"curve", "B"}, {"delta_phi", num(a.delta_phi)}};
  } else if (manual) {
    const double scale = a.n_pairs > 0.0 ? 1.0 / a.n_pairs : 1.0;
    if (sub.count("--n-pairs") > 0 && !(a.n_pairs > 0.0)) throw DomainError("--n-pairs must be > 0");
    t = {a.n_fil * scale, a.n_err * scale, TallySource::manual};
    model = {{"curve", "manual"}};
  } else {
    const double lambda = curve_a_lambda ? a.lambda : lambda_model({a.gamma, a.zeta, 0.0}, p);
    t = curve_A_tallies(lambda, p);
    model = {{"curve", "A"}, {"lambda", num(lambda)}};
    if (!curve_a_lambda) {
      model["gamma"] = num(a.gamma);
      model["zeta"] = num(a.zeta);
    }
  }
  const auto r = key_length(t, subspace_constants(p), solver_from(a.ph_tol, a.m_grid, a.epsilon_slack));
  const auto dir = output_dir(c);
  if (c.format == "json") {
    write_json(dir / "gain.json", {{"params", params_json(p)}, {"model", model}, {"result", r}});
  } else {
    write_csv_file(dir / "gain.csv", key_header(), {key_row(r)});
  }
  announce({{"subcommand", "gain"}, {"gain", num(r.gain)}, {"n_ph_bound_frac", num(r.n_ph_bound_frac)}});
  return kOk;
}

// -- optimize ---------------------------------------------------------------

struct OptimizeArgs {
  std::vector<double> eta;
  double eta_min = 1e-6;
  double eta_max = 1.0;
  int eta_points = 25;
  std::vector<double> gamma{0.0};
  std::vector<double> zeta{0.0};
  double alpha_sq_min = 1e-6;
  double alpha_sq_max = 10.0;
  int points_per_decade = 20;
  double log_tol = 1e-6;
  std::string reference;
};

// Two numeric columns (eta, gain) after a header line.
std::vector<std::vector<double>> read_reference(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read reference series '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::getline(is, line);
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b)) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'eta,gain'");
    }
    try {
      rows.push_back({std::stod(a), std::stod(b)});
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  return rows;
}

int run_optimize(const Common& c, const OptimizeArgs& a) {
  std::vector<double> etas = a.eta;
  if (etas.empty()) etas = log_space(a.eta_min, a.eta_max, a.eta_points);
  const std::size_t sets = std::max(a.gamma.size(), a.zeta.size());
  if ((a.gamma.size() != sets && a.gamma.size() != 1) || (a.zeta.size() != sets && a.zeta.size() != 1)) {
    throw UsageError("--gamma and --zeta must have equal lengths, or one of them a single value");
  }
  GainSearch search;
  search.alpha_sq_min = a.alpha_sq_min;
  search.alpha_sq_max = a.alpha_sq_max;
  search.points_per_decade = a.points_per_decade;
  search.log_tol = a.log_tol;

  std::vector<ErrorModel> models;
  for (std::size_t i = 0; i < sets; ++i) {
    models.push_back({a.gamma.size() == 1 ? a.gamma[0] : a.gamma[i], a.zeta.size() == 1 ? a.zeta[0] : a.zeta[i], 0.0});
  }
  std::vector<std::vector<GainCurvePoint>> series;
  for (const auto& m : models) series.push_back(gain_vs_eta(etas, m, search, c.threads));
  std::vector<std::vector<double>> reference;
  if (!a.reference.empty()) reference = read_reference(a.reference);

  const auto dir = output_dir(c);
  if (c.format == "json") {
    json out = {{"search",
                 {{"alpha_sq_min", num(a.alpha_sq_min)},
                  {"alpha_sq_max", num(a.alpha_sq_max)},
                  {"points_per_decade", a.points_per_decade}}},
                {"series", json::array()}};
    for (std::size_t i = 0; i < sets; ++i) out["series"].push_back({{"model", models[i]}, {"rows", series[i]}});
    if (!a.reference.empty()) {
      json ref = json::array();
      for (const auto& r : reference) ref.push_back({{"eta", num(r[0])}, {"gain", num(r[1])}});
      out["user_reference"] = ref;
    }
    write_json(dir / "optimize.json", out);
  } else {
    for (std::size_t i = 0; i < sets; ++i) {
      const std::string name = sets == 1 ? "optimize.csv" : "optimize_" + std::to_string(i) + ".csv";
      write_csv_file(dir / name, optimize_csv_header(), gain_curve_rows(series[i]));
    }
    if (!a.reference.empty()) write_csv_file(dir / "optimize_reference.csv", {"eta", "gain"}, reference);
  }
  json s = {{"subcommand", "optimize"}, {"series", json::array()}};
  for (std::size_t i = 0; i < sets; ++i) {
    const auto& rows = series[i];
    s["series"].push_back({{"model", models[i]},
                           {"first", rows.front()},
                           {"last", rows.back()}});
  }
  announce(s);
  return kOk;
}

// -- simulate ---------------------------------------------------------------

struct SimulateArgs {
  double alpha_sq = 0.23;
  double eta = 0.01;
  double channel_eta = -1.0;
  double delta_phi = 0.0;
  double lambda = 0.0;
  std::int64_t n = 1000000;
  std::uint64_t seed = 1;
  double slack_sigmas = 5.0;
  double ph_tol = 1e-9;
  int m_grid = 33;
};

int run_simulate(const Common& c, const SimulateArgs& a) {
  const ProtocolParams p{a.alpha_sq, a.eta, a.n};
  const ChannelModel ch{a.channel_eta < 0.0 ? a.eta : a.channel_eta, a.delta_phi, a.lambda};
  if (!(a.slack_sigmas >= 0.0)) throw DomainError("--slack-sigmas must be >= 0");
  EndToEndOptions opts;
  opts.fil_slack_sigmas = a.slack_sigmas;
  opts.solver = solver_from(a.ph_tol, a.m_grid, 0.0);
  opts.threads = c.threads;

  const auto sim = simulate_run(p, ch, a.seed, c.threads);
  std::optional<KeyRateResult> key;
  std::string key_error;
  {
    BoundSolverConfig cfg = opts.solver;
    const double f = sim.fil_frac;
    cfg.epsilon_slack = opts.fil_slack_sigmas * std::sqrt(f * (1.0 - f) / static_cast<double>(p.n_pairs));
    key = try_key_length(sim.tallies(), subspace_constants(p), cfg);
    if (!key) key_error = "simulated tallies are inconsistent with every phase-error count";
  }

  const auto dir = output_dir(c);
  if (c.format == "json") {
    json j = {{"params", params_json(p)},
              {"channel",
               {{"eta", num(ch.eta)}, {"delta_phi", num(ch.delta_phi)}, {"spurious_prob", num(ch.spurious_prob)}}},
              {"fil_slack_sigmas", num(a.slack_sigmas)},
              {"sim", sim}};
    j["key"] = key ? json(*key) : json(nullptr);
    if (!key) j["key_error"] = key_error;
    write_json(dir / "simulate.json", j);
  } else {
    std::ostringstream os;
    os << "alice,bob,outcome,count\n";
    for (int x = 0; x < 2; ++x) {
      for (int y = 0; y < 2; ++y) {
        for (int k = 0; k < 3; ++k) os << x << ',' << y << ',' << k << ',' << sim.histogram[histogram_index(x, y, k)] << '\n';
      }
    }
    write_file(dir / "simulate_histogram.csv", os.str());
    if (key) write_csv_file(dir / "simulate_key.csv", key_header(), {key_row(*key)});
  }
  announce({{"subcommand", "simulate"},
            {"n_fil", sim.n_fil},
            {"n_err", sim.n_err},
            {"gain", key ? num(key->gain) : json(nullptr)}});
  if (!key) {
    std::cerr << "refqkd: " << key_error << '\n';
    return kInconsistent;
  }
  return kOk;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "Output directory (default: $REFQKD_OUT_DIR or .)");
  sub->add_option("--threads", c.threads, "Worker threads for sweeps")->check(CLI::Range(1, 1024))->capture_default_str();
}

void add_solver(CLI::App* sub, double& ph_tol, int& m_grid) {
  sub->add_option("--ph-tolerance", ph_tol, "Bisection width on n_ph relative to n_fil")->capture_default_str();
  sub->add_option("--m-grid", m_grid, "Coarse samples of m1 in the bound search")
      ->check(CLI::Range(3, 100000))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coherent-state reference-pulse QKD: verification, key-rate bounds and simulation"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON config file; command-line flags override its values");

  Common common;
  VerifyArgs va;
  RegionArgs ra;
  GainArgs ga;
  OptimizeArgs oa;
  SimulateArgs sa;

  auto* verify = app.add_subcommand("verify", "Check the Kraus/POVM identities in a truncated Fock basis");
  add_common(verify, common);
  verify->add_option("--beta-sq", va.beta_sq, "Received amplitude |beta|^2")->capture_default_str();
  verify->add_option("--n-max", va.n_max, "Fock truncation")->capture_default_str();
  verify->add_option("--tol", va.tol, "Identity tolerance")->capture_default_str();
  verify->add_option("--max-tail", va.max_tail, "Largest Poisson tail mass allowed")->capture_default_str();

  auto* region = app.add_subcommand("region", "Trace the G = 0 boundary with curve A/B overlays");
  add_common(region, common);
  region->add_option("--alpha-sq", ra.alpha_sq, "Signal intensity |alpha|^2")->capture_default_str();
  region->add_option("--eta", ra.eta, "Channel transmission")->capture_default_str();
  region->add_option("--columns", ra.columns, "Grid columns in n_fil/n_fil0")->capture_default_str();
  region->add_option("--rows", ra.rows, "Grid rows in n_err/n_fil")->capture_default_str();
  region->add_option("--x-max", ra.x_max, "Largest n_fil/n_fil0")->capture_default_str();
  region->add_option("--y-max", ra.y_max, "Largest n_err/n_fil")->capture_default_str();
  region->add_option("--rel-tol", ra.rel_tol, "Boundary bisection tolerance relative to y_max")->capture_default_str();
  add_solver(region, ra.ph_tol, ra.m_grid);

  auto* gain = app.add_subcommand("gain", "Key gain for one point under curve A, curve B or manual tallies");
  add_common(gain, common);
  gain->add_option("--alpha-sq", ga.alpha_sq, "Signal intensity |alpha|^2")->capture_default_str();
  gain->add_option("--eta", ga.eta, "Channel transmission")->capture_default_str();
  gain->add_option("--gamma", ga.gamma, "Curve A: intensity-independent spurious rate");
  gain->add_option("--zeta", ga.zeta, "Curve A: misalignment parameter");
  gain->add_option("--lambda", ga.lambda, "Curve A: spurious probability, given directly");
  gain->add_option("--delta-phi", ga.delta_phi, "Curve B: phase misalignment in radians");
  gain->add_option("--n-fil", ga.n_fil, "Manual: n_fil (a fraction of N, or a count with --n-pairs)");
  gain->add_option("--n-err", ga.n_err, "Manual: n_err (a fraction of N, or a count with --n-pairs)");
  gain->add_option("--n-pairs", ga.n_pairs, "Manual: N, when n_fil and n_err are counts");
  gain->add_option("--epsilon-slack", ga.epsilon_slack, "Allowed deviation of n_fil/N from its model value");
  add_solver(gain, ga.ph_tol, ga.m_grid);

  auto* optimize = app.add_subcommand("optimize", "Optimal intensity and gain versus transmission");
  add_common(optimize, common);
  optimize->add_option("--eta", oa.eta, "Transmission values (overrides the log grid)");
  optimize->add_option("--eta-min", oa.eta_min, "Log grid start")->capture_default_str();
  optimize->add_option("--eta-max", oa.eta_max, "Log grid end")->capture_default_str();
  optimize->add_option("--eta-points", oa.eta_points, "Log grid size")->check(CLI::Range(1, 100000))->capture_default_str();
  optimize->add_option("--gamma", oa.gamma, "Spurious rates, one per series")->capture_default_str();
  optimize->add_option("--zeta", oa.zeta, "Misalignment parameters, one per series")->capture_default_str();
  optimize->add_option("--alpha-sq-min", oa.alpha_sq_min, "Search range start")->capture_default_str();
  optimize->add_option("--alpha-sq-max", oa.alpha_sq_max, "Search range end")->capture_default_str();
  optimize->add_option("--points-per-decade", oa.points_per_decade, "Coarse scan density")
      ->check(CLI::Range(1, 10000))
      ->capture_default_str();
  optimize->add_option("--log-tol", oa.log_tol, "Refinement width in log10 alpha^2")->capture_default_str();
  optimize->add_option("--reference", oa.reference, "CSV (eta,gain) of an external reference curve to pass through");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo run and the key computed from its tallies");
  add_common(simulate, common);
  simulate->add_option("--alpha-sq", sa.alpha_sq, "Signal intensity |alpha|^2")->capture_default_str();
  simulate->add_option("--eta", sa.eta, "Transmission assumed by the analysis")->capture_default_str();
  simulate->add_option("--channel-eta", sa.channel_eta, "Transmission of the simulated channel (default: --eta)");
  simulate->add_option("--delta-phi", sa.delta_phi, "Phase shift applied by the channel")->capture_default_str();
  simulate->add_option("--lambda", sa.lambda, "Per-pulse spurious click probability")->capture_default_str();
  simulate->add_option("--n", sa.n, "Pairs N (2N pulses are sent)")->capture_default_str();
  simulate->add_option("--seed", sa.seed, "RNG seed")->capture_default_str();
  simulate->add_option("--slack-sigmas", sa.slack_sigmas, "Window on n_fil in binomial standard errors")->capture_default_str();
  add_solver(simulate, sa.ph_tol, sa.m_grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    std::cerr << "refqkd: " << e.what() << '\n';
    return kIo;
  } catch (const CLI::ParseError& e) {
    std::cerr << "refqkd: " << e.what() << " (see --help)\n";
    return kUsage;
  }

  try {
    if (*verify) return run_verify(common, va);
    if (*region) return run_region(common, ra);
    if (*gain) return run_gain(common, ga, *gain);
    if (*optimize) return run_optimize(common, oa);
    if (*simulate) return run_simulate(common, sa);
  } catch (const UsageError& e) {
    std::cerr << "refqkd: " << e.what() << '\n';
    return kUsage;
  } catch (const InconsistentTallies& e) {
    std::cerr << "refqkd: " << e.what() << '\n';
    return kInconsistent;
  } catch (const TruncationError& e) {
    std::cerr << "refqkd: " << e.what() << "; raise --n-max\n";
    return kTruncation;
  } catch (const DomainError& e) {
    std::cerr << "refqkd: out of range: " << e.what() << '\n';
    return kDomain;
  } catch (const IoError& e) {
    std::cerr << "refqkd: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
