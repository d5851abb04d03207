#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lumpvol/lumpvol.hpp"

using namespace lumpvol;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Args {
  int b = 0;
  int r = 1;
  int k = 1;
  std::vector<std::string> s2;
  std::string vol = "1";
  int L = 32;
  long n = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  std::string format = "json";
  std::string map;
  bool random_map = false;
  bool calibrate = false;
  int q = 3;
  std::string mode = "polydisc";
  std::string s2_min = "8pi";
  std::string s2_max;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int default_threads() {
  if (const char* e = std::getenv("LUMPVOL_THREADS")) {
    try {
      const int t = std::stoi(e);
      if (t >= 1) return t;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

void emit(const Args& a, const std::string& text) {
  if (a.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(a.out);
  if (!f) throw UsageError("cannot open output file '" + a.out + "'");
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
}

void emit(const Args& a, const json& j) { emit(a, j.dump(2)); }

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

double single_s2(const Args& a, const char* who) {
  if (a.s2.size() != 1) throw UsageError(std::string(who) + ": exactly one --s2 value is required");
  return parse_coupling(a.s2[0]).value;
}

PolyTuple load_map(const Args& a) {
  if (!a.map.empty()) {
    json j;
    if (a.map.front() == '{') {
      j = json::parse(a.map);
    } else {
      std::ifstream f(a.map);
      if (!f) throw UsageError("cannot read map file '" + a.map + "'");
      j = json::parse(f);
    }
    return j.get<PolyTuple>();
  }
  if (a.random_map) {
    if (a.r < 1 || a.k < 1) throw UsageError("--random needs r >= 1 and k >= 1");
    StreamRng rng(a.seed, 0);
    const auto s = sample_parameter(moduli_dimension(a.r, a.k), rng);
    return chart_for_sample(a.k, a.r, s).point(s.w);
  }
  if (a.r != 1 || a.k != 1) throw UsageError("no --map given; the default identity map has r = k = 1 (use --random)");
  return PolyTuple::identity();
}

FormulaInput formula_input(const Args& a) {
  FormulaInput in;
  in.b = a.b;
  in.r = a.r;
  in.k = a.k;
  if (!a.s2.empty()) {
    if (a.s2.size() != 1) throw UsageError("formula: at most one --s2 value");
    in.s2 = parse_coupling(a.s2[0]);
  }
  auto v = detail::parse_rational(a.vol);
  if (!v) throw UsageError("cannot parse --vol '" + a.vol + "'");
  in.vol = *v;
  return in;
}

int cmd_formula(const Args& a) {
  const auto in = formula_input(a);
  const Rational mv = main_volume(in);
  json j = {{"b", in.b}, {"r", in.r}, {"k", in.k}, {"q", in.q()}, {"dim_hol", dim_hol(in)},
            {"vol", rational_string(in.vol)},
            {"main_volume",
             {{"exact", rational_string(mv)}, {"factored", factored_main_string(in)}, {"decimal", static_cast<double>(mv)}}}};
  std::optional<Rational> exact;
  double bv = 0.0;
  if (in.s2) {
    exact = baptista_volume_exact(in);
    bv = baptista_volume(in);
    json bj = {{"s2", in.s2->value}, {"decimal", bv}};
    bj["exact"] = exact ? json(rational_string(*exact)) : json(nullptr);
    j["baptista_volume"] = bj;
  }
  if (a.format == "json") {
    emit(a, j);
    return 0;
  }
  std::ostringstream os;
  os << "q = " << in.q() << "\n";
  os << "main_volume = " << rational_string(mv) << " = " << factored_main_string(in) << " ~ " << num(static_cast<double>(mv))
     << "\n";
  if (in.s2) {
    os << "baptista_volume = ";
    if (exact) os << rational_string(*exact) << " ~ ";
    os << num(bv) << "\n";
  }
  emit(a, os.str());
  return 0;
}

int cmd_kw_solve(const Args& a) {
  const auto P = load_map(a);
  const auto grid = GridCache::get(a.L);
  VortexConfig cfg{single_s2(a, "kw-solve"), P.r(), P.k()};
  cfg.validate();
  const auto m = sample_map(P, grid);
  require_interior(m, "kw-solve");
  const auto h = norm_function_from_psi(psi_closed_form(m));
  const auto sol = kw_solve(h, cfg);
  const auto sw = check_max_principle(sol.phi, h, cfg);
  json j = {{"config", config_json(cfg)},
            {"map", P},
            {"L", a.L},
            {"residual", sol.residual},
            {"iterations", sol.iterations},
            {"linear_iterations", sol.linear_iterations},
            {"approximate_guess", sol.approximate_guess},
            {"phi", {{"min", sol.phi.min_real()}, {"max", sol.phi.max_real()}}},
            {"phi_inf_diff", sup_distance(sol.phi, phi_infinity(h))},
            {"bounds",
             {{"lower_violation", sw.lower_violation},
              {"upper_violation", sw.upper_violation},
              {"uniform_lhs", sw.uniform_lhs},
              {"uniform_rhs", sw.uniform_rhs},
              {"integral_lhs", sw.integral_lhs},
              {"k1", sw.k1},
              {"integral_identity_error", sw.integral_identity_error}}}};
  emit(a, j);
  return 0;
}

int cmd_metric(const Args& a) {
  const auto P = load_map(a);
  const auto grid = GridCache::get(a.L);
  const auto chart = ModuliChart::largest(P);
  const auto M = l2_metric_matrix(P, chart, grid);
  const auto w = chart.coordinates(P);
  json j = {{"map", P}, {"L", a.L}, {"metric", to_json_value(M)},
            {"reference_determinant", volume_density(fs_reference_matrix(w))},
            {"density_ratio", density_ratio(M.g, w)}};
  emit(a, j);
  return 0;
}

int cmd_vortex_metric(const Args& a) {
  const auto P = load_map(a);
  const auto grid = GridCache::get(a.L);
  VortexConfig cfg{single_s2(a, "vortex-metric"), P.r(), P.k()};
  const auto chart = ModuliChart::largest(P);
  const auto R = vortex_metric(P, cfg, grid, chart);
  json j = to_json_value(R);
  j["map"] = P;
  j["L"] = a.L;
  j["assembly_error"] = (R.X + R.Y + R.Z - R.g.g).cwiseAbs().maxCoeff();
  j["density_ratio"] = density_ratio(R.g.g, chart.coordinates(P));
  emit(a, j);
  return 0;
}

int cmd_converge(const Args& a) {
  const auto P = load_map(a);
  const auto grid = GridCache::get(a.L);
  std::vector<double> s2;
  if (!a.s2.empty()) {
    for (const auto& t : a.s2) s2.push_back(parse_coupling(t).value);
  } else {
    const double lo = parse_coupling(a.s2_min).value * P.r();
    const double hi = a.s2_max.empty() ? 512.0 * kPi * P.r() : parse_coupling(a.s2_max).value * P.r();
    s2 = geometric_sweep(lo, hi);
  }
  const auto sw = convergence_sweep(P, s2, grid);
  const double fit_g = sweep_slope(sw, [](const ConvergenceRow& r) { return r.g_diff; });
  const double fit_v = sweep_slope(sw, [](const ConvergenceRow& r) { return r.phi_v_diff; });
  const double fit_inf = sweep_slope(sw, [](const ConvergenceRow& r) { return r.phi_inf_diff; });
  if (a.format == "csv") {
    // slope: local log-log slope of phi_inf_diff against s between consecutive rows.
    std::ostringstream os;
    os << "s2,g_diff,phi_v_diff,phi_inf_diff,slope\n";
    for (std::size_t i = 0; i < sw.rows.size(); ++i) {
      const auto& r = sw.rows[i];
      os << num(r.s2) << ',' << num(r.g_diff) << ',' << num(r.phi_v_diff) << ',' << num(r.phi_inf_diff) << ',';
      if (i > 0) {
        const auto& p = sw.rows[i - 1];
        os << num(std::log(r.phi_inf_diff / p.phi_inf_diff) / (0.5 * std::log(r.s2 / p.s2)));
      }
      os << '\n';
    }
    emit(a, os.str());
    return 0;
  }
  json rows = json::array();
  auto jnum = [](double x) -> json { return std::isfinite(x) ? json(x) : json(nullptr); };
  for (const auto& r : sw.rows)
    rows.push_back({{"s2", r.s2}, {"g_diff", r.g_diff}, {"phi_v_diff", jnum(r.phi_v_diff)},
                    {"phi_inf_diff", r.phi_inf_diff}, {"z_diff", r.z_diff}, {"x_norm", r.x_norm},
                    {"u_alpha", r.u_alpha}, {"residual", r.residual}, {"newton_iterations", r.newton_iterations}});
  json j = {{"map", P}, {"L", a.L}, {"rows", rows},
            {"slopes", {{"g_diff", jnum(fit_g)}, {"phi_v_diff", jnum(fit_v)}, {"phi_inf_diff", jnum(fit_inf)}}}};
  emit(a, j);
  return 0;
}

McOptions mc_options(const Args& a) {
  McOptions o;
  o.n = a.n;
  o.seed = a.seed;
  o.band_limit = a.L;
  o.threads = a.threads;
  return o;
}

CalibrationMode calibration_mode(const Args& a) {
  if (a.mode == "ratio") return CalibrationMode::ratio;
  if (a.mode == "polydisc") return CalibrationMode::polydisc;
  throw UsageError("--mode must be 'ratio' or 'polydisc'");
}

int cmd_calibrate(const Args& a) {
  const auto e = calibrate_cpq(a.q, mc_options(a), calibration_mode(a));
  json j = to_json_value(e);
  j["target"] = fs_volume(a.q);
  emit(a, j);
  return 0;
}

int cmd_mc_volume(const Args& a) {
  if (a.calibrate) return cmd_calibrate(a);
  VolumeEstimate e;
  if (a.s2.empty())
    e = mc_volume_l2(a.r, a.k, mc_options(a));
  else
    e = mc_volume_vortex(a.r, a.k, single_s2(a, "mc-volume"), mc_options(a));
  emit(a, to_json_value(e));
  return 0;
}

int report_error(const char* type, const std::exception& e, int code) {
  json j = {{"error", {{"type", type}, {"message", e.what()}}}};
  if (const auto* nc = dynamic_cast<const NoConvergence*>(&e)) {
    j["error"]["last_residual"] = nc->last_residual();
    j["error"]["iterations"] = nc->iterations();
  }
  std::cout << j.dump(2) << '\n';
  std::cerr << "lumpvol: " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumes of moduli spaces of rational maps and vortices"};
  app.require_subcommand(1);
  Args a;
  a.threads = default_threads();

  auto add_common = [&](CLI::App* c) {
    c->add_option("--r", a.r, "degree");
    c->add_option("--k", a.k, "target dimension");
    c->add_option("--L", a.L, "grid band limit")->check(CLI::NonNegativeNumber);
    c->add_option("--out", a.out, "output file (default stdout)");
    c->add_option("--format", a.format, "json | csv | text");
  };
  auto add_map = [&](CLI::App* c) {
    c->add_option("--map", a.map, "PolyTuple JSON file or inline JSON");
    c->add_flag("--random", a.random_map, "random FS-distributed tuple of shape (--r, --k) from --seed");
    c->add_option("--seed", a.seed, "seed");
  };
  auto add_mc = [&](CLI::App* c) {
    c->add_option("--n", a.n, "number of samples")->check(CLI::PositiveNumber);
    c->add_option("--seed", a.seed, "seed");
    c->add_option("--threads", a.threads, "worker threads (default $LUMPVOL_THREADS or 1)")->check(CLI::PositiveNumber);
  };

  auto* formula = app.add_subcommand("formula", "closed-form volumes");
  add_common(formula);
  formula->add_option("--b", a.b, "genus");
  formula->add_option("--s2", a.s2, "coupling s^2, e.g. 16pi")->expected(1);
  formula->add_option("--vol", a.vol, "surface volume (rational)");

  auto* kw = app.add_subcommand("kw-solve", "solve the Kazdan-Warner equation for a map");
  add_common(kw);
  add_map(kw);
  kw->add_option("--s2", a.s2, "coupling s^2")->expected(1)->required();

  auto* metric = app.add_subcommand("metric", "L2 metric matrix at a map");
  add_common(metric);
  add_map(metric);

  auto* vm = app.add_subcommand("vortex-metric", "finite-s vortex metric at a map");
  add_common(vm);
  add_map(vm);
  vm->add_option("--s2", a.s2, "coupling s^2")->expected(1)->required();

  auto* conv = app.add_subcommand("converge", "s-sweep of vortex-to-L2 convergence");
  add_common(conv);
  add_map(conv);
  conv->add_option("--s2", a.s2, "explicit s^2 values (overrides the sweep)");
  conv->add_option("--s2-min", a.s2_min, "sweep start per unit degree (default 8pi)");
  conv->add_option("--s2-max", a.s2_max, "sweep end per unit degree (default 512pi)");

  auto* mc = app.add_subcommand("mc-volume", "Monte Carlo volume estimate");
  add_common(mc);
  add_mc(mc);
  mc->add_option("--s2", a.s2, "coupling for the vortex volume (omit for L2)")->expected(1);
  mc->add_flag("--calibrate", a.calibrate, "integrate the FS metric of CP^q instead");
  mc->add_option("--q", a.q, "dimension for --calibrate")->check(CLI::PositiveNumber);
  mc->add_option("--mode", a.mode, "calibration mode: polydisc | ratio");

  auto* cal = app.add_subcommand("calibrate", "FS volume of CP^q by Monte Carlo");
  add_common(cal);
  add_mc(cal);
  cal->add_option("--q", a.q, "dimension")->check(CLI::PositiveNumber);
  cal->add_option("--mode", a.mode, "polydisc | ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  const bool converge_run = conv->parsed();
  if (a.format != "json" && a.format != "csv" && a.format != "text") {
    std::cerr << "lumpvol: --format must be json, csv or text\n";
    return kExitUsage;
  }
  if (converge_run && conv->count("--format") == 0) a.format = "csv";
  if (formula->parsed() && formula->count("--format") == 0) a.format = "text";

  try {
    if (formula->parsed()) return cmd_formula(a);
    if (kw->parsed()) return cmd_kw_solve(a);
    if (metric->parsed()) return cmd_metric(a);
    if (vm->parsed()) return cmd_vortex_metric(a);
    if (conv->parsed()) return cmd_converge(a);
    if (mc->parsed()) return cmd_mc_volume(a);
    if (cal->parsed()) return cmd_calibrate(a);
  } catch (const UsageError& e) {
    return report_error("UsageError", e, kExitUsage);
  } catch (const InvalidGenusDegree& e) {
    return report_error("InvalidGenusDegree", e, kExitUsage);
  } catch (const BradlowViolation& e) {
    return report_error("BradlowViolation", e, kExitUsage);
  } catch (const InvalidArgument& e) {
    return report_error("InvalidArgument", e, kExitUsage);
  } catch (const DegenerateTuple& e) {
    return report_error("DegenerateTuple", e, kExitUsage);
  } catch (const json::exception& e) {
    return report_error("InvalidJson", e, kExitUsage);
  } catch (const DomainError& e) {
    return report_error("DomainError", e, kExitNumerical);
  } catch (const NoConvergence& e) {
    return report_error("NoConvergence", e, kExitNumerical);
  } catch (const SingularField& e) {
    return report_error("SingularField", e, kExitNumerical);
  } catch (const NonZeroMean& e) {
    return report_error("NonZeroMean", e, kExitNumerical);
  } catch (const NonHermitian& e) {
    return report_error("NonHermitian", e, kExitNumerical);
  } catch (const Error& e) {
    return report_error("Error", e, kExitNumerical);
  }
  return kExitUsage;
}
