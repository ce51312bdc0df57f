// Acceptance run: one [PASS]/[FAIL] line per criterion.
// usage: acceptance <zoll-cli> <configs-dir> <scratch-dir>
#include "zoll/diagnostics.hpp"
#include "zoll/errors.hpp"
#include "zoll/io.hpp"
#include "zoll/morse.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using namespace zoll;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDelta = 0.1;

// pinned tolerances
constexpr double kEnergyIdentityTol = 1e-12;
constexpr double kLevelTol = 1e-6;
constexpr double kGradientFdTol = 1e-5;
constexpr double kAsymmetryTol = 1e-5;
constexpr double kPeriodTol = 1e-4;
constexpr double kClosureFractionMax = 0.05;
constexpr double kCoverageMax = 0.2;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string g_cli, g_configs, g_scratch;

ModelPtr round_sphere(int n) { return std::make_shared<RoundSphere>(n); }
ModelPtr ellipsoid() { return std::make_shared<TriaxialEllipsoid>(std::vector<double>{1.0, 1.1, 1.2}); }
ModelPtr zoll_rev(double a) { return std::make_shared<ZollRevolution>(a); }

Vec unit_axis(int size, int i) { return Vec::Unit(size, i); }

CriticalPoint sampled(const LoopParams& p, const Vec& q, const Vec& u, double len) {
  const LoopConfig c = sample_closed_geodesic(p, q, u, len);
  return make_critical_point(c, gradient(PrimeChart::from_config(c)).norm(), 0);
}

int auto_k(double len, double rho) {
  return static_cast<int>(std::ceil(k_threshold(len, kDelta, rho))) + 1;
}

struct Ellipse {
  Vec q, u;
  double length;
};

std::vector<Ellipse> principal_ellipses(const MetricModel& m) {
  const std::vector<std::pair<int, int>> planes = {{0, 1}, {0, 2}, {1, 2}};
  std::vector<Ellipse> out;
  for (auto [a, b] : planes) {
    const Vec q = unit_axis(3, a);
    const Vec u = unit_axis(3, b) / m.norm(q, unit_axis(3, b));
    out.push_back({q, u, *detect_closure(m, q, u, 12.0, 1e-10)});
  }
  return out;
}

Outcome energy_identity() {
  std::mt19937_64 rng(2024);
  const std::vector<ModelPtr> models = {round_sphere(2), round_sphere(3), ellipsoid(), zoll_rev(0.3)};
  std::uniform_int_distribution<int> kdist(3, 12);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const LoopConfig c = random_config({models[i % models.size()], kDelta, kdist(rng)}, rng);
    worst = std::max(worst, std::abs(c.energy() - c.energy_telescoped()) / c.energy());
  }
  return {worst < kEnergyIdentityTol, fmt::format("1000 configs, max relative error {:.2e}", worst)};
}

Outcome round_levels() {
  SearchConfig s;
  s.energy_min = 1.0;
  s.energy_max = 50.0;
  const MultistartResult r = multistart({round_sphere(2), kDelta, 8}, s);
  const auto levels = energy_levels(r.points, s.energy_gap);
  const std::vector<std::pair<double, CriticalKind>> expected = {
      {4 * kDelta * kDelta, CriticalKind::GlobalMinimum},
      {4 * kPi * kPi, CriticalKind::SmoothGeodesic},
      {std::pow(2 * kPi + 2 * kDelta, 2), CriticalKind::ZigZag}};
  Outcome o;
  o.pass = levels.size() == expected.size();
  std::string found;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    found += fmt::format(" {}:{:.9f}", to_string(levels[i].kind), levels[i].energy);
    if (i < expected.size())
      o.pass = o.pass && levels[i].kind == expected[i].second &&
               std::abs(levels[i].energy - expected[i].first) < kLevelTol;
  }
  for (const auto& cp : r.points)
    o.pass = o.pass && std::abs(cp.energy - [&] {
               for (const auto& e : expected)
                 if (e.second == cp.kind) return e.first;
               return -1.0;
             }()) < kLevelTol;
  o.detail = fmt::format("{} levels{}", levels.size(), found);
  return o;
}

Outcome index_checks() {
  Outcome o;
  std::string detail;
  for (int n : {2, 3}) {
    const ModelPtr m = round_sphere(n);
    const Vec q = unit_axis(n + 1, 0), u = unit_axis(n + 1, 1);
    const SpectralReport prime = spectrum(sampled({m, kDelta, 8}, q, u, 2 * kPi));
    const int want_index = n - 1;
    o.pass = o.pass && prime.index == want_index && prime.kernel == 2 * n - 1;
    detail += fmt::format(" S^{}:({},{})", n, prime.index, prime.kernel);
    for (int mult : {2, 3}) {
      const double len = 2 * kPi * mult;
      const SpectralReport r = spectrum(sampled({m, kDelta, auto_k(len, kPi)}, q, u, len));
      const int expected = iterate_index_expected(prime.index, mult, n);
      o.pass = o.pass && r.index == expected && r.kernel == 2 * n - 1;
      detail += fmt::format(" m{}:({},{})/{}", mult, r.index, r.kernel, expected);
    }
    const SpectralReport z = spectrum(make_zigzag(sampled({m, kDelta, 8}, q, u, 2 * kPi), {m, kDelta, 8}));
    o.pass = o.pass && z.kernel == 2 * n - 1;
    detail += fmt::format(" zz:({},{})", z.index, z.kernel);
  }
  // the Zoll revolution metric is Besse as well
  const ModelPtr zr = zoll_rev(0.3);
  const LoopParams pz{zr, kDelta, auto_k(2 * kPi + 2 * kDelta, zr->injectivity_radius())};
  std::mt19937_64 rng(9);
  const Vec q = sample_point(2, rng);
  const CriticalPoint cz = sampled(pz, q, sample_unit_direction(*zr, q, rng), 2 * kPi);
  const SpectralReport rz = spectrum(cz), rzz = spectrum(make_zigzag(cz, pz));
  o.pass = o.pass && rz.index == 1 && rz.kernel == 3 && rzz.kernel == 3;
  detail += fmt::format(" zoll:({},{}) zz:({},{})", rz.index, rz.kernel, rzz.index, rzz.kernel);
  o.detail = detail.substr(1);
  return o;
}

Outcome milnor_equivalence() {
  Outcome o;
  std::string detail;
  int count = 0;
  auto check = [&](const CriticalPoint& cp, int samples, const std::string& name) {
    const SpectralReport ours = spectrum(cp);
    const SpectralReport milnor =
        uniform_discretization_index(cp.config.params().model, cp.config.point(0),
                                     cp.geodesic_direction(), *cp.period, samples);
    const bool ok = ours.index == milnor.index && ours.kernel == milnor.kernel;
    o.pass = o.pass && ok;
    ++count;
    if (!ok || !name.empty())
      detail += fmt::format(" {}:({},{})=({},{})", name.empty() ? "?" : name, ours.index,
                            ours.kernel, milnor.index, milnor.kernel);
  };
  // every smooth critical point from the round S^2 survey
  SearchConfig s;
  s.energy_min = 1.0;
  s.energy_max = 50.0;
  for (const auto& cp : multistart({round_sphere(2), kDelta, 8}, s).points)
    if (cp.kind == CriticalKind::SmoothGeodesic) check(cp, 12, "");
  detail += fmt::format(" S2 survey x{}", count);
  check(sampled({round_sphere(3), kDelta, 8}, unit_axis(4, 0), unit_axis(4, 1), 2 * kPi), 12, "S3");
  const ModelPtr e = ellipsoid();
  const char* names[] = {"xy", "xz", "yz"};
  int i = 0;
  for (const auto& el : principal_ellipses(*e))
    check(sampled({e, kDelta, 24}, el.q, el.u, el.length), 16, names[i++]);
  o.detail = fmt::format("{} critical points:{}", count, detail);
  return o;
}

Outcome zigzag_inequalities() {
  Outcome o;
  std::string detail;
  auto pair = [&](const CriticalPoint& smooth, const LoopParams& p, const std::string& name) {
    const CriticalPoint z = make_zigzag(smooth, p);
    const SpectralReport rs = spectrum(smooth), rz = spectrum(z);
    o.pass = o.pass && rs.index <= rz.index && rs.index + rs.kernel <= rz.index + rz.kernel;
    detail += fmt::format(" {}:({},{})<=({},{})", name, rs.index, rs.kernel, rz.index, rz.kernel);
  };
  for (int n : {2, 3}) {
    const LoopParams p{round_sphere(n), kDelta, 8};
    pair(sampled(p, unit_axis(n + 1, 0), unit_axis(n + 1, 1), 2 * kPi), p, fmt::format("S{}", n));
  }
  const ModelPtr e = ellipsoid();
  const LoopParams pe{e, kDelta, 24};
  const char* names[] = {"xy", "xz", "yz"};
  int i = 0;
  for (const auto& el : principal_ellipses(*e))
    pair(sampled(pe, el.q, el.u, el.length), pe, names[i++]);
  const ModelPtr zr = zoll_rev(0.3);
  const LoopParams pz{zr, kDelta, auto_k(2 * kPi + 2 * kDelta, zr->injectivity_radius())};
  pair(sampled(pz, unit_axis(3, 0), unit_axis(3, 1) / zr->norm(unit_axis(3, 0), unit_axis(3, 1)),
               2 * kPi),
       pz, "zoll");
  o.detail = detail.substr(1);
  return o;
}

Outcome gradient_hessian_numerics() {
  std::mt19937_64 rng(77);
  const std::vector<ModelPtr> models = {round_sphere(2), round_sphere(3), ellipsoid(), zoll_rev(0.3)};
  double worst = 0.0;
  for (const auto& m : models)
    for (int trial = 0; trial < 100; ++trial) {
      const LoopConfig c = random_config({m, kDelta, 5}, rng);
      const ChartCoordinates coords(PrimeChart::from_config(c));
      const int d = coords.dimension();
      const Eigen::VectorXd g = coords.evaluate(Eigen::VectorXd::Zero(d), &c).gradient;
      Eigen::VectorXd fd(d);
      constexpr double h = 1e-5;
      for (int j = 0; j < d; ++j) {
        Eigen::VectorXd xp = Eigen::VectorXd::Zero(d), xm = xp;
        xp(j) = h;
        xm(j) = -h;
        fd(j) = (coords.energy(xp, &c) - coords.energy(xm, &c)) / (2 * h);
      }
      worst = std::max(worst, (g - fd).norm() / fd.norm());
    }
  // asymmetry at critical points of every model
  double asym = 0.0;
  asym = std::max(asym, hessian(sampled({round_sphere(2), kDelta, 8}, unit_axis(3, 0),
                                        unit_axis(3, 1), 2 * kPi)).asymmetry);
  asym = std::max(asym, hessian(sampled({round_sphere(3), kDelta, 8}, unit_axis(4, 0),
                                        unit_axis(4, 1), 2 * kPi)).asymmetry);
  const ModelPtr e = ellipsoid();
  for (const auto& el : principal_ellipses(*e))
    asym = std::max(asym, hessian(sampled({e, kDelta, 24}, el.q, el.u, el.length)).asymmetry);
  const ModelPtr zr = zoll_rev(0.3);
  const LoopParams pz{zr, kDelta, auto_k(2 * kPi + 2 * kDelta, zr->injectivity_radius())};
  const CriticalPoint cz = sampled(
      pz, unit_axis(3, 0), unit_axis(3, 1) / zr->norm(unit_axis(3, 0), unit_axis(3, 1)), 2 * kPi);
  asym = std::max(asym, hessian(cz).asymmetry);
  asym = std::max(asym, hessian(make_zigzag(cz, pz)).asymmetry);
  return {worst < kGradientFdTol && asym < kAsymmetryTol,
          fmt::format("400 configs, max gradient error {:.2e}; max Hessian asymmetry {:.2e}", worst,
                      asym)};
}

Outcome verdicts() {
  Outcome o;
  std::string detail;
  auto zoll_ok = [&](const MetricModel& m, const std::string& name) {
    const ClosureScan s = besse_zoll_scan(m, 200, 20.0, kPeriodTol, 1);
    const bool ok = s.verdict == Verdict::Zoll && std::abs(*s.period - 2 * kPi) < kPeriodTol;
    o.pass = o.pass && ok;
    detail += fmt::format(" {}:{}({:.8f})", name, to_string(s.verdict), s.period.value_or(0.0));
  };
  zoll_ok(RoundSphere(2), "round");
  for (double a : {0.1, 0.2, 0.3}) zoll_ok(ZollRevolution(a), fmt::format("zoll{}", a));
  const ClosureScan s = besse_zoll_scan(*ellipsoid(), 200, 40.0, kPeriodTol, 1);
  o.pass = o.pass && s.verdict == Verdict::NonBesse && s.closure_fraction < kClosureFractionMax;
  detail += fmt::format(" ellipsoid:{} closure {:.3f}", to_string(s.verdict), s.closure_fraction);
  o.detail = detail.substr(1);
  return o;
}

std::vector<Vec> fibonacci_points(int count) {
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Vec> out;
  for (int j = 0; j < count; ++j) {
    const double z = 1.0 - (2.0 * j + 1.0) / count;
    const double r = std::sqrt(1.0 - z * z);
    Vec p(3);
    p << r * std::cos(golden * j), r * std::sin(golden * j), z;
    out.push_back(p);
  }
  return out;
}

Outcome covering() {
  Outcome o;
  std::string detail;
  const double e_star = 4 * kPi * kPi;
  for (const auto& [name, m] : std::vector<std::pair<std::string, ModelPtr>>{
           {"round", round_sphere(2)}, {"zoll", zoll_rev(0.3)}}) {
    const LoopParams p{m, kDelta, auto_k(2 * kPi + 2 * kDelta, m->injectivity_radius())};
    int hits = 0;
    for (const Vec& q : fibonacci_points(20)) hits += find_through_point(p, q, e_star, {}).has_value();
    o.pass = o.pass && hits == 20;
    detail += fmt::format(" {}:{}/20", name, hits);
  }
  const ModelPtr e = ellipsoid();
  const Ellipse shortest = principal_ellipses(*e).front();
  const Vec generic = normalize_point(Vec(Eigen::Vector3d(0.48, -0.6, 0.64)));
  const bool hit = find_through_point({e, kDelta, 24}, generic, shortest.length * shortest.length, {})
                       .has_value();
  o.pass = o.pass && !hit;
  detail += fmt::format(" ellipsoid generic point: {}", hit ? "hit" : "miss");
  o.detail = detail.substr(1);
  return o;
}

Outcome coverage_dichotomy() {
  Outcome o;
  std::string detail;
  auto run = [&](const LoopParams& p, double emax, const std::string& name) {
    SearchConfig s;
    s.energy_min = 1.0;
    s.energy_max = emax;
    return minmax_gap_report(p, s, DiagnosticConfig{});
  };
  for (const auto& [name, m] : std::vector<std::pair<std::string, ModelPtr>>{
           {"round", round_sphere(2)}, {"zoll", zoll_rev(0.3)}}) {
    const DiagnosticReport r =
        run({m, kDelta, auto_k(2 * kPi + 2 * kDelta, m->injectivity_radius())}, 50.0, name);
    const bool ok = r.coverage && r.coverage->fraction == 1.0 &&
                    std::abs(*r.lowest_energy - 4 * kPi * kPi) < kLevelTol;
    o.pass = o.pass && ok;
    detail += fmt::format(" {}: l2min {:.9f} coverage {:.2f}", name, r.lowest_energy.value_or(0.0),
                          r.coverage ? r.coverage->fraction : -1.0);
  }
  DiagnosticConfig d;
  d.t_max = 40.0;
  SearchConfig s;
  s.energy_min = 1.0;
  s.energy_max = 55.0;
  const DiagnosticReport r = minmax_gap_report({ellipsoid(), kDelta, 24}, s, d);
  const bool ok = r.coverage && r.lowest_kind == CriticalKind::SmoothGeodesic &&
                  r.coverage->fraction < kCoverageMax &&
                  static_cast<int>(r.coverage->witnesses.size()) ==
                      r.coverage->samples - r.coverage->hits &&
                  !r.coverage->witnesses.empty();
  o.pass = o.pass && ok;
  detail += fmt::format(" ellipsoid: l2min {:.9f} coverage {:.2f} witnesses {}",
                        r.lowest_energy.value_or(0.0), r.coverage ? r.coverage->fraction : -1.0,
                        r.coverage ? r.coverage->witnesses.size() : 0);
  o.detail = detail.substr(1);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  std::string detail;
  for (const std::string cfg : {"round_s2", "zoll_revolution"}) {
    std::vector<std::string> reports;
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = fs::path(g_scratch) / fmt::format("{}_{}", cfg, run);
      fs::remove_all(dir);
      const std::string cmd =
          fmt::format("\"{}\" diagnose --config \"{}/{}.toml\" --seed 5 --workers {} --out \"{}\" > /dev/null",
                      g_cli, g_configs, cfg, run + 1, dir.string());
      const int rc = std::system(cmd.c_str());
      if (rc != 0) {
        o.pass = false;
        detail += fmt::format(" {} run {} exited with {}", cfg, run, rc);
      }
      reports.push_back(slurp(dir / "report.json") + slurp(dir / "summary.csv"));
    }
    const bool same = !reports[0].empty() && reports[0] == reports[1];
    o.pass = o.pass && same;
    detail += fmt::format(" {}: {} bytes {}", cfg, reports[0].size(), same ? "identical" : "DIFFER");
  }
  o.detail = detail.substr(1);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    fmt::print(stderr, "usage: {} <zoll-cli> <configs-dir> <scratch-dir>\n", argv[0]);
    return 2;
  }
  g_cli = argv[1];
  g_configs = argv[2];
  g_scratch = argv[3];
  fs::create_directories(g_scratch);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"energy identity", energy_identity},
      {"round S^2 critical levels", round_levels},
      {"index and kernel checks", index_checks},
      {"Milnor discretization agreement", milnor_equivalence},
      {"zig-zag index inequalities", zigzag_inequalities},
      {"gradient and Hessian numerics", gradient_hessian_numerics},
      {"Zoll/Besse verdicts", verdicts},
      {"covering through points", covering},
      {"Ev-coverage dichotomy", coverage_dichotomy},
      {"diagnose determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    fmt::print("[{}] {:2d}. {} ({:.1f} s): {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
               secs, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
