// zoll: closed geodesics and loop-space diagnostics on model spheres.
#include "zoll/errors.hpp"
#include "zoll/io.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace fs = std::filesystem;
using namespace zoll;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "TOML run configuration")->required();
  app->add_option("--seed", c.seed, "override the configured seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--workers", c.workers, "worker threads");
}

RunConfig load(const Common& c) {
  RunConfig cfg = load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.output = *c.out;
  if (c.workers) {
    if (*c.workers < 1) throw ConfigError("--workers: must be positive");
    cfg.workers = *c.workers;
  }
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(fmt::format("cannot write '{}'", path.string()));
  os << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void write_poly(const fs::path& path, const LoopConfig& config) {
  std::ofstream os(path, std::ios::binary);
  write_polyline(os, reconstruct(config).polyline(16));
}

std::string vec_csv(const Vec& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_double(v(i));
  return s;
}

int cmd_find(const Common& common) {
  const RunConfig cfg = load(common);
  const ModelPtr model = cfg.model();
  const LoopParams params = cfg.loop_params(model);
  const MultistartResult r = multistart(params, cfg.search_settings());
  const fs::path dir = out_dir(cfg);

  std::string csv = "id,kind,energy,period,gradient_norm,iterations,q0,ev\n";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const CriticalPoint& cp = r.points[i];
    const std::string stem = fmt::format("cp_{:03d}", i);
    csv += fmt::format("{},{},{},{},{},{},{},{}\n", i, to_string(cp.kind), format_double(cp.energy),
                       cp.period ? format_double(*cp.period) : "", format_double(cp.gradient_norm),
                       cp.iterations, vec_csv(cp.config.point(0)), vec_csv(cp.ev.vec));
    write_json(dir / (stem + ".json"), to_json(cp));
    write_poly(dir / (stem + ".poly"), cp.config);
  }
  write_text(dir / "survey.csv", csv);

  std::string levels = "energy,kind,count\n";
  for (const auto& l : energy_levels(r.points, cfg.search.energy_gap))
    levels += fmt::format("{},{},{}\n", format_double(l.energy), to_string(l.kind), l.count);
  write_text(dir / "levels.csv", levels);

  fmt::print("model {} k = {}: {} critical points from {} starts ({} failed)\n", model->name(),
             params.k, r.points.size(), r.starts, r.failures);
  fmt::print("{}", levels);
  if (r.starts > 0 && r.failures > cfg.max_failure_fraction * r.starts) {
    fmt::print(stderr, "error: {} of {} starts failed\n", r.failures, r.starts);
    return kExitNumeric;
  }
  return 0;
}

nlohmann::json bott_table(const CriticalPoint& cp, int m_max, const SpectralReport& first,
                          int workers, std::string& csv) {
  const LoopParams& p = cp.config.params();
  const int n = p.dim();
  nlohmann::json rows = nlohmann::json::array();
  csv = "m,k,measured,expected,kernel\n";
  for (int m = 1; m <= m_max; ++m) {
    SpectralReport r = first;
    int k = p.k;
    if (m > 1) {
      const double len = m * *cp.period;
      k = std::max(p.k, static_cast<int>(std::ceil(k_threshold(len, p.delta, p.rho()))) + 1);
      const LoopConfig c =
          sample_closed_geodesic({p.model, p.delta, k}, cp.config.point(0), cp.geodesic_direction(), len);
      const double gn = gradient(PrimeChart::from_config(c)).norm();
      r = spectrum(make_critical_point(c, gn, 0), 1e-4, workers);
    }
    const int expected = iterate_index_expected(first.index, m, n);
    rows.push_back({{"m", m}, {"k", k}, {"measured", r.index}, {"expected", expected},
                    {"kernel", r.kernel}, {"match", r.index == expected}});
    csv += fmt::format("{},{},{},{},{}\n", m, k, r.index, expected, r.kernel);
  }
  return rows;
}

int cmd_index(const Common& common, const std::vector<std::string>& inputs, int check_bott) {
  const RunConfig cfg = load(common);
  const fs::path dir = out_dir(cfg);
  bool ok = true;
  for (const std::string& input : inputs) {
    std::ifstream in(input);
    if (!in) throw ConfigError(fmt::format("--input: cannot read '{}'", input));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("--input: '{}' is not valid JSON: {}", input, e.what()));
    }
    const CriticalPoint cp = critical_point_from_json(j, cfg.integrator);
    const HessianResult h = hessian(cp, 1e-4, cfg.workers);
    const SpectralReport r = index_nullity(h.matrix);
    nlohmann::json out{{"input", fs::path(input).filename().string()},
                       {"kind", to_string(cp.kind)},
                       {"energy", cp.energy},
                       {"gradient_norm", cp.gradient_norm},
                       {"asymmetry", h.asymmetry},
                       {"spectrum", to_json(r)}};
    fmt::print("{}: {} E = {} index {} kernel {}{}\n", input, to_string(cp.kind),
               format_double(cp.energy), r.index, r.kernel, r.gap_warning ? " (small gap)" : "");

    if (cp.kind == CriticalKind::ZigZag) {
      const LoopParams& p = cp.config.params();
      const LoopConfig s =
          sample_closed_geodesic(p, cp.config.point(0), cp.geodesic_direction(), *cp.period);
      const SpectralReport rs =
          spectrum(make_critical_point(s, gradient(PrimeChart::from_config(s)).norm(), 0), 1e-4,
                   cfg.workers);
      const bool le1 = rs.index <= r.index;
      const bool le2 = rs.index + rs.kernel <= r.index + r.kernel;
      ok = ok && le1 && le2;
      out["smooth_partner"] = {{"energy", s.energy()},
                               {"index", rs.index},
                               {"kernel", rs.kernel},
                               {"index_le", le1},
                               {"index_plus_kernel_le", le2}};
      fmt::print("  smooth partner index {} kernel {}: inequalities {}\n", rs.index, rs.kernel,
                 le1 && le2 ? "hold" : "FAIL");
    }
    const std::string stem = fs::path(input).stem().string();
    if (check_bott > 0) {
      if (cp.kind != CriticalKind::SmoothGeodesic)
        throw ConfigError("--check-bott: needs a smooth closed geodesic");
      std::string csv;
      out["bott"] = bott_table(cp, check_bott, r, cfg.workers, csv);
      write_text(dir / ("bott_" + stem + ".csv"), csv);
      fmt::print("{}", csv);
      for (const auto& row : out["bott"]) ok = ok && row["match"].get<bool>();
    }
    write_json(dir / ("spectral_" + stem + ".json"), out);
  }
  return ok ? 0 : kExitNumeric;
}

int cmd_diagnose(const Common& common) {
  const RunConfig cfg = load(common);
  const ModelPtr model = cfg.model();
  const LoopParams params = cfg.loop_params(model);
  const DiagnosticReport r =
      minmax_gap_report(params, cfg.search_settings(), cfg.diagnostic_settings());
  const fs::path dir = out_dir(cfg);
  write_json(dir / "report.json", to_json(r));
  write_text(dir / "summary.csv", diagnostic_csv_header() + "\n" + diagnostic_csv_row(r) + "\n");
  fmt::print("{}\n{}\n", diagnostic_csv_row(r), r.statement);
  return 0;
}

std::vector<Vec> point_grid(int dim, int count, std::uint64_t seed) {
  std::vector<Vec> out;
  if (dim == 2) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int j = 0; j < count; ++j) {
      const double z = 1.0 - (2.0 * j + 1.0) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vec p(3);
      p << r * std::cos(golden * j), r * std::sin(golden * j), z;
      out.push_back(p);
    }
  } else {
    std::mt19937_64 rng(seed);
    for (int j = 0; j < count; ++j) out.push_back(sample_point(dim, rng));
  }
  return out;
}

int cmd_cover(const Common& common, const std::vector<double>& point_opt,
              std::optional<double> energy_opt, std::optional<int> grid_opt) {
  RunConfig cfg = load(common);
  const ModelPtr model = cfg.model();
  const LoopParams params = cfg.loop_params(model);
  const std::optional<double> energy = energy_opt ? energy_opt : cfg.cover.energy;
  if (!energy) throw ConfigError("cover.energy: missing (or pass --energy)");

  std::vector<Vec> points;
  if (!point_opt.empty()) {
    points.push_back(Eigen::Map<const Eigen::VectorXd>(point_opt.data(),
                                                       static_cast<Eigen::Index>(point_opt.size())));
  } else if (cfg.cover.point && !grid_opt) {
    points.push_back(*cfg.cover.point);
  } else {
    points = point_grid(model->dim(), grid_opt.value_or(cfg.cover.grid), cfg.seed);
  }
  for (Vec& p : points) {
    if (p.size() != model->ambient_dim() || !(p.norm() > 0.0))
      throw ConfigError(fmt::format("--point: expected {} coordinates of a nonzero vector",
                                    model->ambient_dim()));
    p = normalize_point(p);
  }

  const fs::path dir = out_dir(cfg);
  const SearchConfig search = cfg.search_settings();
  nlohmann::json results = nlohmann::json::array();
  int hits = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto cp = find_through_point(params, points[i], *energy, search, cfg.cover.directions);
    nlohmann::json rec{{"point", to_json(points[i])}, {"hit", cp.has_value()}};
    if (cp) {
      ++hits;
      const std::string poly = fmt::format("cover_{:03d}.poly", i);
      write_poly(dir / poly, cp->config);
      rec["kind"] = to_string(cp->kind);
      rec["energy"] = cp->energy;
      rec["gradient_norm"] = cp->gradient_norm;
      rec["ev"] = to_json(cp->ev.vec);
      rec["polyline"] = poly;
    } else {
      rec["miss"] = "no critical point through this point at the requested energy";
    }
    results.push_back(rec);
  }
  write_json(dir / "cover.json", {{"model", model->name()},
                                  {"energy", *energy},
                                  {"points", static_cast<int>(points.size())},
                                  {"hits", hits},
                                  {"results", results}});
  fmt::print("cover at E = {}: {} of {} points hit\n", format_double(*energy), hits, points.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed geodesics and loop-space diagnostics on model spheres"};
  app.require_subcommand(1);

  Common find_opts, index_opts, diag_opts, cover_opts;
  CLI::App* find = app.add_subcommand("find", "multistart survey of critical points");
  add_common(find, find_opts);

  CLI::App* index = app.add_subcommand("index", "Morse index and nullity of critical points");
  add_common(index, index_opts);
  std::vector<std::string> inputs;
  int check_bott = 0;
  index->add_option("--input,input", inputs, "critical point JSON files from `find`")->required();
  index->add_option("--check-bott", check_bott, "compare iterates m = 1..M with the iteration formula");

  CLI::App* diag = app.add_subcommand("diagnose", "closure scan, critical levels and Ev coverage");
  add_common(diag, diag_opts);

  CLI::App* cover = app.add_subcommand("cover", "search a critical point through given points");
  add_common(cover, cover_opts);
  std::vector<double> point;
  std::optional<double> energy;
  std::optional<int> grid;
  cover->add_option("--point", point, "ambient coordinates of q")->delimiter(',');
  cover->add_option("--energy", energy, "target critical energy");
  cover->add_option("--grid", grid, "number of grid points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*find) return cmd_find(find_opts);
    if (*index) return cmd_index(index_opts, inputs, check_bott);
    if (*diag) return cmd_diagnose(diag_opts);
    if (*cover) return cmd_cover(cover_opts, point, energy, grid);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitNumeric;
  }
  return 0;
}
