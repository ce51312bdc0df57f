#include "zoll/io.hpp"

#include "zoll/errors.hpp"

#include <fmt/format.h>
#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace zoll {

using nlohmann::json;

namespace {

template <class T>
std::optional<T> get(const toml::table& t, std::string_view path) {
  const toml::node_view<const toml::node> node = t.at_path(path);
  if (!node) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node.value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node.as_boolean()) return v->get();
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = node.as_integer()) return static_cast<T>(v->get());
  } else {
    if (auto v = node.as_string()) return v->get();
  }
  throw ConfigError(fmt::format("{}: wrong type", path));
}

template <class T>
T require(const toml::table& t, std::string_view path) {
  if (auto v = get<T>(t, path)) return *v;
  throw ConfigError(fmt::format("{}: missing required field", path));
}

template <class T>
void read(const toml::table& t, std::string_view path, T& out) {
  if (auto v = get<T>(t, path)) out = *v;
}

std::vector<double> get_array(const toml::table& t, std::string_view path) {
  const auto node = t.at_path(path);
  if (!node) return {};
  const toml::array* arr = node.as_array();
  if (!arr) throw ConfigError(fmt::format("{}: expected an array of numbers", path));
  std::vector<double> out;
  for (const auto& e : *arr) {
    const auto v = e.value<double>();
    if (!v) throw ConfigError(fmt::format("{}: expected an array of numbers", path));
    out.push_back(*v);
  }
  return out;
}

toml::array to_array(const std::vector<double>& xs) {
  toml::array a;
  for (double x : xs) a.push_back(x);
  return a;
}

}  // namespace

ModelPtr RunConfig::model() const { return make_model(metric, integrator); }

int RunConfig::resolved_k(const MetricModel& model) const {
  if (k) return *k;
  if (!target_length) throw ConfigError("loop.k: give k or loop.target_length");
  return static_cast<int>(std::ceil(k_threshold(*target_length, delta, model.injectivity_radius()))) + 1;
}

LoopParams RunConfig::loop_params(const ModelPtr& m) const {
  LoopParams p{m, delta, resolved_k(*m)};
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ConfigError(fmt::format("loop: {}", e.what()));
  }
  return p;
}

SearchConfig RunConfig::search_settings() const {
  SearchConfig s = search;
  s.seed = seed;
  s.workers = workers;
  return s;
}

DiagnosticConfig RunConfig::diagnostic_settings() const {
  DiagnosticConfig d = diagnostics;
  d.seed = seed;
  d.workers = workers;
  return d;
}

RunConfig parse_run_config(std::string_view text) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("TOML parse error at line {}: {}", e.source().begin.line,
                                  e.description()));
  }
  RunConfig c;
  read(t, "seed", c.seed);
  read(t, "workers", c.workers);
  read(t, "output", c.output);

  c.metric.model = require<std::string>(t, "metric.model");
  read(t, "metric.dim", c.metric.dim);
  c.metric.params = get_array(t, "metric.params");
  c.metric.injectivity_radius = get<double>(t, "metric.injectivity_radius");

  read(t, "integrator.abs_tol", c.integrator.abs_tol);
  read(t, "integrator.rel_tol", c.integrator.rel_tol);
  read(t, "integrator.initial_step", c.integrator.initial_step);
  read(t, "integrator.max_steps", c.integrator.max_steps);
  read(t, "integrator.force_numeric", c.integrator.force_numeric);

  c.delta = require<double>(t, "loop.delta");
  c.k = get<int>(t, "loop.k");
  c.target_length = get<double>(t, "loop.target_length");
  if (!c.k && !c.target_length) throw ConfigError("loop.k: give k or loop.target_length");

  SearchConfig& s = c.search;
  read(t, "search.max_iterations", s.max_iterations);
  read(t, "search.gradient_tol", s.gradient_tol);
  read(t, "search.newton_switch", s.newton_switch);
  read(t, "search.trust_radius", s.trust_radius);
  read(t, "search.armijo", s.armijo);
  read(t, "search.backtrack", s.backtrack);
  read(t, "search.max_rejections", s.max_rejections);
  if (auto mode = get<std::string>(t, "search.mode")) {
    if (*mode == "saddle") s.mode = SearchConfig::Mode::Saddle;
    else if (*mode == "descent") s.mode = SearchConfig::Mode::Descent;
    else throw ConfigError(fmt::format("search.mode: unknown mode '{}'", *mode));
  }
  read(t, "search.samples", s.samples);
  if (const auto w = get_array(t, "search.window"); !w.empty()) {
    if (w.size() != 2) throw ConfigError("search.window: expected [min, max]");
    s.energy_min = w[0];
    s.energy_max = w[1];
  }
  read(t, "search.energy_gap", s.energy_gap);
  read(t, "search.ev_angle_gap", s.ev_angle_gap);
  read(t, "search.shift_tol", s.shift_tol);
  read(t, "search.cos_aligned", s.cos_aligned);
  read(t, "search.smooth_tol", s.smooth_tol);
  read(t, "search.max_failure_fraction", c.max_failure_fraction);

  DiagnosticConfig& d = c.diagnostics;
  read(t, "diagnostics.scan_samples", d.scan_samples);
  read(t, "diagnostics.t_max", d.t_max);
  read(t, "diagnostics.period_tol", d.period_tol);
  read(t, "diagnostics.coverage_samples", d.coverage_samples);
  read(t, "diagnostics.cone_half_angle", d.cone_half_angle);
  read(t, "diagnostics.angle_tol", d.angle_tol);
  read(t, "diagnostics.coverage_iterations", d.coverage_iterations);
  read(t, "diagnostics.level_margin", d.level_margin);

  if (const auto p = get_array(t, "cover.point"); !p.empty())
    c.cover.point = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  c.cover.energy = get<double>(t, "cover.energy");
  read(t, "cover.grid", c.cover.grid);
  read(t, "cover.directions", c.cover.directions);

  s.seed = c.seed;
  s.workers = c.workers;
  d.seed = c.seed;
  d.workers = c.workers;
  if (c.workers < 1) throw ConfigError("workers: must be positive");
  s.validate();
  d.validate();
  if (!(c.delta > 0.0)) throw ConfigError("loop.delta: must be positive");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& c) {
  toml::table t;
  t.insert("seed", static_cast<std::int64_t>(c.seed));
  t.insert("workers", c.workers);
  t.insert("output", c.output);

  toml::table metric{{"model", c.metric.model}, {"dim", c.metric.dim}};
  metric.insert("params", to_array(c.metric.params));
  if (c.metric.injectivity_radius) metric.insert("injectivity_radius", *c.metric.injectivity_radius);
  t.insert("metric", metric);

  t.insert("integrator", toml::table{{"abs_tol", c.integrator.abs_tol},
                                     {"rel_tol", c.integrator.rel_tol},
                                     {"initial_step", c.integrator.initial_step},
                                     {"max_steps", c.integrator.max_steps},
                                     {"force_numeric", c.integrator.force_numeric}});

  toml::table loop{{"delta", c.delta}};
  if (c.k) loop.insert("k", *c.k);
  if (c.target_length) loop.insert("target_length", *c.target_length);
  t.insert("loop", loop);

  const SearchConfig& s = c.search;
  toml::table search{{"max_iterations", s.max_iterations},
                     {"gradient_tol", s.gradient_tol},
                     {"newton_switch", s.newton_switch},
                     {"trust_radius", s.trust_radius},
                     {"armijo", s.armijo},
                     {"backtrack", s.backtrack},
                     {"max_rejections", s.max_rejections},
                     {"mode", s.mode == SearchConfig::Mode::Saddle ? "saddle" : "descent"},
                     {"samples", s.samples},
                     {"energy_gap", s.energy_gap},
                     {"ev_angle_gap", s.ev_angle_gap},
                     {"shift_tol", s.shift_tol},
                     {"cos_aligned", s.cos_aligned},
                     {"smooth_tol", s.smooth_tol},
                     {"max_failure_fraction", c.max_failure_fraction}};
  search.insert("window", to_array({s.energy_min, s.energy_max}));
  t.insert("search", search);

  const DiagnosticConfig& d = c.diagnostics;
  t.insert("diagnostics", toml::table{{"scan_samples", d.scan_samples},
                                      {"t_max", d.t_max},
                                      {"period_tol", d.period_tol},
                                      {"coverage_samples", d.coverage_samples},
                                      {"cone_half_angle", d.cone_half_angle},
                                      {"angle_tol", d.angle_tol},
                                      {"coverage_iterations", d.coverage_iterations},
                                      {"level_margin", d.level_margin}});

  toml::table cover{{"grid", c.cover.grid}, {"directions", c.cover.directions}};
  if (c.cover.point)
    cover.insert("point", to_array({c.cover.point->data(),
                                    c.cover.point->data() + c.cover.point->size()}));
  if (c.cover.energy) cover.insert("energy", *c.cover.energy);
  t.insert("cover", cover);

  std::ostringstream os;
  os << t << '\n';
  return os.str();
}

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec vec_from_json(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json to_json(const ModelSpec& spec) {
  json j{{"model", spec.model}, {"dim", spec.dim}, {"params", spec.params}};
  if (spec.injectivity_radius) j["injectivity_radius"] = *spec.injectivity_radius;
  return j;
}

json to_json(const CriticalPoint& cp) {
  const LoopParams& p = cp.config.params();
  json points = json::array();
  for (const Vec& x : cp.config.points()) points.push_back(to_json(x));
  json j{{"kind", to_string(cp.kind)},
         {"energy", cp.energy},
         {"gradient_norm", cp.gradient_norm},
         {"iterations", cp.iterations},
         {"metric", to_json(p.model->spec())},
         {"delta", p.delta},
         {"k", p.k},
         {"ev", {{"base", to_json(cp.ev.base)}, {"vector", to_json(cp.ev.vec)}, {"norm", cp.ev.norm}}},
         {"points", points}};
  j["period"] = cp.period ? json(*cp.period) : json(nullptr);
  return j;
}

CriticalPoint critical_point_from_json(const json& j, IntegratorSettings settings) {
  try {
    ModelSpec spec;
    const json& m = j.at("metric");
    spec.model = m.at("model").get<std::string>();
    spec.dim = m.at("dim").get<int>();
    spec.params = m.at("params").get<std::vector<double>>();
    if (m.contains("injectivity_radius"))
      spec.injectivity_radius = m.at("injectivity_radius").get<double>();
    const LoopParams params{make_model(spec, settings), j.at("delta").get<double>(),
                            j.at("k").get<int>()};
    std::vector<Vec> points;
    for (const json& x : j.at("points")) points.push_back(vec_from_json(x));
    const LoopConfig config = LoopConfig::build(params, std::move(points));
    const double gn = gradient(PrimeChart::from_config(config)).norm();
    CriticalPoint cp = make_critical_point(config, gn, j.value("iterations", 0));
    if (j.contains("kind") && parse_kind(j.at("kind").get<std::string>()) != cp.kind)
      throw ConfigError("critical point file: stored kind does not match the configuration");
    return cp;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("critical point file: {}", e.what()));
  }
}

json to_json(const SpectralReport& r) {
  return json{{"dimension", r.dimension}, {"index", r.index},       {"kernel", r.kernel},
              {"positive", r.positive},   {"zero_tol", r.zero_tol}, {"scale", r.scale},
              {"gap", r.gap},             {"gap_warning", r.gap_warning},
              {"eigenvalues", r.eigenvalues}};
}

json to_json(const ClosureScan& s) {
  json clusters = json::array();
  for (const auto& c : s.clusters)
    clusters.push_back({{"period", c.period}, {"spread", c.spread}, {"count", c.count}});
  json j{{"verdict", to_string(s.verdict)},
         {"samples", s.samples},
         {"closed", s.closed},
         {"integrator_failures", s.failures},
         {"closure_fraction", s.closure_fraction},
         {"period_histogram", clusters}};
  j["period"] = s.period ? json(*s.period) : json(nullptr);
  return j;
}

json to_json(const CoverageResult& c) {
  json w = json::array();
  for (const auto& x : c.witnesses)
    w.push_back({{"q", to_json(x.q)}, {"u", to_json(x.u)}, {"reason", x.reason}});
  return json{{"energy", c.energy}, {"samples", c.samples}, {"hits", c.hits},
              {"fraction", c.fraction}, {"witnesses", w}};
}

json to_json(const DiagnosticReport& r) {
  json levels = json::array();
  for (const auto& l : r.levels)
    levels.push_back({{"energy", l.energy}, {"kind", to_string(l.kind)}, {"count", l.count}});
  std::string verdict = to_string(r.scan.verdict);
  if (r.scan.period) verdict += fmt::format("({})", format_double(*r.scan.period));
  json j{{"model", r.model},
         {"verdict", verdict},
         {"scan", to_json(r.scan)},
         {"critical_levels", levels},
         {"multistart_failures", r.multistart_failures},
         {"statement", r.statement}};
  j["lowest_energy"] = r.lowest_energy ? json(*r.lowest_energy) : json(nullptr);
  j["lowest_kind"] = r.lowest_kind ? json(to_string(*r.lowest_kind)) : json(nullptr);
  j["lowest_period"] = r.lowest_period ? json(*r.lowest_period) : json(nullptr);
  j["coverage"] = r.coverage ? to_json(*r.coverage) : json(nullptr);
  return j;
}

std::string diagnostic_csv_header() {
  return "model,verdict,period,closure_fraction,lowest_energy,lowest_kind,lowest_period,"
         "coverage,witnesses";
}

std::string diagnostic_csv_row(const DiagnosticReport& r) {
  auto opt = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string(); };
  return fmt::format("\"{}\",{},{},{},{},{},{},{},{}", r.model, to_string(r.scan.verdict),
                     opt(r.scan.period), format_double(r.scan.closure_fraction),
                     opt(r.lowest_energy), r.lowest_kind ? to_string(*r.lowest_kind) : "",
                     opt(r.lowest_period),
                     r.coverage ? format_double(r.coverage->fraction) : std::string(),
                     r.coverage ? r.coverage->witnesses.size() : 0);
}

}  // namespace zoll
