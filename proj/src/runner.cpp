#include "dicke/runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <variant>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "dicke/classical.hpp"
#include "dicke/mqc.hpp"
#include "dicke/propagate.hpp"
#include "dicke/spectrum.hpp"
#include "dicke/twa.hpp"

#ifndef DICKE_VERSION
#define DICKE_VERSION "0.0.0"
#endif

namespace dicke {

using json = nlohmann::ordered_json;

std::string code_version() { return DICKE_VERSION; }

std::string kind_tag(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Spectrum: return "spectrum";
    case ExperimentKind::LyapunovMap: return "lyapunov-map";
    case ExperimentKind::Fotoc: return "fotoc";
    case ExperimentKind::Twa: return "twa";
    case ExperimentKind::Renyi: return "renyi";
    case ExperimentKind::Thermalize: return "thermalize";
  }
  return "?";
}

ExperimentKind parse_kind(const std::string& tag) {
  for (auto k : {ExperimentKind::Spectrum, ExperimentKind::LyapunovMap, ExperimentKind::Fotoc,
                 ExperimentKind::Twa, ExperimentKind::Renyi, ExperimentKind::Thermalize})
    if (kind_tag(k) == tag) return k;
  throw ConfigError("experiment.kind: unknown experiment '" + tag + "'");
}

// ---- config schema ---------------------------------------------------------

namespace {

enum class ValueType { Int, Real, Bool, Str, RealList, StrList, IntOrAuto };

struct KeySpec {
  ValueType type;
  std::set<ExperimentKind> kinds;  // empty: every kind
};

const std::set<ExperimentKind> kQuantum{ExperimentKind::Spectrum, ExperimentKind::Fotoc,
                                        ExperimentKind::Renyi, ExperimentKind::Thermalize};
const std::set<ExperimentKind> kEvolving{ExperimentKind::Fotoc, ExperimentKind::Twa,
                                         ExperimentKind::Renyi, ExperimentKind::Thermalize};

const std::map<std::string, KeySpec>& schema() {
  using K = ExperimentKind;
  using V = ValueType;
  static const std::map<std::string, KeySpec> s{
      {"experiment.kind", {V::Str, {}}},
      {"experiment.seed", {V::Int, {}}},
      {"experiment.threads", {V::Int, {}}},
      {"experiment.output", {V::Str, {}}},
      {"model.n_spins", {V::Int, {}}},
      {"model.g_khz", {V::Real, {}}},
      {"model.delta_khz", {V::Real, {}}},
      {"model.b_khz", {V::Real, {}}},
      {"model.field_ratio", {V::Real, {}}},
      {"model.n_max", {V::IntOrAuto, {}}},
      {"state.recipe", {V::Str, kEvolving}},
      {"time.t_end", {V::Real, kEvolving}},
      {"time.points", {V::Int, kEvolving}},
      {"decoherence.gamma_per_s", {V::Real, {K::Renyi}}},
      {"decoherence.enhancement", {V::Real, {K::Renyi}}},
      {"limits.max_dim", {V::Int, {}}},
      {"limits.max_trajectories", {V::Int, {}}},
      {"fotoc.generators", {V::StrList, {K::Fotoc}}},
      {"fotoc.dphi", {V::Real, {K::Fotoc}}},
      {"fotoc.propagator", {V::Str, {K::Fotoc}}},
      {"fotoc.sizes", {V::RealList, {K::Fotoc}}},
      {"fotoc.tail_threshold", {V::Real, {K::Fotoc}}},
      {"fotoc.fit_onset", {V::Real, {K::Fotoc}}},
      {"fotoc.fit_end_fraction", {V::Real, {K::Fotoc}}},
      {"fotoc.fit_min_decades", {V::Real, {K::Fotoc}}},
      {"twa.trajectories", {V::Int, {K::Twa}}},
      {"twa.blocks", {V::Int, {K::Twa}}},
      {"twa.fit_onset", {V::Real, {K::Twa}}},
      {"twa.fit_end_fraction", {V::Real, {K::Twa}}},
      {"twa.fit_min_decades", {V::Real, {K::Twa}}},
      {"spectrum.parity_resolved", {V::Bool, {K::Spectrum}}},
      {"spectrum.unfold_degree", {V::Int, {K::Spectrum}}},
      {"spectrum.edge_trim", {V::Real, {K::Spectrum}}},
      {"spectrum.min_levels", {V::Int, {K::Spectrum}}},
      {"spectrum.bins", {V::Int, {K::Spectrum}}},
      {"spectrum.histogram_max", {V::Real, {K::Spectrum}}},
      {"spectrum.tail_rows", {V::Int, {K::Spectrum}}},
      {"spectrum.tail_threshold", {V::Real, {K::Spectrum}}},
      {"lyapunov.field_ratios", {V::RealList, {K::LyapunovMap}}},
      {"lyapunov.energy_bins", {V::Int, {K::LyapunovMap}}},
      {"lyapunov.energy_min", {V::Real, {K::LyapunovMap}}},
      {"lyapunov.energy_max", {V::Real, {K::LyapunovMap}}},
      {"lyapunov.samples", {V::Int, {K::LyapunovMap}}},
      {"lyapunov.t_end", {V::Real, {K::LyapunovMap}}},
      {"lyapunov.r_max", {V::Real, {K::LyapunovMap}}},
      {"renyi.field_ratios", {V::RealList, {K::Renyi}}},
      {"renyi.window_start", {V::Real, {K::Renyi}}},
      {"renyi.window_end", {V::Real, {K::Renyi}}},
      {"renyi.axis", {V::Str, {K::Renyi}}},
      {"renyi.subsystem", {V::Bool, {K::Renyi}}},
      {"thermalize.window_start", {V::Real, {K::Thermalize}}},
      {"thermalize.window_end", {V::Real, {K::Thermalize}}},
      {"thermalize.window_points", {V::Int, {K::Thermalize}}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// generators may contain commas (Sr(theta,phi)), so they are space separated
std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

long parse_int(const std::string& key, const std::string& v) {
  long x = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

void check_type(const std::string& key, ValueType t, const std::string& v) {
  switch (t) {
    case ValueType::Int: parse_int(key, v); break;
    case ValueType::Real: parse_real(key, v); break;
    case ValueType::Bool: parse_bool(key, v); break;
    case ValueType::Str:
      if (v.empty()) throw ConfigError(key + ": empty value");
      break;
    case ValueType::RealList:
      if (split_list(v).empty()) throw ConfigError(key + ": empty list");
      for (const auto& item : split_list(v)) parse_real(key, item);
      break;
    case ValueType::StrList:
      if (split_words(v).empty()) throw ConfigError(key + ": empty list");
      break;
    case ValueType::IntOrAuto:
      if (v != "auto") parse_int(key, v);
      break;
  }
}

}  // namespace

double ExperimentConfig::get(const std::string& key, double fallback) const {
  const auto it = extra.find(key);
  return it == extra.end() ? fallback : parse_real(key, it->second);
}

long ExperimentConfig::get_int(const std::string& key, long fallback) const {
  const auto it = extra.find(key);
  return it == extra.end() ? fallback : parse_int(key, it->second);
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = extra.find(key);
  return it == extra.end() ? fallback : parse_bool(key, it->second);
}

std::string ExperimentConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = extra.find(key);
  return it == extra.end() ? fallback : it->second;
}

std::vector<double> ExperimentConfig::get_list(const std::string& key,
                                               std::vector<double> fallback) const {
  const auto it = extra.find(key);
  if (it == extra.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) out.push_back(parse_real(key, item));
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section + ": key outside any [section]");
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      if (!schema().count(full)) throw ConfigError(full + ": unknown key");
      values[full] = trim(node.data());
    }
  }
  const auto kind_it = values.find("experiment.kind");
  if (kind_it == values.end()) throw ConfigError("experiment.kind: missing required key");

  ExperimentConfig c;
  c.kind = parse_kind(kind_it->second);
  for (const auto& [key, value] : values) {
    const KeySpec& spec = schema().at(key);
    if (!spec.kinds.empty() && !spec.kinds.count(c.kind))
      throw ConfigError(key + ": not valid for experiment kind '" + kind_tag(c.kind) + "'");
    check_type(key, spec.type, value);
  }
  auto require = [&](const std::string& key) -> const std::string& {
    const auto it = values.find(key);
    if (it == values.end()) throw ConfigError(key + ": missing required key");
    return it->second;
  };

  c.params.n_spins = static_cast<int>(parse_int("model.n_spins", require("model.n_spins")));
  c.params.g_khz = parse_real("model.g_khz", require("model.g_khz"));
  c.params.delta_khz = parse_real("model.delta_khz", require("model.delta_khz"));
  const bool has_b = values.count("model.b_khz"), has_ratio = values.count("model.field_ratio");
  if (has_b == has_ratio)
    throw ConfigError("model.b_khz: give exactly one of model.b_khz and model.field_ratio");
  if (has_b) c.params.b_khz = parse_real("model.b_khz", values["model.b_khz"]);
  else c.params = c.params.with_field_ratio(parse_real("model.field_ratio", values["model.field_ratio"]));
  if (kQuantum.count(c.kind)) {
    const std::string& n_max = require("model.n_max");
    c.auto_cutoff = n_max == "auto";
    c.params.n_max = c.auto_cutoff ? 32 : static_cast<int>(parse_int("model.n_max", n_max));
  } else if (values.count("model.n_max") && values["model.n_max"] != "auto") {
    c.params.n_max = static_cast<int>(parse_int("model.n_max", values["model.n_max"]));
  }
  try {
    c.params.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }

  if (values.count("state.recipe")) c.state = values["state.recipe"];
  if (kEvolving.count(c.kind)) {
    c.t_end = parse_real("time.t_end", require("time.t_end"));
    const long points = parse_int("time.points", require("time.points"));
    if (!(c.t_end > 0.0)) throw ConfigError("time.t_end: must be positive");
    if (points < 2) throw ConfigError("time.points: need at least 2");
    c.points = static_cast<std::size_t>(points);
  }
  if (values.count("experiment.seed")) {
    const long s = parse_int("experiment.seed", values["experiment.seed"]);
    if (s < 0) throw ConfigError("experiment.seed: must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (values.count("experiment.threads")) {
    c.threads = static_cast<int>(parse_int("experiment.threads", values["experiment.threads"]));
    if (c.threads < 1) throw ConfigError("experiment.threads: must be >= 1");
  }
  if (values.count("experiment.output")) c.output = values["experiment.output"];
  if (values.count("decoherence.gamma_per_s")) {
    c.decoherence.gamma_per_s = parse_real("decoherence.gamma_per_s", values["decoherence.gamma_per_s"]);
    if (c.decoherence.gamma_per_s < 0.0) throw ConfigError("decoherence.gamma_per_s: must be >= 0");
  }
  if (values.count("decoherence.enhancement")) {
    c.decoherence.enhancement = parse_real("decoherence.enhancement", values["decoherence.enhancement"]);
    if (!(c.decoherence.enhancement > 0.0)) throw ConfigError("decoherence.enhancement: must be > 0");
  }
  if (values.count("limits.max_dim")) c.max_dim = parse_int("limits.max_dim", values["limits.max_dim"]);
  if (values.count("limits.max_trajectories"))
    c.max_trajectories = static_cast<std::size_t>(parse_int("limits.max_trajectories", values["limits.max_trajectories"]));

  // kind-specific checks that do not need any computation
  if (c.kind == ExperimentKind::Fotoc) {
    if (values.count("fotoc.generators"))
      for (const auto& g : split_words(values["fotoc.generators"])) {
        try {
          Generator::parse(g);
        } catch (const ParameterError& e) {
          throw ConfigError("fotoc.generators: " + std::string(e.what()));
        }
      }
    if (values.count("fotoc.propagator")) {
      const auto& p = values["fotoc.propagator"];
      if (p != "auto" && p != "eigen" && p != "chebyshev")
        throw ConfigError("fotoc.propagator: expected auto, eigen or chebyshev");
    }
  }
  if (c.kind == ExperimentKind::Renyi && values.count("renyi.axis")) {
    const auto& a = values["renyi.axis"];
    if (a != "max_variance" && a != "min_residual")
      throw ConfigError("renyi.axis: expected max_variance or min_residual");
  }
  if (c.kind == ExperimentKind::Twa) {
    try {
      WignerRecipe::parse(c.state);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("state.recipe: ") + e.what());
    }
  }
  c.echo = values;
  for (const auto& [k, v] : values)
    if (!k.starts_with("experiment.") && !k.starts_with("model.") && !k.starts_with("state.") &&
        !k.starts_with("time.") && !k.starts_with("decoherence.") && !k.starts_with("limits."))
      c.extra[k] = v;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---- output helpers --------------------------------------------------------

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::vector<double> apply_dephasing_decay(std::span<const double> i0, std::span<const double> times_ms,
                                          double gamma_per_s, int n_spins) {
  if (i0.size() != times_ms.size()) throw ParameterError("series and time grid differ in length");
  if (gamma_per_s < 0.0) throw ParameterError("decay rate must be >= 0");
  const double rate = gamma_per_s * 1e-3 * n_spins;  // per ms
  std::vector<double> out(i0.size());
  for (std::size_t i = 0; i < i0.size(); ++i) out[i] = i0[i] * std::exp(-rate * times_ms[i]);
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CutoffError*>(&e) || dynamic_cast<const ContractViolation*>(&e) ||
      dynamic_cast<const StiffnessError*>(&e))
    return 3;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  return 3;
}

namespace {

class Csv {
 public:
  using Cell = std::variant<double, long long, std::string>;

  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(std::vector<Cell> cells) {
    if (cells.size() != header_.size()) throw std::logic_error("csv row width mismatch");
    rows_.push_back(std::move(cells));
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < header_.size(); ++i) out << (i ? "," : "") << header_[i];
    out << '\n';
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) out << ',';
        std::visit([&out](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, double>) out << format_double(v);
          else out << v;
        }, r[i]);
      }
      out << '\n';
    }
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

struct Context {
  const ExperimentConfig& cfg;
  std::filesystem::path dir;
  std::vector<OutputFile> files;
  json results = json::object();

  void emit(const std::string& stage, const std::string& name, const Csv& csv) {
    const auto path = dir / name;
    csv.write(path);
    files.push_back({stage, path, sha256_file(path), std::filesystem::file_size(path)});
  }
};

json fit_json(const GrowthFit& f, std::span<const double> times) {
  json j;
  j["ok"] = f.ok();
  if (f.ok()) {
    j["rate_per_ms"] = f.rate;
    j["ci_low"] = f.ci_low;
    j["ci_high"] = f.ci_high;
    j["r_squared"] = f.r_squared;
    j["window_ms"] = {times[f.window_first], times[f.window_last]};
  } else {
    j["reason"] = f.reason;
  }
  j["first_maximum_ms"] = f.maximum.time;
  j["maximum_at_end"] = f.maximum.at_end;
  return j;
}

FitWindowPolicy policy_from(const ExperimentConfig& c, const std::string& section) {
  FitWindowPolicy p;
  p.onset_factor = c.get(section + ".fit_onset", p.onset_factor);
  p.end_fraction = c.get(section + ".fit_end_fraction", p.end_fraction);
  p.min_decades = c.get(section + ".fit_min_decades", p.min_decades);
  return p;
}

void check_dim(const ExperimentConfig& c, const ModelParams& p, bool allow_large) {
  if (!allow_large && p.dim() > c.max_dim)
    throw ConfigError("limits.max_dim: D = " + std::to_string(p.dim()) + " exceeds the ceiling " +
                      std::to_string(c.max_dim) + " (pass --allow-large to override)");
}

StateVector quantum_state(const ModelParams& p, const std::string& recipe) {
  const WignerRecipe r = WignerRecipe::parse(recipe);
  if (r.alpha != cplx(0.0))
    throw ConfigError("state.recipe: coherent boson amplitudes are only supported by twa");
  return coherent_spin_state(p, r.axis, r.sign, 0);
}

std::vector<double> grid(double t_end, std::size_t points) { return TimeGrid{t_end, points}.times(); }

ModelParams resolve_cutoff(const ExperimentConfig& c, const ModelParams& p, std::span<const double> times,
                           json& results) {
  if (!c.auto_cutoff) return p;
  const std::string recipe = c.state;
  const CutoffChoice choice =
      select_cutoff(p, [&recipe](const ModelParams& q) { return quantum_state(q, recipe); }, times);
  results["cutoff"] = {{"n_max", choice.n_max}, {"max_tail", choice.max_tail},
                       {"mean_n_shift", choice.mean_n_shift}, {"probed", choice.probed}};
  return p.with_cutoff(choice.n_max);
}

// ---- pipelines -------------------------------------------------------------

void run_spectrum(Context& ctx, bool allow_large) {
  const auto& c = ctx.cfg;
  check_dim(c, c.params, allow_large);
  const EigenSystem es = diagonalize(c.params);
  LevelStatsOptions opt;
  opt.parity_resolved = c.get_bool("spectrum.parity_resolved", opt.parity_resolved);
  opt.unfold_degree = static_cast<int>(c.get_int("spectrum.unfold_degree", opt.unfold_degree));
  opt.edge_trim = c.get("spectrum.edge_trim", opt.edge_trim);
  opt.min_levels = static_cast<std::size_t>(c.get_int("spectrum.min_levels", static_cast<long>(opt.min_levels)));
  opt.histogram_bins = static_cast<int>(c.get_int("spectrum.bins", opt.histogram_bins));
  opt.histogram_max = c.get("spectrum.histogram_max", opt.histogram_max);
  opt.tail_rows = static_cast<int>(c.get_int("spectrum.tail_rows", opt.tail_rows));
  opt.tail_threshold = c.get("spectrum.tail_threshold", opt.tail_threshold);
  const double e_c = c.params.esqpt_energy();

  Csv levels({"index", "energy", "parity_block"});
  for (Eigen::Index k = 0; k < es.dim(); ++k)
    levels.row({static_cast<long long>(k), es.energies()(k), static_cast<long long>(es.block_of(k))});
  ctx.emit("levels", "levels.csv", levels);

  const auto stats = level_statistics(es, e_c, opt);
  Csv summary({"window", "sector", "levels", "mean_r", "ks_wigner", "ks_poisson", "sufficient"});
  Csv hist({"window", "sector", "bin_low", "bin_high", "density"});
  Csv spacings({"window", "sector", "s"});
  for (const auto& s : stats) {
    summary.row({window_tag(s.window), static_cast<long long>(s.sector), static_cast<long long>(s.levels),
                 s.mean_r, s.ks_wigner, s.ks_poisson, static_cast<long long>(s.sufficient)});
    for (std::size_t b = 0; b < s.histogram.size(); ++b)
      hist.row({window_tag(s.window), static_cast<long long>(s.sector), s.bin_edges[b], s.bin_edges[b + 1],
                s.histogram[b]});
    for (double x : s.spacings) spacings.row({window_tag(s.window), static_cast<long long>(s.sector), x});
  }
  ctx.emit("statistics", "spacing_summary.csv", summary);
  ctx.emit("statistics", "spacing_histogram.csv", hist);
  ctx.emit("statistics", "spacings.csv", spacings);
  ctx.results["esqpt_energy"] = e_c;
  ctx.results["field_ratio"] = c.params.field_ratio();
  ctx.results["reconstruction_residual"] = c.params.dim() <= 4096 ? es.reconstruction_residual() : -1.0;
  ctx.results["orthogonality_defect"] = es.orthogonality_defect();
}

void run_lyapunov_map(Context& ctx) {
  const auto& c = ctx.cfg;
  ScanOptions opt;
  opt.field_ratios = c.get_list("lyapunov.field_ratios", {0.2, 0.5, 1.0, 2.0, 4.0});
  opt.energy_bins = static_cast<int>(c.get_int("lyapunov.energy_bins", opt.energy_bins));
  opt.energy_min = c.get("lyapunov.energy_min", opt.energy_min);
  opt.energy_max = c.get("lyapunov.energy_max", opt.energy_max);
  opt.samples = static_cast<int>(c.get_int("lyapunov.samples", opt.samples));
  opt.r_max = c.get("lyapunov.r_max", opt.r_max);
  opt.lyapunov.t_end = c.get("lyapunov.t_end", opt.lyapunov.t_end);
  opt.seed = c.seed;
  opt.threads = c.threads;
  const auto cells = phase_diagram_scan(c.params, opt);
  Csv out({"sqrt_bc_over_b", "field_ratio", "energy_over_abs_ec", "lambda_max", "samples"});
  for (const auto& cell : cells)
    out.row({cell.sqrt_bc_over_b, cell.field_ratio, cell.energy_center, cell.lambda_max,
             static_cast<long long>(cell.samples)});
  ctx.emit("scan", "lyapunov_map.csv", out);
  json crit = json::array();
  for (double r : opt.field_ratios) {
    const ModelParams p = c.params.with_field_ratio(r);
    crit.push_back({{"field_ratio", r}, {"lambda_L_critical_point", critical_point_exponent(p)}});
  }
  ctx.results["critical_point"] = crit;
}

void run_fotoc(Context& ctx, bool allow_large) {
  const auto& c = ctx.cfg;
  const auto times = grid(c.t_end, c.points);
  const ModelParams p = resolve_cutoff(c, c.params, times, ctx.results);
  check_dim(c, p, allow_large);
  const StateVector psi0 = quantum_state(p, c.state);
  const double dphi = c.get("fotoc.dphi", default_dphi(p.n_spins));
  const double tail = c.get("fotoc.tail_threshold", 1e-8);
  const FitWindowPolicy policy = policy_from(c, "fotoc");
  std::string route = c.get_string("fotoc.propagator", "auto");
  if (route == "auto") route = p.dim() <= 4096 ? "eigen" : "chebyshev";
  const std::vector<std::string> gens = split_words(c.get_string("fotoc.generators", "X"));
  std::optional<EigenSystem> es;
  std::optional<ChebyshevPropagator> cheb;
  if (route == "eigen") es.emplace(diagonalize(p));
  else cheb.emplace(p);

  json per_gen = json::object();
  bool valid = true;
  for (const auto& tag : gens) {
    const Generator g = Generator::parse(tag);
    const FotocSeries s = es ? fotoc(psi0, *es, g, dphi, times, tail) : fotoc(psi0, *cheb, g, dphi, times, tail);
    Csv out({"t_ms", "F", "one_minus_F", "one_minus_F_over_dphi2", "var_G"});
    const auto scaled = s.scaled();
    for (std::size_t i = 0; i < s.times.size(); ++i)
      out.row({s.times[i], s.fidelity[i], s.one_minus_f[i], scaled[i], s.variance[i]});
    ctx.emit("fotoc", "fotoc_" + g.tag() + ".csv", out);
    const GrowthFit fit = extract_lambda_q(s, policy);
    const FirstMaximum tstar = scrambling_time(s, policy);
    per_gen[g.tag()] = {{"lambda_q", fit_json(fit, s.times)},
                        {"t_star_ms", tstar.time},
                        {"t_star_at_end", tstar.at_end},
                        {"max_tail", s.max_tail},
                        {"valid", s.valid}};
    valid = valid && s.valid;
  }
  ctx.results["route"] = route;
  ctx.results["dphi"] = dphi;
  ctx.results["n_max"] = p.n_max;
  ctx.results["generators"] = per_gen;
  ctx.results["lambda_L_critical_point"] = critical_point_exponent(p);

  const auto sizes = c.get_list("fotoc.sizes", {});
  if (!sizes.empty()) {
    const Generator g = Generator::parse(gens.front());
    Csv out({"n_spins", "n_max", "t_star_ms", "log_n", "lambda_q"});
    std::vector<double> logn, tst;
    for (double nd : sizes) {
      ModelParams q = p;
      q.n_spins = static_cast<int>(std::lround(nd));
      const std::string recipe = c.state;
      const CutoffChoice cut =
          select_cutoff(q, [&recipe](const ModelParams& m) { return quantum_state(m, recipe); }, times);
      q = q.with_cutoff(cut.n_max);
      check_dim(c, q, allow_large);
      const ChebyshevPropagator prop(q);
      const FotocSeries s = fotoc(quantum_state(q, c.state), prop, g, default_dphi(q.n_spins), times, tail);
      if (!s.valid) valid = false;
      const FirstMaximum ts = scrambling_time(s, policy);
      const GrowthFit fit = extract_lambda_q(s, policy);
      out.row({static_cast<long long>(q.n_spins), static_cast<long long>(q.n_max), ts.time,
               std::log(static_cast<double>(q.n_spins)), fit.ok() ? fit.rate : std::nan("")});
      logn.push_back(std::log(static_cast<double>(q.n_spins)));
      tst.push_back(ts.time);
    }
    ctx.emit("scaling", "t_star.csv", out);
    if (logn.size() >= 3) {
      const LinearFit lf = linear_fit(logn, tst);
      ctx.results["t_star_fit"] = {{"a0_ms", lf.intercept},
                                   {"slope_ms", lf.slope},
                                   {"lambda_q_from_slope", lf.slope > 0 ? 1.0 / lf.slope : 0.0},
                                   {"r_squared", lf.r_squared}};
    }
  }
  if (!valid) throw CutoffError("Fock tail exceeded the threshold; raise model.n_max");
}

void run_twa(Context& ctx, bool allow_large) {
  const auto& c = ctx.cfg;
  const auto times = grid(c.t_end, c.points);
  const auto trajectories = static_cast<std::size_t>(c.get_int("twa.trajectories", 10000));
  if (!allow_large && trajectories > c.max_trajectories)
    throw ConfigError("limits.max_trajectories: R = " + std::to_string(trajectories) +
                      " exceeds the ceiling (pass --allow-large to override)");
  const WignerRecipe recipe = WignerRecipe::parse(c.state);
  const WignerEnsemble ens = sample_initial(c.params.n_spins, recipe, trajectories, c.seed, c.threads);
  EnsembleOptions opt;
  opt.threads = c.threads;
  opt.blocks = static_cast<std::size_t>(c.get_int("twa.blocks", static_cast<long>(opt.blocks)));
  const MomentSeries series = evolve_ensemble(ens, c.params, times, opt);
  for (const auto& tr : series.tracks) {
    Csv out({"t_ms", "mean_G", "var_G", "stderr_mean", "stderr_var"});
    for (std::size_t i = 0; i < times.size(); ++i)
      out.row({times[i], tr.mean[i], tr.variance[i], tr.stderr_mean[i], tr.stderr_variance[i]});
    ctx.emit("moments", "twa_" + observable_tag(tr.observable) + ".csv", out);
  }
  json ex = json::object();
  for (const auto& e : extract_exponents(series, policy_from(c, "twa")))
    ex[observable_tag(e.observable)] = fit_json(e.fit, times);
  const MeanField mf{c.params, PhaseSign::Heisenberg, Scaling::Rescaled};
  const PhasePoint x0 = classical_image(c.params.n_spins, recipe.axis, recipe.sign, recipe.alpha);
  const LyapunovResult ly = lyapunov_max(x0, mf);
  TwinOptions twin;
  twin.seed = c.seed;
  const TwinResult lc = lambda_c_nonlinear(x0, mf, twin);
  ctx.results["trajectories"] = trajectories;
  ctx.results["blocks"] = series.blocks;
  ctx.results["recipe"] = recipe.tag();
  ctx.results["exponents"] = ex;
  ctx.results["lambda_L"] = {{"value", ly.lambda}, {"drift", ly.drift}, {"converged", ly.converged}};
  ctx.results["lambda_c"] = {{"ok", lc.ok()}, {"value", lc.rate}, {"ci_low", lc.ci_low},
                             {"ci_high", lc.ci_high}, {"fitted_cycles", lc.fitted_cycles}};
  ctx.results["max_spin_drift"] = series.max_spin_drift;
  ctx.results["max_energy_drift"] = series.max_energy_drift;
}

struct RenyiRow {
  double t = 0.0;
  RenyiEstimates est;
  double sf_x = 0.0;
  PurityDecomposition terms;
};

double time_mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double time_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = time_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void run_renyi(Context& ctx, bool allow_large) {
  const auto& c = ctx.cfg;
  const auto times = grid(c.t_end, c.points);
  const double w0 = c.get("renyi.window_start", 4.0), w1 = c.get("renyi.window_end", 12.0);
  const AxisStrategy strategy =
      c.get_string("renyi.axis", "max_variance") == "min_residual" ? AxisStrategy::MinResidual : AxisStrategy::MaxVariance;
  const bool subsystem = c.get_bool("renyi.subsystem", false);
  const double f = c.decoherence.enhancement;
  const auto ratios = c.get_list("renyi.field_ratios", {c.params.field_ratio()});

  Csv summary({"field_ratio", "s2_mean", "s2_std", "sf_mean", "sf_std", "sf_decayed_mean", "sf_decayed_std",
               "estimator"});
  json per_field = json::array();
  for (double ratio : ratios) {
    // enhanced couplings run the same dynamics on a time axis shorter by f
    ModelParams p = c.params.with_field_ratio(ratio);
    p = resolve_cutoff(c, p, times, ctx.results);
    check_dim(c, p, allow_large);
    const ModelParams run_p = p.enhanced(f);
    std::vector<double> run_times(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) run_times[i] = times[i] / f;
    const ChebyshevPropagator prop(run_p);
    const bool regular = ratio >= 1.0;
    std::vector<RenyiRow> rows;
    std::vector<std::vector<double>> sub_s2(static_cast<std::size_t>(p.n_spins)),
        sub_est(static_cast<std::size_t>(p.n_spins));
    double max_tail = 0.0;
    prop.evolve_visit(quantum_state(run_p, c.state), run_times, [&](std::size_t i, const StateVector& s) {
      max_tail = std::max(max_tail, s.fock_tail(2));
      const BlochAxis axis = optimize_axis(s, strategy);
      RenyiRow r;
      r.t = times[i];
      r.est = renyi_spin_phonon(s, axis);
      r.sf_x = renyi_spin_phonon(s, BlochAxis::x()).sf_spin;
      r.terms = purity_decomposition(s, axis);
      if (subsystem && times[i] >= w0 && times[i] <= w1)
        for (int l = 1; l <= p.n_spins / 2; ++l) {
          const SubsystemEstimate e = subsystem_fotoc_renyi(s, l, axis);
          sub_s2[static_cast<std::size_t>(l - 1)].push_back(e.s2);
          sub_est[static_cast<std::size_t>(l - 1)].push_back(e.estimate);
        }
      rows.push_back(r);
    });
    if (max_tail > 1e-8) throw CutoffError("Fock tail " + format_double(max_tail) + " exceeds 1e-8; raise model.n_max");

    // decay acts on the intensities with the physical (enhanced) time axis
    std::vector<double> i0s, i0b, i0x;
    for (const auto& r : rows) {
      i0s.push_back(r.est.i0_spin);
      i0b.push_back(r.est.i0_boson);
      i0x.push_back(std::exp(-r.sf_x));
    }
    const auto ds = apply_dephasing_decay(i0s, run_times, c.decoherence.gamma_per_s, p.n_spins);
    const auto db = apply_dephasing_decay(i0b, run_times, c.decoherence.gamma_per_s, p.n_spins);
    const auto dx = apply_dephasing_decay(i0x, run_times, c.decoherence.gamma_per_s, p.n_spins);

    Csv out({"t_ms", "s2", "sf_spin", "sf_spin_boson", "sf_x", "sf", "sf_decayed", "axis_theta", "axis_phi",
             "i0_spin", "i0_boson", "d_diag", "c_off"});
    std::vector<double> w_s2, w_sf, w_sfd;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      const double sf = regular ? r.sf_x : r.est.sf_spin_boson;
      const double sfd = regular ? renyi2(dx[i]) : renyi2(ds[i] + db[i]);
      out.row({r.t, r.est.s2, r.est.sf_spin, r.est.sf_spin_boson, r.sf_x, sf, sfd, r.est.axis.theta,
               r.est.axis.phi, r.est.i0_spin, r.est.i0_boson, r.terms.d_diag, r.terms.c_off});
      if (r.t >= w0 && r.t <= w1) {
        w_s2.push_back(r.est.s2);
        w_sf.push_back(sf);
        w_sfd.push_back(sfd);
      }
    }
    const std::string tag = "renyi_B" + format_double(ratio) + ".csv";
    ctx.emit("series", tag, out);
    const std::string estimator = regular ? "S_F^{S_x}" : "S_F^{S_r,n}";
    summary.row({ratio, time_mean(w_s2), time_std(w_s2), time_mean(w_sf), time_std(w_sf), time_mean(w_sfd),
                 time_std(w_sfd), estimator});
    per_field.push_back({{"field_ratio", ratio}, {"n_max", p.n_max}, {"window_points", w_s2.size()},
                         {"max_tail", max_tail}});
    if (subsystem) {
      Csv sub({"l_a", "s2_mean", "s2_std", "estimate_mean", "estimate_std"});
      for (int l = 1; l <= p.n_spins / 2; ++l) {
        const auto& a = sub_s2[static_cast<std::size_t>(l - 1)];
        const auto& b = sub_est[static_cast<std::size_t>(l - 1)];
        sub.row({static_cast<long long>(l), time_mean(a), time_std(a), time_mean(b), time_std(b)});
      }
      ctx.emit("subsystem", "renyi_subsystem_B" + format_double(ratio) + ".csv", sub);
    }
  }
  ctx.emit("summary", "renyi_summary.csv", summary);
  ctx.results["fields"] = per_field;
  ctx.results["window_ms"] = {w0, w1};
  ctx.results["decoherence"] = {{"gamma_per_s", c.decoherence.gamma_per_s}, {"enhancement", f}};
}

void run_thermalize(Context& ctx, bool allow_large) {
  const auto& c = ctx.cfg;
  const auto times = grid(c.t_end, c.points);
  const ModelParams p = resolve_cutoff(c, c.params, times, ctx.results);
  check_dim(c, p, allow_large);
  const double w0 = c.get("thermalize.window_start", 6.0), w1 = c.get("thermalize.window_end", 12.0);
  const auto wp = static_cast<std::size_t>(c.get_int("thermalize.window_points", 61));
  if (!(w1 > w0) || wp < 2) throw ConfigError("thermalize.window_end: window must be non-empty");
  std::vector<double> window(wp);
  for (std::size_t i = 0; i < wp; ++i) window[i] = w0 + (w1 - w0) * static_cast<double>(i) / static_cast<double>(wp - 1);

  const StateVector psi0 = quantum_state(p, c.state);
  const EigenSystem es = diagonalize(p);
  const auto states = es.evolve_many(psi0, window);
  double max_tail = 0.0;
  Distributions avg{Eigen::VectorXd::Zero(p.spin_dim()), Eigen::VectorXd::Zero(p.fock_dim())};
  std::vector<std::vector<double>> sub(static_cast<std::size_t>(p.n_spins));
  for (const auto& s : states) {
    max_tail = std::max(max_tail, s.fock_tail(2));
    avg.p_mz += s.spin_distribution();
    avg.p_n += s.fock_distribution();
    const Eigen::MatrixXcd rho = reduced_spin_matrix(s);
    for (int l = 1; l <= p.n_spins; ++l)
      sub[static_cast<std::size_t>(l - 1)].push_back(
          renyi2(partial_trace_spins(rho, p.n_spins, l).cwiseAbs2().sum()));
  }
  if (max_tail > 1e-8) throw CutoffError("Fock tail " + format_double(max_tail) + " exceeds 1e-8; raise model.n_max");
  avg.p_mz /= static_cast<double>(wp);
  avg.p_n /= static_cast<double>(wp);

  const EnsembleSpec de = diagonal_ensemble(es, psi0);
  const Distributions dd = ensemble_distributions(es, de);
  const EnsembleSpec th = thermal_ensemble(es, psi0);
  const auto s2_th = ensemble_subsystem_renyi(es, th);
  const auto s2_de = ensemble_subsystem_renyi(es, de);

  Csv dist({"quantity", "index", "time_averaged", "diagonal"});
  for (Eigen::Index j = 0; j < avg.p_mz.size(); ++j)
    dist.row({std::string("M_z"), static_cast<long long>(j) - p.n_spins / 2, avg.p_mz(j), dd.p_mz(j)});
  for (Eigen::Index n = 0; n < avg.p_n.size(); ++n)
    dist.row({std::string("n"), static_cast<long long>(n), avg.p_n(n), dd.p_n(n)});
  ctx.emit("distributions", "distributions.csv", dist);

  Csv ren({"l_a", "s2_time_averaged", "s2_std", "s2_thermal", "s2_diagonal"});
  for (int l = 1; l <= p.n_spins; ++l) {
    const auto& v = sub[static_cast<std::size_t>(l - 1)];
    ren.row({static_cast<long long>(l), time_mean(v), time_std(v), s2_th[static_cast<std::size_t>(l - 1)],
             s2_de[static_cast<std::size_t>(l - 1)]});
  }
  ctx.emit("entropy", "subsystem_renyi.csv", ren);
  ctx.results["n_max"] = p.n_max;
  ctx.results["window_ms"] = {w0, w1};
  ctx.results["tv_mz"] = total_variation(avg.p_mz, dd.p_mz);
  ctx.results["tv_n"] = total_variation(avg.p_n, dd.p_n);
  ctx.results["thermal"] = {{"beta_ms", th.beta},
                            {"negative_temperature", th.negative_temperature},
                            {"target_energy", th.target_energy},
                            {"matching_residual", th.matching_residual}};
  ctx.results["diagonal_energy_residual"] = de.matching_residual;
  ctx.results["max_tail"] = max_tail;
}

}  // namespace

RunResult run(ExperimentConfig config, const RunOptions& options) {
  if (options.expected_kind && *options.expected_kind != config.kind)
    throw ConfigError("experiment.kind: config describes '" + kind_tag(config.kind) + "' but the '" +
                      kind_tag(*options.expected_kind) + "' subcommand was used");
  if (options.seed) config.seed = *options.seed;
  if (options.threads) config.threads = std::max(1, *options.threads);
  if (options.output) config.output = *options.output;
  std::filesystem::create_directories(config.output);

  const auto start = std::chrono::steady_clock::now();
  Context ctx{config, config.output, {}, json::object()};
  switch (config.kind) {
    case ExperimentKind::Spectrum: run_spectrum(ctx, options.allow_large); break;
    case ExperimentKind::LyapunovMap: run_lyapunov_map(ctx); break;
    case ExperimentKind::Fotoc: run_fotoc(ctx, options.allow_large); break;
    case ExperimentKind::Twa: run_twa(ctx, options.allow_large); break;
    case ExperimentKind::Renyi: run_renyi(ctx, options.allow_large); break;
    case ExperimentKind::Thermalize: run_thermalize(ctx, options.allow_large); break;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json m;
  m["experiment"] = kind_tag(config.kind);
  m["code_version"] = code_version();
  json echo = json::object();
  for (const auto& [k, v] : config.echo) echo[k] = v;
  m["config"] = echo;
  m["seed"] = config.seed;
  m["threads"] = config.threads;
  m["params"] = {{"n_spins", config.params.n_spins}, {"g_khz", config.params.g_khz},
                 {"delta_khz", config.params.delta_khz}, {"b_khz", config.params.b_khz},
                 {"n_max", config.auto_cutoff ? json("auto") : json(config.params.n_max)}};
  m["wall_time_s"] = wall;
  json files = json::array();
  for (const auto& f : ctx.files)
    files.push_back({{"stage", f.stage}, {"file", f.path.filename().string()}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  m["outputs"] = files;
  m["results"] = ctx.results;
  const auto manifest = config.output / "manifest.json";
  std::ofstream out(manifest);
  out << m.dump(2) << '\n';
  return {ctx.files, manifest};
}

}  // namespace dicke
