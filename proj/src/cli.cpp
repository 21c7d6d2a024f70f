#include "spatialdr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "CLI11.hpp"
#include "json.hpp"
#include "spatialdr/csv.hpp"
#include "spatialdr/error.hpp"
#include "spatialdr/log.hpp"
#include "spatialdr/rng.hpp"

namespace spatialdr::cli {
namespace {

using json = nlohmann::ordered_json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string family_list_text(const std::vector<BasisFamily>& families) {
  std::string out;
  for (auto f : families) out += (out.empty() ? "" : ",") + to_string(f);
  return out;
}

std::string withhold_text(const RunConfig& c) {
  if (!c.basis_in_gps && !c.basis_in_outcome) return "both";
  if (!c.basis_in_gps) return "gps";
  if (!c.basis_in_outcome) return "outcome";
  return "none";
}

void set_withhold(RunConfig& c, const std::string& text) {
  if (text == "none") {
    c.basis_in_gps = c.basis_in_outcome = true;
  } else if (text == "gps") {
    c.basis_in_gps = false;
    c.basis_in_outcome = true;
  } else if (text == "outcome") {
    c.basis_in_gps = true;
    c.basis_in_outcome = false;
  } else if (text == "both") {
    c.basis_in_gps = c.basis_in_outcome = false;
  } else {
    throw ConfigError("withhold-basis must be none, gps, outcome or both, got '" + text + "'");
  }
}

std::string safe_file_part(const std::string& name) {
  std::string out = name;
  for (char& ch : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
    if (!ok) ch = '_';
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename T>
T get_as(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// One configurable field: its JSON key, how to read it from a config
// document, and how to copy it between configs when a flag overrides it.
struct Field {
  std::string key;
  std::function<void(RunConfig&, const json&)> from_json;
  std::function<void(RunConfig&, const RunConfig&)> copy;
};

#define SPATIALDR_FIELD(KEY, MEMBER, TYPE) \
  Field { KEY, [](RunConfig& c, const json& v) { c.MEMBER = get_as<TYPE>(v, KEY); }, \
          [](RunConfig& d, const RunConfig& s) { d.MEMBER = s.MEMBER; } }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      {"data", [](RunConfig& c, const json& v) { c.data_path = get_as<std::string>(v, "data"); },
       [](RunConfig& d, const RunConfig& s) { d.data_path = s.data_path; }},
      {"edges", [](RunConfig& c, const json& v) { c.edge_list_path = get_as<std::string>(v, "edges"); },
       [](RunConfig& d, const RunConfig& s) { d.edge_list_path = s.edge_list_path; }},
      SPATIALDR_FIELD("id", columns.id_col, std::string),
      SPATIALDR_FIELD("outcome", columns.outcome_col, std::string),
      SPATIALDR_FIELD("treatments", columns.treatment_cols, std::vector<std::string>),
      SPATIALDR_FIELD("confounders", columns.confounder_cols, std::vector<std::string>),
      {"family", [](RunConfig& c, const json& v) { c.family = parse_basis_family(get_as<std::string>(v, "family")); },
       [](RunConfig& d, const RunConfig& s) { d.family = s.family; }},
      SPATIALDR_FIELD("K", K, std::size_t),
      SPATIALDR_FIELD("K_grid", K_grid, std::vector<std::size_t>),
      {"sweep_families",
       [](RunConfig& c, const json& v) {
         c.sweep_families.clear();
         for (const auto& s : get_as<std::vector<std::string>>(v, "sweep_families")) {
           c.sweep_families.push_back(parse_basis_family(s));
         }
       },
       [](RunConfig& d, const RunConfig& s) { d.sweep_families = s.sweep_families; }},
      SPATIALDR_FIELD("sweep_treatment", sweep_treatment, std::string),
      SPATIALDR_FIELD("folds", folds, std::size_t),
      SPATIALDR_FIELD("cv_folds", cv_folds, std::size_t),
      SPATIALDR_FIELD("seed", seed, std::uint64_t),
      SPATIALDR_FIELD("lambda_grid_size", lambda_grid_size, std::size_t),
      SPATIALDR_FIELD("lambda_min_ratio", lambda_min_ratio, double),
      {"marginal",
       [](RunConfig& c, const json& v) { c.marginal = parse_marginal_density(get_as<std::string>(v, "marginal")); },
       [](RunConfig& d, const RunConfig& s) { d.marginal = s.marginal; }},
      {"truncation",
       [](RunConfig& c, const json& v) {
         if (v.is_null()) {
           c.truncation.reset();
           return;
         }
         const auto p = get_as<std::vector<double>>(v, "truncation");
         if (p.size() != 2) throw ConfigError("config key 'truncation' needs [lower, upper] percentiles");
         c.truncation = Truncation{p[0], p[1]};
       },
       [](RunConfig& d, const RunConfig& s) { d.truncation = s.truncation; }},
      SPATIALDR_FIELD("alpha", alpha, double),
      SPATIALDR_FIELD("rho", rho, double),
      {"moran_method",
       [](RunConfig& c, const json& v) { c.moran_method = parse_moran_method(get_as<std::string>(v, "moran_method")); },
       [](RunConfig& d, const RunConfig& s) { d.moran_method = s.moran_method; }},
      SPATIALDR_FIELD("permutations", permutations, std::size_t),
      {"withhold_basis", [](RunConfig& c, const json& v) { set_withhold(c, get_as<std::string>(v, "withhold_basis")); },
       [](RunConfig& d, const RunConfig& s) {
         d.basis_in_gps = s.basis_in_gps;
         d.basis_in_outcome = s.basis_in_outcome;
       }},
      {"out", [](RunConfig& c, const json& v) { c.out_dir = get_as<std::string>(v, "out"); },
       [](RunConfig& d, const RunConfig& s) { d.out_dir = s.out_dir; }},
      SPATIALDR_FIELD("threads", threads, std::size_t),
  };
  return all;
}

#undef SPATIALDR_FIELD

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw std::logic_error("unknown config field " + key);
}

// Flag values land in a scratch config; after parsing, each flag that was
// actually given is copied over the defaults-plus-file config.
struct Overrides {
  RunConfig flags;
  std::vector<std::pair<CLI::Option*, std::string>> options;
  std::string family, marginal, moran_method, withhold;
  std::vector<std::string> sweep_families;
  std::vector<double> truncation;
  std::string data, edges, out;

  void apply(RunConfig& config) {
    if (!family.empty()) flags.family = parse_basis_family(family);
    if (!marginal.empty()) flags.marginal = parse_marginal_density(marginal);
    if (!moran_method.empty()) flags.moran_method = parse_moran_method(moran_method);
    if (!withhold.empty()) set_withhold(flags, withhold);
    if (!sweep_families.empty()) {
      flags.sweep_families.clear();
      for (const auto& s : sweep_families) flags.sweep_families.push_back(parse_basis_family(s));
    }
    if (!truncation.empty()) {
      if (truncation.size() != 2) throw ConfigError("--truncation needs two percentiles");
      flags.truncation = Truncation{truncation[0], truncation[1]};
    }
    flags.data_path = data;
    flags.edge_list_path = edges;
    flags.out_dir = out;
    for (const auto& [option, key] : options) {
      if (option->count() > 0) field(key).copy(config, flags);
    }
  }
};

void add_run_options(CLI::App& app, Overrides& o, bool sweep) {
  auto track = [&](CLI::Option* opt, const std::string& key) { o.options.emplace_back(opt, key); };
  track(app.add_option("--data", o.data, "Unit-level CSV"), "data");
  track(app.add_option("--edges", o.edges, "Edge list CSV with src,dst columns"), "edges");
  track(app.add_option("--id", o.flags.columns.id_col, "Unit id column (default id)"), "id");
  track(app.add_option("--outcome", o.flags.columns.outcome_col, "Outcome column (default y)"), "outcome");
  track(app.add_option("--treatments", o.flags.columns.treatment_cols, "Treatment columns")->delimiter(','),
        "treatments");
  track(app.add_option("--confounders", o.flags.columns.confounder_cols, "Confounder columns")->delimiter(','),
        "confounders");
  if (sweep) {
    track(app.add_option("--K-grid", o.flags.K_grid, "Ascending basis sizes")->delimiter(','), "K_grid");
    track(app.add_option("--families", o.sweep_families, "Basis families to sweep (default MEM,ICAR)")
              ->delimiter(','),
          "sweep_families");
    track(app.add_option("--sweep-treatment", o.flags.sweep_treatment, "Treatment kept in the outcome model"),
          "sweep_treatment");
  } else {
    track(app.add_option("--family", o.family, "MEM or ICAR (default ICAR)"), "family");
    track(app.add_option("--K", o.flags.K, "Basis size (default 350)"), "K");
    track(app.add_option("--folds", o.flags.folds, "Cross-fitting folds (default 10)"), "folds");
    track(app.add_option("--marginal", o.marginal, "Stabilizing marginal density: normal or kde"), "marginal");
    track(app.add_option("--truncation", o.truncation, "Weight percentiles to clamp at, e.g. 1,99")
              ->delimiter(',')
              ->expected(2),
          "truncation");
    track(app.add_option("--withhold-basis", o.withhold, "none, gps, outcome or both"), "withhold_basis");
  }
  track(app.add_option("--cv-folds", o.flags.cv_folds, "Folds for choosing lambda (default 10)"), "cv_folds");
  track(app.add_option("--seed", o.flags.seed, "Master seed (default 1)"), "seed");
  track(app.add_option("--lambda-grid-size", o.flags.lambda_grid_size, "Lambda grid length (default 100)"),
        "lambda_grid_size");
  track(app.add_option("--lambda-min-ratio", o.flags.lambda_min_ratio, "Smallest lambda / lambda_max (default 1e-4)"),
        "lambda_min_ratio");
  track(app.add_option("--alpha", o.flags.alpha, "Moran test level (default 0.05)"), "alpha");
  track(app.add_option("--rho", o.flags.rho, "ICAR precision parameter (default 1)"), "rho");
  track(app.add_option("--moran-method", o.moran_method, "analytic or permutation"), "moran_method");
  track(app.add_option("--permutations", o.flags.permutations, "Permutation draws (default 999)"), "permutations");
  track(app.add_option("--out", o.out, "Output directory (default out)"), "out");
  track(app.add_option("--threads", o.flags.threads, "Worker threads (default 1)"), "threads");
}

BasisMatrix make_basis(const AdjacencyGraph& graph, const RunConfig& config) {
  if (config.family == BasisFamily::Mem) return mem_basis(graph, config.K);
  return icar_basis(graph, PrecisionSpec{config.rho}, config.K);
}

SpectralDecomposition make_decomposition(const AdjacencyGraph& graph, BasisFamily family, double rho) {
  if (family == BasisFamily::Mem) return mem_decomposition(graph);
  return icar_decomposition(graph, PrecisionSpec{rho});
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

int cmd_estimate(const RunConfig& config, std::ostream& out) {
  config.validate();
  const LoadedInputs inputs = load_inputs(config);
  const BasisMatrix basis = make_basis(inputs.graph, config);
  const EstimatorConfig est = estimator_config(config);

  std::vector<DrResult> results;
  for (const auto& name : config.columns.treatment_cols) {
    log::info("estimating effect of " + name);
    results.push_back(run_treatment(inputs.dataset, name, basis.Z, inputs.graph, est));
  }

  ensure_dir(config.out_dir);
  for (const auto& r : results) {
    const std::string part = safe_file_part(r.treatment_name);
    csv::write_atomic(config.out_dir / ("balance_" + part + ".csv"), balance_csv(r.balance));
    csv::write_atomic(config.out_dir / ("influence_" + part + ".csv"), influence_csv(r, inputs.dataset.unit_ids()));
  }
  csv::write_atomic(config.out_dir / "results.json", results_json(results, config, utc_timestamp()));

  out << "n=" << inputs.dataset.size() << " K=" << basis.K() << " family=" << to_string(config.family)
      << " folds=" << config.folds << "\n";
  out << "treatment,effect,se,lower95,upper95,moran_p\n";
  for (const auto& r : results) {
    out << r.treatment_name << "," << fixed(r.tau_hat, 6) << "," << fixed(r.se, 6) << "," << fixed(r.ci_low, 6)
        << "," << fixed(r.ci_high, 6) << "," << (r.moran ? fixed(r.moran->p_value, 4) : std::string("NA")) << "\n";
  }
  out << "wrote " << (config.out_dir / "results.json").string() << "\n";
  return kExitOk;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  config.validate();
  if (config.K_grid.empty()) throw ConfigError("sweep needs --K-grid");
  const LoadedInputs inputs = load_inputs(config);
  const std::string treatment =
      config.sweep_treatment.empty() ? config.columns.treatment_cols.front() : config.sweep_treatment;
  SweepConfig sweep;
  sweep.cv = estimator_config(config).cv;
  sweep.alpha = config.alpha;
  sweep.moran = estimator_config(config).moran;
  sweep.precision = PrecisionSpec{config.rho};

  std::vector<SweepReport> reports;
  for (BasisFamily family : config.sweep_families) {
    const SpectralDecomposition dec = make_decomposition(inputs.graph, family, config.rho);
    reports.push_back(basis_sweep(inputs.dataset, treatment, inputs.graph, dec, config.K_grid, sweep));
  }
  ensure_dir(config.out_dir);
  csv::write_atomic(config.out_dir / "sweep.csv", sweep_csv(reports));
  csv::write_atomic(config.out_dir / "sweep.json", sweep_json(reports, config));

  out << sweep_csv(reports);
  for (const auto& r : reports) {
    out << "selected " << to_string(r.family) << " K=" << r.selection.K
        << (r.selection.passed ? "" : " (no candidate passed the Moran test)") << "\n";
  }
  return kExitOk;
}

int cmd_simulate(const synthetic::DgpSpec& spec, const std::filesystem::path& out_dir, std::ostream& out) {
  spec.validate();
  const synthetic::Sample sample = synthetic::generate(spec);
  synthetic::write_sample(out_dir, sample, spec);
  out << "units=" << sample.dataset.size() << " edges=" << sample.graph.edge_count() << " tau=" << spec.tau << "\n";
  out << "wrote " << (out_dir / "data.csv").string() << ", " << (out_dir / "edges.csv").string() << ", "
      << (out_dir / "truth.json").string() << "\n";
  return kExitOk;
}

RunConfig resolve(const std::string& config_path, Overrides& overrides) {
  RunConfig config;
  if (!config_path.empty()) {
    apply_config_json(config, read_text(config_path));
    const auto base = std::filesystem::path(config_path).parent_path();
    for (auto* p : {&config.data_path, &config.edge_list_path, &config.out_dir}) {
      if (!p->empty() && p->is_relative()) *p = base / *p;
    }
  }
  overrides.apply(config);
  return config;
}

}  // namespace

void RunConfig::validate() const {
  if (data_path.empty()) throw ConfigError("no data file given (--data)");
  if (edge_list_path.empty()) throw ConfigError("no edge list given (--edges)");
  columns.validate();
  if (K < 1) throw ConfigError("K must be at least 1");
  for (std::size_t i = 1; i < K_grid.size(); ++i) {
    if (K_grid[i] <= K_grid[i - 1]) throw ConfigError("K grid must be strictly ascending");
  }
  if (!K_grid.empty() && K_grid.front() < 1) throw ConfigError("K grid values must be at least 1");
  if (sweep_families.empty()) throw ConfigError("at least one sweep family is required");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (cv_folds < 2) throw ConfigError("cv-folds must be at least 2");
  if (lambda_grid_size < 1) throw ConfigError("lambda grid size must be at least 1");
  if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) throw ConfigError("lambda-min-ratio must be in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (truncation) {
    const auto& t = *truncation;
    if (!(t.lower_percentile >= 0.0 && t.lower_percentile < t.upper_percentile && t.upper_percentile <= 100.0)) {
      throw ConfigError("truncation percentiles need 0 <= lower < upper <= 100");
    }
  }
  PrecisionSpec{rho}.validate();
  if (permutations < 1) throw ConfigError("permutations must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

void apply_config_json(RunConfig& config, const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  std::unordered_set<std::string> known;
  for (const auto& f : fields()) known.insert(f.key);
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    field(key).from_json(config, value);
  }
}

std::string semantic_config_json(const RunConfig& c) {
  json j;
  j["data"] = c.data_path.string();
  j["edges"] = c.edge_list_path.string();
  j["id"] = c.columns.id_col;
  j["outcome"] = c.columns.outcome_col;
  j["treatments"] = c.columns.treatment_cols;
  j["confounders"] = c.columns.confounder_cols;
  j["family"] = to_string(c.family);
  j["K"] = c.K;
  j["K_grid"] = c.K_grid;
  j["sweep_families"] = family_list_text(c.sweep_families);
  j["sweep_treatment"] = c.sweep_treatment;
  j["folds"] = c.folds;
  j["cv_folds"] = c.cv_folds;
  j["seed"] = c.seed;
  j["lambda_grid_size"] = c.lambda_grid_size;
  j["lambda_min_ratio"] = c.lambda_min_ratio;
  j["marginal"] = to_string(c.marginal);
  j["truncation"] = c.truncation ? json::array({c.truncation->lower_percentile, c.truncation->upper_percentile})
                                 : json(nullptr);
  j["alpha"] = c.alpha;
  j["rho"] = c.rho;
  j["moran_method"] = to_string(c.moran_method);
  j["permutations"] = c.permutations;
  j["withhold_basis"] = withhold_text(c);
  return j.dump();
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(semantic_config_json(config))));
  return buf;
}

EstimatorConfig estimator_config(const RunConfig& c) {
  EstimatorConfig e;
  e.cv.folds = c.cv_folds;
  e.cv.seed = Rng::splitmix64(c.seed ^ 0x5bd1e995ULL);
  e.cv.grid_size = c.lambda_grid_size;
  e.cv.min_ratio = c.lambda_min_ratio;
  e.folds = c.folds;
  e.seed = c.seed;
  e.marginal = c.marginal;
  e.truncation = c.truncation;
  e.moran.method = c.moran_method;
  e.moran.permutations = c.permutations;
  e.moran.seed = Rng::splitmix64(c.seed ^ 0x27d4eb2fULL);
  e.threads = c.threads;
  e.basis_in_gps = c.basis_in_gps;
  e.basis_in_outcome = c.basis_in_outcome;
  return e;
}

LoadedInputs load_inputs(const RunConfig& config) {
  Dataset dataset = load_dataset(config.data_path, config.columns);
  const auto pairs = read_edge_list(config.edge_list_path);
  std::vector<std::string> ids = dataset.unit_ids();
  std::unordered_set<std::string> present(ids.begin(), ids.end());
  std::vector<std::pair<std::string, std::string>> kept;
  kept.reserve(pairs.size());
  std::size_t dropped = 0;
  for (const auto& p : pairs) {
    if (present.count(p.first) && present.count(p.second)) {
      kept.push_back(p);
    } else {
      ++dropped;
    }
  }
  if (dropped > 0) log::warn("dropped " + std::to_string(dropped) + " edge(s) touching units absent from the data");
  AdjacencyGraph graph = from_edge_list(kept, ids);
  if (graph.edge_count() == 0) throw DataError("edge list " + config.edge_list_path.string() + " has no usable edges");
  std::size_t isolated = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) isolated += graph.degree(i) == 0;
  if (isolated > 0) log::warn(std::to_string(isolated) + " unit(s) have no neighbours");
  return LoadedInputs{std::move(dataset), std::move(graph)};
}

std::string results_json(const std::vector<DrResult>& results, const RunConfig& config, const std::string& timestamp) {
  json doc;
  json meta;
  meta["software"] = kSoftwareName;
  meta["version"] = kSoftwareVersion;
  meta["rng"] = Rng::kAlgorithm;
  meta["seed"] = config.seed;
  meta["config_hash"] = config_hash(config);
  meta["effect_units"] = "outcome units per unit of the treatment column as supplied";
  if (!timestamp.empty()) meta["timestamp"] = timestamp;
  doc["metadata"] = meta;
  doc["config"] = json::parse(semantic_config_json(config));

  json arr = json::array();
  for (const auto& r : results) {
    json e;
    e["treatment"] = r.treatment_name;
    e["effect"] = r.tau_hat;
    e["se"] = r.se;
    e["lower95"] = r.ci_low;
    e["upper95"] = r.ci_high;
    e["moran_I"] = r.moran ? number_or_null(r.moran->I) : json(nullptr);
    e["moran_p"] = r.moran ? number_or_null(r.moran->p_value) : json(nullptr);
    e["beta_hat"] = r.beta_hat;
    e["correction"] = r.correction;
    e["denominator"] = r.denominator;
    e["n"] = r.n;
    e["K"] = r.K;
    e["weight_summary"] = {{"min", r.weight_summary.min}, {"mean", r.weight_summary.mean}, {"max", r.weight_summary.max}};
    e["truncation_bounds"] =
        r.truncation_bounds ? json::array({r.truncation_bounds->first, r.truncation_bounds->second}) : json(nullptr);
    e["marginal"] = to_string(r.marginal);
    e["gps_sigma2"] = r.gps_sigma2;
    e["outcome_residual_variance"] = r.outcome_residual_variance;
    json lambdas;
    lambdas["gps_full"] = r.lambda_gps_full;
    lambdas["outcome_full"] = r.lambda_outcome_full;
    lambdas["active_gps_full"] = r.active_gps_full;
    lambdas["active_outcome_full"] = r.active_outcome_full;
    json folds = json::array();
    for (const auto& f : r.fold_records) {
      folds.push_back({{"fold", f.fold},
                       {"lambda_gps", f.lambda_gps},
                       {"lambda_outcome", f.lambda_outcome},
                       {"active_gps", f.active_gps},
                       {"active_outcome", f.active_outcome},
                       {"beta_outcome", f.beta_outcome}});
    }
    lambdas["folds"] = folds;
    e["lambda"] = lambdas;
    json conf = json::object();
    for (const auto& [name, value] : r.confounder_coefficients) conf[name] = value;
    e["confounder_coefficients"] = conf;
    arr.push_back(e);
  }
  doc["results"] = arr;
  return doc.dump(2) + "\n";
}

std::string influence_csv(const DrResult& result, const std::vector<std::string>& unit_ids) {
  if (unit_ids.size() != static_cast<std::size_t>(result.influence.size())) {
    throw ConfigError("influence vector and unit ids differ in length");
  }
  std::string out = "id,phi\n";
  for (std::size_t i = 0; i < unit_ids.size(); ++i) {
    out += csv::escape(unit_ids[i]) + "," + csv::format_double(result.influence(static_cast<Eigen::Index>(i))) + "\n";
  }
  return out;
}

std::string sweep_json(const std::vector<SweepReport>& reports, const RunConfig& config) {
  json doc;
  doc["metadata"] = {{"software", kSoftwareName},
                     {"version", kSoftwareVersion},
                     {"seed", config.seed},
                     {"config_hash", config_hash(config)},
                     {"units", "rmse and mae in outcome units"}};
  json fams = json::array();
  for (const auto& r : reports) {
    json rows = json::array();
    for (const auto& row : r.selection.rows) {
      rows.push_back({{"K", row.K},
                      {"rmse", row.rmse},
                      {"mae", row.mae},
                      {"r2", row.r2},
                      {"active_bases", row.active_bases},
                      {"moran_I", number_or_null(row.moran_I)},
                      {"moran_p", number_or_null(row.moran_p)}});
    }
    fams.push_back({{"family", to_string(r.family)},
                    {"selected_K", r.selection.K},
                    {"passed", r.selection.passed},
                    {"rows", rows}});
  }
  doc["families"] = fams;
  return doc.dump(2) + "\n";
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly robust effect estimation with spatial basis adjustment"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("--quiet", quiet, "Only errors on stderr");
  app.add_flag("--verbose", verbose, "Progress messages on stderr");

  std::string estimate_config, sweep_config;
  Overrides estimate_flags, sweep_flags;
  CLI::App* estimate = app.add_subcommand("estimate", "Per-treatment doubly robust effects");
  estimate->add_option("--config", estimate_config, "JSON config; flags override its values");
  add_run_options(*estimate, estimate_flags, false);
  CLI::App* sweep = app.add_subcommand("sweep", "Basis-size sweep with residual Moran tests");
  sweep->add_option("--config", sweep_config, "JSON config; flags override its values");
  add_run_options(*sweep, sweep_flags, true);

  synthetic::DgpSpec dgp;
  double latent_sd = *dgp.latent_sd;
  bool raw_latent = false;
  std::filesystem::path sim_out = "synthetic";
  CLI::App* simulate = app.add_subcommand("simulate", "Write a spatially confounded synthetic dataset");
  simulate->add_option("--m", dgp.grid_side, "Lattice side; n = m^2 (default 30)");
  simulate->add_option("--tau", dgp.tau, "True effect (default 1)");
  simulate->add_option("--confounders", dgp.confounder_count, "Number of confounders (default 3)");
  CLI::Option* rank_opt =
      simulate->add_option("--rank", dgp.spatial_rank, "ICAR eigenvectors in the latent field (default 5, capped at m^2-2)");
  simulate->add_option("--delta", dgp.confounding_strength, "Loading of the latent field on the treatment (default 5)");
  simulate->add_option("--noise-treatment", dgp.noise_sd_treatment, "Treatment noise sd (default 1)");
  simulate->add_option("--noise-outcome", dgp.noise_sd_outcome, "Outcome noise sd (default 0.06)");
  simulate->add_option("--latent-sd", latent_sd, "Sample sd the latent field is scaled to (default 0.06)");
  simulate->add_flag("--raw-latent", raw_latent, "Leave the latent field unscaled (coefficients N(0,1))");
  simulate->add_option("--treatment-confounder-scale", dgp.treatment_confounder_scale,
                       "sd of confounder effects on the treatment (default 0.3)");
  simulate->add_option("--outcome-confounder-scale", dgp.outcome_confounder_scale,
                       "sd of confounder effects on the outcome (default 0.5)");
  simulate->add_option("--seed", dgp.seed, "Seed (default 1)");
  simulate->add_option("--out", sim_out, "Output directory (default synthetic)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (quiet) log::set_level(log::Level::Quiet);
  if (verbose) log::set_level(log::Level::Info);

  try {
    if (estimate->parsed()) return cmd_estimate(resolve(estimate_config, estimate_flags), out);
    if (sweep->parsed()) return cmd_sweep(resolve(sweep_config, sweep_flags), out);
    if (rank_opt->count() == 0 && dgp.grid_side >= 2) {
      dgp.spatial_rank = std::min(dgp.spatial_rank, dgp.grid_side * dgp.grid_side - 2);
    }
    dgp.latent_sd = raw_latent ? std::nullopt : std::optional<double>(latent_sd);
    return cmd_simulate(dgp, sim_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace spatialdr::cli
