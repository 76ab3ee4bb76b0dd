#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "atecr/atecr.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw atecr::ParseError("cannot open input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Collects files written by a command so that on failure no partial outputs
// are left behind.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (committed_) return;
    for (const auto& p : written_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }

  void write(const std::string& path, const std::string& bytes) {
    if (path.empty() || path == "-") {
      std::cout << bytes;
      return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw atecr::ParseError("cannot open output file '" + path + "'");
    written_.push_back(path);
    out << bytes;
    if (!out) throw atecr::ParseError("write failed for '" + path + "'");
  }

  void commit() { committed_ = true; }

 private:
  std::vector<std::string> written_;
  bool committed_ = false;
};

std::vector<double> parse_time_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t pos = text.find(',', start);
    std::string cell =
        pos == std::string::npos ? text.substr(start) : text.substr(start, pos - start);
    if (!cell.empty()) out.push_back(atecr::parse_double_cell(cell, 0, "times"));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw atecr::ParseError(std::string("config JSON: ") + e.what());
  }
}

atecr::CsvSchema schema_from_config(const json& cfg) {
  atecr::CsvSchema schema;
  if (!cfg.contains("schema")) return schema;
  const json& s = cfg.at("schema");
  schema.time_column = s.value("time_column", schema.time_column);
  schema.cause_column = s.value("cause_column", schema.cause_column);
  schema.treated_column = s.value("treated_column", schema.treated_column);
  schema.weight_column = s.value("weight_column", schema.weight_column);
  if (s.contains("covariate_columns")) {
    schema.covariate_columns = s.at("covariate_columns").get<std::vector<std::string>>();
  }
  if (s.contains("categorical")) {
    for (auto it = s.at("categorical").begin(); it != s.at("categorical").end(); ++it) {
      schema.categorical[it.key()] = it.value().get<std::string>();
    }
  }
  schema.num_causes_override = s.value("num_causes", 0);
  return schema;
}

struct CommonArgs {
  std::string input;
  std::string output;
  std::string config_path;
  std::string method = "all";
  std::string times_text;
  std::string band_text;
  double alpha = 0.05;
  std::uint64_t B = 0;  // 0 -> per-method default
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool jitter = false;
  bool svg = false;
};

std::vector<atecr::MethodSpec> parse_methods(const std::string& name) {
  if (name == "all") return atecr::all_methods();
  for (const auto& spec : atecr::all_methods()) {
    if (spec.label() == name) return {spec};
  }
  throw CLI::ValidationError("--method", "unknown method '" + name + "'");
}

std::uint64_t require_seed(const CommonArgs& args) {
  if (!args.seed) throw CLI::RequiredError("--seed (stochastic command)");
  return *args.seed;
}

struct FittedModels {
  atecr::Dataset ds;
  std::vector<atecr::CoxContext> ctxs;
  std::vector<atecr::CoxFit> fits;
};

FittedModels load_and_fit(const CommonArgs& args) {
  const json cfg = load_config(args.config_path);
  atecr::Dataset ds = atecr::parse_dataset(read_file(args.input), schema_from_config(cfg));
  if (args.jitter) {
    ds = atecr::jitter_ties(ds, require_seed(args));
  } else if (atecr::has_event_ties(ds)) {
    throw atecr::DomainError("tied event times; rerun with --jitter and --seed");
  }
  FittedModels m{std::move(ds), {}, {}};
  for (int k = 1; k <= m.ds.num_causes(); ++k) {
    m.ctxs.emplace_back(m.ds, k, atecr::resolve_design(m.ds, k, true, {}));
  }
  for (auto& ctx : m.ctxs) {
    atecr::CoxFit f = atecr::fit_cause_specific(ctx);
    if (!f.converged) {
      throw atecr::NumericalError("cause-" + std::to_string(ctx.cause()) +
                                  " fit did not converge");
    }
    m.fits.push_back(std::move(f));
  }
  return m;
}

std::string region_csv(const std::vector<atecr::ConfidenceRegion>& regions,
                       const std::vector<double>& restrict_times) {
  std::string out = "time,estimate,lower,upper,method,level\n";
  for (const auto& r : regions) {
    const std::string label = atecr::method_label(r.method, r.scheme);
    for (std::size_t g = 0; g < r.grid.size(); ++g) {
      if (!restrict_times.empty()) {
        bool keep = false;
        for (double t : restrict_times) keep = keep || t == r.grid.points[g];
        if (!keep) continue;
      }
      out += atecr::format_double(r.grid.points[g]);
      out += ',' + atecr::format_double(r.estimate[g]);
      out += ',' + atecr::format_double(r.lower[g]);
      out += ',' + atecr::format_double(r.upper[g]);
      out += ',' + label;
      out += ',' + atecr::format_double(r.level);
      out += '\n';
    }
  }
  return out;
}

atecr::ConfidenceRegion build_region(const FittedModels& m, const atecr::TimeGrid& grid,
                                     const atecr::ATECurve& est, const atecr::MethodSpec& spec,
                                     const CommonArgs& args, bool band, double t1, double t2) {
  const std::uint64_t seed = require_seed(args);
  if (spec.method == atecr::Method::EBS) {
    const std::size_t B = args.B ? args.B : 1000;
    atecr::ResampleEnsemble ens =
        atecr::efron_ensemble(m.ctxs, m.fits, grid, B, seed, args.workers);
    return band ? atecr::simultaneous_band_ebs(ens, est, args.alpha, t1, t2)
                : atecr::pointwise_ci_ebs(ens, est, args.alpha);
  }
  if (spec.method == atecr::Method::IF) {
    const std::size_t B = args.B ? args.B : 10000;
    atecr::InfluenceMatrix ifm = atecr::influence_matrix(
        m.ctxs, m.fits, grid, atecr::InfluenceMode::gateaux_numeric, args.workers);
    return band ? atecr::simultaneous_band_if(ifm, est, args.alpha, t1, t2, B, seed, args.workers)
                : atecr::pointwise_ci_if(ifm, est, args.alpha);
  }
  const std::size_t B = args.B ? args.B : 10000;
  atecr::ResampleEnsemble ens = atecr::wild_ensemble(
      m.ctxs, m.fits, grid, B, atecr::MultiplierScheme{spec.scheme}, seed, args.workers);
  return band ? atecr::simultaneous_band_wbs(ens, est, args.alpha, t1, t2)
              : atecr::pointwise_ci_wbs(ens, est, args.alpha);
}

void cmd_fit(const CommonArgs& args, OutputGuard& guard) {
  FittedModels m = load_and_fit(args);
  nlohmann::ordered_json out;
  out["n"] = m.ds.size();
  out["num_causes"] = m.ds.num_causes();
  out["models"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < m.fits.size(); ++k) {
    const auto& f = m.fits[k];
    nlohmann::ordered_json model;
    model["cause"] = f.cause;
    nlohmann::ordered_json coef;
    for (Eigen::Index c = 0; c < f.beta.size(); ++c) {
      coef[m.ctxs[k].column_name(static_cast<std::size_t>(c))] = f.beta[c];
    }
    model["coefficients"] = coef;
    model["loglik"] = f.loglik;
    model["iterations"] = f.iterations;
    model["converged"] = f.converged;
    model["baseline_jump_times"] = f.baseline.jump_times;
    model["baseline_jump_sizes"] = f.baseline.jump_sizes;
    out["models"].push_back(model);
  }
  guard.write(args.output, out.dump(2) + "\n");
}

void cmd_ate(const CommonArgs& args, OutputGuard& guard) {
  FittedModels m = load_and_fit(args);
  const std::vector<double> times = parse_time_list(args.times_text);
  atecr::TimeGrid grid = atecr::default_grid(m.ds, times);
  atecr::ATECurve curve = atecr::g_formula_ate(m.fits, m.ds, grid);
  std::string out = "time,estimate\n";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out += atecr::format_double(grid.points[g]) + ',' + atecr::format_double(curve.values[g]) +
           '\n';
  }
  guard.write(args.output, out);
  if (curve.clamp_warning) {
    std::cerr << "warning: a counterfactual incidence exceeded 1 and was clamped\n";
  }
}

void cmd_ci(const CommonArgs& args, OutputGuard& guard, bool band) {
  require_seed(args);
  FittedModels m = load_and_fit(args);
  const std::vector<double> times = parse_time_list(args.times_text);
  double t1 = 0.0, t2 = 0.0;
  if (band) {
    const std::vector<double> iv = parse_time_list(args.band_text);
    if (iv.size() != 2) throw CLI::ValidationError("--band", "expected t1,t2");
    t1 = iv[0];
    t2 = iv[1];
  }
  atecr::TimeGrid grid = atecr::default_grid(m.ds, times);
  atecr::ATECurve est = atecr::g_formula_ate(m.fits, m.ds, grid);
  std::vector<atecr::ConfidenceRegion> regions;
  for (const auto& spec : parse_methods(args.method)) {
    regions.push_back(build_region(m, grid, est, spec, args, band, t1, t2));
    for (const auto& w : regions.back().warnings) std::cerr << "warning: " << w << '\n';
  }
  guard.write(args.output, region_csv(regions, band ? std::vector<double>{} : times));
}

void cmd_simulate(const CommonArgs& args, OutputGuard& guard) {
  const std::uint64_t seed = require_seed(args);
  json cfg = load_config(args.config_path);
  const std::size_t n = cfg.value("n", 100);
  cfg.erase("n");  // dataset size, not a study-config key
  atecr::StudyConfig study = atecr::parse_study_config(cfg);
  atecr::RngStream rng = atecr::RngStream::substream(seed, atecr::rng_tag::sim, 0);
  atecr::Dataset ds = atecr::generate_dataset(study.scenario, n, rng);
  guard.write(args.output, atecr::serialize_dataset(ds));
}

void cmd_true_ate(const CommonArgs& args, OutputGuard& guard) {
  const std::uint64_t seed = require_seed(args);
  const json cfg = load_config(args.config_path);
  atecr::StudyConfig study = atecr::parse_study_config(cfg);
  std::vector<double> times = parse_time_list(args.times_text);
  atecr::TimeGrid grid = times.empty() ? atecr::oracle_grid(study) : atecr::TimeGrid(times);
  atecr::ATECurve truth = atecr::true_ate_oracle(study.scenario, grid, study.oracle_n,
                                                 study.oracle_reps, seed, args.workers);
  std::string out = "time,estimate\n";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out += atecr::format_double(grid.points[g]) + ',' + atecr::format_double(truth.values[g]) +
           '\n';
  }
  guard.write(args.output, out);
}

std::string sibling_path(const std::string& base, const std::string& suffix) {
  std::filesystem::path p(base);
  std::filesystem::path q = p.parent_path() / (p.stem().string() + suffix);
  return q.string();
}

void emit_coverage_svgs(const atecr::CoverageReport& report, const std::string& base,
                        double alpha, OutputGuard& guard) {
  std::vector<std::string> methods;
  std::vector<double> times;
  std::vector<std::size_t> sizes;
  for (const auto& c : report.cells) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
      methods.push_back(c.method);
    }
    if (!c.is_band && std::find(times.begin(), times.end(), c.time) == times.end()) {
      times.push_back(c.time);
    }
    if (std::find(sizes.begin(), sizes.end(), c.n) == sizes.end()) sizes.push_back(c.n);
  }
  std::sort(times.begin(), times.end());
  std::sort(sizes.begin(), sizes.end());

  auto cell_value = [&](const std::string& method, std::size_t n, bool band, double t,
                        double atecr::CoverageCell::* field) {
    for (const auto& c : report.cells) {
      if (c.method == method && c.n == n && c.is_band == band && (band || c.time == t)) {
        return c.*field;
      }
    }
    return std::nan("");
  };

  // Coverage against n, one panel per report time plus one for the band.
  for (std::size_t ti = 0; ti <= times.size(); ++ti) {
    const bool band = ti == times.size();
    std::vector<atecr::SvgSeries> series;
    for (const auto& method : methods) {
      atecr::SvgSeries s;
      s.name = method;
      for (std::size_t n : sizes) {
        s.x.push_back(static_cast<double>(n));
        s.y.push_back(cell_value(method, n, band, band ? 0.0 : times[ti],
                                 &atecr::CoverageCell::coverage));
      }
      series.push_back(std::move(s));
    }
    const std::string title =
        band ? "Band coverage" : "Coverage at t = " + atecr::format_double(times[ti]);
    const std::string tag = band ? "_coverage_band.svg" : "_coverage_t" + std::to_string(ti) + ".svg";
    guard.write(sibling_path(base, tag),
                atecr::svg_line_chart(title, "sample size", "coverage", series, 1.0 - alpha));
  }

  // Mean interval width and total computation time, grouped by n.
  std::vector<std::string> group_labels;
  for (std::size_t n : sizes) group_labels.push_back(std::to_string(n));
  for (const char* what : {"width", "time"}) {
    std::vector<atecr::SvgSeries> series;
    for (const auto& method : methods) {
      atecr::SvgSeries s;
      s.name = method;
      for (std::size_t n : sizes) {
        if (std::string(what) == "width") {
          double sum = 0.0;
          int cnt = 0;
          for (double t : times) {
            sum += cell_value(method, n, false, t, &atecr::CoverageCell::mean_width);
            ++cnt;
          }
          s.y.push_back(cnt ? sum / cnt : 0.0);
        } else {
          s.y.push_back(cell_value(method, n, true, 0.0, &atecr::CoverageCell::elapsed_ms));
        }
        s.x.push_back(static_cast<double>(n));
      }
      series.push_back(std::move(s));
    }
    const bool width = std::string(what) == "width";
    guard.write(sibling_path(base, width ? "_width.svg" : "_time.svg"),
                atecr::svg_bar_chart(width ? "Mean interval width" : "Computation time",
                                     "sample size", width ? "width" : "total ms", group_labels,
                                     series));
  }
}

void cmd_coverage(const CommonArgs& args, OutputGuard& guard) {
  const std::uint64_t seed = require_seed(args);
  const json cfg = load_config(args.config_path);
  atecr::StudyConfig study = atecr::parse_study_config(cfg);
  study.master_seed = seed;
  if (args.workers > 1) study.workers = args.workers;
  if (args.output.empty()) throw CLI::RequiredError("--output (coverage writes CSV + JSON)");
  atecr::CoverageReport report = atecr::run_coverage_study(study);
  guard.write(args.output, atecr::emit_report_csv(report));
  guard.write(sibling_path(args.output, ".json"), atecr::emit_report_json(report));
  if (args.svg) emit_coverage_svgs(report, args.output, study.alpha, guard);
  for (const auto& d : report.diagnostics) std::cerr << "warning: " << d << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Average treatment effect on cumulative incidence: estimation, resampling-based "
               "confidence intervals/bands, and simulation studies"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* cmd, bool needs_input) {
    if (needs_input) cmd->add_option("--input", args.input, "input CSV")->required();
    cmd->add_option("--output", args.output, "output path ('-' for stdout)");
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--seed", args.seed, "master seed (required for stochastic commands)");
    cmd->add_option("--workers", args.workers, "worker threads");
    cmd->add_flag("--jitter", args.jitter, "break event-time ties with seeded jitter");
    return cmd;
  };

  auto* fit = add_common(app.add_subcommand("fit", "fit cause-specific models"), true);
  auto* ate = add_common(app.add_subcommand("ate", "estimate the ATE curve"), true);
  ate->add_option("--times", args.times_text, "comma-separated report times");
  auto* ci = add_common(app.add_subcommand("ci", "pointwise confidence intervals"), true);
  auto* band = add_common(app.add_subcommand("band", "simultaneous confidence band"), true);
  for (CLI::App* cmd : {ci, band}) {
    cmd->add_option("--method", args.method, "ebs|if|wbs-normal|wbs-poisson|wbs-weird|all");
    cmd->add_option("--alpha", args.alpha, "significance level")
        ->check(CLI::Range(1e-12, 1.0 - 1e-12));
    cmd->add_option("--B", args.B, "resampling replicates (0 = method default)");
    cmd->add_option("--times", args.times_text, "comma-separated report times");
  }
  band->add_option("--band", args.band_text, "band interval t1,t2")->required();
  auto* simulate = add_common(app.add_subcommand("simulate", "generate a synthetic dataset"), false);
  auto* coverage = add_common(app.add_subcommand("coverage", "run a coverage study"), false);
  coverage->add_flag("--svg", args.svg, "also render SVG charts");
  auto* true_ate = add_common(app.add_subcommand("true-ate", "large-sample true ATE curve"), false);
  true_ate->add_option("--times", args.times_text, "comma-separated report times");
  (void)fit;
  (void)simulate;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      std::cerr << "{\"error\":{\"type\":\"usage\",\"message\":" << nlohmann::json(e.what()).dump()
                << "}}\n";
      return 2;
    }
    return app.exit(e);  // --help and friends
  }

  OutputGuard guard;
  try {
    if (app.got_subcommand("fit")) cmd_fit(args, guard);
    else if (app.got_subcommand("ate")) cmd_ate(args, guard);
    else if (app.got_subcommand("ci")) cmd_ci(args, guard, false);
    else if (app.got_subcommand("band")) cmd_ci(args, guard, true);
    else if (app.got_subcommand("simulate")) cmd_simulate(args, guard);
    else if (app.got_subcommand("coverage")) cmd_coverage(args, guard);
    else if (app.got_subcommand("true-ate")) cmd_true_ate(args, guard);
    guard.commit();
    return 0;
  } catch (const CLI::Error& e) {
    std::cerr << "{\"error\":{\"type\":\"usage\",\"message\":" << nlohmann::json(e.what()).dump()
              << "}}\n";
    return 2;
  } catch (const atecr::NumericalError& e) {
    std::cerr << "{\"error\":{\"type\":\"numerical\",\"message\":"
              << nlohmann::json(e.what()).dump() << "}}\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":{\"type\":\"data\",\"message\":" << nlohmann::json(e.what()).dump()
              << "}}\n";
    return 3;
  }
}
