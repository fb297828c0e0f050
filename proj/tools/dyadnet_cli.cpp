// dyadnet command-line front end: fit relational regressions from long-format
// CSV with dependence-aware standard errors (or GEE weighting), and run the
// simulation / distribution-check suites from declarative config files.
// Output files are written only under --out; repeated runs with the same seed
// produce byte-identical files.

#include "dyadnet/array_exch.hpp"
#include "dyadnet/estimators.hpp"
#include "dyadnet/gee.hpp"
#include "dyadnet/io.hpp"
#include "dyadnet/simulation.hpp"
#include "dyadnet/theory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using dyadnet::ConfigError;
using ordered_json = nlohmann::ordered_json;

constexpr int kOk = 0;
constexpr int kFail = 1;           // internal error or failed required check
constexpr int kParseError = 2;     // malformed input data
constexpr int kIncomplete = 3;     // incomplete relational array
constexpr int kRankDeficient = 4;  // design matrix not full rank
constexpr int kNoConverge = 5;     // GEE hit the iteration cap (fit emitted)
constexpr int kBadConfig = 6;      // invalid flags or config file

struct FitFlags {
  std::string input;
  std::string se = "exch";
  bool gee = false;
  bool undirected = false;
  std::string array = "full-exch";
  double ci = 0.95;
  std::string out;
  std::string format = "csv";
};

dyadnet::SeKind parse_se(const std::string& s) {
  if (s == "hc") return dyadnet::SeKind::HC;
  if (s == "dc") return dyadnet::SeKind::DC;
  if (s == "exch") return dyadnet::SeKind::EXCH;
  throw ConfigError("unknown --se value '" + s + "'");
}

dyadnet::ArrayStructure parse_structure(const std::string& s) {
  if (s == "full-exch") return dyadnet::ArrayStructure::FullExch;
  if (s == "stationary") return dyadnet::ArrayStructure::Stationary;
  if (s == "unrestricted") return dyadnet::ArrayStructure::Unrestricted;
  if (s == "independent") return dyadnet::ArrayStructure::LayerIndependent;
  throw ConfigError("unknown --array value '" + s + "'");
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / name, std::ios::binary);
  if (!out) throw dyadnet::Error("cannot write " + name + " under " + dir);
  out << content;
}

ordered_json block_json(const std::array<double, 6>& slots) {
  static const char* kSlotNames[6] = {"same",          "reciprocal",
                                      "common_sender", "common_receiver",
                                      "sender_receiver", "disjoint"};
  ordered_json b;
  for (int t = 0; t < 6; ++t) b[kSlotNames[t]] = slots[t];
  return b;
}

double condition_number(const Eigen::MatrixXd& X) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] <= 0.0)
    return std::numeric_limits<double>::infinity();
  return sv[0] / sv[sv.size() - 1];
}

int run_fit(const FitFlags& flags) {
  if (!(flags.ci > 0.0 && flags.ci < 1.0))
    throw ConfigError("--ci must lie strictly between 0 and 1");
  const dyadnet::SeKind kind = parse_se(flags.se);
  const dyadnet::ArrayStructure structure = parse_structure(flags.array);
  const bool directed = !flags.undirected;

  const dyadnet::IngestResult ingest =
      dyadnet::read_long_csv(flags.input, directed);
  const dyadnet::RelationalDataset& ds = ingest.data;
  const double z = dyadnet::normal_quantile(0.5 + flags.ci / 2.0);

  Eigen::VectorXd beta, se;
  Eigen::MatrixXd vcov;
  ordered_json params = ordered_json::object();
  ordered_json diagnostics = ordered_json::object();
  bool converged = true;

  if (flags.gee) {
    if (ds.R > 1 && structure != dyadnet::ArrayStructure::FullExch)
      throw ConfigError(
          "--gee supports --array full-exch for multi-layer data");
    dyadnet::GeeConfig cfg;
    cfg.se_kind = kind;
    const dyadnet::GeeResult res = dyadnet::gee_fit(ds, cfg);
    beta = res.beta_hat;
    vcov = res.vcov;
    converged = res.converged;
    diagnostics["gee_iterations"] = res.iterations;
    diagnostics["gee_converged"] = res.converged;
    diagnostics["pd_shrink_events"] = res.shrink_events;
    if (res.params) {
      const auto& p = *res.params;
      params["variance"] = p.sigma2;
      params["reciprocal"] = p.phi_a;
      params["common_sender"] = p.phi_c;
      params["common_receiver"] = p.phi_b;
      params["sender_receiver"] = p.phi_d;
    }
    if (res.array_params) {
      params["structure"] =
          dyadnet::array_structure_name(res.array_params->structure);
      params["blocks"] = ordered_json::object();
      params["blocks"]["within"] = block_json(res.array_params->blocks[0]);
      params["blocks"]["cross"] = block_json(res.array_params->blocks[1]);
      diagnostics["realized_slot_count"] = res.array_params->realized_slot_count;
    }
  } else if (ds.R == 1) {
    const dyadnet::FitResult res = dyadnet::fit_dataset(ds, kind);
    beta = res.beta_hat;
    vcov = res.vcov;
    if (res.exch_params) {
      const auto& p = *res.exch_params;
      params["variance"] = p.sigma2;
      params["reciprocal"] = p.phi_a;
      params["common_sender"] = p.phi_c;
      params["common_receiver"] = p.phi_b;
      params["sender_receiver"] = p.phi_d;
    }
    if (res.undirected_params) {
      params["variance"] = res.undirected_params->theta;
      params["shared_actor"] = res.undirected_params->phi;
    }
  } else {
    const dyadnet::ArrayFitResult res =
        dyadnet::fit_array_dataset(ds, kind, structure);
    beta = res.beta_hat;
    vcov = res.vcov;
    if (res.params) {
      params["structure"] = dyadnet::array_structure_name(res.params->structure);
      ordered_json blocks = ordered_json::object();
      switch (res.params->structure) {
        case dyadnet::ArrayStructure::FullExch:
        case dyadnet::ArrayStructure::LayerIndependent:
          blocks["within"] = block_json(res.params->blocks[0]);
          blocks["cross"] = block_json(res.params->blocks[1]);
          break;
        case dyadnet::ArrayStructure::Stationary:
          for (int lag = 0; lag < ds.R; ++lag)
            blocks["lag" + std::to_string(lag)] =
                block_json(res.params->blocks[lag]);
          break;
        case dyadnet::ArrayStructure::Unrestricted:
          for (int r = 0; r < ds.R; ++r)
            for (int s = r; s < ds.R; ++s)
              blocks["pair_" + std::to_string(r) + "_" + std::to_string(s)] =
                  block_json(res.params->blocks[dyadnet::layer_pair_index(
                      r, s, ds.R)]);
          break;
      }
      params["blocks"] = blocks;
      diagnostics["realized_slot_count"] = res.params->realized_slot_count;
    }
    if (res.undirected_params) {
      params["within_variance"] = res.undirected_params->theta_w;
      params["within_shared_actor"] = res.undirected_params->phi_w;
      params["cross_same_dyad"] = res.undirected_params->theta_c;
      params["cross_shared_actor"] = res.undirected_params->phi_c;
    }
  }

  se = vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
  diagnostics["condition_number"] = condition_number(ds.X);

  std::ostringstream coef_csv;
  dyadnet::write_coefficients_csv(coef_csv, ingest.covariate_names, beta, se, z);

  ordered_json doc;
  doc["schema"] = "dyadnet/1";
  doc["command"] = "fit";
  doc["input"] = flags.input;
  doc["directed"] = directed;
  doc["n_actors"] = ds.n;
  doc["n_layers"] = ds.R;
  doc["se"] = flags.se;
  doc["gee"] = flags.gee;
  if (ds.R > 1) doc["array_structure"] = flags.array;
  doc["ci_level"] = flags.ci;
  doc["coefficients"] = ordered_json::array();
  for (int c = 0; c < beta.size(); ++c) {
    ordered_json row;
    row["term"] = ingest.covariate_names[c];
    row["estimate"] = beta[c];
    row["se"] = se[c];
    row["ci_lo"] = beta[c] - z * se[c];
    row["ci_hi"] = beta[c] + z * se[c];
    doc["coefficients"].push_back(row);
  }
  doc["params"] = params;
  doc["diagnostics"] = diagnostics;
  doc["labels"] = ordered_json::object();
  doc["labels"]["actors"] = ingest.actor_labels;
  doc["labels"]["layers"] = ingest.layer_labels;
  doc["labels"]["covariates"] = ingest.covariate_names;

  if (!flags.out.empty()) {
    write_file(flags.out, "coefficients.csv", coef_csv.str());
    write_file(flags.out, "params.json", doc.dump(2) + "\n");
  }
  if (flags.format == "json")
    std::cout << doc.dump(2) << "\n";
  else
    std::cout << coef_csv.str();
  if (!converged) {
    std::cerr << "warning: GEE did not converge within the iteration cap\n";
    return kNoConverge;
  }
  return kOk;
}

// ---- simulate ---------------------------------------------------------------

class Config {
 public:
  explicit Config(const std::string& path)
      : pairs_(dyadnet::read_config_file(path)) {
    for (const auto& [k, v] : pairs_) map_[k] = v;
  }

  std::string get(const std::string& key, const std::string& dflt) const {
    const auto it = map_.find(key);
    return it == map_.end() ? dflt : it->second;
  }
  bool has(const std::string& key) const { return map_.count(key) > 0; }

  long long get_int(const std::string& key, long long dflt) const {
    if (!has(key)) return dflt;
    const std::string& s = map_.at(key);
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size())
      throw ConfigError("config key '" + key + "': '" + s +
                        "' is not an integer");
    return v;
  }
  double get_num(const std::string& key, double dflt) const {
    if (!has(key)) return dflt;
    const std::string& s = map_.at(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
      throw ConfigError("config key '" + key + "': '" + s +
                        "' is not a number");
    return v;
  }
  bool get_bool(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    const std::string& s = map_.at(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false");
  }
  std::vector<int> get_int_list(const std::string& key,
                                std::vector<int> dflt) const {
    if (!has(key)) return dflt;
    std::vector<int> out;
    std::istringstream in(map_.at(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      char* end = nullptr;
      const std::string t = item;
      const long v = std::strtol(t.c_str(), &end, 10);
      if (end != t.c_str() + t.size() || t.empty())
        throw ConfigError("config key '" + key + "': bad list entry '" + t +
                          "'");
      out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
  }

  void restrict_keys(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : pairs_)
      if (!allowed.count(k))
        throw ConfigError("unknown config key '" + k + "'");
  }

 private:
  std::vector<std::pair<std::string, std::string>> pairs_;
  std::map<std::string, std::string> map_;
};

dyadnet::ErrorModel parse_errors(const std::string& s) {
  if (s == "iid") return dyadnet::ErrorModel::IID;
  if (s == "bilinear") return dyadnet::ErrorModel::Bilinear;
  if (s == "nonexch") return dyadnet::ErrorModel::NonExch;
  throw ConfigError("config key 'errors': unknown model '" + s + "'");
}

std::vector<dyadnet::SeKind> parse_estimators(const std::string& s) {
  std::vector<dyadnet::SeKind> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_se(item));
  if (out.empty()) throw ConfigError("config key 'estimators': empty list");
  return out;
}

std::string coverage_csv(const dyadnet::CoverageReport& rep) {
  std::ostringstream os;
  os << "estimator,coefficient,design,coverage,mean_se,sd_se,mc_sd\n";
  const int ne = static_cast<int>(rep.design.estimators.size());
  for (int s = 0; s < ne; ++s)
    for (int c = 0; c < 4; ++c)
      for (int d = 0; d < rep.design.num_designs; ++d)
        os << dyadnet::se_kind_name(rep.design.estimators[s]) << ",x" << c + 1
           << ',' << d << ',' << dyadnet::format_double(rep.coverage[s][c][d])
           << ',' << dyadnet::format_double(rep.mean_se[s][c][d]) << ','
           << dyadnet::format_double(rep.sd_se[s][c][d]) << ','
           << dyadnet::format_double(rep.mc_sd[c][d]) << '\n';
  return os.str();
}

std::string coverage_summary_csv(const dyadnet::CoverageReport& rep) {
  std::ostringstream os;
  os << "estimator,coefficient,median_coverage,coverage_q10,coverage_q90,"
        "median_mean_se,median_mc_sd,failures\n";
  const int ne = static_cast<int>(rep.design.estimators.size());
  for (int s = 0; s < ne; ++s)
    for (int c = 0; c < 4; ++c) {
      const auto& cov = rep.coverage[s][c];
      os << dyadnet::se_kind_name(rep.design.estimators[s]) << ",x" << c + 1
         << ',' << dyadnet::format_double(dyadnet::median_of(cov)) << ','
         << dyadnet::format_double(dyadnet::quantile_of(cov, 0.10)) << ','
         << dyadnet::format_double(dyadnet::quantile_of(cov, 0.90)) << ','
         << dyadnet::format_double(dyadnet::median_of(rep.mean_se[s][c])) << ','
         << dyadnet::format_double(dyadnet::median_of(rep.mc_sd[c])) << ','
         << rep.failures[s] << '\n';
    }
  return os.str();
}

std::string theorem_csv(const dyadnet::TheoremReport& rep) {
  std::ostringstream os;
  os << "id,grid,stat\n";
  for (size_t g = 0; g < rep.grid.size(); ++g)
    os << rep.id << ',' << dyadnet::format_double(rep.grid[g]) << ','
       << dyadnet::format_double(rep.stats[g]) << '\n';
  return os.str();
}

std::string theorem_json(const dyadnet::TheoremReport& rep) {
  ordered_json doc;
  doc["schema"] = "dyadnet/1";
  doc["command"] = "simulate";
  doc["id"] = rep.id;
  doc["grid"] = rep.grid;
  doc["stats"] = rep.stats;
  doc["extra"] = rep.extra;
  doc["tolerance"] = rep.tolerance;
  doc["pass"] = rep.pass;
  doc["detail"] = rep.detail;
  return doc.dump(2) + "\n";
}

void emit_coverage(const dyadnet::CoverageReport& rep, const std::string& out,
                   const std::string& stem) {
  const std::string long_csv = coverage_csv(rep);
  const std::string summary = coverage_summary_csv(rep);
  if (!out.empty()) {
    write_file(out, "coverage_" + stem + ".csv", long_csv);
    write_file(out, "summary_" + stem + ".csv", summary);
  }
  std::cout << summary;
}

int run_simulate(const std::string& config_path, const std::string& out) {
  const Config cfg(config_path);
  const std::string mode = cfg.get("mode", "coverage");
  const auto seed =
      static_cast<std::uint64_t>(cfg.get_int("seed", 20260800));

  if (mode == "coverage") {
    cfg.restrict_keys({"mode", "seed", "n", "num_designs", "reps_per_design",
                       "errors", "ci_level", "estimators"});
    dyadnet::SimDesign d;
    d.seed = seed;
    d.n = static_cast<int>(cfg.get_int("n", d.n));
    d.num_designs = static_cast<int>(cfg.get_int("num_designs", d.num_designs));
    d.reps_per_design =
        static_cast<int>(cfg.get_int("reps_per_design", d.reps_per_design));
    d.errors = parse_errors(cfg.get("errors", "bilinear"));
    d.ci_level = cfg.get_num("ci_level", d.ci_level);
    if (cfg.has("estimators"))
      d.estimators = parse_estimators(cfg.get("estimators", ""));
    std::ostringstream stem;
    stem << dyadnet::error_model_name(d.errors) << "_n" << d.n;
    emit_coverage(dyadnet::run_coverage(d), out, stem.str());
    return kOk;
  }

  if (mode == "coverage-desk") {
    // Desk-scale coverage pair: near-nominal iid regime at n=80 and the
    // dependent bilinear regime at n=40, 50 designs x 200 replicates each.
    cfg.restrict_keys({"mode", "seed"});
    dyadnet::SimDesign iid;
    iid.seed = seed;
    iid.n = 80;
    iid.errors = dyadnet::ErrorModel::IID;
    emit_coverage(dyadnet::run_coverage(iid), out, "iid_n80");
    dyadnet::SimDesign bil;
    bil.seed = seed;
    bil.n = 40;
    bil.errors = dyadnet::ErrorModel::Bilinear;
    emit_coverage(dyadnet::run_coverage(bil), out, "bilinear_n40");
    return kOk;
  }

  dyadnet::TheoremReport rep;
  if (mode == "limiting-variance") {
    cfg.restrict_keys({"mode", "seed", "grid", "reps", "require_pass"});
    rep = dyadnet::check_limiting_variance(
        seed, cfg.get_int_list("grid", {20, 40, 80}),
        static_cast<int>(cfg.get_int("reps", 10000)));
  } else if (mode == "consistency") {
    cfg.restrict_keys({"mode", "seed", "grid", "reps", "require_pass"});
    rep = dyadnet::check_consistency(
        seed, cfg.get_int_list("grid", {20, 80}),
        static_cast<int>(cfg.get_int("reps", 300)));
  } else if (mode == "bias-dominance") {
    cfg.restrict_keys({"mode", "seed", "n", "reps", "require_pass"});
    rep = dyadnet::check_bias_dominance(
        seed, static_cast<int>(cfg.get_int("n", 20)),
        static_cast<int>(cfg.get_int("reps", 10000)));
  } else if (mode == "dc-rank") {
    cfg.restrict_keys({"mode", "seed", "grid", "draws", "require_pass"});
    rep = dyadnet::check_dc_rank(seed, cfg.get_int_list("grid", {4, 5, 6, 7, 8}),
                                 static_cast<int>(cfg.get_int("draws", 20)));
  } else {
    throw ConfigError("unknown mode '" + mode + "'");
  }

  if (!out.empty()) {
    write_file(out, "theorem.csv", theorem_csv(rep));
    write_file(out, "theorem.json", theorem_json(rep));
  }
  std::cout << rep.id << ": " << (rep.pass ? "PASS" : "FAIL") << " — "
            << rep.detail << "\n";
  if (cfg.get_bool("require_pass", false) && !rep.pass) return kFail;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dyadnet: linear regression on relational data with dependence-aware "
      "standard errors"};
  app.require_subcommand(1);

  FitFlags flags;
  CLI::App* fit = app.add_subcommand(
      "fit", "fit a relational regression from a long-format CSV");
  fit->add_option("input", flags.input, "long-format CSV file")->required();
  fit->add_option("--se", flags.se, "standard-error estimator")
      ->check(CLI::IsMember({"hc", "dc", "exch"}));
  fit->add_flag("--gee", flags.gee,
                "iteratively reweighted fit with exchangeable weights");
  auto* dir_flag = fit->add_flag("--directed", "ordered relations (default)");
  fit->add_flag("--undirected", flags.undirected, "unordered relations")
      ->excludes(dir_flag);
  fit->add_option("--array", flags.array,
                  "cross-layer covariance structure for multi-layer data")
      ->check(CLI::IsMember(
          {"full-exch", "stationary", "unrestricted", "independent"}));
  fit->add_option("--ci", flags.ci, "confidence level (default 0.95)");
  fit->add_option("--out", flags.out,
                  "directory for coefficients.csv and params.json");
  fit->add_option("--format", flags.format, "stdout rendering")
      ->check(CLI::IsMember({"csv", "json"}));

  std::string sim_config, sim_out;
  CLI::App* sim = app.add_subcommand(
      "simulate", "run a simulation or distribution-check suite");
  sim->add_option("config", sim_config, "declarative config file")->required();
  sim->add_option("--out", sim_out, "directory for report files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    if (fit->parsed()) return run_fit(flags);
    if (sim->parsed()) return run_simulate(sim_config, sim_out);
  } catch (const dyadnet::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kParseError;
  } catch (const dyadnet::IncompleteDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIncomplete;
  } catch (const dyadnet::RankDeficientError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRankDeficient;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const dyadnet::InvalidArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kOk;
}
