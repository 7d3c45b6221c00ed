// chwplan: simulate, estimate, cluster, generate cohorts and render reports.
//
// Every command resolves its flags into a JSON config, runs from that config
// alone and records it in manifest.json, so `replay` can rerun it.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "chw/engine.hpp"
#include "chw/estimation.hpp"
#include "chw/io.hpp"
#include "chw/parallel.hpp"
#include "chw/report.hpp"
#include "chw/scenarios.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char * kOutDirEnv = "CHWPLAN_OUT_DIR";

fs::path default_out(const std::string & command)
{
  if (const char * env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
    return fs::path(env) / command;
  }
  return fs::path("chwplan-out") / command;
}

std::vector<double> parse_number_list(const std::string & text, const char * what)
{
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw chw::InputError(std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw chw::InputError(std::string(what) + " is empty");
  return out;
}

// "lo:hi:step" or a comma-separated list.
std::vector<double> parse_range(const std::string & text, const char * what)
{
  if (text.find(':') == std::string::npos) return parse_number_list(text, what);
  std::string spec = text;
  std::replace(spec.begin(), spec.end(), ':', ',');
  const auto parts = parse_number_list(spec, what);
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw chw::InputError(std::string(what) + ": expected lo:hi:step with lo <= hi and step > 0");
  }
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    const double v = parts[0] + static_cast<double>(k) * parts[2];
    if (v > parts[1] + 1e-9 * std::max(1.0, std::abs(parts[1]))) break;
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split_names(const std::string & text)
{
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string serialize(const std::function<void(std::ostream &)> & writer)
{
  std::ostringstream out;
  writer(out);
  return out.str();
}

// Writes outputs and the manifest describing them.
class OutputDir
{
public:
  OutputDir(fs::path dir, std::string command, json config, std::uint64_t seed)
    : dir_(std::move(dir)), start_(std::chrono::steady_clock::now())
  {
    manifest_.command = std::move(command);
    manifest_.config = std::move(config);
    manifest_.base_seed = seed;
  }

  void input(const fs::path & path) { manifest_.inputs.push_back({path.string(), chw::sha256_file(path)}); }

  void write(const std::string & name, const std::string & bytes)
  {
    chw::write_file(dir_ / name, bytes);
    manifest_.outputs.push_back({name, chw::sha256_hex(bytes)});
  }

  void finish()
  {
    manifest_.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    chw::write_file(dir_ / chw::kManifestName, chw::manifest_to_json(manifest_).dump(2) + "\n");
    std::cout << "wrote " << manifest_.outputs.size() << " file(s) to " << dir_.string() << "\n";
  }

private:
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  chw::RunManifest manifest_;
};

void check_input_digest(const json & config, const char * key, const std::vector<chw::FileDigest> & inputs)
{
  const std::string path = config.at(key).get<std::string>();
  for (const auto & d : inputs) {
    if (d.path == path && chw::sha256_file(path) != d.sha256) {
      throw chw::InputError("input '" + path + "' changed since the manifest was written");
    }
  }
}

// --- commands, each driven only by its config --------------------------------

void run_simulate(const json & cfg, const fs::path & out_dir)
{
  chw::ScenarioSpec scenario = chw::scenario_from_json(cfg.at("scenario"));
  scenario.population = cfg.at("population").get<std::size_t>();

  std::vector<chw::PolicySpec> specs;
  for (const auto & name : cfg.at("policies")) {
    const auto kind = chw::parse_policy(name.get<std::string>());
    if (!kind) throw chw::InputError("unknown policy '" + name.get<std::string>() + "'");
    specs.push_back({*kind, cfg.at("delta").get<double>()});
  }

  chw::SimulationConfig sim;
  sim.horizon = cfg.at("horizon").get<std::size_t>();
  sim.replications = cfg.at("replications").get<std::size_t>();
  sim.base_seed = cfg.at("seed").get<std::uint64_t>();
  sim.noise.sigma_xi = cfg.at("sigma_xi").get<double>();
  sim.delta = cfg.at("delta").get<double>();
  sim.capacity_fractions.clear();
  for (const auto & pct : cfg.at("capacities")) sim.capacity_fractions.push_back(pct.get<double>() / 100.0);
  try {
    sim.validate();
  } catch (const std::invalid_argument & e) {
    throw chw::InputError(e.what());
  }
  for (const auto & w : chw::effectiveness_warnings(scenario)) std::cerr << "warning: " << w << "\n";

  const auto results = chw::capacity_sweep(
    [&](std::size_t rep) { return chw::sample_cohort(scenario, chw::cohort_seed(sim.base_seed, rep)); },
    specs, sim);

  OutputDir out(out_dir, "simulate", cfg, sim.base_seed);
  out.write("results.csv", serialize([&](std::ostream & o) { chw::write_results(o, results); }));
  out.write("summary.csv",
            serialize([&](std::ostream & o) { chw::write_summary(o, chw::summarize(results)); }));
  out.finish();
}

void run_estimate(const json & cfg, const fs::path & out_dir)
{
  const fs::path histories_path = cfg.at("histories").get<std::string>();
  const auto histories = chw::ingest_histories(histories_path);

  chw::EstimationConfig est;
  est.grid_s0 = cfg.at("grid_s0").get<std::vector<double>>();
  est.grid_beta = cfg.at("grid_beta").get<std::vector<double>>();
  est.grid_gamma = cfg.at("grid_gamma").get<std::vector<double>>();
  est.grid_rho = cfg.at("grid_rho").get<std::vector<double>>();
  est.sigma_xi = cfg.at("sigma_xi").get<double>();
  est.sigma_eps = cfg.at("sigma_eps").get<double>();
  est.qp_tolerance = cfg.at("qp_tolerance").get<double>();
  est.qp_max_iterations = cfg.at("qp_max_iterations").get<std::size_t>();
  try {
    est.validate();
  } catch (const std::invalid_argument & e) {
    throw chw::InputError(e.what());
  }

  std::vector<chw::EstimationResult> results(histories.size());
  chw::parallel_for(histories.size(),
                    [&](std::size_t i) { results[i] = chw::estimate_patient(histories[i], est); });

  OutputDir out(out_dir, "estimate", cfg, 0);
  out.input(histories_path);
  out.write("estimates.csv", serialize([&](std::ostream & o) { chw::write_estimates(o, results); }));
  out.finish();
}

void run_cluster(const json & cfg, const fs::path & out_dir)
{
  const fs::path params_path = cfg.at("params").get<std::string>();
  std::istringstream in(chw::read_file(params_path));
  const auto rows = chw::read_feature_table(in, params_path.string());
  const auto seed = cfg.at("seed").get<std::uint64_t>();

  OutputDir out(out_dir, "cluster", cfg, seed);
  out.input(params_path);
  auto check_k = [&](std::size_t k) {
    if (k == 0 || k > rows.size()) {
      throw chw::InputError("k = " + std::to_string(k) + " must lie in [1, " +
                            std::to_string(rows.size()) + "]");
    }
  };
  if (cfg.contains("k")) {
    const auto k = cfg.at("k").get<std::size_t>();
    check_k(k);
    const auto result = chw::cluster_params(rows, k, seed);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : result.assignments) ++sizes[a];
    out.write("centroids.csv", serialize([&](std::ostream & o) {
                o << "cluster,size";
                for (const char * n : chw::kFeatureNames) o << ',' << n;
                o << '\n';
                for (std::size_t c = 0; c < k; ++c) {
                  o << c << ',' << sizes[c];
                  for (double v : result.centroids[c]) o << ',' << chw::format_double(v);
                  o << '\n';
                }
              }));
    out.write("assignments.csv", serialize([&](std::ostream & o) {
                o << "row,cluster\n";
                for (std::size_t i = 0; i < result.assignments.size(); ++i) {
                  o << i << ',' << result.assignments[i] << '\n';
                }
              }));
  }
  if (cfg.contains("elbow")) {
    const auto bounds = cfg.at("elbow").get<std::vector<std::size_t>>();
    std::vector<std::size_t> ks;
    for (std::size_t k = bounds[0]; k <= bounds[1]; ++k) {
      check_k(k);
      ks.push_back(k);
    }
    const auto curve = chw::elbow_curve(rows, ks, seed);
    out.write("elbow.csv", serialize([&](std::ostream & o) {
                o << "k,inertia,relative_drop\n";
                for (std::size_t i = 0; i < curve.size(); ++i) {
                  o << curve[i].k << ',' << chw::format_double(curve[i].inertia) << ',';
                  if (i > 0 && curve[i - 1].inertia > 0.0) {
                    o << chw::format_double((curve[i - 1].inertia - curve[i].inertia) / curve[i - 1].inertia);
                  }
                  o << '\n';
                }
              }));
    if (curve.size() >= 2) std::cout << "elbow at k = " << chw::elbow_k(curve) << "\n";
  }
  out.finish();
}

void run_scenario_gen(const json & cfg, const fs::path & out_file)
{
  chw::ScenarioSpec scenario = chw::scenario_from_json(cfg.at("scenario"));
  scenario.population = cfg.at("population").get<std::size_t>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  for (const auto & w : chw::effectiveness_warnings(scenario)) std::cerr << "warning: " << w << "\n";
  const chw::Cohort cohort = chw::sample_cohort(scenario, seed);

  const fs::path dir = out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
  OutputDir out(dir, "scenario-gen", cfg, seed);
  out.write(out_file.filename().string(),
            serialize([&](std::ostream & o) { chw::write_param_table(o, chw::cohort_rows(cohort)); }));
  out.finish();
}

void run_report(const json & cfg, const fs::path & out_dir)
{
  const fs::path results_dir = cfg.at("results").get<std::string>();
  if (!fs::is_directory(results_dir)) throw chw::InputError("'" + results_dir.string() + "' is not a directory");
  OutputDir out(out_dir, "report", cfg, 0);
  for (const char * name : {"results.csv", "summary.csv"}) {
    if (fs::is_regular_file(results_dir / name)) out.input(results_dir / name);
  }
  const fs::path staging = out_dir / ".staging";
  const auto files = chw::write_report(results_dir, staging);
  for (const auto & name : files) out.write(name, chw::read_file(staging / name));
  fs::remove_all(staging);
  out.finish();
}

void dispatch(const std::string & command, const json & cfg, const fs::path & out)
{
  if (command == "simulate") return run_simulate(cfg, out);
  if (command == "estimate") return run_estimate(cfg, out);
  if (command == "cluster") return run_cluster(cfg, out);
  if (command == "scenario-gen") return run_scenario_gen(cfg, out);
  if (command == "report") return run_report(cfg, out);
  throw chw::InputError("manifest names unknown command '" + command + "'");
}

// Output location for a replayed command: scenario-gen writes a file, the rest a directory.
fs::path replay_target(const chw::RunManifest & m, const fs::path & manifest_dir, const fs::path & out)
{
  if (m.command != "scenario-gen") return out.empty() ? manifest_dir : out;
  if (m.outputs.empty()) throw chw::InputError("manifest lists no outputs");
  return (out.empty() ? manifest_dir : out) / m.outputs.front().path;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Community health worker visit planning: simulation, estimation and reporting"};
  app.require_subcommand(1);

  // simulate
  auto * sim = app.add_subcommand("simulate", "capacity sweep of visit policies over a scenario");
  std::string sim_scenario = "scenario1", sim_policies = "ea_desc_vtg_per_visit,asc_fbg",
              sim_caps = "5:100:5", sim_out;
  std::size_t sim_reps = 10, sim_horizon = 60, sim_population = 0;
  std::uint64_t sim_seed = 0;
  double sim_sigma = chw::NoiseModel{}.sigma_xi, sim_delta = chw::kDefaultDelta;
  sim->add_option("--scenario", sim_scenario, "builtin name or JSON file")->capture_default_str();
  sim->add_option("--policies", sim_policies, "comma-separated policy names, or 'all'")->capture_default_str();
  sim->add_option("--capacities", sim_caps, "percent list or lo:hi:step")->capture_default_str();
  sim->add_option("--reps", sim_reps, "replications")->capture_default_str();
  sim->add_option("--seed", sim_seed, "base seed")->capture_default_str();
  sim->add_option("--horizon", sim_horizon, "periods")->capture_default_str();
  sim->add_option("--population", sim_population, "cohort size (default: the scenario's)");
  sim->add_option("--sigma-xi", sim_sigma, "process noise sd")->capture_default_str();
  sim->add_option("--delta", sim_delta, "in-control threshold on log-FBG")->capture_default_str();
  sim->add_option("--out", sim_out, "output directory");

  // estimate
  auto * est = app.add_subcommand("estimate", "per-patient parameter estimation from visit histories");
  std::string est_histories, est_out;
  const chw::EstimationConfig est_defaults;
  std::string est_s0 = "0,1,2,3", est_beta = "0,1,2,3", est_gamma = "0.2,0.5,0.8,0.9,0.99",
              est_rho = "0.2,0.5,0.8,0.9,0.99";
  double est_sigma_xi = est_defaults.sigma_xi, est_sigma_eps = est_defaults.sigma_eps,
         est_tol = est_defaults.qp_tolerance;
  std::size_t est_iter = est_defaults.qp_max_iterations;
  est->add_option("--histories", est_histories, "visit history CSV")->required();
  est->add_option("--grid-s0", est_s0, "baseline adversity grid")->capture_default_str();
  est->add_option("--grid-beta", est_beta, "adversity increment grid")->capture_default_str();
  est->add_option("--grid-gamma", est_gamma, "adversity discount grid")->capture_default_str();
  est->add_option("--grid-rho", est_rho, "perception discount grid")->capture_default_str();
  est->add_option("--sigma-xi", est_sigma_xi, "process noise sd")->capture_default_str();
  est->add_option("--sigma-eps", est_sigma_eps, "measurement noise sd")->capture_default_str();
  est->add_option("--qp-tolerance", est_tol, "inner solver tolerance")->capture_default_str();
  est->add_option("--qp-max-iter", est_iter, "inner solver iteration limit")->capture_default_str();
  est->add_option("--out", est_out, "output directory");

  // cluster
  auto * clu = app.add_subcommand("cluster", "k-means over estimated parameters");
  std::string clu_params, clu_elbow, clu_out;
  std::size_t clu_k = 0;
  std::uint64_t clu_seed = 0;
  clu->add_option("--params", clu_params, "table with the seven feature columns")->required();
  auto * k_opt = clu->add_option("--k", clu_k, "number of clusters");
  auto * elbow_opt = clu->add_option("--elbow", clu_elbow, "kmin:kmax for the elbow curve");
  clu->add_option("--seed", clu_seed, "seed")->capture_default_str();
  clu->add_option("--out", clu_out, "output directory");

  // scenario-gen
  auto * gen = app.add_subcommand("scenario-gen", "draw a cohort parameter table from a scenario");
  std::string gen_scenario, gen_out;
  std::size_t gen_population = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--scenario", gen_scenario, "builtin name or JSON file")->required();
  gen->add_option("--population", gen_population, "cohort size (default: the scenario's)");
  gen->add_option("--seed", gen_seed, "seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output CSV file");

  // report
  auto * rep = app.add_subcommand("report", "SVG charts from a simulate output directory");
  std::string rep_results, rep_out;
  rep->add_option("--results", rep_results, "simulate output directory")->required();
  rep->add_option("--out", rep_out, "output directory");

  // replay
  auto * rpl = app.add_subcommand("replay", "rerun the command recorded in a manifest");
  std::string rpl_manifest, rpl_out;
  rpl->add_option("--manifest", rpl_manifest, "manifest.json")->required();
  rpl->add_option("--out", rpl_out, "output directory (default: the manifest's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      chw::ScenarioSpec scenario = chw::resolve_scenario(sim_scenario);
      if (sim_population > 0) scenario.population = sim_population;
      std::vector<std::string> policies;
      if (sim_policies == "all") {
        for (auto kind : chw::kAllPolicies) policies.emplace_back(chw::to_string(kind));
      } else {
        policies = split_names(sim_policies);
      }
      for (const auto & p : policies) {
        if (!chw::parse_policy(p)) throw chw::InputError("unknown policy '" + p + "'");
      }
      const json cfg = {{"scenario", chw::scenario_to_json(scenario)},
                        {"population", scenario.population},
                        {"policies", policies},
                        {"capacities", parse_range(sim_caps, "--capacities")},
                        {"replications", sim_reps},
                        {"seed", sim_seed},
                        {"horizon", sim_horizon},
                        {"sigma_xi", sim_sigma},
                        {"delta", sim_delta}};
      run_simulate(cfg, sim_out.empty() ? default_out("simulate") : fs::path(sim_out));
    } else if (est->parsed()) {
      const json cfg = {{"histories", est_histories},
                        {"grid_s0", parse_number_list(est_s0, "--grid-s0")},
                        {"grid_beta", parse_number_list(est_beta, "--grid-beta")},
                        {"grid_gamma", parse_number_list(est_gamma, "--grid-gamma")},
                        {"grid_rho", parse_number_list(est_rho, "--grid-rho")},
                        {"sigma_xi", est_sigma_xi},
                        {"sigma_eps", est_sigma_eps},
                        {"qp_tolerance", est_tol},
                        {"qp_max_iterations", est_iter}};
      run_estimate(cfg, est_out.empty() ? default_out("estimate") : fs::path(est_out));
    } else if (clu->parsed()) {
      if (k_opt->count() == 0 && elbow_opt->count() == 0) {
        throw chw::InputError("cluster needs --k, --elbow or both");
      }
      json cfg = {{"params", clu_params}, {"seed", clu_seed}};
      if (k_opt->count() > 0) cfg["k"] = clu_k;
      if (elbow_opt->count() > 0) {
        const auto bounds = parse_range(clu_elbow + ":1", "--elbow");
        if (bounds.empty() || bounds.front() < 1.0) throw chw::InputError("--elbow: expected kmin:kmax with kmin >= 1");
        cfg["elbow"] = {static_cast<std::size_t>(bounds.front()), static_cast<std::size_t>(bounds.back())};
      }
      run_cluster(cfg, clu_out.empty() ? default_out("cluster") : fs::path(clu_out));
    } else if (gen->parsed()) {
      chw::ScenarioSpec scenario = chw::resolve_scenario(gen_scenario);
      if (gen_population > 0) scenario.population = gen_population;
      const json cfg = {{"scenario", chw::scenario_to_json(scenario)},
                        {"population", scenario.population},
                        {"seed", gen_seed}};
      run_scenario_gen(cfg, gen_out.empty() ? default_out("scenario-gen") / "cohort.csv" : fs::path(gen_out));
    } else if (rep->parsed()) {
      const json cfg = {{"results", rep_results}};
      run_report(cfg, rep_out.empty() ? default_out("report") : fs::path(rep_out));
    } else if (rpl->parsed()) {
      const fs::path manifest_path = rpl_manifest;
      const chw::RunManifest m = chw::read_manifest(manifest_path);
      if (m.command == "estimate") check_input_digest(m.config, "histories", m.inputs);
      if (m.command == "cluster") check_input_digest(m.config, "params", m.inputs);
      const fs::path dir = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
      dispatch(m.command, m.config, replay_target(m, dir, rpl_out));
    }
  } catch (const chw::InputError & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const chw::EstimationError & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const chw::SamplingError & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception & e) {
    std::cerr << "error: malformed configuration: " << e.what() << "\n";
    return 1;
  } catch (const std::exception & e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
