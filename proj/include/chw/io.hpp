#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "chw/engine.hpp"
#include "chw/estimation.hpp"
#include "chw/scenarios.hpp"

namespace chw {

inline constexpr const char * kToolVersion = "0.1.0";

/// Bad input supplied by the user (maps to exit status 1).
class InputError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form of a double ("%.17g").
[[nodiscard]] std::string format_double(double v);

/// Capacity in percent from basis points: "5", "12.5", "33.33".
[[nodiscard]] std::string format_capacity_pct(double fraction);

/// Splits one comma-separated line. No quoting; a trailing '\r' is dropped.
[[nodiscard]] std::vector<std::string> split_csv(const std::string & line);

// --- visit histories -------------------------------------------------------

/// Parses `patient_id,period,visited,enrolled,fbg_mgdl` (FBG blank when
/// unobserved). Patients appear in order of first occurrence. Periods missing
/// from a patient's record are filled as not visited, with enrollment carried
/// from the previous period (0 before the first record). Throws InputError.
[[nodiscard]] std::vector<VisitHistory> read_histories(std::istream & in,
                                                       const std::string & source = "<input>");
[[nodiscard]] std::vector<VisitHistory> ingest_histories(const std::filesystem::path & path);

void write_histories(std::ostream & out, const std::vector<VisitHistory> & histories);

// --- parameter tables ------------------------------------------------------

struct ParamRow
{
  std::string patient_id;
  std::string group;
  PatientParams params;
  double initial_log_fbg = 0.0;
};

/// `patient_id,group,p,mu,alpha,theta_base,lambda,s_base,beta,gamma,rho,initial_log_fbg`
void write_param_table(std::ostream & out, const std::vector<ParamRow> & rows);
[[nodiscard]] std::vector<ParamRow> read_param_table(std::istream & in,
                                                     const std::string & source = "<input>");

[[nodiscard]] std::vector<ParamRow> cohort_rows(const Cohort & cohort);

/// Feature vectors from any table with the seven feature columns (by header name).
[[nodiscard]] std::vector<FeatureVector> read_feature_table(std::istream & in,
                                                            const std::string & source = "<input>");

/// Per-patient estimates, one row each.
void write_estimates(std::ostream & out, const std::vector<EstimationResult> & results);

// --- simulation tables -----------------------------------------------------

/// `policy,capacity_pct,replication,period,in_control,enrolled,visits,screening_visits`
void write_results(std::ostream & out, const std::vector<RunResult> & results);

/// `policy,capacity_pct,ppc_mean,ppc_ci_halfwidth,final_fbg_p25,...,final_fbg_p90`
void write_summary(std::ostream & out, const std::vector<SummaryRow> & rows);

/// Rows of a results table, as written by `write_results`.
struct ResultRow
{
  std::string policy;
  std::string capacity_pct;
  std::size_t replication = 0;
  std::size_t period = 0;
  std::size_t in_control = 0;
  std::size_t enrolled = 0;
  std::size_t visits = 0;
  std::size_t screening_visits = 0;
};
[[nodiscard]] std::vector<ResultRow> read_results(std::istream & in,
                                                  const std::string & source = "<input>");

struct SummaryRecord
{
  std::string policy;
  std::string capacity_pct;
  double ppc_mean = 0.0;
  double ppc_ci_halfwidth = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
};
[[nodiscard]] std::vector<SummaryRecord> read_summary(std::istream & in,
                                                      const std::string & source = "<input>");

// --- scenario configuration ------------------------------------------------

[[nodiscard]] nlohmann::json scenario_to_json(const ScenarioSpec & spec);
/// Throws InputError on a schema violation.
[[nodiscard]] ScenarioSpec scenario_from_json(const nlohmann::json & j);
/// A builtin name, or else a path to a JSON scenario file.
[[nodiscard]] ScenarioSpec resolve_scenario(const std::string & name_or_path);

// --- manifests -------------------------------------------------------------

struct FileDigest
{
  std::string path;
  std::string sha256;
};

struct RunManifest
{
  std::string tool_version = kToolVersion;
  std::string command;
  nlohmann::json config;
  std::uint64_t base_seed = 0;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;  ///< relative to the manifest's directory
  double duration_seconds = 0.0;
};

inline constexpr const char * kManifestName = "manifest.json";

[[nodiscard]] std::string sha256_hex(const std::string & bytes);
/// Throws InputError when the file cannot be read.
[[nodiscard]] std::string sha256_file(const std::filesystem::path & path);
[[nodiscard]] std::string read_file(const std::filesystem::path & path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path & path, const std::string & bytes);

[[nodiscard]] nlohmann::json manifest_to_json(const RunManifest & m);
[[nodiscard]] RunManifest manifest_from_json(const nlohmann::json & j);
[[nodiscard]] RunManifest read_manifest(const std::filesystem::path & path);

}  // namespace chw
