#include "chw/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace chw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail_row(const std::string & source, std::size_t line, const std::string & what)
{
  throw InputError(source + ", row " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string & field, const std::string & source, std::size_t line,
                    const char * column)
{
  double v = 0.0;
  const char * first = field.data();
  const char * last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    fail_row(source, line, std::string("column ") + column + ": '" + field + "' is not a number");
  }
  return v;
}

std::size_t parse_count(const std::string & field, const std::string & source, std::size_t line,
                        const char * column)
{
  std::size_t v = 0;
  const char * last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), last, v);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    fail_row(source, line,
             std::string("column ") + column + ": '" + field + "' is not a nonnegative integer");
  }
  return v;
}

bool parse_flag(const std::string & field, const std::string & source, std::size_t line,
                const char * column)
{
  if (field == "0") return false;
  if (field == "1") return true;
  fail_row(source, line, std::string("column ") + column + ": expected 0 or 1, got '" + field + "'");
}

// Header lookup for tables read by column name.
class Header
{
public:
  Header(const std::string & line, const std::string & source) : source_(source)
  {
    const auto names = split_csv(line);
    for (std::size_t k = 0; k < names.size(); ++k) index_[names[k]] = k;
    width_ = names.size();
  }
  [[nodiscard]] std::size_t at(const std::string & name) const
  {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InputError(source_ + ": missing column '" + name + "'");
    return it->second;
  }
  [[nodiscard]] bool has(const std::string & name) const { return index_.count(name) > 0; }
  [[nodiscard]] std::size_t width() const { return width_; }

private:
  std::string source_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t width_ = 0;
};

// Reads the header and the nonblank data lines with their 1-based row numbers.
struct Table
{
  std::string header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

Table read_table(std::istream & in, const std::string & source)
{
  Table t;
  std::string line;
  std::size_t n = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      t.header = line;
      have_header = true;
      continue;
    }
    t.rows.emplace_back(n, split_csv(line));
  }
  if (!have_header) throw InputError(source + ": missing header row");
  return t;
}

void check_width(const std::vector<std::string> & fields, std::size_t width,
                 const std::string & source, std::size_t line)
{
  if (fields.size() != width) {
    fail_row(source, line,
             "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
  }
}

constexpr const char * kParamColumns[] = {"p",      "mu",   "alpha", "theta_base",
                                          "lambda", "s_base", "beta",  "gamma", "rho"};

json features_to_json(const FeatureVector & f)
{
  json j = json::object();
  for (std::size_t k = 0; k < f.size(); ++k) j[kFeatureNames[k]] = f[k];
  return j;
}

FeatureVector features_from_json(const json & j, const std::string & where)
{
  if (!j.is_object()) throw InputError(where + " must be an object");
  FeatureVector f{};
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (!j.contains(kFeatureNames[k]) || !j.at(kFeatureNames[k]).is_number()) {
      throw InputError(where + ": missing numeric field '" + kFeatureNames[k] + "'");
    }
    f[k] = j.at(kFeatureNames[k]).get<double>();
  }
  return f;
}

template<typename T>
T field_or(const json & j, const char * key, T fallback)
{
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &) {
    throw InputError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string format_double(double v)
{
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_capacity_pct(double fraction)
{
  const std::int64_t bp = fraction_basis_points(fraction);
  std::string s = std::to_string(bp / 100);
  if (const std::int64_t frac = bp % 100; frac != 0) {
    char buf[4];
    std::snprintf(buf, sizeof buf, "%02lld", static_cast<long long>(frac));
    std::string tail = buf;
    if (tail.back() == '0') tail.pop_back();
    s += "." + tail;
  }
  return s;
}

std::vector<std::string> split_csv(const std::string & line)
{
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// --- visit histories -------------------------------------------------------

std::vector<VisitHistory> read_histories(std::istream & in, const std::string & source)
{
  const Table table = read_table(in, source);
  const Header h(table.header, source);
  const std::size_t c_id = h.at("patient_id"), c_t = h.at("period"), c_y = h.at("visited"),
                    c_z = h.at("enrolled"), c_b = h.at("fbg_mgdl");

  struct Record
  {
    bool y;
    bool z;
    std::optional<double> b;
    std::size_t line;
  };
  std::vector<std::string> order;
  std::map<std::string, std::map<std::size_t, Record>> by_patient;
  for (const auto & [line, f] : table.rows) {
    check_width(f, h.width(), source, line);
    const std::string & id = f[c_id];
    if (id.empty()) fail_row(source, line, "empty patient_id");
    const std::size_t t = parse_count(f[c_t], source, line, "period");
    Record rec{parse_flag(f[c_y], source, line, "visited"),
               parse_flag(f[c_z], source, line, "enrolled"), std::nullopt, line};
    if (!f[c_b].empty()) {
      const double mgdl = parse_double(f[c_b], source, line, "fbg_mgdl");
      if (mgdl < 0.0) fail_row(source, line, "negative FBG " + f[c_b]);
      if (!(mgdl > 0.0) || !std::isfinite(mgdl)) fail_row(source, line, "FBG must be positive");
      rec.b = std::log(mgdl);
    }
    auto [it, fresh] = by_patient.try_emplace(id);
    if (fresh) order.push_back(id);
    if (!it->second.emplace(t, rec).second) {
      fail_row(source, line, "duplicate period " + std::to_string(t) + " for patient '" + id + "'");
    }
  }

  std::vector<VisitHistory> out;
  for (const auto & id : order) {
    const auto & recs = by_patient.at(id);
    VisitHistory hist;
    hist.patient_id = id;
    const std::size_t T = recs.rbegin()->first + 1;
    hist.y.assign(T, false);
    hist.z.assign(T, false);
    bool carried = false;
    for (std::size_t t = 0; t < T; ++t) {
      if (const auto it = recs.find(t); it != recs.end()) {
        hist.y[t] = it->second.y;
        hist.z[t] = it->second.z;
        if (it->second.b) hist.b_obs[t] = *it->second.b;
        const bool z_prev = t > 0 && hist.z[t - 1];
        if (hist.z[t] && !(z_prev || hist.y[t])) {
          throw InputError(source + ", row " + std::to_string(it->second.line) + ": patient '" +
                           id + "', period " + std::to_string(t) +
                           ": enrolled without a visit or prior enrollment");
        }
        carried = hist.z[t];
      } else {
        hist.z[t] = carried;
      }
    }
    out.push_back(std::move(hist));
  }
  return out;
}

std::vector<VisitHistory> ingest_histories(const fs::path & path)
{
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  return read_histories(in, path.string());
}

void write_histories(std::ostream & out, const std::vector<VisitHistory> & histories)
{
  out << "patient_id,period,visited,enrolled,fbg_mgdl\n";
  for (const auto & h : histories) {
    for (std::size_t t = 0; t < h.length(); ++t) {
      out << h.patient_id << ',' << t << ',' << (h.y[t] ? 1 : 0) << ',' << (h.z[t] ? 1 : 0) << ',';
      if (const auto it = h.b_obs.find(t); it != h.b_obs.end()) {
        out << format_double(std::exp(it->second));
      }
      out << '\n';
    }
  }
}

// --- parameter tables ------------------------------------------------------

void write_param_table(std::ostream & out, const std::vector<ParamRow> & rows)
{
  out << "patient_id,group";
  for (const char * c : kParamColumns) out << ',' << c;
  out << ",initial_log_fbg\n";
  for (const auto & r : rows) {
    const PatientParams & q = r.params;
    out << r.patient_id << ',' << r.group;
    for (double v : {q.p, q.mu, q.alpha, q.theta_base, q.lambda, q.s_base, q.beta, q.gamma, q.rho}) {
      out << ',' << format_double(v);
    }
    out << ',' << format_double(r.initial_log_fbg) << '\n';
  }
}

std::vector<ParamRow> read_param_table(std::istream & in, const std::string & source)
{
  const Table table = read_table(in, source);
  const Header h(table.header, source);
  std::vector<std::size_t> cols;
  for (const char * c : kParamColumns) cols.push_back(h.at(c));
  const std::size_t c_id = h.at("patient_id");
  const bool has_group = h.has("group");
  const bool has_fbg = h.has("initial_log_fbg");

  std::vector<ParamRow> out;
  for (const auto & [line, f] : table.rows) {
    check_width(f, h.width(), source, line);
    ParamRow r;
    r.patient_id = f[c_id];
    if (has_group) r.group = f[h.at("group")];
    double v[9];
    for (std::size_t k = 0; k < 9; ++k) v[k] = parse_double(f[cols[k]], source, line, kParamColumns[k]);
    r.params = PatientParams{.p = v[0], .mu = v[1], .alpha = v[2], .beta = v[6], .lambda = v[4],
                             .gamma = v[7], .rho = v[8], .s_base = v[5], .theta_base = v[3]};
    if (const auto err = r.params.validate(); !err.empty()) fail_row(source, line, err);
    if (has_fbg) r.initial_log_fbg = parse_double(f[h.at("initial_log_fbg")], source, line, "initial_log_fbg");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ParamRow> cohort_rows(const Cohort & cohort)
{
  std::vector<ParamRow> rows;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    rows.push_back({std::to_string(i), cohort.labels.empty() ? std::string() : cohort.labels[i],
                    cohort.params[i], cohort.initial[i].b});
  }
  return rows;
}

std::vector<FeatureVector> read_feature_table(std::istream & in, const std::string & source)
{
  const Table table = read_table(in, source);
  const Header h(table.header, source);
  std::vector<std::size_t> cols;
  for (const char * c : kFeatureNames) cols.push_back(h.at(c));
  std::vector<FeatureVector> out;
  for (const auto & [line, f] : table.rows) {
    check_width(f, h.width(), source, line);
    FeatureVector v{};
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = parse_double(f[cols[k]], source, line, kFeatureNames[k]);
    out.push_back(v);
  }
  return out;
}

void write_estimates(std::ostream & out, const std::vector<EstimationResult> & results)
{
  out << "patient_id";
  for (const char * c : kParamColumns) out << ',' << c;
  out << ",nll,cells_solved,cells_infeasible,cells_failed\n";
  for (const auto & r : results) {
    const PatientParams & q = r.params;
    out << r.patient_id;
    for (double v : {q.p, q.mu, q.alpha, q.theta_base, q.lambda, q.s_base, q.beta, q.gamma, q.rho}) {
      out << ',' << format_double(v);
    }
    out << ',' << format_double(r.nll) << ',' << r.cells_solved << ',' << r.cells_infeasible << ','
        << r.cells_failed << '\n';
  }
}

// --- simulation tables -----------------------------------------------------

void write_results(std::ostream & out, const std::vector<RunResult> & results)
{
  std::vector<const RunResult *> sorted;
  for (const auto & r : results) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const RunResult * a, const RunResult * b) {
    return std::tuple(to_string(a->policy), fraction_basis_points(a->capacity_fraction), a->replication) <
           std::tuple(to_string(b->policy), fraction_basis_points(b->capacity_fraction), b->replication);
  });
  out << "policy,capacity_pct,replication,period,in_control,enrolled,visits,screening_visits\n";
  for (const RunResult * r : sorted) {
    const std::string pct = format_capacity_pct(r->capacity_fraction);
    for (std::size_t t = 0; t < r->in_control.size(); ++t) {
      out << to_string(r->policy) << ',' << pct << ',' << r->replication << ',' << t + 1 << ','
          << r->in_control[t] << ',' << r->enrolled[t] << ',' << r->visits[t] << ','
          << r->screening_visits[t] << '\n';
    }
  }
}

void write_summary(std::ostream & out, const std::vector<SummaryRow> & rows)
{
  out << "policy,capacity_pct,ppc_mean,ppc_ci_halfwidth,final_fbg_p25,final_fbg_p50,final_fbg_p75,"
         "final_fbg_p90\n";
  for (const auto & r : rows) {
    out << to_string(r.policy) << ',' << format_capacity_pct(r.capacity_fraction) << ','
        << format_double(r.ppc_mean) << ',' << format_double(r.ppc_ci_halfwidth) << ','
        << format_double(r.final_fbg_p25) << ',' << format_double(r.final_fbg_p50) << ','
        << format_double(r.final_fbg_p75) << ',' << format_double(r.final_fbg_p90) << '\n';
  }
}

std::vector<ResultRow> read_results(std::istream & in, const std::string & source)
{
  const Table table = read_table(in, source);
  const Header h(table.header, source);
  const std::size_t c[8] = {h.at("policy"),    h.at("capacity_pct"), h.at("replication"),
                            h.at("period"),    h.at("in_control"),   h.at("enrolled"),
                            h.at("visits"),    h.at("screening_visits")};
  std::vector<ResultRow> out;
  for (const auto & [line, f] : table.rows) {
    check_width(f, h.width(), source, line);
    ResultRow r;
    r.policy = f[c[0]];
    r.capacity_pct = f[c[1]];
    r.replication = parse_count(f[c[2]], source, line, "replication");
    r.period = parse_count(f[c[3]], source, line, "period");
    r.in_control = parse_count(f[c[4]], source, line, "in_control");
    r.enrolled = parse_count(f[c[5]], source, line, "enrolled");
    r.visits = parse_count(f[c[6]], source, line, "visits");
    r.screening_visits = parse_count(f[c[7]], source, line, "screening_visits");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SummaryRecord> read_summary(std::istream & in, const std::string & source)
{
  const Table table = read_table(in, source);
  const Header h(table.header, source);
  const std::size_t c[8] = {h.at("policy"),        h.at("capacity_pct"),  h.at("ppc_mean"),
                            h.at("ppc_ci_halfwidth"), h.at("final_fbg_p25"), h.at("final_fbg_p50"),
                            h.at("final_fbg_p75"), h.at("final_fbg_p90")};
  std::vector<SummaryRecord> out;
  for (const auto & [line, f] : table.rows) {
    check_width(f, h.width(), source, line);
    SummaryRecord r;
    r.policy = f[c[0]];
    r.capacity_pct = f[c[1]];
    r.ppc_mean = parse_double(f[c[2]], source, line, "ppc_mean");
    r.ppc_ci_halfwidth = parse_double(f[c[3]], source, line, "ppc_ci_halfwidth");
    r.p25 = parse_double(f[c[4]], source, line, "final_fbg_p25");
    r.p50 = parse_double(f[c[5]], source, line, "final_fbg_p50");
    r.p75 = parse_double(f[c[6]], source, line, "final_fbg_p75");
    r.p90 = parse_double(f[c[7]], source, line, "final_fbg_p90");
    out.push_back(std::move(r));
  }
  return out;
}

// --- scenario configuration ------------------------------------------------

json scenario_to_json(const ScenarioSpec & spec)
{
  json groups = json::array();
  for (const auto & g : spec.groups) {
    groups.push_back({{"name", g.group.name},
                      {"weight", g.weight},
                      {"centroid", features_to_json(g.group.centroid)},
                      {"sd", features_to_json(g.group.sd)}});
  }
  return {{"name", spec.name},
          {"population", spec.population},
          {"gamma", spec.gamma},
          {"rho", spec.rho},
          {"initial_fbg_mean_mgdl", spec.initial_fbg_mean_mgdl},
          {"initial_fbg_sd_mgdl", spec.initial_fbg_sd_mgdl},
          {"groups", groups}};
}

ScenarioSpec scenario_from_json(const json & j)
{
  if (!j.is_object()) throw InputError("scenario must be a JSON object");
  ScenarioSpec spec;
  spec.name = field_or<std::string>(j, "name", "custom");
  spec.population = field_or<std::size_t>(j, "population", spec.population);
  spec.gamma = field_or<double>(j, "gamma", spec.gamma);
  spec.rho = field_or<double>(j, "rho", spec.rho);
  spec.initial_fbg_mean_mgdl = field_or<double>(j, "initial_fbg_mean_mgdl", spec.initial_fbg_mean_mgdl);
  spec.initial_fbg_sd_mgdl = field_or<double>(j, "initial_fbg_sd_mgdl", spec.initial_fbg_sd_mgdl);
  if (!j.contains("groups") || !j.at("groups").is_array() || j.at("groups").empty()) {
    throw InputError("scenario '" + spec.name + "' needs a nonempty 'groups' array");
  }

  const auto builtins = builtin_groups();
  std::vector<bool> needs_spread;
  for (const auto & g : j.at("groups")) {
    if (!g.is_object()) throw InputError("each group must be an object");
    WeightedGroup wg;
    if (!g.contains("weight") || !g.at("weight").is_number()) {
      throw InputError("group without a numeric 'weight'");
    }
    wg.weight = g.at("weight").get<double>();
    if (g.contains("builtin")) {
      const std::string name = field_or<std::string>(g, "builtin", "");
      const auto it = std::find_if(builtins.begin(), builtins.end(),
                                   [&](const GroupSpec & b) { return b.name == name; });
      if (it == builtins.end()) throw InputError("unknown builtin group '" + name + "'");
      wg.group = *it;
      wg.group.name = field_or<std::string>(g, "name", name);
      needs_spread.push_back(false);
    } else {
      wg.group.name = field_or<std::string>(g, "name", "group" + std::to_string(spec.groups.size()));
      if (!g.contains("centroid")) throw InputError("group '" + wg.group.name + "' has no centroid");
      wg.group.centroid = features_from_json(g.at("centroid"), "group '" + wg.group.name + "' centroid");
      const bool has_sd = g.contains("sd");
      if (has_sd) wg.group.sd = features_from_json(g.at("sd"), "group '" + wg.group.name + "' sd");
      needs_spread.push_back(!has_sd);
    }
    spec.groups.push_back(std::move(wg));
  }
  if (std::find(needs_spread.begin(), needs_spread.end(), true) != needs_spread.end()) {
    std::vector<FeatureVector> centroids;
    for (const auto & g : spec.groups) centroids.push_back(g.group.centroid);
    const FeatureVector sd = default_spread(centroids);
    for (std::size_t k = 0; k < spec.groups.size(); ++k) {
      if (needs_spread[k]) spec.groups[k].group.sd = sd;
    }
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument & e) {
    throw InputError(e.what());
  }
  return spec;
}

ScenarioSpec resolve_scenario(const std::string & name_or_path)
{
  for (const auto & s : builtin_scenarios()) {
    if (s.name == name_or_path) return s;
  }
  const fs::path path(name_or_path);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw InputError("unknown scenario '" + name_or_path + "' (not a builtin name or a readable file)");
  }
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error & e) {
    throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

// --- manifests -------------------------------------------------------------

std::string sha256_hex(const std::string & bytes)
{
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(kHex[digest[k] >> 4]);
    out.push_back(kHex[digest[k] & 0xF]);
  }
  return out;
}

std::string read_file(const fs::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string sha256_file(const fs::path & path) { return sha256_hex(read_file(path)); }

void write_file(const fs::path & path, const std::string & bytes)
{
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << bytes;
    if (!out) throw InputError("write to '" + path.string() + "' failed");
  }
  fs::rename(tmp, path);
}

json manifest_to_json(const RunManifest & m)
{
  auto digests = [](const std::vector<FileDigest> & files) {
    json arr = json::array();
    for (const auto & f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return arr;
  };
  return {{"tool_version", m.tool_version}, {"command", m.command},
          {"config", m.config},             {"base_seed", m.base_seed},
          {"inputs", digests(m.inputs)},    {"outputs", digests(m.outputs)},
          {"duration_seconds", m.duration_seconds}};
}

RunManifest manifest_from_json(const json & j)
{
  try {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    for (const auto & f : j.at("inputs")) {
      m.inputs.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
    }
    for (const auto & f : j.at("outputs")) {
      m.outputs.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
    }
    m.duration_seconds = field_or<double>(j, "duration_seconds", 0.0);
    return m;
  } catch (const json::exception & e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
}

RunManifest read_manifest(const fs::path & path)
{
  try {
    return manifest_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error & e) {
    throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace chw
