#include "chw/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "chw/io.hpp"

namespace chw {

namespace fs = std::filesystem;

namespace {

constexpr const char * kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 190, kTop = 40, kBottom = 60;

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string & s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '&': out += "&amp;"; break;
    default: out += c;
    }
  }
  return out;
}

struct Series
{
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lo;  ///< optional band
  std::vector<double> hi;
};

class Canvas
{
public:
  Canvas(const std::string & title, const std::string & xlabel, const std::string & ylabel,
         double x0, double x1, double y0, double y1)
    : x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1), y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1)
  {
    svg_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
         << escape(title) << "</text>\n";
    axes(xlabel, ylabel);
  }

  [[nodiscard]] double px(double x) const
  {
    return kLeft + (x - x0_) / (x1_ - x0_) * (kWidth - kLeft - kRight);
  }
  [[nodiscard]] double py(double y) const
  {
    return kHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kHeight - kTop - kBottom);
  }

  void series(const Series & s, const char * color)
  {
    if (!s.lo.empty()) {
      svg_ << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t k = 0; k < s.x.size(); ++k) svg_ << num(px(s.x[k])) << ',' << num(py(s.hi[k])) << ' ';
      for (std::size_t k = s.x.size(); k-- > 0;) svg_ << num(px(s.x[k])) << ',' << num(py(s.lo[k])) << ' ';
      svg_ << "\"/>\n";
    }
    svg_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) svg_ << num(px(s.x[k])) << ',' << num(py(s.y[k])) << ' ';
    svg_ << "\"/>\n";
  }

  void legend(std::size_t slot, const std::string & name, const char * color)
  {
    const double y = kTop + 10 + 18 * static_cast<double>(slot);
    const double x = kWidth - kRight + 15;
    svg_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"12\" height=\"10\" fill=\""
         << color << "\"/>\n<text x=\"" << num(x + 18) << "\" y=\"" << num(y) << "\">" << escape(name)
         << "</text>\n";
  }

  void raw(const std::string & s) { svg_ << s; }

  [[nodiscard]] std::string finish()
  {
    svg_ << "</svg>\n";
    return svg_.str();
  }

private:
  void axes(const std::string & xlabel, const std::string & ylabel)
  {
    const double bx = kLeft, by = kHeight - kBottom, ex = kWidth - kRight, ey = kTop;
    svg_ << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(ex) << "\" y2=\""
         << num(by) << "\" stroke=\"black\"/>\n"
         << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(bx) << "\" y2=\""
         << num(ey) << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
      const double fx = x0_ + (x1_ - x0_) * k / 5.0;
      const double fy = y0_ + (y1_ - y0_) * k / 5.0;
      svg_ << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(by + 16)
           << "\" text-anchor=\"middle\">" << num(fx) << "</text>\n"
           << "<text x=\"" << num(bx - 6) << "\" y=\"" << num(py(fy) + 4)
           << "\" text-anchor=\"end\">" << num(fy) << "</text>\n"
           << "<line x1=\"" << num(bx) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(ex)
           << "\" y2=\"" << num(py(fy)) << "\" stroke=\"#ddd\"/>\n";
    }
    svg_ << "<text x=\"" << num((bx + ex) / 2) << "\" y=\"" << num(kHeight - 18)
         << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n"
         << "<text transform=\"translate(18," << num((by + ey) / 2)
         << ") rotate(-90)\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
  }

  double x0_, x1_, y0_, y1_;
  std::ostringstream svg_;
};

std::string line_chart(const std::string & title, const std::string & xlabel,
                       const std::string & ylabel, const std::vector<Series> & all, double y0,
                       double y1)
{
  double x0 = INFINITY, x1 = -INFINITY;
  for (const auto & s : all) {
    for (double x : s.x) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  Canvas c(title, xlabel, ylabel, x0, x1, y0, y1);
  for (std::size_t k = 0; k < all.size(); ++k) {
    const char * color = kPalette[k % std::size(kPalette)];
    c.series(all[k], color);
    c.legend(k, all[k].name, color);
  }
  return c.finish();
}

double pct_value(const std::string & pct) { return std::stod(pct); }

std::string file_tag(const std::string & pct)
{
  std::string tag = pct;
  std::replace(tag.begin(), tag.end(), '.', '_');
  return tag;
}

}  // namespace

std::vector<std::string> write_report(const fs::path & results_dir, const fs::path & out_dir)
{
  const fs::path results_path = results_dir / "results.csv";
  const fs::path summary_path = results_dir / "summary.csv";
  if (!fs::is_regular_file(results_path) || !fs::is_regular_file(summary_path)) {
    throw InputError("'" + results_dir.string() + "' holds no results.csv and summary.csv");
  }
  std::istringstream results_in(read_file(results_path));
  std::istringstream summary_in(read_file(summary_path));
  const auto results = read_results(results_in, results_path.string());
  const auto summary = read_summary(summary_in, summary_path.string());
  if (results.empty() || summary.empty()) {
    throw InputError("'" + results_dir.string() + "' holds empty result tables");
  }
  const RunManifest manifest = read_manifest(results_dir / kManifestName);
  if (!manifest.config.contains("population")) {
    throw InputError("manifest in '" + results_dir.string() + "' records no population");
  }
  const double population = manifest.config.at("population").get<double>();

  std::vector<std::string> written;
  auto emit = [&](const std::string & name, const std::string & svg) {
    write_file(out_dir / name, svg);
    written.push_back(name);
  };

  // PPC against capacity.
  std::map<std::string, Series> ppc;
  for (const auto & r : summary) {
    Series & s = ppc[r.policy];
    s.name = r.policy;
    s.x.push_back(pct_value(r.capacity_pct));
    s.y.push_back(r.ppc_mean);
    s.lo.push_back(r.ppc_mean - r.ppc_ci_halfwidth);
    s.hi.push_back(r.ppc_mean + r.ppc_ci_halfwidth);
  }
  std::vector<Series> ppc_series;
  double ppc_top = 0.0;
  for (auto & [name, s] : ppc) {
    ppc_top = std::max(ppc_top, *std::max_element(s.hi.begin(), s.hi.end()));
    ppc_series.push_back(std::move(s));
  }
  emit("ppc_vs_capacity.svg", line_chart("Proportion of periods in control", "capacity (% of cohort)",
                                         "PPC", ppc_series, 0.0, std::max(ppc_top, 1e-3)));

  // Per-period shares at each capacity, pooled over replications.
  struct Totals
  {
    double screening = 0, visits = 0, enrolled = 0, reps = 0;
  };
  std::map<std::string, std::map<std::string, std::map<std::size_t, Totals>>> by_cap;
  for (const auto & r : results) {
    Totals & t = by_cap[r.capacity_pct][r.policy][r.period];
    t.screening += static_cast<double>(r.screening_visits);
    t.visits += static_cast<double>(r.visits);
    t.enrolled += static_cast<double>(r.enrolled);
    t.reps += 1;
  }
  std::vector<std::pair<double, std::string>> caps;
  for (const auto & [pct, _] : by_cap) caps.emplace_back(pct_value(pct), pct);
  std::sort(caps.begin(), caps.end());
  for (const auto & [value, pct] : caps) {
    std::vector<Series> screening, enrollment;
    for (const auto & [policy, periods] : by_cap.at(pct)) {
      Series s{policy, {}, {}, {}, {}}, e{policy, {}, {}, {}, {}};
      for (const auto & [t, tot] : periods) {
        s.x.push_back(static_cast<double>(t));
        s.y.push_back(tot.visits > 0 ? tot.screening / tot.visits : 0.0);
        e.x.push_back(static_cast<double>(t));
        e.y.push_back(tot.enrolled / (tot.reps * population));
      }
      screening.push_back(std::move(s));
      enrollment.push_back(std::move(e));
    }
    const std::string tag = file_tag(pct);
    emit("screening_share_" + tag + ".svg",
         line_chart("Screening share of visits, capacity " + pct + "%", "period", "share",
                    screening, 0.0, 1.0));
    emit("enrollment_share_" + tag + ".svg",
         line_chart("Enrolled share of cohort, capacity " + pct + "%", "period", "share",
                    enrollment, 0.0, 1.0));
  }

  // Final log-FBG box statistics (box p25-p75, median, whisker to p90).
  std::vector<std::string> policies;
  for (const auto & r : summary) {
    if (std::find(policies.begin(), policies.end(), r.policy) == policies.end()) policies.push_back(r.policy);
  }
  std::sort(policies.begin(), policies.end());
  double lo = INFINITY, hi = -INFINITY, cap_lo = INFINITY, cap_hi = -INFINITY;
  for (const auto & r : summary) {
    lo = std::min(lo, r.p25);
    hi = std::max(hi, r.p90);
    cap_lo = std::min(cap_lo, pct_value(r.capacity_pct));
    cap_hi = std::max(cap_hi, pct_value(r.capacity_pct));
  }
  const double pad = std::max(0.05 * (hi - lo), 0.05);
  const double span = std::max(cap_hi - cap_lo, 5.0);
  Canvas box("Final log-FBG (box: p25-p75, line: median, whisker: p90)", "capacity (% of cohort)",
             "log mg/dL", cap_lo - 0.05 * span, cap_hi + 0.05 * span, lo - pad, hi + pad);
  const double slot = 0.6 * (box.px(cap_lo + 5.0) - box.px(cap_lo)) / static_cast<double>(policies.size());
  for (const auto & r : summary) {
    const auto k = static_cast<std::size_t>(
      std::find(policies.begin(), policies.end(), r.policy) - policies.begin());
    const char * color = kPalette[k % std::size(kPalette)];
    const double cx = box.px(pct_value(r.capacity_pct)) +
                      (static_cast<double>(k) - 0.5 * static_cast<double>(policies.size() - 1)) * slot;
    const double w = std::max(0.8 * slot, 1.0);
    std::ostringstream s;
    s << "<line x1=\"" << num(cx) << "\" y1=\"" << num(box.py(r.p75)) << "\" x2=\"" << num(cx)
      << "\" y2=\"" << num(box.py(r.p90)) << "\" stroke=\"" << color << "\"/>\n"
      << "<rect x=\"" << num(cx - w / 2) << "\" y=\"" << num(box.py(r.p75)) << "\" width=\"" << num(w)
      << "\" height=\"" << num(box.py(r.p25) - box.py(r.p75)) << "\" fill=\"" << color
      << "\" fill-opacity=\"0.3\" stroke=\"" << color << "\"/>\n"
      << "<line x1=\"" << num(cx - w / 2) << "\" y1=\"" << num(box.py(r.p50)) << "\" x2=\""
      << num(cx + w / 2) << "\" y2=\"" << num(box.py(r.p50)) << "\" stroke=\"black\"/>\n";
    box.raw(s.str());
  }
  for (std::size_t k = 0; k < policies.size(); ++k) box.legend(k, policies[k], kPalette[k % std::size(kPalette)]);
  emit("final_fbg_box.svg", box.finish());
  return written;
}

}  // namespace chw
