#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace chw {

/// Renders SVG charts from a `simulate` output directory (results.csv,
/// summary.csv and the manifest): PPC against capacity with CI bands, screening
/// and enrollment shares by period for each capacity, and final log-FBG box
/// statistics. Returns the written file names, relative to `out_dir`.
/// Throws InputError when the directory holds no results.
std::vector<std::string> write_report(const std::filesystem::path & results_dir,
                                      const std::filesystem::path & out_dir);

}  // namespace chw
