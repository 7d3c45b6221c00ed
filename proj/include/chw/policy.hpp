#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chw/model.hpp"

namespace chw {

enum class PolicyKind {
  visit_no_one,
  visit_everyone,
  asc_fbg,
  desc_fbg,
  ea_asc_fbg,
  ea_desc_fbg,
  ea_desc_vtg,
  ea_desc_vtg_per_visit,
};

inline constexpr PolicyKind kAllPolicies[] = {
  PolicyKind::visit_no_one, PolicyKind::visit_everyone, PolicyKind::asc_fbg,
  PolicyKind::desc_fbg,     PolicyKind::ea_asc_fbg,     PolicyKind::ea_desc_fbg,
  PolicyKind::ea_desc_vtg,  PolicyKind::ea_desc_vtg_per_visit,
};

[[nodiscard]] std::string_view to_string(PolicyKind kind);
[[nodiscard]] std::optional<PolicyKind> parse_policy(std::string_view name);

/// True for the Enrollment Algorithm variants, which filter by the interest set.
[[nodiscard]] constexpr bool is_enrollment_algorithm(PolicyKind kind)
{
  return kind == PolicyKind::ea_asc_fbg || kind == PolicyKind::ea_desc_fbg ||
         kind == PolicyKind::ea_desc_vtg || kind == PolicyKind::ea_desc_vtg_per_visit;
}

struct PolicySpec
{
  PolicyKind kind = PolicyKind::ea_desc_vtg_per_visit;
  double delta = 4.8283137373023015;  // ln(125)
};

struct RolloutSummary
{
  std::size_t v_tilde = 0;  ///< predicted periods in control
  std::size_t visits = 0;   ///< predicted visit count
};

/// Optimal single-patient action: visit iff the visit is needed to enroll,
/// needed to avoid a dropout, or strictly raises the benefit of an enrolled
/// patient. Indifferent cases resolve to no visit.
[[nodiscard]] bool single_patient_action(const PatientState & state, const PatientParams & params);

/// Indices whose single-patient action is a visit, ascending.
/// Throws std::invalid_argument when the spans differ in length.
[[nodiscard]] std::vector<std::size_t> interest_set(std::span<const PatientState> states,
                                                    std::span<const PatientParams> params);

/// Deterministic (xi = 0) forward simulation under `single_patient_action`
/// for `periods_remaining` periods, counting post-transition in-control
/// periods and visits.
[[nodiscard]] RolloutSummary rollout_single(const PatientState & state,
                                            const PatientParams & params,
                                            std::size_t periods_remaining, double delta);

/// Patients to visit this period, ascending. All kinds except visit_everyone
/// return at most `capacity` indices. Equal sort keys resolve by ascending index.
[[nodiscard]] std::vector<std::size_t> select_visits(std::span<const PatientState> states,
                                                     std::span<const PatientParams> params,
                                                     std::size_t capacity,
                                                     const PolicySpec & spec,
                                                     std::size_t periods_remaining);

}  // namespace chw
