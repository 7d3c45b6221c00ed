#include "chw/policy.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace chw {

namespace {

constexpr std::pair<PolicyKind, std::string_view> kPolicyNames[] = {
  {PolicyKind::visit_no_one, "visit_no_one"},
  {PolicyKind::visit_everyone, "visit_everyone"},
  {PolicyKind::asc_fbg, "asc_fbg"},
  {PolicyKind::desc_fbg, "desc_fbg"},
  {PolicyKind::ea_asc_fbg, "ea_asc_fbg"},
  {PolicyKind::ea_desc_fbg, "ea_desc_fbg"},
  {PolicyKind::ea_desc_vtg, "ea_desc_vtg"},
  {PolicyKind::ea_desc_vtg_per_visit, "ea_desc_vtg_per_visit"},
};

void check_aligned(std::size_t a, std::size_t b)
{
  if (a != b) {
    throw std::invalid_argument("cohort states and parameters differ in length (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// Stable sort of `idx` by key, ties broken by the (already ascending) index.
template<typename Key, typename Cmp>
void rank_by(std::vector<std::size_t> & idx, const std::vector<Key> & key, Cmp cmp)
{
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return cmp(key[a], key[b]); });
}

std::vector<std::size_t> first_n(std::vector<std::size_t> idx, std::size_t n)
{
  if (idx.size() > n) idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::string_view to_string(PolicyKind kind)
{
  for (const auto & [k, name] : kPolicyNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<PolicyKind> parse_policy(std::string_view name)
{
  for (const auto & [k, n] : kPolicyNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool single_patient_action(const PatientState & state, const PatientParams & params)
{
  const double b1 = benefit(state, params, true);
  if (b1 < 0.0) return false;
  const double b0 = benefit(state, params, false);
  if (b0 < 0.0) return true;
  if (!state.z_prev) return true;
  return b1 - b0 > 0.0;
}

std::vector<std::size_t> interest_set(std::span<const PatientState> states,
                                      std::span<const PatientParams> params)
{
  check_aligned(states.size(), params.size());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (single_patient_action(states[i], params[i])) out.push_back(i);
  }
  return out;
}

RolloutSummary rollout_single(const PatientState & state, const PatientParams & params,
                              std::size_t periods_remaining, double delta)
{
  RolloutSummary summary;
  PatientState x = state;
  for (std::size_t k = 0; k < periods_remaining; ++k) {
    const bool y = single_patient_action(x, params);
    x = step_patient(x, params, y, 0.0).next;
    summary.visits += y ? 1 : 0;
    summary.v_tilde += x.b <= delta ? 1 : 0;
  }
  return summary;
}

std::vector<std::size_t> select_visits(std::span<const PatientState> states,
                                       std::span<const PatientParams> params,
                                       std::size_t capacity, const PolicySpec & spec,
                                       std::size_t periods_remaining)
{
  check_aligned(states.size(), params.size());
  const std::size_t n = states.size();

  std::vector<double> fbg(n);
  for (std::size_t i = 0; i < n; ++i) fbg[i] = states[i].b;

  switch (spec.kind) {
    case PolicyKind::visit_no_one:
      return {};
    case PolicyKind::visit_everyone: {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    }
    case PolicyKind::asc_fbg:
    case PolicyKind::desc_fbg: {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      if (spec.kind == PolicyKind::asc_fbg) {
        rank_by(idx, fbg, std::less<>{});
      } else {
        rank_by(idx, fbg, std::greater<>{});
      }
      return first_n(std::move(idx), capacity);
    }
    default:
      break;
  }

  std::vector<std::size_t> interest = interest_set(states, params);
  if (interest.size() <= capacity) return interest;

  switch (spec.kind) {
    case PolicyKind::ea_asc_fbg:
      rank_by(interest, fbg, std::less<>{});
      break;
    case PolicyKind::ea_desc_fbg:
      rank_by(interest, fbg, std::greater<>{});
      break;
    case PolicyKind::ea_desc_vtg: {
      std::vector<std::size_t> vtg(n, 0);
      for (std::size_t i : interest) {
        vtg[i] = rollout_single(states[i], params[i], periods_remaining, spec.delta).v_tilde;
      }
      rank_by(interest, vtg, std::greater<>{});
      break;
    }
    case PolicyKind::ea_desc_vtg_per_visit: {
      // Zero predicted visits ranks as +inf; those ties go to the larger v_tilde.
      std::vector<std::pair<double, std::size_t>> key(n);
      for (std::size_t i : interest) {
        const RolloutSummary r = rollout_single(states[i], params[i], periods_remaining, spec.delta);
        const double ratio = r.visits == 0 ? std::numeric_limits<double>::infinity()
                                           : static_cast<double>(r.v_tilde) / r.visits;
        key[i] = {ratio, r.visits == 0 ? r.v_tilde : 0};
      }
      rank_by(interest, key, std::greater<>{});
      break;
    }
    default:
      break;
  }
  return first_n(std::move(interest), capacity);
}

}  // namespace chw
