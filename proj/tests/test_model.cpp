#include <doctest.h>

#include <cmath>
#include <random>

#include "chw/model.hpp"
#include "chw/scenarios.hpp"

using namespace chw;

namespace {

PatientParams group(const char * name)
{
  for (const auto & g : builtin_groups()) {
    if (g.name == name) return from_features(g.centroid, 0.2, 0.2);
  }
  throw std::logic_error("no such group");
}

}  // namespace

TEST_CASE("step_fbg examples")
{
  PatientParams q;
  q.p = 0.05;
  CHECK(step_fbg(PatientState::make(5.0, 0, 0, false), q, false, false, 0.0) == doctest::Approx(5.05).epsilon(1e-15));

  q.p = 5.0;
  q.mu = 4.0;
  q.alpha = 2.0;
  CHECK(step_fbg(PatientState::make(5.0, 0, 0, true), q, true, true, 0.0) == doctest::Approx(4.0).epsilon(1e-15));

  q = PatientParams{};
  CHECK(step_fbg(PatientState::make(5.0, 0, 0, false), q, false, false, 0.0) == 5.0);
}

TEST_CASE("step_fbg adds noise and is not clamped")
{
  PatientParams q;
  q.mu = 3.0;
  CHECK(step_fbg(PatientState::make(1.0, 0, 0, true), q, false, true, -0.5) == doctest::Approx(-2.5));
}

TEST_CASE("PatientState::make clamps b at zero")
{
  CHECK(PatientState::make(-1.0, 0.3, 0.4, true).b == 0.0);
  const PatientParams q = group("A");
  const PatientState s = PatientState::initial(q, 5.0);
  CHECK(s.s == 0.0);
  CHECK(s.theta == q.theta_base);
  CHECK_FALSE(s.z_prev);
}

TEST_CASE("step_adverse examples")
{
  PatientParams q;
  q.s_base = 0.5;
  q.beta = 0.5;
  q.gamma = 0.2;
  CHECK(step_adverse(0.5, q, true, true) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(step_adverse(1.0, q, false, true) == doctest::Approx(0.6).epsilon(1e-15));
  for (double s : {0.0, 0.7, 3.0}) {
    CHECK(step_adverse(s, q, true, false) == 0.0);
    CHECK(step_adverse(s, q, false, false) == 0.0);
  }
}

TEST_CASE("step_perception examples")
{
  PatientParams q;
  q.theta_base = 0.5;
  q.lambda = 0.5;
  q.rho = 0.2;
  CHECK(step_perception(0.5, q, true, true) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(step_perception(0.0, q, false, false) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(step_perception(q.theta_base, q, false, true) == doctest::Approx(q.theta_base).epsilon(1e-15));
}

TEST_CASE("step_perception floors at zero")
{
  PatientParams q;
  q.theta_base = 0.2;
  q.lambda = 1.0;
  CHECK(step_perception(0.2, q, true, true) == 0.0);
}

TEST_CASE("benefit examples")
{
  PatientParams q = group("A");
  for (double s : {0.0, 1.0, 5.0}) {
    CHECK(benefit(PatientState::make(5.0, s, 0.0, true), q, false) == q.mu);
  }
  const PatientState at_base = PatientState::make(5.0, q.s_base, q.theta_base, true);
  CHECK(benefit(at_base, q, false) == doctest::Approx(-0.675).epsilon(1e-14));
  CHECK(benefit(at_base, q, true) == doctest::Approx(-0.785).epsilon(1e-14));
}

TEST_CASE("enroll_decision examples")
{
  CHECK_FALSE(enroll_decision(false, false, 10.0));
  CHECK(enroll_decision(true, false, 0.0));
  CHECK_FALSE(enroll_decision(true, false, -0.1));
  static_assert(enroll_decision(false, true, 0.0));
}

TEST_CASE("enroll_decision is nondecreasing in z_prev")
{
  for (bool y : {false, true}) {
    for (double B : {-1.0, 0.0, 1.0}) {
      CHECK(enroll_decision(true, y, B) >= enroll_decision(false, y, B));
    }
  }
}

TEST_CASE("step_patient examples")
{
  const PatientParams a = group("A");
  const StepOutcome out_a = step_patient(PatientState::make(5.0, 0.0, 0.7, false), a, true, 0.0);
  CHECK_FALSE(out_a.enrolled);
  CHECK(out_a.next.b == doctest::Approx(5.05).epsilon(1e-15));
  CHECK(out_a.next.s == 0.0);
  CHECK_FALSE(out_a.next.z_prev);

  const StepOutcome idle = step_patient(PatientState::make(5.0, 0.0, 0.3, false), a, false, 0.0);
  CHECK_FALSE(idle.enrolled);
  CHECK(idle.next.s == 0.0);
  CHECK(idle.next.theta == doctest::Approx(0.2 * (0.3 - 0.7) + 0.7));

  const PatientParams b = group("B");
  const PatientState start = PatientState::make(6.0, 0.0, 0.7, false);
  CHECK(benefit(start, b, true) == doctest::Approx(4.838).epsilon(1e-14));
  const StepOutcome out_b = step_patient(start, b, true, 0.0);
  CHECK(out_b.enrolled);
  CHECK(out_b.next.z_prev);
  CHECK(out_b.next.b == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("constant drift compounds FBG geometrically")
{
  PatientParams q;
  q.p = 0.037;
  const double b0 = std::log(140.0);
  PatientState s = PatientState::make(b0, 0.0, 0.0, false);
  for (int n = 1; n <= 60; ++n) {
    s = step_patient(s, q, false, 0.0).next;
    const double expected = std::exp(b0) * std::exp(n * q.p);
    CHECK(std::abs(std::exp(s.b) / expected - 1.0) <= 1e-12);
  }
}

TEST_CASE("adverse factors and perception decay to their baselines")
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::uniform_real_distribution<double> disc(0.05, 0.95);
  for (int k = 0; k < 200; ++k) {
    PatientParams q;
    q.s_base = u(rng);
    q.theta_base = u(rng);
    q.gamma = disc(rng);
    q.rho = disc(rng);
    const double s0 = u(rng);
    const double theta0 = u(rng);
    double s = s0;
    double theta = theta0;
    for (int t = 1; t <= 30; ++t) {
      s = step_adverse(s, q, false, true);
      theta = step_perception(theta, q, false, t % 2 == 0);
      CHECK(std::abs(s - q.s_base) <= std::pow(q.gamma, t) * std::abs(s0 - q.s_base) * (1 + 1e-12) + 1e-15);
      CHECK(std::abs(theta - q.theta_base) <=
            std::pow(q.rho, t) * std::abs(theta0 - q.theta_base) * (1 + 1e-12) + 1e-15);
    }
  }
}

TEST_CASE("step_patient composes the atomic operations")
{
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::uniform_real_distribution<double> disc(0.05, 0.95);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::bernoulli_distribution coin(0.5);
  for (int k = 0; k < 1000; ++k) {
    PatientParams q;
    q.p = u(rng);
    q.mu = u(rng);
    q.alpha = u(rng);
    q.beta = u(rng);
    q.lambda = u(rng);
    q.s_base = u(rng);
    q.theta_base = u(rng);
    q.gamma = disc(rng);
    q.rho = disc(rng);
    const PatientState state = PatientState::make(5.0 + u(rng), u(rng), u(rng), coin(rng));
    const bool y = coin(rng);
    const double xi = noise(rng);

    const bool z = enroll_decision(state.z_prev, y, benefit(state, q, y));
    const StepOutcome out = step_patient(state, q, y, xi);
    CHECK(out.enrolled == z);
    CHECK(out.next.z_prev == z);
    CHECK(out.next.b == std::max(0.0, step_fbg(state, q, y, z, xi)));
    CHECK(out.next.s == step_adverse(state.s, q, y, z));
    CHECK(out.next.theta == step_perception(state.theta, q, y, z));
  }
}

TEST_CASE("feature vector round trip")
{
  const PatientParams q = group("E");
  CHECK(from_features(to_features(q), q.gamma, q.rho) == q);
  CHECK(to_features(q)[0] == q.p);
  CHECK(to_features(q)[3] == q.theta_base);
  CHECK(to_features(q)[6] == q.beta);
}

TEST_CASE("validate rejects discounts outside (0,1) and negative parameters")
{
  PatientParams q = group("B");
  CHECK(q.validate().empty());
  q.gamma = 1.0;
  CHECK_FALSE(q.validate().empty());
  q = group("B");
  q.mu = -0.1;
  CHECK_FALSE(q.validate().empty());
  CHECK_FALSE(group("D").is_effective());
  CHECK(group("C").is_effective());
}
