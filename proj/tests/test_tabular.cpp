#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fan/errors.hpp"
#include "fan/rng.hpp"
#include "fan/tabular.hpp"

using namespace fan;

namespace {

TabularProblem spec_instance(double epsilon = 0.05) {
    TabularProblem p;
    p.n = 3;
    p.prior = {0.5, 0.3, 0.2};
    p.target = {0.2, 0.5, 0.3};
    p.q_values = {1.0, 0.0, -1.0};
    p.alpha = 1.0;
    p.epsilon = epsilon;
    return p;
}

}  // namespace

TEST_CASE("closed form matches a hand evaluation of the interpolation") {
    // log w = (alpha log q + beta log pi_t + Q) / (alpha + beta) with
    // alpha = beta = 1 reduces to sqrt(q * pi_t * e^Q), normalized.
    const TabularProblem p = spec_instance();
    const std::vector<double> pi = closed_form_policy(p, 1.0);
    const double w0 = std::sqrt(0.2 * 0.5 * std::exp(1.0));
    const double w1 = std::sqrt(0.5 * 0.3);
    const double w2 = std::sqrt(0.3 * 0.2 * std::exp(-1.0));
    const double z = w0 + w1 + w2;
    CHECK(pi[0] == doctest::Approx(w0 / z).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(w1 / z).epsilon(1e-12));
    CHECK(pi[2] == doctest::Approx(w2 / z).epsilon(1e-12));
}

TEST_CASE("interpolation limits") {
    const TabularProblem p = spec_instance();

    // huge beta: trust region dominates, result is the prior
    const std::vector<double> pi_big = closed_form_policy(p, 1e12);
    double tv = 0.0;
    for (int a = 0; a < 3; ++a) {
        tv += std::abs(pi_big[static_cast<std::size_t>(a)] - p.prior[static_cast<std::size_t>(a)]);
    }
    CHECK(tv / 2.0 <= 1e-6);

    // Q = 0 and beta = 0: pure pull toward the target
    TabularProblem zq = p;
    zq.q_values = {0.0, 0.0, 0.0};
    const std::vector<double> pi_q = closed_form_policy(zq, 0.0);
    for (int a = 0; a < 3; ++a) {
        CHECK(pi_q[static_cast<std::size_t>(a)] ==
              doctest::Approx(p.target[static_cast<std::size_t>(a)]).epsilon(1e-12));
    }
}

TEST_CASE("shift invariance: Q plus a constant changes nothing") {
    const TabularProblem p = spec_instance();
    for (double beta : {0.0, 0.37, 2.0}) {
        const std::vector<double> base = closed_form_policy(p, beta);
        TabularProblem shifted = p;
        for (double& q : shifted.q_values) {
            q += 5.0;
        }
        const std::vector<double> moved = closed_form_policy(shifted, beta);
        for (int a = 0; a < 3; ++a) {
            CHECK(std::abs(moved[static_cast<std::size_t>(a)] - base[static_cast<std::size_t>(a)]) <=
                  1e-12);
        }
    }
}

TEST_CASE("solve_beta_star: slack, binding, and tiny trust regions") {
    // huge epsilon: constraint inactive
    const BetaSolution slack = solve_beta_star(spec_instance(1e6));
    CHECK(slack.beta_star == 0.0);
    CHECK_FALSE(slack.constraint_active);

    // tiny epsilon: the result hugs the prior
    const BetaSolution tight = solve_beta_star(spec_instance(1e-10));
    double tv = 0.0;
    for (int a = 0; a < 3; ++a) {
        tv += std::abs(tight.policy[static_cast<std::size_t>(a)] -
                       spec_instance().prior[static_cast<std::size_t>(a)]);
    }
    CHECK(tv / 2.0 <= 1e-4);

    // binding case solves KL = epsilon to 1e-10
    const BetaSolution bound = solve_beta_star(spec_instance(0.05));
    CHECK(bound.constraint_active);
    CHECK(bound.beta_star > 0.0);
    CHECK(std::abs(bound.kl_to_prior - 0.05) <= 1e-10);
}

TEST_CASE("KL to the prior is non-increasing in beta") {
    const TabularProblem p = spec_instance();
    double prev = std::numeric_limits<double>::infinity();
    for (double beta = 0.0; beta <= 64.0; beta = (beta == 0.0) ? 0.125 : beta * 2.0) {
        const double kl = kl_between(closed_form_policy(p, beta), p.prior);
        CHECK(kl <= prev + 1e-12);
        prev = kl;
    }
}

TEST_CASE("oracle: greedy and shaping limits") {
    // alpha small, epsilon huge, one dominant Q: mass piles on the best action
    TabularProblem greedy = spec_instance(1e6);
    greedy.alpha = 0.05;
    greedy.q_values = {4.0, 0.0, -1.0};
    const std::vector<double> near_vertex = oracle_solve(greedy, 0.002);
    CHECK(near_vertex[0] > 0.95);

    // alpha huge, epsilon huge: the oracle returns (approximately) q
    TabularProblem shaped = spec_instance(1e6);
    shaped.alpha = 1e6;
    const std::vector<double> near_target = oracle_solve(shaped, 0.002);
    for (int a = 0; a < 3; ++a) {
        CHECK(near_target[static_cast<std::size_t>(a)] ==
              doctest::Approx(shaped.target[static_cast<std::size_t>(a)]).epsilon(0.01));
    }

    CHECK_THROWS_AS(oracle_solve(spec_instance(), 0.01), ConfigError);
    TabularProblem big = spec_instance();
    big.n = 5;
    big.prior = {0.2, 0.2, 0.2, 0.2, 0.2};
    big.target = {0.2, 0.2, 0.2, 0.2, 0.2};
    big.q_values = {0, 0, 0, 0, 0};
    CHECK_THROWS_AS(oracle_solve(big, 0.002), CapacityError);
}

TEST_CASE("closed form agrees with the simplex oracle on the spec instance") {
    const TabularProblem p = spec_instance(0.05);
    const BetaSolution sol = solve_beta_star(p);
    const std::vector<double> oracle = oracle_solve(p, 0.002);
    double tv = 0.0;
    for (int a = 0; a < 3; ++a) {
        tv += std::abs(oracle[static_cast<std::size_t>(a)] - sol.policy[static_cast<std::size_t>(a)]);
    }
    CHECK(tv / 2.0 <= 2e-3);

    const double gap = std::abs(trust_region_objective(p, oracle) -
                                trust_region_objective(p, sol.policy));
    CHECK(gap <= 1e-4);
}

TEST_CASE("verify_prop1: fixed point and constant shift") {
    // q = pi_t and Q = 0: the prior is already optimal
    TabularProblem p;
    p.n = 3;
    p.prior = {0.5, 0.3, 0.2};
    p.target = {0.5, 0.3, 0.2};
    p.q_values = {0.0, 0.0, 0.0};
    p.alpha = 1.0;
    p.epsilon = 0.05;
    const BetaSolution sol = solve_beta_star(p);
    CHECK(sol.beta_star == 0.0);
    for (int a = 0; a < 3; ++a) {
        CHECK(sol.policy[static_cast<std::size_t>(a)] ==
              doctest::Approx(p.prior[static_cast<std::size_t>(a)]).epsilon(1e-12));
    }

    const Prop1Report report = verify_prop1(spec_instance(0.05), 0.002);
    CHECK(report.pass);
    CHECK(report.q_vs_advantage_max_diff <= 1e-12);
    CHECK(report.slackness_residual <= 1e-8);
}

TEST_CASE("randomized battery of 100 seeded problems passes") {
    const std::vector<Prop1BatteryRow> rows = verify_prop1_battery(100, 1, 0.002);
    REQUIRE(rows.size() == 100);
    int active = 0;
    for (const Prop1BatteryRow& row : rows) {
        CHECK(row.report.pass);
        CHECK(row.report.min_policy_entry > 0.0);
        active += row.report.beta_star > 0.0 ? 1 : 0;
    }
    // the battery must exercise both KKT branches
    CHECK(active > 10);
    CHECK(active < 100);
}

TEST_CASE("problem validation rejects malformed instances") {
    TabularProblem p = spec_instance();
    p.prior = {0.5, 0.5, 0.1};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = spec_instance();
    p.alpha = 0.0;
    CHECK_THROWS_AS(closed_form_policy(p, 0.0), ConfigError);
    p = spec_instance();
    CHECK_THROWS_AS(closed_form_policy(p, -1.0), ConfigError);
}
