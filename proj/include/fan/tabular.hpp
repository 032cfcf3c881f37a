#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fan {

// One finite-action trust-region instance: prior policy pi_t, state-action
// values Q, shaping target q, regularization weight alpha, and trust-region
// radius epsilon (nats).
struct TabularProblem {
    int n = 0;
    std::vector<double> prior;     // pi_t, strictly positive, normalized
    std::vector<double> target;    // q, strictly positive, normalized
    std::vector<double> q_values;  // Q
    double alpha = 1.0;
    double epsilon = 0.05;

    void validate() const;

    // Seeded random instance for verification batteries: positive prior,
    // discretized-Gaussian target, Q in [-1, 1], alpha in [0.2, 2],
    // epsilon in [0.005, 0.3].
    static TabularProblem random(int n, std::uint64_t seed);
};

// Geometric interpolation policy for a frozen multiplier beta:
// log w_a = (alpha log q_a + beta log pi_t[a] + Q_a) / (alpha + beta),
// normalized over actions. Requires alpha + beta > 0.
std::vector<double> closed_form_policy(const TabularProblem& p, double beta);

double kl_between(const std::vector<double>& a, const std::vector<double>& b);

struct BetaSolution {
    double beta_star = 0.0;
    std::vector<double> policy;
    double kl_to_prior = 0.0;
    bool constraint_active = false;
};

// Finds the multiplier satisfying the KKT conditions: beta* = 0 when the
// unconstrained optimum already satisfies KL(pi || pi_t) <= epsilon, else
// the root of KL(pi_beta || pi_t) = epsilon by bracket doubling from [0, 1]
// and bisection to |KL - epsilon| <= 1e-10. KL is verified non-increasing
// over every beta the solver evaluates; a violation > 1e-12 throws.
BetaSolution solve_beta_star(const TabularProblem& p);

// Exhaustive simplex search: enumerates all mesh points (integer
// compositions of 1/mesh_step), keeps those with KL(pi || pi_t) <= epsilon,
// and maximizes sum_a pi_a A_a - alpha KL(pi || q) with A = Q - sum pi_t Q.
// Entries are clamped to >= 1e-9 and renormalized. Ties keep the first
// point in enumeration order.
std::vector<double> oracle_solve(const TabularProblem& p, double mesh_step);

// The regularized trust-region objective the oracle maximizes.
double trust_region_objective(const TabularProblem& p, const std::vector<double>& pi);

struct Prop1Report {
    double beta_star = 0.0;
    double tv_closed_vs_oracle = 0.0;
    double tv_tolerance = 0.0;
    double q_vs_advantage_max_diff = 0.0;
    double slackness_residual = 0.0;
    double tv_beta_large_vs_prior = 0.0;
    double pure_target_max_diff = 0.0;  // Q = 0, beta = 0 against q
    double min_policy_entry = 0.0;
    bool pass = false;
    std::string failure;
};

// Checks one instance against Proposition 1: closed form vs oracle within
// 2 * mesh * n total variation, Q-vs-advantage shift invariance to 1e-12,
// both interpolation limits, and complementary slackness to 1e-8.
Prop1Report verify_prop1(const TabularProblem& p, double mesh_step);

struct Prop1BatteryRow {
    std::uint64_t seed = 0;
    Prop1Report report;
};

// Runs verify_prop1 on count seeded n=3 problems. Rows come back in seed
// order; the caller renders or persists them.
std::vector<Prop1BatteryRow> verify_prop1_battery(int count, std::uint64_t base_seed, double mesh_step);

}  // namespace fan
