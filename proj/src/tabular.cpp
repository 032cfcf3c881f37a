#include "fan/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fan/errors.hpp"
#include "fan/rng.hpp"

namespace fan {

namespace {

constexpr double kOracleClamp = 1e-9;

void normalize(std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) {
        sum += x;
    }
    for (double& x : v) {
        x /= sum;
    }
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    double tv = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        tv += std::abs(a[i] - b[i]);
    }
    return 0.5 * tv;
}

}  // namespace

void TabularProblem::validate() const {
    if (n < 2) {
        throw ConfigError("tabular: need at least two actions");
    }
    if (static_cast<int>(prior.size()) != n || static_cast<int>(target.size()) != n ||
        static_cast<int>(q_values.size()) != n) {
        throw ShapeError("tabular: field lengths must equal n");
    }
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!(prior[static_cast<std::size_t>(i)] > 0.0)) {
            throw ConfigError("tabular: prior must be strictly positive");
        }
        if (!(target[static_cast<std::size_t>(i)] > 0.0)) {
            throw ConfigError("tabular: target must be strictly positive");
        }
        sp += prior[static_cast<std::size_t>(i)];
        sq += target[static_cast<std::size_t>(i)];
    }
    if (std::abs(sp - 1.0) > 1e-12) {
        throw ConfigError("tabular: prior must sum to 1 within 1e-12");
    }
    if (std::abs(sq - 1.0) > 1e-12) {
        throw ConfigError("tabular: target must sum to 1 within 1e-12");
    }
    if (!(alpha > 0.0)) {
        throw ConfigError("tabular: alpha must be > 0");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("tabular: epsilon must be > 0");
    }
}

TabularProblem TabularProblem::random(int n, std::uint64_t seed) {
    Rng rng(seed);
    TabularProblem p;
    p.n = n;
    p.prior.resize(static_cast<std::size_t>(n));
    p.target.resize(static_cast<std::size_t>(n));
    p.q_values.resize(static_cast<std::size_t>(n));
    for (double& v : p.prior) {
        v = rng.uniform(0.05, 1.0);
    }
    normalize(p.prior);
    const double mu = rng.uniform(0.0, static_cast<double>(n - 1));
    const double sigma = rng.uniform(0.4, 2.0);
    for (int i = 0; i < n; ++i) {
        const double dc = static_cast<double>(i) - mu;
        p.target[static_cast<std::size_t>(i)] = std::exp(-dc * dc / (2.0 * sigma * sigma));
    }
    normalize(p.target);
    for (double& v : p.q_values) {
        v = rng.uniform(-1.0, 1.0);
    }
    p.alpha = rng.uniform(0.2, 2.0);
    p.epsilon = rng.uniform(0.005, 0.3);
    return p;
}

std::vector<double> closed_form_policy(const TabularProblem& p, double beta) {
    p.validate();
    if (beta < 0.0) {
        throw ConfigError("tabular: beta must be >= 0");
    }
    const double denom = p.alpha + beta;
    if (!(denom > 0.0)) {
        throw ConfigError("tabular: alpha + beta must be > 0");
    }
    std::vector<double> logw(static_cast<std::size_t>(p.n));
    for (int a = 0; a < p.n; ++a) {
        const std::size_t i = static_cast<std::size_t>(a);
        logw[i] = (p.alpha * std::log(p.target[i]) + beta * std::log(p.prior[i]) + p.q_values[i]) / denom;
    }
    const double m = *std::max_element(logw.begin(), logw.end());
    std::vector<double> out(static_cast<std::size_t>(p.n));
    double sum = 0.0;
    for (int a = 0; a < p.n; ++a) {
        out[static_cast<std::size_t>(a)] = std::exp(logw[static_cast<std::size_t>(a)] - m);
        sum += out[static_cast<std::size_t>(a)];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

double kl_between(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ShapeError("tabular: KL operands must match");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > 0.0) {
            kl += a[i] * (std::log(a[i]) - std::log(b[i]));
        }
    }
    return kl;
}

BetaSolution solve_beta_star(const TabularProblem& p) {
    p.validate();

    // KL(pi_beta || pi_t) must never increase along the betas we evaluate;
    // the KKT argument implies a unique root but not monotonicity, so the
    // solver checks rather than assumes.
    std::vector<std::pair<double, double>> samples;
    auto kl_at = [&](double beta) {
        const std::vector<double> pi = closed_form_policy(p, beta);
        const double kl = kl_between(pi, p.prior);
        samples.emplace_back(beta, kl);
        return kl;
    };
    auto check_monotone = [&]() {
        std::sort(samples.begin(), samples.end());
        for (std::size_t i = 1; i < samples.size(); ++i) {
            if (samples[i].second > samples[i - 1].second + 1e-12) {
                throw SolverError("tabular: KL(pi_beta || pi_t) increased with beta");
            }
        }
    };

    const double kl0 = kl_at(0.0);
    if (kl0 <= p.epsilon) {
        BetaSolution sol;
        sol.beta_star = 0.0;
        sol.policy = closed_form_policy(p, 0.0);
        sol.kl_to_prior = kl0;
        sol.constraint_active = false;
        check_monotone();
        return sol;
    }

    double lo = 0.0;
    double hi = 1.0;
    double kl_hi = kl_at(hi);
    int doublings = 0;
    while (kl_hi > p.epsilon) {
        lo = hi;
        hi *= 2.0;
        kl_hi = kl_at(hi);
        if (++doublings > 200) {
            throw SolverError("tabular: could not bracket beta* within 200 doublings");
        }
    }

    double beta = hi;
    double kl = kl_hi;
    for (int iter = 0; iter < 2000; ++iter) {
        beta = 0.5 * (lo + hi);
        kl = kl_at(beta);
        if (std::abs(kl - p.epsilon) <= 1e-10) {
            break;
        }
        if (kl > p.epsilon) {
            lo = beta;
        } else {
            hi = beta;
        }
    }
    if (std::abs(kl - p.epsilon) > 1e-10) {
        throw SolverError("tabular: bisection failed to reach |KL - epsilon| <= 1e-10");
    }
    check_monotone();

    BetaSolution sol;
    sol.beta_star = beta;
    sol.policy = closed_form_policy(p, beta);
    sol.kl_to_prior = kl;
    sol.constraint_active = true;
    return sol;
}

double trust_region_objective(const TabularProblem& p, const std::vector<double>& pi) {
    double v_prior = 0.0;
    for (int a = 0; a < p.n; ++a) {
        v_prior += p.prior[static_cast<std::size_t>(a)] * p.q_values[static_cast<std::size_t>(a)];
    }
    double obj = 0.0;
    for (int a = 0; a < p.n; ++a) {
        const std::size_t i = static_cast<std::size_t>(a);
        obj += pi[i] * (p.q_values[i] - v_prior);
    }
    obj -= p.alpha * kl_between(pi, p.target);
    return obj;
}

std::vector<double> oracle_solve(const TabularProblem& p, double mesh_step) {
    p.validate();
    if (p.n > 4) {
        throw CapacityError("tabular: oracle supports n <= 4");
    }
    if (!(mesh_step > 0.0) || mesh_step > 0.002) {
        throw ConfigError("tabular: mesh_step must be in (0, 0.002]");
    }
    const int m = static_cast<int>(std::lround(1.0 / mesh_step));

    std::vector<double> log_prior(static_cast<std::size_t>(p.n));
    std::vector<double> log_target(static_cast<std::size_t>(p.n));
    double v_prior = 0.0;
    for (int a = 0; a < p.n; ++a) {
        const std::size_t i = static_cast<std::size_t>(a);
        log_prior[i] = std::log(p.prior[i]);
        log_target[i] = std::log(p.target[i]);
        v_prior += p.prior[i] * p.q_values[i];
    }

    bool found = false;
    double best_obj = 0.0;
    std::vector<double> best;
    std::vector<int> counts(static_cast<std::size_t>(p.n), 0);
    std::vector<double> pi(static_cast<std::size_t>(p.n));

    std::function<void(int, int)> enumerate = [&](int dim, int remaining) {
        if (dim == p.n - 1) {
            counts[static_cast<std::size_t>(dim)] = remaining;
            double sum = 0.0;
            for (int a = 0; a < p.n; ++a) {
                pi[static_cast<std::size_t>(a)] = std::max(
                    static_cast<double>(counts[static_cast<std::size_t>(a)]) / static_cast<double>(m),
                    kOracleClamp);
                sum += pi[static_cast<std::size_t>(a)];
            }
            double kl_prior = 0.0;
            for (int a = 0; a < p.n; ++a) {
                pi[static_cast<std::size_t>(a)] /= sum;
                const double v = pi[static_cast<std::size_t>(a)];
                kl_prior += v * (std::log(v) - log_prior[static_cast<std::size_t>(a)]);
            }
            if (kl_prior > p.epsilon) {
                return;
            }
            double obj = 0.0;
            for (int a = 0; a < p.n; ++a) {
                const std::size_t i = static_cast<std::size_t>(a);
                obj += pi[i] * (p.q_values[i] - v_prior);
                obj -= p.alpha * pi[i] * (std::log(pi[i]) - log_target[i]);
            }
            if (!found || obj > best_obj) {
                found = true;
                best_obj = obj;
                best = pi;
            }
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            counts[static_cast<std::size_t>(dim)] = c;
            enumerate(dim + 1, remaining - c);
        }
    };
    enumerate(0, m);

    if (!found) {
        throw SolverError("tabular: no feasible mesh point; epsilon too small for this mesh");
    }
    return best;
}

Prop1Report verify_prop1(const TabularProblem& p, double mesh_step) {
    Prop1Report report;

    const BetaSolution sol = solve_beta_star(p);
    report.beta_star = sol.beta_star;

    const std::vector<double> oracle = oracle_solve(p, mesh_step);
    report.tv_closed_vs_oracle = total_variation(sol.policy, oracle);
    report.tv_tolerance = 2.0 * mesh_step * static_cast<double>(p.n);

    // Advantage form: Q - V^{pi_t} shifts all values by a constant; the
    // normalization must absorb it.
    double v_prior = 0.0;
    for (int a = 0; a < p.n; ++a) {
        v_prior += p.prior[static_cast<std::size_t>(a)] * p.q_values[static_cast<std::size_t>(a)];
    }
    TabularProblem shifted = p;
    for (double& q : shifted.q_values) {
        q -= v_prior;
    }
    const std::vector<double> pi_adv = closed_form_policy(shifted, sol.beta_star);
    for (int a = 0; a < p.n; ++a) {
        report.q_vs_advantage_max_diff =
            std::max(report.q_vs_advantage_max_diff,
                     std::abs(pi_adv[static_cast<std::size_t>(a)] - sol.policy[static_cast<std::size_t>(a)]));
    }

    report.slackness_residual = std::abs(sol.beta_star * (sol.kl_to_prior - p.epsilon));

    // Interpolation limits.
    const std::vector<double> pi_big_beta = closed_form_policy(p, 1e12);
    report.tv_beta_large_vs_prior = total_variation(pi_big_beta, p.prior);

    TabularProblem zero_q = p;
    std::fill(zero_q.q_values.begin(), zero_q.q_values.end(), 0.0);
    const std::vector<double> pi_pure = closed_form_policy(zero_q, 0.0);
    for (int a = 0; a < p.n; ++a) {
        report.pure_target_max_diff =
            std::max(report.pure_target_max_diff,
                     std::abs(pi_pure[static_cast<std::size_t>(a)] - p.target[static_cast<std::size_t>(a)]));
    }

    report.min_policy_entry = *std::min_element(sol.policy.begin(), sol.policy.end());

    report.pass = true;
    if (report.tv_closed_vs_oracle > report.tv_tolerance) {
        report.pass = false;
        report.failure = "closed form vs oracle total variation exceeds tolerance";
    } else if (report.q_vs_advantage_max_diff > 1e-12) {
        report.pass = false;
        report.failure = "Q vs advantage shift invariance violated";
    } else if (report.slackness_residual > 1e-8) {
        report.pass = false;
        report.failure = "complementary slackness residual exceeds 1e-8";
    } else if (report.tv_beta_large_vs_prior > 1e-6) {
        report.pass = false;
        report.failure = "large-beta limit does not recover the prior";
    } else if (report.pure_target_max_diff > 1e-12) {
        report.pass = false;
        report.failure = "beta=0, Q=0 limit does not recover the target";
    }
    return report;
}

std::vector<Prop1BatteryRow> verify_prop1_battery(int count, std::uint64_t base_seed, double mesh_step) {
    std::vector<Prop1BatteryRow> rows;
    rows.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Prop1BatteryRow row;
        row.seed = base_seed + static_cast<std::uint64_t>(i);
        row.report = verify_prop1(TabularProblem::random(3, row.seed), mesh_step);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace fan
