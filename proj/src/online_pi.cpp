#include "radp/online_pi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "radp/errors.hpp"

namespace radp {

SampleWindow make_window(const ObservedTrajectory& data, double interval, std::size_t count, double start) {
    if (!(interval > 0)) throw std::invalid_argument("make_window: interval must be positive");
    if (data.samples() < 2) throw EmptyInterval(0);
    const double h = data.time[1] - data.time[0];
    SampleWindow w;
    w.data = &data;
    w.boundaries.reserve(count + 1);
    for (std::size_t k = 0; k <= count; ++k) {
        const double t = start + static_cast<double>(k) * interval;
        const auto it = std::lower_bound(data.time.begin(), data.time.end(), t - 1e-6 * h);
        if (it == data.time.end()) throw EmptyInterval(k == 0 ? 0 : k - 1);
        const auto idx = static_cast<std::size_t>(it - data.time.begin());
        if (k > 0 && idx <= w.boundaries.back()) throw EmptyInterval(k - 1);
        w.boundaries.push_back(idx);
    }
    return w;
}

RegressionProblem assemble_regression(const SampleWindow& window, const BasisSet& basis_value,
                                      const BasisSet& basis_policy, const Approximant& policy, const CostSpec& cost) {
    if (window.data == nullptr) throw std::invalid_argument("assemble_regression: window has no data");
    const ObservedTrajectory& d = *window.data;
    if (basis_value.dim() != d.x.rows()) throw DimensionMismatch("value basis", d.x.rows(), basis_value.dim());
    if (basis_policy.dim() != d.x.rows()) throw DimensionMismatch("policy basis", d.x.rows(), basis_policy.dim());
    const int n1 = basis_value.size();
    const int n2 = basis_policy.size();
    const double r = cost.control_weight;
    const auto rows = static_cast<Eigen::Index>(window.intervals());

    RegressionProblem prob;
    prob.theta = Matrix::Zero(rows, n1 + n2);
    prob.target = Vector::Zero(rows);
    prob.basis_value = basis_value;
    prob.basis_policy = basis_policy;

    Vector phi_u(n2);
    for (Eigen::Index k = 0; k < rows; ++k) {
        const std::size_t a = window.boundaries[static_cast<std::size_t>(k)];
        const std::size_t b = window.boundaries[static_cast<std::size_t>(k) + 1];
        if (b <= a) throw EmptyInterval(static_cast<std::size_t>(k));
        prob.theta.row(k).head(n1) = (basis_value.values(d.state(b)) - basis_value.values(d.state(a))).transpose();

        Vector integral = Vector::Zero(n2);
        double cost_integral = 0.0;
        for (std::size_t j = a; j <= b; ++j) {
            // composite trapezoid weights
            double wt = 0.0;
            if (j > a) wt += 0.5 * (d.time[j] - d.time[j - 1]);
            if (j < b) wt += 0.5 * (d.time[j + 1] - d.time[j]);
            const Vector x = d.state(j);
            const double ui = policy.evaluate(x);
            const double v = d.x_channel[j] - ui;
            basis_policy.values_into(x, phi_u);
            integral.noalias() += (wt * v) * phi_u;
            cost_integral += wt * cost.running(x, ui);
        }
        prob.theta.row(k).tail(n2) = (2.0 * r) * integral.transpose();
        prob.target[k] = -cost_integral;
    }
    return prob;
}

double excitation_level(const Matrix& theta, double relative_min_sv) {
    if (theta.cols() == 0) return 0.0;
    const Vector norms = theta.colwise().norm().transpose();
    if (!(norms.minCoeff() > 1e-8 * norms.maxCoeff())) return 0.0;
    return relative_min_sv * relative_min_sv;
}

PIStepResult solve_pi_step(const RegressionProblem& problem, const PEOptions& pe) {
    const Eigen::Index rows = problem.theta.rows();
    const Eigen::Index cols = problem.theta.cols();
    if (rows < cols) {
        throw std::invalid_argument(fmt::format("solve_pi_step: {} rows for {} unknowns", rows, cols));
    }
    const LeastSquaresResult ls = solve_least_squares(problem.theta, problem.target);
    PIStepResult out;
    const double l = static_cast<double>(rows);
    out.pe_ratio = excitation_level(problem.theta, ls.relative_min_sv);
    Eigen::JacobiSVD<Matrix> raw(problem.theta);
    const double smin = raw.singularValues()[raw.singularValues().size() - 1];
    out.min_singular_value = smin * smin / l;
    if (!(out.pe_ratio >= pe.delta_relative)) throw PEViolation(out.pe_ratio, pe.delta_relative);

    const int n1 = problem.basis_value.size();
    const int n2 = problem.basis_policy.size();
    out.value = Approximant(problem.basis_value, ls.solution.head(n1));
    out.next_policy = Approximant(problem.basis_policy, ls.solution.tail(n2));
    out.residuals = ls.residuals;
    out.residual_rms = ls.rms;
    return out;
}

ExplorationSignal::ExplorationSignal(double amplitude, std::uint64_t seed, std::size_t components, double f_lo,
                                     double f_hi)
    : amplitude_(amplitude), seed_(seed) {
    if (components == 0) throw std::invalid_argument("ExplorationSignal: need at least one component");
    freq_ = components == 1 ? std::vector<double>{f_lo} : log_space(f_lo, f_hi, components);
    std::mt19937_64 rng(seed);
    phase_.reserve(components);
    for (std::size_t k = 0; k < components; ++k) {
        // 53-bit mantissa from the raw engine output; portable across standard libraries
        const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        phase_.push_back(2.0 * std::numbers::pi * unit);
    }
}

double ExplorationSignal::operator()(double t) const {
    if (amplitude_ == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < freq_.size(); ++k) s += std::sin(2.0 * std::numbers::pi * freq_[k] * t + phase_[k]);
    return amplitude_ * s / static_cast<double>(freq_.size());
}

OnlineRun learn_from_data(ObservedTrajectory data, const Approximant& u0, const OnlinePIConfig& config) {
    OnlineRun run;
    run.data = std::move(data);
    const SampleWindow window = make_window(run.data, config.interval, config.interval_count());
    Approximant policy = u0;
    Vector previous;
    for (int i = 0; i < config.max_iter; ++i) {
        OnlineIteration it;
        it.iteration = i;
        it.policy = policy;
        const RegressionProblem prob =
            assemble_regression(window, config.basis_value, config.basis_policy, policy, config.cost);
        it.step = solve_pi_step(prob, config.pe);
        Vector current(it.step.value.weights().size() + it.step.next_policy.weights().size());
        current << it.step.value.weights(), it.step.next_policy.weights();
        if (i > 0) it.weight_change = (current - previous).norm() / std::max(current.norm(), 1e-300);
        previous = current;
        policy = it.step.next_policy;
        run.iterations.push_back(std::move(it));
        if (i > 0 && run.iterations.back().weight_change < config.tol) {
            run.converged = true;
            run.converged_at = i;
            break;
        }
    }
    return run;
}

OnlineRun run_online_pi(Plant& plant, const Approximant& u0, const ExplorationSignal& exploration,
                        const OnlinePIConfig& config) {
    const double horizon = config.interval * static_cast<double>(config.interval_count());
    const Controller ctrl = [&u0, &exploration](const Vector& x, double, double t) {
        return u0.evaluate(x) + exploration(t);
    };
    return learn_from_data(plant.run(ctrl, horizon), u0, config);
}

std::vector<double> nested_residuals(const SampleWindow& window, const Approximant& policy, const CostSpec& cost,
                                     const std::vector<std::pair<BasisSet, BasisSet>>& schedule) {
    std::vector<double> out;
    for (const auto& [bv, bu] : schedule) {
        const RegressionProblem prob = assemble_regression(window, bv, bu, policy, cost);
        out.push_back(solve_least_squares(prob.theta, prob.target).rms);
    }
    return out;
}

TwoLoopResult two_loop_optimize(Plant& plant, const Approximant& u0, const ExplorationSignal& exploration,
                                double threshold, const std::vector<std::pair<BasisSet, BasisSet>>& schedule,
                                const OnlinePIConfig& base) {
    if (schedule.empty()) throw ScheduleExhausted("basis schedule is empty", std::numeric_limits<double>::infinity());
    for (std::size_t s = 1; s < schedule.size(); ++s) {
        const int prev = schedule[s - 1].first.size() + schedule[s - 1].second.size();
        const int cur = schedule[s].first.size() + schedule[s].second.size();
        if (cur <= prev) throw std::invalid_argument("two_loop_optimize: schedule must grow strictly");
    }
    TwoLoopResult out;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < schedule.size(); ++s) {
        OnlinePIConfig cfg = base;
        cfg.basis_value = schedule[s].first;
        cfg.basis_policy = schedule[s].second;
        OnlineRun run = run_online_pi(plant, u0, exploration, cfg);
        const double res = run.residual_rms();
        out.stage_residuals.push_back(res);
        best = std::min(best, res);
        if (res <= threshold) {
            out.run = std::move(run);
            out.stage = s;
            return out;
        }
    }
    throw ScheduleExhausted(fmt::format("no basis in the schedule reached residual {:.3e}", threshold), best);
}

} // namespace radp
