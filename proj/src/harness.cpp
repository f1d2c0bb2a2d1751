#include "radp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "radp/errors.hpp"

namespace radp {

namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Args>
void note(LearningRun& run, fmt::format_string<Args...> f, Args&&... args) {
    run.log.push_back(fmt::format(f, std::forward<Args>(args)...));
}

IntegrationOptions integration(const RunConfig& c, double horizon) {
    IntegrationOptions io;
    io.step = c.step;
    io.horizon = horizon;
    io.blowup_bound = c.blowup;
    return io;
}

const UncertaintyModel* hidden_ptr(const Problem& p) { return p.uncertainty ? &*p.uncertainty : nullptr; }

const IssBounds& iss_of(const Problem& p) {
    if (!p.uncertainty || !p.uncertainty->iss) {
        throw std::invalid_argument(fmt::format("{}: robust redesign needs declared ISS bounds", p.name));
    }
    return *p.uncertainty->iss;
}

double learning_horizon(const RunConfig& c) {
    double h = 0.0;
    for (std::size_t s = 0; s < c.schedule.size(); ++s) {
        const OnlinePIConfig lc = make_learning_config(c, {}, s);
        h = std::max(h, lc.interval * static_cast<double>(lc.interval_count()));
    }
    return h;
}

std::vector<double> rho_ladder(const RunConfig& c) {
    return log_space(c.rho_ladder[0], c.rho_ladder[1], static_cast<std::size_t>(c.rho_ladder[2]));
}

std::string join_weights(const Approximant& a) {
    std::string s;
    for (int j = 0; j < a.weights().size(); ++j) {
        s += fmt::format("{}{} = {:.17g}\n", "  ", a.basis().label(j), a.weights()[j]);
    }
    return s;
}

// u_{i+1} of the true policy iteration from u_i, through model-based
// collocation on a ball-covering box. Only used to evaluate the redesign
// error, which the learner cannot form from data.
Approximant exact_next_policy(const Problem& p, const RunConfig& c, const Approximant& u_i, double radius) {
    const int n = p.model.n;
    const Box box = Box::symmetric(Vector::Constant(n, radius));
    const BasisSet bv = make_graded_basis(n, 2, c.oracle_degree);
    const BasisSet bu = make_graded_basis(n, 1, c.oracle_degree - 1);
    const auto grid = collocation_grid(box, bv.size(), 8);
    CollocationOptions opt;
    opt.probe_admissibility = false;
    const Approximant v = policy_evaluation_collocation(p.model, p.cost, u_i, bv, grid, opt);
    return policy_improvement(p.model, p.cost, v, bu, grid).approximant;
}

struct MatchedGains {
    Envelope envelope;
    double s_max = 0.0;
};

MatchedGains matched_envelope(const ScalarField& v, int dim, double radius) {
    MatchedGains g;
    g.envelope = sphere_envelopes(v, dim, radius);
    g.s_max = g.envelope.upper.inverse(g.envelope.lower(radius));
    return g;
}

std::optional<Rho> pick_rho(const RunConfig& c, const std::function<SmallGainReport(const Rho&)>& check) {
    const auto sel = select_rho(
        rho_ladder(c), [&](const Rho& r0) { return check(Rho::affine(r0.c0(), c.rho_slope)); },
        c.min_relative_margin);
    if (!sel) return std::nullopt;
    return Rho::affine(sel->c0(), c.rho_slope);
}

std::function<SmallGainReport(const Rho&)> matched_check(const RunConfig& c, const IssBounds& iss,
                                                         const MatchedGains& g) {
    return [&c, &iss, g](const Rho& rho) {
        return check_small_gain_matched(gamma_from_rho(rho, c.epsilon), iss.kappa1, iss.kappa2, iss.kappa3,
                                        iss.lambda_lower, g.envelope.lower, g.envelope.upper, g.s_max);
    };
}

struct UnmatchedGains {
    Envelope envelope; // of U on (x, zeta)
    double s_max = 0.0;
    ClassKFunction kappa_tilde1;
};

std::function<SmallGainReport(const Rho&)> unmatched_check(const RunConfig& c, const IssBounds& iss,
                                                           const UnmatchedGains& g, const Approximant& u_hat,
                                                           int n) {
    return [&c, &iss, g, u_hat, n](const Rho& rho) {
        const RobustPolicy xi = robust_redesign(u_hat, rho, c.r, c.epsilon);
        const ClassKFunction k8 = kappa8_envelope([xi](const Vector& x) { return xi(x); }, n, 2.0 * g.s_max);
        const ClassKFunction k9 = kappa9(iss.kappa6, iss.kappa7, k8);
        const ClassKFunction kt2 = ClassKFunction::max_of({iss.kappa2, k9});
        return check_small_gain_unmatched(gamma_one(rho, c.epsilon), g.kappa_tilde1, kt2, iss.kappa3,
                                          iss.lambda_lower, g.envelope.lower, g.envelope.upper, g.s_max);
    };
}

double threshold_or_inf(const ClassKFunction& chi1, double w_value) {
    try {
        return chi1(w_value);
    } catch (const CompositionDomain&) {
        return kInf;
    }
}

double rel_weight_error(const Approximant& got, const Approximant& want) {
    return (got.weights() - want.weights()).norm() / std::max(want.weights().norm(), 1e-300);
}

// ------------------------------------------------------------------ matched

void robust_matched(const RunConfig& c, LearningRun& out) {
    const Problem& p = out.problem;
    const IssBounds& iss = iss_of(p);
    const int n = p.model.n;
    const OnlineRun& run = *out.online;
    const Approximant& v = run.value();
    const Approximant& u_hat = run.policy();
    const Approximant& u_i = run.iterations.back().policy;
    const ScalarField vf = [v](const Vector& x) { return v.evaluate(x); };

    const MatchedGains g = matched_envelope(vf, n, c.gain_radius);
    note(out, "robust: envelopes of V on radius {:.6g}, small-gain ladder up to s = {:.6g}", c.gain_radius, g.s_max);
    const auto check = matched_check(c, iss, g);
    const auto rho = pick_rho(c, check);
    if (!rho) {
        note(out, "robust: no rho on the ladder meets the small-gain condition with relative margin {:.3g}; "
                  "keeping the learned policy",
             c.min_relative_margin);
        return;
    }
    RobustOutcome ro;
    ro.rho = *rho;
    ro.policy = robust_redesign(u_hat, *rho, c.r, c.epsilon);
    ro.envelope = g.envelope;
    ro.gain = check(*rho);
    note(out, "robust: rho = {}, small-gain margin {:.6g} (relative {:.6g})", rho->describe(), ro.gain.margin,
         ro.gain.relative_margin);

    const Approximant u_next = exact_next_policy(p, c, u_i, c.gain_radius);
    const ScalarField e_ro = redesign_error(u_hat, u_i, u_next, *rho, c.r);
    const double d_max = g.envelope.lower(c.gain_radius);
    ro.level = certify_level(vf, e_ro, ro.policy.gamma, n, c.gain_radius, d_max);
    note(out, "robust: certified level d = {:.6g} of d_max = {:.6g}, worst |e_ro|/gamma = {:.6g} on {} samples",
         ro.level.d, d_max, ro.level.worst_ratio, ro.level.samples);
    if (!(ro.level.d > 0)) {
        out.robust = std::move(ro);
        note(out, "robust: no level certified; region of attraction not estimated");
        return;
    }
    ro.chi1 = compose_chain({g.envelope.upper, ro.policy.gamma.inverse_function(), iss.kappa1,
                             iss.lambda_lower.inverse_function()});
    const ClassKFunction chi2 = iss.kappa3.compose(g.envelope.lower.inverse_function());
    ro.sigma = build_sigma(chi2, ro.chi1, ro.level.d);
    ro.roa = estimate_roa_matched(vf, iss.W, ro.level.d, ro.sigma);
    note(out, "robust: region {{max[sigma(V), W] <= {:.6g}}}, sigma(d) = {:.6g}", ro.roa.level(), ro.roa.level());

    out.robust = std::move(ro);
    RobustOutcome& rob = *out.robust;
    const int pw = p.uncertainty->p;
    const double w_radius = iss.lambda_lower.inverse(rob.roa.level());
    const auto points = sample_roa(rob.roa, n, c.gain_radius, pw, w_radius, c.ic_count, 1 + c.seed);
    if (points.size() < c.ic_count) {
        note(out, "robust: only {} of {} seeded points found inside the region", points.size(), c.ic_count);
    }
    const double d = rob.level.d;
    const auto controller = rob.policy.controller();
    for (const auto& [x0, w0] : points) {
        SettledTrajectory st{x0, 0.0, w0, 0.0, {}};
        const SimulationRecord rec =
            integrate(p.model, hidden_ptr(p), controller, {x0, 0.0, w0}, integration(c, c.settle_horizon));
        const auto& o = rec.observed;
        std::vector<double> val(o.samples()), thr(o.samples()), q0(o.samples()), env(o.samples(), 0.0);
        for (std::size_t k = 0; k < o.samples(); ++k) {
            const Vector x = o.state(k);
            val[k] = v.evaluate(x);
            const Vector w = rec.hidden_w.col(static_cast<Eigen::Index>(k));
            thr[k] = val[k] <= d ? threshold_or_inf(rob.chi1, iss.W(w)) : kInf;
            q0[k] = p.cost.reduced_state_cost(x);
        }
        st.descent = check_descent(o.time, val, thr, q0, env, kDescentSlack);
        const std::size_t last = o.samples() - 1;
        st.final_norm = std::hypot(o.state(last).norm(), rec.hidden_w.col(static_cast<Eigen::Index>(last)).norm());
        rob.trajectories.push_back(std::move(st));
    }
    std::size_t settled = 0, descending = 0, checked = 0;
    double worst = -kInf;
    for (const auto& t : rob.trajectories) {
        settled += t.final_norm <= 1e-3;
        descending += t.descent.holds;
        checked += t.descent.checked;
        worst = std::max(worst, t.descent.worst_excess);
    }
    note(out, "robust: {} points simulated for {:.6g} s, {} end within 1e-3, descent holds on {} ({} samples checked, worst excess {:.3e})",
         rob.trajectories.size(), c.settle_horizon, settled, descending, checked, worst);
}

// ------------------------------------------------------------------ cascade

void cascade_pipeline(const RunConfig& c, LearningRun& out, SimulatedPlant& plant) {
    const Problem& p = out.problem;
    const IssBounds& iss = iss_of(p);
    const int n = p.model.n;
    const OnlineRun& run = *out.online;
    const Approximant& v = run.value();
    const Approximant& u_hat = run.policy();
    const Approximant& u_i = run.iterations.back().policy;

    // U(x, zeta) = V(x) + zeta^2 / 2 does not depend on rho
    const ScalarField uf = [v](const Vector& a) {
        const Eigen::Index m = a.size() - 1;
        return v.evaluate(a.head(m)) + 0.5 * a[m] * a[m];
    };
    UnmatchedGains g;
    g.envelope = sphere_envelopes(uf, n + 1, c.gain_radius);
    g.s_max = g.envelope.upper.inverse(g.envelope.lower(c.gain_radius));
    g.kappa_tilde1 = ClassKFunction::max_of({iss.kappa1, iss.kappa5});
    note(out, "cascade: envelopes of U on radius {:.6g}, small-gain ladder up to s = {:.6g}", c.gain_radius,
         g.s_max);
    const auto check = unmatched_check(c, iss, g, u_hat, n);
    const auto rho = pick_rho(c, check);
    if (!rho) {
        note(out, "cascade: no rho on the ladder meets the small-gain condition with relative margin {:.3g}",
             c.min_relative_margin);
        throw CompositionDomain("cascade: small-gain condition fails on the whole rho ladder");
    }
    RobustOutcome ro;
    ro.rho = *rho;
    ro.policy = robust_redesign(u_hat, *rho, c.r, c.epsilon);
    ro.envelope = g.envelope;
    ro.gain = check(*rho);
    note(out, "cascade: rho = {}, small-gain margin {:.6g} (relative {:.6g})", rho->describe(), ro.gain.margin,
         ro.gain.relative_margin);

    CascadeOutcome co;
    co.state = BacksteppedState{ro.policy, v};
    const BacksteppedState& state = *co.state;

    // phase two: excite the zeta channel around the frozen virtual control
    const ExplorationSignal e2(c.phase_two_amplitude, c.seed + 1, c.components, c.f_lo, c.f_hi);
    const double k2 = c.phase_two_gain;
    const Controller collector = [state, e2, k2](const Vector& x, double z, double t) {
        return -k2 * state.zeta(x, z) + e2(t);
    };
    const ObservedTrajectory data =
        plant.run(collector, c.interval * static_cast<double>(c.phase_two_intervals));
    co.phase_two_record = plant.history().back();
    out.learning_records.push_back(plant.history().back());
    const SampleWindow window = make_window(data, c.interval, c.phase_two_intervals);
    const BasisSet basis_f = make_graded_basis(n + 1, 1, c.psi_degree);
    const BasisSet basis_g = make_graded_basis(n, 0, c.phi_degree);
    PEOptions pe;
    pe.delta_relative = c.pe_delta;
    co.phase_two = solve_phase_two(assemble_phase_two(window, basis_f, basis_g, ro.policy), pe);
    note(out, "cascade: phase two on {} intervals, residual {:.6e}, excitation level {:.6e}", window.intervals(),
         co.phase_two.residual_rms, co.phase_two.pe_ratio);

    // identification error against the known zeta dynamics, projected on the same bases
    const ZetaDynamics truth = zeta_dynamics(p.model, ro.policy);
    {
        const Box b1 = Box::symmetric(Vector::Constant(n + 1, c.gain_radius));
        const auto pts = halton_points(b1, static_cast<std::size_t>(20 * basis_f.size()));
        std::vector<double> fv;
        for (const auto& s : pts) fv.push_back(truth.f1_bar(s.head(n), s[n]));
        co.f_rel_err = rel_weight_error(co.phase_two.f_hat, project_onto(basis_f, pts, fv).approximant);
        const Box b = Box::symmetric(Vector::Constant(n, c.gain_radius));
        const auto xs = halton_points(b, static_cast<std::size_t>(20 * basis_g.size()));
        std::vector<double> gv;
        for (const auto& x : xs) gv.push_back(truth.g1_bar(x));
        co.g_rel_err = rel_weight_error(co.phase_two.g_hat, project_onto(basis_g, xs, gv).approximant);
    }
    note(out, "cascade: identification error f {:.3e}, g {:.3e} (relative, against the known cascade)",
         co.f_rel_err, co.g_rel_err);

    co.policy = backstepped_policy(ro.policy, co.phase_two.f_hat, co.phase_two.g_hat);

    const Approximant u_next = exact_next_policy(p, c, u_i, c.gain_radius);
    const ScalarField e_ro1 = redesign_error_unmatched(truth, co.policy, [u_next](const Vector& x) {
        return u_next.evaluate(x);
    });
    const ScalarField e_ro = redesign_error(u_hat, u_i, u_next, *rho, c.r);
    const ScalarField err = [e_ro1, e_ro, n](const Vector& a) {
        return std::max(std::abs(e_ro1(a)), std::abs(e_ro(a.head(n))));
    };
    const ClassKFunction gamma1 = gamma_one(*rho, c.epsilon);
    const double d_max = g.envelope.lower(c.gain_radius);
    ro.level = certify_level(uf, err, gamma1, n + 1, c.gain_radius, d_max);
    note(out, "cascade: certified level d1 = {:.6g} of {:.6g}, worst error/gamma1 = {:.6g} on {} samples",
         ro.level.d, d_max, ro.level.worst_ratio, ro.level.samples);
    if (ro.level.d > 0) {
        ro.chi1 = compose_chain({g.envelope.upper, gamma1.inverse_function(), g.kappa_tilde1,
                                 iss.lambda_lower.inverse_function()});
        const ClassKFunction chi2 = iss.kappa3.compose(g.envelope.lower.inverse_function());
        ro.sigma = build_sigma(chi2, ro.chi1, ro.level.d);
        ro.roa = estimate_roa_unmatched(uf, iss.W, ro.level.d, ro.sigma);
        note(out, "cascade: region {{max[sigma1(U), W] <= {:.6g}}}", ro.roa.level());

        out.robust = std::move(ro);
        out.cascade = std::move(co);
        RobustOutcome& rob = *out.robust;
        const BacksteppedState& st1 = *out.cascade->state;
        const double w_radius = iss.lambda_lower.inverse(rob.roa.level());
        const auto points =
            sample_roa(rob.roa, n + 1, c.gain_radius, p.uncertainty->p, w_radius, c.cascade_points, 1 + c.seed);
        const double d1 = rob.level.d;
        const auto controller = out.cascade->policy.controller();
        for (const auto& [a0, w0] : points) {
            const Vector x0 = a0.head(n);
            const double z0 = st1.z_of(a0);
            SettledTrajectory st{x0, z0, w0, 0.0, {}};
            const SimulationRecord rec =
                integrate(p.model, hidden_ptr(p), controller, {x0, z0, w0}, integration(c, c.settle_horizon));
            const auto& o = rec.observed;
            std::vector<double> val(o.samples()), thr(o.samples()), q0(o.samples()), env(o.samples());
            for (std::size_t k = 0; k < o.samples(); ++k) {
                const Vector x = o.state(k);
                const double zeta = st1.zeta(x, o.z[k]);
                val[k] = uf(stack_xz(x, zeta));
                const Vector w = rec.hidden_w.col(static_cast<Eigen::Index>(k));
                thr[k] = val[k] <= d1 ? threshold_or_inf(rob.chi1, iss.W(w)) : kInf;
                q0[k] = p.cost.reduced_state_cost(x);
                env[k] = 0.5 * c.epsilon * c.epsilon * zeta * zeta;
            }
            st.descent = check_descent(o.time, val, thr, q0, env, kDescentSlack);
            const std::size_t last = o.samples() - 1;
            const Vector w_end = rec.hidden_w.col(static_cast<Eigen::Index>(last));
            st.final_norm = std::sqrt(o.state(last).squaredNorm() + o.z[last] * o.z[last] + w_end.squaredNorm());
            rob.trajectories.push_back(std::move(st));
        }
        std::size_t settled = 0, descending = 0, checked = 0;
        double worst = -kInf;
        for (const auto& t : rob.trajectories) {
            settled += t.final_norm <= 1e-3;
            descending += t.descent.holds;
            checked += t.descent.checked;
            worst = std::max(worst, t.descent.worst_excess);
        }
        note(out, "cascade: {} points simulated for {:.6g} s, {} end within 1e-3, descent holds on {} ({} samples checked, worst excess {:.3e})",
             rob.trajectories.size(), c.settle_horizon, settled, descending, checked, worst);
        return;
    }
    note(out, "cascade: no level certified; region of attraction not estimated");
    out.robust = std::move(ro);
    out.cascade = std::move(co);
}

// ------------------------------------------------------------------ output

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_trajectory(const fs::path& file, const SimulationRecord& rec) {
    std::ofstream os(file);
    const auto& o = rec.observed;
    const Eigen::Index n = o.x.rows();
    os << "time";
    for (Eigen::Index i = 0; i < n; ++i) os << ",x" << i + 1;
    if (o.has_z()) os << ",z";
    os << ",u";
    for (Eigen::Index i = 0; i < rec.hidden_w.rows(); ++i) os << ",w" << i + 1;
    os << '\n';
    for (std::size_t k = 0; k < o.samples(); ++k) {
        os << num(o.time[k]);
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << num(o.x(i, static_cast<Eigen::Index>(k)));
        if (o.has_z()) os << ',' << num(o.z[k]);
        os << ',' << num(o.u[k]);
        for (Eigen::Index i = 0; i < rec.hidden_w.rows(); ++i) {
            os << ',' << num(rec.hidden_w(i, static_cast<Eigen::Index>(k)));
        }
        os << '\n';
    }
}

void write_iterations(const fs::path& file, const OnlineRun& run) {
    std::ofstream os(file);
    const auto& first = run.iterations.front().step;
    os << "iteration,weight_change,residual_rms,min_singular_value,pe_ratio";
    for (int j = 0; j < first.value.basis().size(); ++j) os << ",V:" << first.value.basis().label(j);
    for (int j = 0; j < first.next_policy.basis().size(); ++j) os << ",u:" << first.next_policy.basis().label(j);
    os << '\n';
    for (const auto& it : run.iterations) {
        os << it.iteration << ',' << num(it.weight_change) << ',' << num(it.step.residual_rms) << ','
           << num(it.step.min_singular_value) << ',' << num(it.step.pe_ratio);
        for (double w : it.step.value.weights()) os << ',' << num(w);
        for (double w : it.step.next_policy.weights()) os << ',' << num(w);
        os << '\n';
    }
}

void write_value_slices(const fs::path& file, const LearningRun& run) {
    std::ofstream os(file);
    const Box& om = run.invariant.omega;
    const Approximant& v0 = run.initial_value();
    const Approximant& v = run.value();
    if (om.dim() == 1) {
        os << "x1,V0,V\n";
        for (const auto& x : tensor_grid(om, 51)) os << num(x[0]) << ',' << num(v0(x)) << ',' << num(v(x)) << '\n';
        return;
    }
    // first two coordinates, the rest at the box centre
    const Vector centre = 0.5 * (om.lo + om.hi);
    const Box plane{om.lo.head(2), om.hi.head(2)};
    os << "x1,x2,V0,V\n";
    for (const auto& s : tensor_grid(plane, 51)) {
        Vector x = centre;
        x.head(2) = s;
        os << num(x[0]) << ',' << num(x[1]) << ',' << num(v0(x)) << ',' << num(v(x)) << '\n';
    }
}

void write_speed_profiles(const fs::path& file, const LearningRun& run, std::vector<std::string>& log) {
    const RunConfig& c = run.config;
    const Problem& p = run.problem;
    std::vector<std::pair<std::string, Controller>> policies;
    const Approximant u0 = p.u0;
    policies.emplace_back("u0", [u0](const Vector& x, double, double) { return u0.evaluate(x); });
    if (run.online->iterations.size() > 2) {
        const Approximant u2 = run.online->iterations[2].policy;
        policies.emplace_back("iteration_2", [u2](const Vector& x, double, double) { return u2.evaluate(x); });
    }
    const Approximant u_final = run.policy();
    policies.emplace_back("final", [u_final](const Vector& x, double, double) { return u_final.evaluate(x); });
    std::ofstream os(file);
    os << "policy,time,speed\n";
    for (const auto& [name, ctrl] : policies) {
        try {
            const auto rec = integrate(p.model, hidden_ptr(p), ctrl, p.init, integration(c, c.horizon));
            const auto sp = speed_profile_analysis(rec.observed);
            log.push_back(fmt::format("speed profile {}: {} peak(s), peak at {:.4f} s, symmetry index {:.4f}, "
                                      "movement end {:.4f} s",
                                      name, sp.peak_count, sp.peak_time, sp.symmetry_index, sp.movement_end));
            for (std::size_t k = 0; k < rec.observed.samples(); ++k) {
                os << name << ',' << num(rec.observed.time[k]) << ','
                   << num(rec.observed.x(1, static_cast<Eigen::Index>(k))) << '\n';
            }
        } catch (const StateDivergence& e) {
            log.push_back(fmt::format("speed profile {}: not bounded ({})", name, e.what()));
        }
    }
}

void write_policy(const fs::path& file, const LearningRun& run) {
    std::ofstream os(file);
    os << "final policy: " << run.final_policy_name << "\n";
    if (run.robust) {
        os << "rho(s) = " << run.robust->rho.describe() << "\n";
        os << "epsilon = " << num(run.config.epsilon) << "\n";
        os << "r = " << num(run.config.r) << "\n";
    }
    os << "learned policy u_hat:\n" << join_weights(run.policy());
    os << "learned value V_hat:\n" << join_weights(run.value());
    if (run.cascade) {
        os << "f1_hat on (x, z):\n" << join_weights(run.cascade->phase_two.f_hat);
        os << "g1_hat on x:\n" << join_weights(run.cascade->phase_two.g_hat);
    }
}

void write_roa(const fs::path& file, const LearningRun& run) {
    const RobustOutcome& ro = *run.robust;
    const int n = run.problem.model.n + (run.cascade ? 1 : 0);
    const int pw = run.problem.uncertainty->p;
    const double w_radius = iss_of(run.problem).lambda_lower.inverse(ro.roa.level()) * 2.0;
    const auto xb = level_set_boundary(ro.roa.value, ro.level.d, n, run.config.gain_radius);
    const auto wb = level_set_boundary(ro.roa.w_lyapunov, ro.roa.level(), pw, w_radius);
    std::ofstream os(file);
    write_roa_boundary(os, xb, wb);
}

} // namespace

// ------------------------------------------------------------------ public

Problem build_problem(const RunConfig& c) {
    c.validate();
    const Matrix k0 = -c.u0_gains.transpose();
    if (c.kind == "arm") {
        Problem p = build_arm_system(c.arm, c.u0_gains, c.arm_gains, c.epsilon);
        p.name = c.name;
        return p;
    }
    if (c.kind == "linear") return build_linear_problem(c.name, c.a, c.b, c.q, c.r, c.epsilon, k0, c.x0, c.region);
    if (c.kind == "robust_linear") {
        return build_robust_linear_problem(c.name, c.a, c.b, c.q, c.r, c.epsilon, k0, c.x0, c.region, c.hidden);
    }
    CascadeSpec s;
    s.a = c.a(0, 0);
    s.c_xz = c.c_xz;
    s.c_x = c.c_x;
    s.c_z = c.c_z;
    s.r = c.r;
    s.epsilon = c.epsilon;
    s.k0 = -c.u0_gains[0];
    s.x0 = c.x0.size() ? c.x0[0] : 0.0;
    s.z0 = c.z0;
    s.region_half_width = c.region;
    s.hidden = c.hidden;
    Problem p = build_cascade_problem(s);
    p.name = c.name;
    return p;
}

ExplorationSignal make_exploration(const RunConfig& c) {
    return {c.amplitude, c.seed, c.components, c.f_lo, c.f_hi};
}

OnlinePIConfig make_learning_config(const RunConfig& c, const CostSpec& cost, std::size_t stage) {
    OnlinePIConfig lc;
    lc.cost = cost;
    std::tie(lc.basis_value, lc.basis_policy) = c.schedule.at(stage).bases(c.state_dim());
    lc.interval = c.interval;
    lc.intervals = c.intervals;
    lc.pe.delta_relative = c.pe_delta;
    lc.tol = c.tol;
    lc.max_iter = c.max_iter;
    return lc;
}

InvariantSet select_invariant_set(const SystemModel& model, const std::optional<UncertaintyModel>& uncertainty,
                                  const Controller& controller, const std::vector<InitialState>& probes,
                                  const IntegrationOptions& options) {
    if (probes.empty()) throw std::invalid_argument("select_invariant_set: no probe initial conditions");
    const int n = model.n;
    const int m = model.has_z_channel ? n + 1 : n;
    Vector lo = Vector::Constant(m, kInf), hi = Vector::Constant(m, -kInf);
    for (const auto& init : probes) {
        const SimulationRecord rec =
            integrate(model, uncertainty ? &*uncertainty : nullptr, controller, init, options);
        const auto& o = rec.observed;
        for (std::size_t k = 0; k < o.samples(); ++k) {
            Vector s(m);
            s.head(n) = o.state(k);
            if (model.has_z_channel) s[n] = o.z[k];
            lo = lo.cwiseMin(s);
            hi = hi.cwiseMax(s);
        }
    }
    InvariantSet out;
    const Box full = Box{lo, hi}.inflated(0.1);
    out.omega = {full.lo.head(n), full.hi.head(n)};
    if (model.has_z_channel) out.omega1 = full;
    out.degenerate = full.degenerate(1e-12);
    return out;
}

ContainmentAudit audit_containment(const InvariantSet& set, const ObservedTrajectory& data) {
    ContainmentAudit a;
    for (std::size_t k = 0; k < data.samples(); ++k) {
        Vector s = data.state(k);
        bool inside = set.omega.contains(s);
        if (set.omega1) {
            s = stack_xz(s, data.z[k]);
            inside = set.omega1->contains(s);
        }
        ++a.samples;
        if (!inside) {
            if (a.violations == 0) {
                a.first_violation_time = data.time[k];
                a.first_violation = s;
            }
            ++a.violations;
        }
    }
    return a;
}

void run_algorithm_1(const RunConfig& c, LearningRun& out) {
    c.validate();
    out.config = c;
    out.problem = build_problem(c);
    const Problem& p = out.problem;
    const int n = p.model.n;
    note(out, "run {} ({}), state dimension {}, hidden dimension {}", c.name, c.kind, n,
         p.uncertainty ? p.uncertainty->p : 0);

    const ExplorationSignal expl = make_exploration(c);
    const bool cascade = p.model.has_z_channel;
    const Controller collector =
        cascade ? tracking_collector(p.u0, expl, c.tracking_gain)
                : Controller([u0 = p.u0, expl](const Vector& x, double, double t) { return u0.evaluate(x) + expl(t); });

    // step 1a: pick Omega from probes under u0 + e
    std::vector<InitialState> probes;
    for (double s : c.probe_scales) probes.push_back({s * p.init.x, s * p.init.z, s * p.init.w});
    const double h_learn = learning_horizon(c);
    out.invariant = select_invariant_set(p.model, p.uncertainty, collector, probes, integration(c, h_learn));
    {
        const Box& om = out.invariant.omega1 ? *out.invariant.omega1 : out.invariant.omega;
        std::string lo, hi;
        for (Eigen::Index i = 0; i < om.lo.size(); ++i) {
            lo += fmt::format("{}{:.6g}", i ? " " : "", om.lo[i]);
            hi += fmt::format("{}{:.6g}", i ? " " : "", om.hi[i]);
        }
        note(out, "omega: [{}] .. [{}] from {} probe(s) over {:.6g} s", lo, hi, probes.size(), h_learn);
    }
    if (out.invariant.degenerate) {
        note(out, "omega degenerates to a point: the probes carry no excitation, insufficient for PE");
    }

    // step 1b/2: learn under u0 + e
    SimulatedPlant plant(p.model, p.uncertainty, p.init, integration(c, h_learn));
    auto keep_records = [&]() { out.learning_records = plant.history(); };
    try {
        std::vector<double> residuals;
        for (std::size_t s = 0; s < c.schedule.size(); ++s) {
            const OnlinePIConfig lc = make_learning_config(c, p.cost, s);
            OnlineRun run = cascade ? phase_one(plant, p.u0, collector, lc, Rho::constant(1.0), c.epsilon).run
                                    : run_online_pi(plant, p.u0, expl, lc);
            const double res = run.residual_rms();
            residuals.push_back(res);
            note(out, "stage {} (value {} terms, policy {} terms, {} intervals): {} iteration(s), {}, residual "
                      "{:.6e}, excitation level {:.6e}",
                 s, lc.basis_value.size(), lc.basis_policy.size(), lc.interval_count(), run.iterations.size(),
                 run.converged ? fmt::format("converged at iteration {}", run.converged_at) : "not converged",
                 res, run.iterations.front().step.pe_ratio);
            if (res <= c.residual_threshold) {
                out.stage = s;
                out.online = std::move(run);
                break;
            }
        }
        out.stage_residuals = residuals;
        if (!out.online) {
            throw ScheduleExhausted(
                fmt::format("no basis stage reached residual {:.3e}", c.residual_threshold),
                *std::min_element(residuals.begin(), residuals.end()));
        }
    } catch (...) {
        keep_records();
        throw;
    }
    keep_records();
    for (const auto& it : out.online->iterations) {
        note(out, "  iteration {}: weight change {:.6e}, residual {:.6e}, excitation level {:.6e}", it.iteration,
             it.weight_change, it.step.residual_rms, it.step.pe_ratio);
    }

    // containment audit of every learning sample
    for (const auto& rec : out.learning_records) {
        const ContainmentAudit a = audit_containment(out.invariant, rec.observed);
        if (a.violations > 0 && out.audit.violations == 0) {
            out.audit.first_violation = a.first_violation;
            out.audit.first_violation_time = a.first_violation_time;
        }
        out.audit.samples += a.samples;
        out.audit.violations += a.violations;
    }
    if (out.audit.violations > 0) {
        note(out, "containment: {} of {} learning samples left omega, first at t = {:.6g} s", out.audit.violations,
             out.audit.samples, out.audit.first_violation_time);
    } else {
        note(out, "containment: all {} learning samples inside omega", out.audit.samples);
    }

    // step 2: redesign; step 3: exploration off
    if (cascade) {
        cascade_pipeline(c, out, plant);
        out.learning_records = plant.history();
        out.final_policy_name = "u_ro1";
        out.final_controller = out.cascade->policy.controller();
    } else {
        if (c.robust) robust_matched(c, out);
        if (out.robust) {
            out.final_policy_name = "u_ro";
            out.final_controller = out.robust->policy.controller();
        } else {
            out.final_policy_name = "u_hat";
            out.final_controller = [u = out.online->policy()](const Vector& x, double, double) {
                return u.evaluate(x);
            };
        }
    }
    if (out.robust && p.uncertainty && out.robust->level.d > 0) {
        // the re-engagement condition reads w, which only the simulator knows
        const auto& iss = iss_of(p);
        const Vector x0 = p.init.x;
        const double v0 = cascade ? out.cascade->state->composite_value(x0, p.init.z) : out.value()(x0);
        const double w0 = iss.W(p.init.w);
        const bool inside = v0 <= out.robust->level.d && w0 <= out.robust->roa.level();
        note(out, "initial state {} the estimate: V = {:.6g} against d = {:.6g}, W(w) = {:.6g} against {:.6g} "
                  "(w is read from the simulator, the learner cannot measure it)",
             inside ? "inside" : "outside", v0, out.robust->level.d, w0, out.robust->roa.level());
    }

    // step 4: apply the final policy from the initial state
    out.final_record = integrate(p.model, hidden_ptr(p), out.final_controller, p.init, integration(c, c.horizon));
    const auto& f = out.final_record->observed;
    note(out, "final: {} applied for {:.6g} s, |x(end)| = {:.6e}", out.final_policy_name, c.horizon,
         f.state(f.samples() - 1).norm());
}

LearningRun run_algorithm_1(const RunConfig& config) {
    LearningRun out;
    run_algorithm_1(config, out);
    return out;
}

std::vector<PIState> run_oracle(const RunConfig& c, const Problem& p, const Box& omega) {
    const auto [bv, bu] = c.schedule.back().bases(p.model.n);
    const auto grid = collocation_grid(omega, bv.size());
    return run_policy_iteration(p.model, p.cost, p.u0, bv, bu, grid, c.max_iter);
}

SmallGainReport check_gains(const RunConfig& c, std::optional<Rho>* selected) {
    const Problem p = build_problem(c);
    const IssBounds& iss = iss_of(p);
    const auto states = run_oracle(c, p, p.x_region);
    const Approximant& v = states.back().value;
    const Approximant& u = states.back().next_policy;
    const int n = p.model.n;
    std::function<SmallGainReport(const Rho&)> check;
    if (p.model.has_z_channel) {
        const ScalarField uf = [v](const Vector& a) {
            const Eigen::Index m = a.size() - 1;
            return v.evaluate(a.head(m)) + 0.5 * a[m] * a[m];
        };
        UnmatchedGains g;
        g.envelope = sphere_envelopes(uf, n + 1, c.gain_radius);
        g.s_max = g.envelope.upper.inverse(g.envelope.lower(c.gain_radius));
        g.kappa_tilde1 = ClassKFunction::max_of({iss.kappa1, iss.kappa5});
        check = unmatched_check(c, iss, g, u, n);
    } else {
        const MatchedGains g = matched_envelope([v](const Vector& x) { return v.evaluate(x); }, n, c.gain_radius);
        check = matched_check(c, iss, g);
    }
    const auto rho = pick_rho(c, check);
    if (selected) *selected = rho;
    return check(rho ? *rho : Rho::affine(c.rho_ladder[1], c.rho_slope));
}

void write_run(const LearningRun& run, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "config.cfg");
        write_config(os, run.config, false);
    }
    std::vector<std::string> log = run.log;
    if (run.online) {
        write_iterations(dir / "iterations.csv", *run.online);
        write_value_slices(dir / "value_slices.csv", run);
        std::vector<double> ignored;
        const auto cs = cost_surface_compare(run.initial_value(), run.value(), tensor_grid(run.invariant.omega, 51));
        log.push_back(fmt::format("cost surface: V_final < V_0 on {:.4f} of {} grid points, max ratio {:.4f}",
                                  cs.reduction_fraction, cs.points, cs.max_ratio));
    }
    if (!run.learning_records.empty()) {
        const std::size_t idx = std::min(run.stage, run.learning_records.size() - 1);
        write_trajectory(dir / "learning_trajectory.csv", run.learning_records[idx]);
    }
    if (run.cascade && run.cascade->phase_two_record) {
        write_trajectory(dir / "phase_two_trajectory.csv", *run.cascade->phase_two_record);
    }
    if (run.final_record) {
        write_trajectory(dir / "final_trajectory.csv", *run.final_record);
        if (run.config.kind == "arm") write_speed_profiles(dir / "speed_profile.csv", run, log);
        write_policy(dir / "policy.txt", run);
    }
    if (run.robust) {
        std::ofstream os(dir / "gain_check.txt");
        run.robust->gain.write(os, fmt::format("small-gain check, rho(s) = {}", run.robust->rho.describe()));
        if (run.robust->level.d > 0) write_roa(dir / "roa_boundary.csv", run);
    }
    std::ofstream os(dir / "run_log.txt");
    for (const auto& line : log) os << line << '\n';
}

LearningRun execute(const RunConfig& config, const fs::path& dir) {
    // drop artifacts of an earlier run in the same directory; other files stay
    for (const char* name : {"config.cfg", "iterations.csv", "value_slices.csv", "learning_trajectory.csv",
                             "phase_two_trajectory.csv", "final_trajectory.csv", "speed_profile.csv", "policy.txt",
                             "gain_check.txt", "roa_boundary.csv", "run_log.txt", "error.txt"}) {
        fs::remove(dir / name);
    }
    LearningRun run;
    try {
        run_algorithm_1(config, run);
    } catch (const Error& e) {
        run.config = config;
        run.log.push_back(fmt::format("aborted: {}: {}", category_name(e.category()), e.what()));
        write_run(run, dir);
        std::ofstream os(dir / "error.txt");
        os << category_name(e.category()) << '\n' << e.what() << '\n';
        throw;
    }
    write_run(run, dir);
    return run;
}

void replay(const fs::path& dir) {
    const RunConfig config = load_config(dir / "config.cfg");
    const fs::path again = dir / "replay";
    fs::remove_all(again);
    try {
        execute(config, again);
    } catch (const Error&) {
        // a failed original run must fail the same way; the files say how
    }
    auto slurp = [](const fs::path& f) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    auto listing = [](const fs::path& d) {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(d)) {
            if (e.is_regular_file()) names.push_back(e.path().filename().string());
        }
        std::sort(names.begin(), names.end());
        return names;
    };
    const auto original = listing(dir);
    const auto repeated = listing(again);
    if (original != repeated) {
        throw ReplayMismatch(fmt::format("replay produced {} files, the run has {}", repeated.size(), original.size()));
    }
    for (const auto& name : original) {
        if (slurp(dir / name) != slurp(again / name)) throw ReplayMismatch(fmt::format("{} differs on replay", name));
    }
}

} // namespace radp
