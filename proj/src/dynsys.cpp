#include "radp/dynsys.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "radp/errors.hpp"

namespace radp {

namespace {

// Packed state layout: [x (n) | z (0 or 1) | w (p)].
struct Layout {
    int n;
    int nz;
    int p;
    [[nodiscard]] int size() const { return n + nz + p; }
};

bool all_finite(const Vector& v) { return v.allFinite(); }

class ClosedLoop {
public:
    ClosedLoop(const SystemModel& model, const UncertaintyModel* unc, const Controller& controller, Layout layout)
        : model_(model), unc_(unc), controller_(controller), lay_(layout) {}

    struct Signals {
        double u = 0;
        double x_channel = 0;
        double z_channel = 0;
    };

    Signals signals(double t, const Vector& s) const {
        const Vector x = s.head(lay_.n);
        const double z = lay_.nz ? s[lay_.n] : 0.0;
        Signals out;
        out.u = controller_(x, z, t);
        double delta = 0.0;
        double delta1 = 0.0;
        if (unc_ != nullptr) {
            const Vector w = s.tail(lay_.p);
            if (unc_->matched_disturbance) delta = unc_->matched_disturbance(w, x);
            if (lay_.nz && unc_->unmatched_disturbance) delta1 = unc_->unmatched_disturbance(w, x, z);
        }
        out.x_channel = (lay_.nz ? z : out.u) + delta;
        out.z_channel = out.u + delta1;
        return out;
    }

    Vector derivative(double t, const Vector& s) const {
        const Vector x = s.head(lay_.n);
        const Signals sig = signals(t, s);
        Vector ds(lay_.size());
        ds.head(lay_.n) = model_.drift(x) + model_.input_gain(x) * sig.x_channel;
        if (lay_.nz) {
            const double z = s[lay_.n];
            ds[lay_.n] = model_.f1(x, z) + sig.z_channel;
        }
        if (lay_.p) ds.tail(lay_.p) = unc_->w_dynamics(s.tail(lay_.p), x);
        if (!all_finite(ds)) {
            throw NonFiniteDynamics(fmt::format("dynamics returned a non-finite derivative at t = {:.6g}", t));
        }
        return ds;
    }

private:
    const SystemModel& model_;
    const UncertaintyModel* unc_;
    const Controller& controller_;
    Layout lay_;
};

} // namespace

CostCheck check_cost(const CostSpec& cost, const Box& domain, std::size_t samples) {
    CostCheck c;
    c.zero_at_origin = std::abs(cost.state_cost(Vector::Zero(domain.dim()))) <= 1e-14;
    c.positive_definite = true;
    c.margin_ok = cost.margin > 0 && cost.control_weight > 0;
    for (const Vector& x : halton_points(domain, samples)) {
        if (x.norm() < 1e-12) continue;
        if (!(cost.state_cost(x) > 0)) c.positive_definite = false;
        if (!(cost.reduced_state_cost(x) > 0)) c.margin_ok = false;
    }
    return c;
}

IssCheck check_iss_bounds(const UncertaintyModel& unc, const Box& w_box, const Box& x_box, std::size_t samples) {
    if (!unc.iss) throw std::invalid_argument("check_iss_bounds: no ISS bounds declared");
    const IssBounds& b = *unc.iss;
    IssCheck out;
    Box joint{Vector(w_box.dim() + x_box.dim()), Vector(w_box.dim() + x_box.dim())};
    joint.lo << w_box.lo, x_box.lo;
    joint.hi << w_box.hi, x_box.hi;
    for (const Vector& s : halton_points(joint, samples)) {
        const Vector w = s.head(w_box.dim());
        const Vector x = s.tail(x_box.dim());
        const double nw = w.norm();
        const double nx = x.norm();

        const double bound = std::max(b.kappa1(nw), b.kappa2(nx));
        const double excess = std::abs(unc.matched_disturbance(w, x)) - bound;
        out.worst_disturbance_excess = std::max(out.worst_disturbance_excess, excess);
        if (excess > 1e-12) out.disturbance_bound = false;

        const double W = b.W(w);
        if (W < b.lambda_lower(nw) - 1e-12 || W > b.lambda_upper(nw) + 1e-12) out.sandwich = false;

        if (W >= b.kappa3(nx) && nw > 0) {
            const double dW = b.W_gradient(w).dot(unc.w_dynamics(w, x));
            const double ex = dW + b.kappa4(nw);
            out.worst_implication_excess = std::max(out.worst_implication_excess, ex);
            if (ex > 1e-12) out.lyapunov_implication = false;
        }
    }
    return out;
}

SimulationRecord integrate(const SystemModel& model, const UncertaintyModel* uncertainty,
                           const Controller& controller, const InitialState& init,
                           const IntegrationOptions& options) {
    if (!(options.step > 0)) throw std::invalid_argument("integrate: step must be positive");
    if (!(options.horizon >= options.step * (1 - 1e-9))) throw std::invalid_argument("integrate: horizon < step");
    if (init.x.size() != model.n) throw DimensionMismatch("integrate: initial x", model.n, init.x.size());
    const int p = uncertainty ? uncertainty->p : 0;
    if (p > 0 && init.w.size() != p) throw DimensionMismatch("integrate: initial w", p, init.w.size());
    if (!init.x.allFinite() || !std::isfinite(init.z) || (p > 0 && !init.w.allFinite())) {
        throw std::invalid_argument("integrate: initial state must be finite");
    }

    const Layout lay{model.n, model.has_z_channel ? 1 : 0, p};
    const ClosedLoop loop(model, uncertainty, controller, lay);
    const auto steps = static_cast<std::size_t>(std::llround(options.horizon / options.step));
    const std::size_t samples = steps + 1;
    const double h = options.step;

    SimulationRecord rec;
    ObservedTrajectory& obs = rec.observed;
    obs.time.resize(samples);
    obs.x.resize(model.n, static_cast<Eigen::Index>(samples));
    obs.u.resize(samples);
    obs.x_channel.resize(samples);
    if (lay.nz) {
        obs.z.resize(samples);
        obs.z_channel.resize(samples);
    }
    rec.hidden_w.resize(p, static_cast<Eigen::Index>(samples));

    Vector s(lay.size());
    s.head(lay.n) = init.x;
    if (lay.nz) s[lay.n] = init.z;
    if (p) s.tail(p) = init.w;

    auto record = [&](std::size_t k, double t) {
        const auto col = static_cast<Eigen::Index>(k);
        obs.time[k] = t;
        obs.x.col(col) = s.head(lay.n);
        if (lay.nz) obs.z[k] = s[lay.n];
        if (p) rec.hidden_w.col(col) = s.tail(p);
        const auto sig = loop.signals(t, s);
        if (!std::isfinite(sig.u) || !std::isfinite(sig.x_channel) || !std::isfinite(sig.z_channel)) {
            throw NonFiniteDynamics(fmt::format("controller or disturbance returned a non-finite value at t = {:.6g}", t));
        }
        obs.u[k] = sig.u;
        obs.x_channel[k] = sig.x_channel;
        if (lay.nz) obs.z_channel[k] = sig.z_channel;
    };

    record(0, options.start_time);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = options.start_time + static_cast<double>(k) * h;
        const Vector k1 = loop.derivative(t, s);
        const Vector k2 = loop.derivative(t + 0.5 * h, s + 0.5 * h * k1);
        const Vector k3 = loop.derivative(t + 0.5 * h, s + 0.5 * h * k2);
        const Vector k4 = loop.derivative(t + h, s + h * k3);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double t_next = options.start_time + static_cast<double>(k + 1) * h;
        const double nrm = s.norm();
        if (!std::isfinite(nrm) || nrm > options.blowup_bound) throw StateDivergence(t_next, nrm);
        record(k + 1, t_next);
    }
    return rec;
}

double lipschitz_probe(const VectorMap& map, const Box& domain, std::size_t samples) {
    if (samples < 2) throw std::invalid_argument("lipschitz_probe: need at least two samples");
    if (domain.degenerate()) throw std::invalid_argument("lipschitz_probe: degenerate domain");
    const int n = domain.dim();
    std::vector<Vector> pts = halton_points(domain, samples);
    if (n <= 10) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            Vector c(n);
            for (int i = 0; i < n; ++i) c[i] = (mask >> i & 1u) ? domain.hi[i] : domain.lo[i];
            pts.push_back(std::move(c));
        }
    }
    std::vector<Vector> vals;
    vals.reserve(pts.size());
    for (const Vector& p : pts) {
        Vector v = map(p);
        if (!v.allFinite()) throw NonFiniteDynamics("lipschitz_probe: map returned a non-finite value");
        vals.push_back(std::move(v));
    }
    double best = 0.0;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        for (std::size_t b = a + 1; b < pts.size(); ++b) {
            const double dx = (pts[a] - pts[b]).norm();
            if (dx <= 1e-14) continue;
            best = std::max(best, (vals[a] - vals[b]).norm() / dx);
        }
    }
    return best;
}

SimulatedPlant::SimulatedPlant(SystemModel model, std::optional<UncertaintyModel> uncertainty, InitialState init,
                               IntegrationOptions options)
    : model_(std::move(model)), uncertainty_(std::move(uncertainty)), init_(std::move(init)),
      options_(options) {}

ObservedTrajectory SimulatedPlant::run(const Controller& controller, double horizon) {
    IntegrationOptions opts = options_;
    opts.horizon = horizon;
    history_.push_back(integrate(model_, uncertainty_ ? &*uncertainty_ : nullptr, controller, init_, opts));
    return history_.back().observed;
}

} // namespace radp
