#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "radp/gains.hpp"
#include "radp/numerics.hpp"

namespace radp {

using VectorMap = std::function<Vector(const Vector&)>;

/// Learner-visible plant  x' = f(x) + g(x) [input + Delta],  with the input
/// being u (matched case) or the extra state z, whose dynamics are
/// z' = f1(x, z) + u + Delta1 (unmatched case).
struct SystemModel {
    int n = 0;
    VectorMap drift;      // f
    VectorMap input_gain; // g, single input channel
    bool has_z_channel = false;
    std::function<double(const Vector&, double)> f1;
    std::string name;
};

/// Declared bounds for the hidden subsystem, used by the small-gain checks.
struct IssBounds {
    ClassKFunction kappa1; // |Delta| <= max{kappa1(|w|), kappa2(|x|)}
    ClassKFunction kappa2;
    ClassKFunction kappa3; // W(w) >= kappa3(|x|)  =>  dW/dt <= -kappa4(|w|)
    std::function<double(double)> kappa4;
    ClassKFunction lambda_lower; // lambda_lower(|w|) <= W(w) <= lambda_upper(|w|)
    ClassKFunction lambda_upper;
    std::function<double(const Vector&)> W;
    VectorMap W_gradient;
    // Unmatched channel: |Delta1| <= max{kappa5(|w|), kappa6(|x|), kappa7(|z|)}
    ClassKFunction kappa5;
    ClassKFunction kappa6;
    ClassKFunction kappa7;
};

/// Hidden dynamic uncertainty. Only the simulator reads these maps.
struct UncertaintyModel {
    int p = 0;
    std::function<Vector(const Vector& w, const Vector& x)> w_dynamics;
    std::function<double(const Vector& w, const Vector& x)> matched_disturbance;
    std::function<double(const Vector& w, const Vector& x, double z)> unmatched_disturbance;
    std::optional<IssBounds> iss;
};

struct CostSpec {
    std::function<double(const Vector&)> state_cost; // Q
    double control_weight = 1.0;                     // r
    double margin = 0.0;                             // epsilon, Q(x) - eps^2 |x|^2 > 0

    [[nodiscard]] double running(const Vector& x, double u) const {
        return state_cost(x) + control_weight * u * u;
    }
    [[nodiscard]] double reduced_state_cost(const Vector& x) const {
        return state_cost(x) - margin * margin * x.squaredNorm();
    }
};

struct CostCheck {
    bool zero_at_origin = false;
    bool positive_definite = false;
    bool margin_ok = false;
    [[nodiscard]] bool ok() const { return zero_at_origin && positive_definite && margin_ok; }
};

/// Samples Q and Q - eps^2|x|^2 at Halton points of the box.
CostCheck check_cost(const CostSpec& cost, const Box& domain, std::size_t samples = 512);

struct IssCheck {
    bool disturbance_bound = true;
    bool lyapunov_implication = true;
    bool sandwich = true;
    double worst_disturbance_excess = 0.0;
    double worst_implication_excess = 0.0;
    [[nodiscard]] bool ok() const { return disturbance_bound && lyapunov_implication && sandwich; }
};

/// Verifies the declared ISS bounds at Halton samples of (w, x).
IssCheck check_iss_bounds(const UncertaintyModel& uncertainty, const Box& w_box, const Box& x_box,
                          std::size_t samples = 2000);

/// Feedback law u(x, z, t); z is ignored by plants without a z channel.
using Controller = std::function<double(const Vector& x, double z, double t)>;

struct InitialState {
    Vector x;
    double z = 0.0;
    Vector w; // empty when there is no hidden subsystem
};

struct IntegrationOptions {
    double step = 1e-3;
    double horizon = 1.0;
    double blowup_bound = 1e6;
    double start_time = 0.0;
};

/// Signals a learner may measure. Columns of `x` are states on the grid.
struct ObservedTrajectory {
    std::vector<double> time;
    Matrix x; // n x samples
    std::vector<double> z;
    std::vector<double> u;
    /// Total input reaching the x-subsystem: (u or z) + Delta.
    std::vector<double> x_channel;
    /// Total actuation of the z-subsystem: u + Delta1 (unmatched plants only).
    std::vector<double> z_channel;

    [[nodiscard]] std::size_t samples() const { return time.size(); }
    [[nodiscard]] bool has_z() const { return !z.empty(); }
    [[nodiscard]] Vector state(std::size_t k) const { return x.col(static_cast<Eigen::Index>(k)); }
};

/// Full simulation output. The hidden state is kept apart from the observed
/// signals so learners can only be handed the observed part.
struct SimulationRecord {
    ObservedTrajectory observed;
    Matrix hidden_w; // p x samples
};

/// Classical fixed-step RK4 on the full interconnection; the controller is
/// evaluated at every stage.
SimulationRecord integrate(const SystemModel& model, const UncertaintyModel* uncertainty,
                           const Controller& controller, const InitialState& init, const IntegrationOptions& options);

inline SimulationRecord integrate(const SystemModel& model, const Controller& controller, const InitialState& init,
                                  const IntegrationOptions& options) {
    return integrate(model, nullptr, controller, init, options);
}

/// Largest difference quotient |F(a) - F(b)| / |a - b| over pairs drawn from
/// Halton samples of the box plus its corners.
double lipschitz_probe(const VectorMap& map, const Box& domain, std::size_t samples);

/// Exposes a simulator to learners through "apply control, observe signals".
class Plant {
public:
    virtual ~Plant() = default;
    [[nodiscard]] virtual int state_dim() const = 0;
    [[nodiscard]] virtual bool has_z_channel() const = 0;
    /// Runs the plant from its configured initial condition.
    virtual ObservedTrajectory run(const Controller& controller, double horizon) = 0;
};

/// Simulated plant; remembers the last full record for post-hoc audits.
class SimulatedPlant final : public Plant {
public:
    SimulatedPlant(SystemModel model, std::optional<UncertaintyModel> uncertainty, InitialState init,
                   IntegrationOptions options);

    [[nodiscard]] int state_dim() const override { return model_.n; }
    [[nodiscard]] bool has_z_channel() const override { return model_.has_z_channel; }
    ObservedTrajectory run(const Controller& controller, double horizon) override;

    void set_initial_state(InitialState init) { init_ = std::move(init); }
    [[nodiscard]] const InitialState& initial_state() const { return init_; }
    [[nodiscard]] const std::vector<SimulationRecord>& history() const { return history_; }
    [[nodiscard]] const SystemModel& model() const { return model_; }
    [[nodiscard]] const IntegrationOptions& options() const { return options_; }

private:
    SystemModel model_;
    std::optional<UncertaintyModel> uncertainty_;
    InitialState init_;
    IntegrationOptions options_;
    std::vector<SimulationRecord> history_;
};

} // namespace radp
