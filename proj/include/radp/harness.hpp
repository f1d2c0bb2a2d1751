#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "radp/backstep.hpp"
#include "radp/experiments.hpp"
#include "radp/online_pi.hpp"
#include "radp/pi_oracle.hpp"
#include "radp/robust.hpp"

namespace radp {

inline constexpr int kConfigFormatVersion = 1;

/// One basis schedule entry: value degrees [value_min, value_max], policy
/// degrees [policy_min, policy_max]. Written "2-4/1-3".
struct BasisStage {
    int value_min = 2;
    int value_max = 2;
    int policy_min = 1;
    int policy_max = 1;
    [[nodiscard]] std::pair<BasisSet, BasisSet> bases(int dim) const;
    friend bool operator==(const BasisStage&, const BasisStage&) = default;
};

struct RunConfig {
    int format_version = kConfigFormatVersion;
    std::string name = "run";

    // [plant]
    std::string kind = "linear"; // arm | linear | robust_linear | cascade
    ArmModel arm;
    ArmGainOptions arm_gains;
    Vector u0_gains;             // u0(x) = u0_gains . x
    Matrix a;                    // linear: n x n; cascade: 1 x 1
    Matrix b;
    Matrix q;
    Vector x0;
    double z0 = 0.0;
    double region = 1.0;         // half width of the declared x box
    double c_xz = 1.0;
    double c_x = 0.0;
    double c_z = 0.0;

    // [hidden] (robust_linear, cascade)
    HiddenLinear hidden;

    // [cost]
    double r = 1.0;
    double epsilon = 0.8;

    // [basis]
    std::vector<BasisStage> schedule;

    // [exploration]
    double amplitude = 0.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t components = 10;
    double f_lo = 0.1; // Hz
    double f_hi = 10.0;

    // [sampling]
    double interval = 0.1; // s
    std::size_t intervals = 0;

    // [learning]
    double tol = 1e-6;
    int max_iter = 20;
    double pe_delta = 1e-6;
    double residual_threshold = 1e-3;

    // [invariant_set]
    std::vector<double> probe_scales{1.0};

    // [robust]
    bool robust = false;
    std::vector<double> rho_ladder{0.1, 100.0, 61}; // lo hi count for c0
    double rho_slope = 0.0;                          // c1
    double min_relative_margin = 0.1;
    double gain_radius = 1.0;
    int oracle_degree = 4;
    std::size_t ic_count = 50;
    double settle_horizon = 20.0; // s

    // [cascade]
    int psi_degree = 6;
    int phi_degree = 4;
    std::size_t phase_two_intervals = 80;
    double phase_two_gain = 5.0;
    double phase_two_amplitude = 1.0;
    double tracking_gain = 20.0;
    std::size_t cascade_points = 20;

    // [integration]
    double step = 1e-3;     // s
    double horizon = 5.0;   // s, post-learning trajectory
    double blowup = 1e6;

    // [output]
    std::string output_dir = "runs/run";

    void validate() const;
    [[nodiscard]] int state_dim() const;
};

/// Flat sectioned key-value text. '#' and ';' start comments, also after a
/// value. Unknown keys and missing required keys raise ConfigParse.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
/// Inverse of parse_config; numbers as %.17g so the round trip is exact.
void write_config(std::ostream& os, const RunConfig& config, bool include_output = true);

Problem build_problem(const RunConfig& config);
ExplorationSignal make_exploration(const RunConfig& config);
OnlinePIConfig make_learning_config(const RunConfig& config, const CostSpec& cost, std::size_t stage);

struct InvariantSet {
    Box omega;                  // x box
    std::optional<Box> omega1;  // (x, z) box for cascades
    bool degenerate = false;    // a point box: no excitation to learn from
};

/// Bounding box, inflated 10%, of all probe trajectories under `controller`.
/// Throws StateDivergence when a probe blows up.
InvariantSet select_invariant_set(const SystemModel& model, const std::optional<UncertaintyModel>& uncertainty,
                                  const Controller& controller, const std::vector<InitialState>& probes,
                                  const IntegrationOptions& options);

/// Learning samples that left Omega (never clipped, only reported).
struct ContainmentAudit {
    std::size_t samples = 0;
    std::size_t violations = 0;
    double first_violation_time = 0.0;
    Vector first_violation;
};
ContainmentAudit audit_containment(const InvariantSet& set, const ObservedTrajectory& data);

inline constexpr double kDescentSlack = 1e-4;

/// Closed-loop run from one seeded point inside the region estimate.
struct SettledTrajectory {
    Vector x0;
    double z0 = 0.0;
    Vector w0;
    double final_norm = 0.0; // |(w, x, z)| at the end of the horizon
    DescentReport descent;   // with slack kDescentSlack
};

struct RobustOutcome {
    Rho rho;
    RobustPolicy policy;
    Envelope envelope;            // of V (matched) or U (cascade)
    SmallGainReport gain;
    LevelCertificate level;
    ClassKFunction sigma;
    ClassKFunction chi1;
    RoaEstimate roa;
    std::vector<SettledTrajectory> trajectories; // from seeded points inside the estimate
};

struct CascadeOutcome {
    PhaseTwoResult phase_two;
    BacksteppedPolicy policy;
    std::optional<BacksteppedState> state;
    double f_rel_err = 0.0; // weight error against the known cascade, relative
    double g_rel_err = 0.0;
    std::optional<SimulationRecord> phase_two_record;
};

/// Everything one run produces. Dense trajectories carry the hidden w for
/// post-hoc analysis only.
struct LearningRun {
    RunConfig config;
    Problem problem;
    InvariantSet invariant;
    std::vector<std::string> log;
    std::vector<SimulationRecord> learning_records;
    ContainmentAudit audit;
    std::size_t stage = 0;
    std::vector<double> stage_residuals;
    std::optional<OnlineRun> online;
    std::optional<RobustOutcome> robust;
    std::optional<CascadeOutcome> cascade;
    std::optional<SimulationRecord> final_record;
    std::string final_policy_name;
    Controller final_controller;

    [[nodiscard]] const Approximant& initial_value() const { return online->iterations.front().step.value; }
    [[nodiscard]] const Approximant& value() const { return online->value(); }
    [[nodiscard]] const Approximant& policy() const { return online->policy(); }
};

/// Full pipeline: probe, learn under u0 + e, redesign, stop exploring, apply.
/// `out` is filled as the run progresses so a failed run keeps its
/// diagnostics.
void run_algorithm_1(const RunConfig& config, LearningRun& out);
LearningRun run_algorithm_1(const RunConfig& config);

/// Model-based policy iteration from u0 on the config's last basis stage.
std::vector<PIState> run_oracle(const RunConfig& config, const Problem& problem, const Box& omega);

/// Gain report for the oracle value function (no learning, no simulation).
SmallGainReport check_gains(const RunConfig& config, std::optional<Rho>* selected = nullptr);

/// Writes every artifact of a (possibly partial) run into `dir`.
void write_run(const LearningRun& run, const std::filesystem::path& dir);

/// Runs a config and writes its directory. On failure the partial run and
/// error.txt are written before the error propagates.
LearningRun execute(const RunConfig& config, const std::filesystem::path& dir);

/// Reruns <dir>/config.cfg into <dir>/replay and compares every file byte by
/// byte. Throws ReplayMismatch on the first difference.
void replay(const std::filesystem::path& dir);

} // namespace radp
