// radp: run, inspect and replay learning configs.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "radp/errors.hpp"
#include "radp/harness.hpp"

namespace fs = std::filesystem;
using namespace radp;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<double> step;
    std::optional<int> max_iter;
};

RunConfig load_with(const std::string& path, const Overrides& o) {
    RunConfig c = load_config(path);
    if (o.seed) {
        c.seed = *o.seed;
        c.seed_set = true;
    }
    if (o.out_dir) c.output_dir = *o.out_dir;
    if (o.step) c.step = *o.step;
    if (o.max_iter) c.max_iter = *o.max_iter;
    c.validate();
    return c;
}

int report(const Error& e) {
    std::cerr << "error: " << category_name(e.category()) << ": " << e.what() << '\n';
    return exit_code(e.category());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust adaptive dynamic programming: learning runs and checks"};
    app.require_subcommand(1);
    Overrides o;
    std::string config_path, run_dir;

    auto add_overrides = [&o](CLI::App* sub) {
        sub->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t v) { o.seed = v; }, "exploration seed");
        sub->add_option_function<std::string>("--out-dir", [&o](const std::string& v) { o.out_dir = v; },
                                              "run directory");
        sub->add_option_function<double>("--step", [&o](double v) { o.step = v; }, "integrator step (s)");
        sub->add_option_function<int>("--max-iter", [&o](int v) { o.max_iter = v; }, "iteration cap");
    };

    auto* run = app.add_subcommand("run", "learn, redesign and apply; write the run directory");
    run->add_option("config", config_path, "config file")->required();
    add_overrides(run);

    auto* oracle = app.add_subcommand("oracle", "model-based policy iteration only");
    oracle->add_option("config", config_path, "config file")->required();
    add_overrides(oracle);

    auto* gains = app.add_subcommand("check-gains", "small-gain report for the oracle value function");
    gains->add_option("config", config_path, "config file")->required();
    add_overrides(gains);

    auto* rep = app.add_subcommand("replay", "rerun a run directory and compare byte by byte");
    rep->add_option("run-dir", run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (run->parsed()) {
            const RunConfig c = load_with(config_path, o);
            const LearningRun r = execute(c, c.output_dir);
            for (const auto& line : r.log) std::cout << line << '\n';
            std::cout << "wrote " << c.output_dir << '\n';
        } else if (oracle->parsed()) {
            const RunConfig c = load_with(config_path, o);
            const Problem p = build_problem(c);
            const auto states = run_oracle(c, p, p.x_region);
            std::cout << "iteration,collocation_residual,hjb_residual,value_change\n";
            for (const auto& s : states) {
                std::cout << fmt::format("{},{:.6e},{:.6e},{:.6e}\n", s.iteration, s.collocation_residual,
                                         s.hjb_residual, s.value_change);
            }
            const auto& v = states.back().value;
            for (int j = 0; j < v.weights().size(); ++j) {
                std::cout << fmt::format("V {} = {:.10g}\n", v.basis().label(j), v.weights()[j]);
            }
        } else if (gains->parsed()) {
            const RunConfig c = load_with(config_path, o);
            std::optional<Rho> rho;
            const SmallGainReport rep_ = check_gains(c, &rho);
            rep_.write(std::cout, rho ? fmt::format("selected rho(s) = {}", rho->describe())
                                      : std::string("no rho on the ladder passes; largest entry shown"));
            return rho ? 0 : 1;
        } else if (rep->parsed()) {
            replay(run_dir);
            std::cout << "replay of " << run_dir << " is byte-identical\n";
        }
    } catch (const Error& e) {
        return report(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
