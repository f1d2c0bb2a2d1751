#include "radp/harness.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "radp/errors.hpp"

namespace radp {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"plant",
         {"kind", "mass", "length", "gravity", "inertia", "tau_n", "theta0", "eta", "mu", "u0", "a", "b", "q", "x0",
          "z0", "region", "c_xz", "c_x", "c_z"}},
        {"hidden", {"a_w", "beta", "c", "delta", "delta1", "mu", "w0", "w_half_width"}},
        {"cost", {"r", "epsilon"}},
        {"basis", {"schedule"}},
        {"exploration", {"amplitude", "seed", "components", "f_lo", "f_hi"}},
        {"sampling", {"interval", "intervals"}},
        {"learning", {"tol", "max_iter", "pe_delta", "residual_threshold"}},
        {"invariant_set", {"probe_scales"}},
        {"robust",
         {"enabled", "rho_ladder", "rho_slope", "min_relative_margin", "gain_radius", "oracle_degree", "ic_count",
          "settle_horizon"}},
        {"cascade",
         {"psi_degree", "phi_degree", "phase_two_intervals", "phase_two_gain", "phase_two_amplitude",
          "tracking_gain", "points"}},
        {"integration", {"step", "horizon", "blowup"}},
        {"output", {"dir"}},
    };
    return keys;
}

std::string strip_comments(std::istream& in) {
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const auto cut = line.find_first_of("#;");
        if (cut != std::string::npos) line.erase(cut);
        out << line << '\n';
    }
    return out.str();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v)) {
        throw ConfigParse(fmt::format("{}: '{}' is not a finite number", key, text));
    }
    return v;
}

long long to_integer(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigParse(fmt::format("{}: '{}' is not an integer", key, text));
    }
    return v;
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(to_double(key, tok));
    if (out.empty()) throw ConfigParse(fmt::format("{}: empty list", key));
    return out;
}

Vector to_vector(const std::string& key, const std::string& text) {
    const auto v = to_list(key, text);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// rows separated by ',', entries by blanks
Matrix to_matrix(const std::string& key, const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::stringstream ss(text);
    std::string row;
    while (std::getline(ss, row, ',')) rows.push_back(to_list(key, row));
    if (rows.empty()) throw ConfigParse(fmt::format("{}: empty matrix", key));
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ConfigParse(fmt::format("{}: ragged matrix rows", key));
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

bool to_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigParse(fmt::format("{}: '{}' is not a boolean", key, text));
}

BasisStage to_stage(const std::string& text) {
    BasisStage s;
    char d1 = 0, slash = 0, d2 = 0;
    std::istringstream is(text);
    if (!(is >> s.value_min >> d1 >> s.value_max >> slash >> s.policy_min >> d2 >> s.policy_max) || d1 != '-' ||
        slash != '/' || d2 != '-' || !is.eof()) {
        throw ConfigParse(fmt::format("basis.schedule: '{}' is not of the form vmin-vmax/pmin-pmax", text));
    }
    return s;
}

class Reader {
public:
    explicit Reader(const pt::ptree& root) : root_(root) {}

    [[nodiscard]] std::optional<std::string> raw(const std::string& path) const {
        const auto v = root_.get_optional<std::string>(pt::ptree::path_type(path, '.'));
        if (!v) return std::nullopt;
        return trim(*v);
    }
    void num(const std::string& path, double& out) const {
        if (auto v = raw(path)) out = to_double(path, *v);
    }
    template <class Int>
    void integer(const std::string& path, Int& out) const {
        if (auto v = raw(path)) {
            const long long x = to_integer(path, *v);
            if (x < 0 && std::is_unsigned_v<Int>) throw ConfigParse(fmt::format("{}: must be nonnegative", path));
            out = static_cast<Int>(x);
        }
    }
    void vec(const std::string& path, Vector& out) const {
        if (auto v = raw(path)) out = to_vector(path, *v);
    }
    void mat(const std::string& path, Matrix& out) const {
        if (auto v = raw(path)) out = to_matrix(path, *v);
    }
    void flag(const std::string& path, bool& out) const {
        if (auto v = raw(path)) out = to_bool(path, *v);
    }
    void list(const std::string& path, std::vector<double>& out) const {
        if (auto v = raw(path)) out = to_list(path, *v);
    }

private:
    const pt::ptree& root_;
};

void check_keys(const pt::ptree& root) {
    for (const auto& [name, node] : root) {
        if (node.empty()) {
            if (name != "format_version" && name != "name") throw ConfigParse(fmt::format("unknown key '{}'", name));
            continue;
        }
        const auto sec = allowed_keys().find(name);
        if (sec == allowed_keys().end()) throw ConfigParse(fmt::format("unknown section [{}]", name));
        for (const auto& [key, child] : node) {
            if (!sec->second.contains(key)) throw ConfigParse(fmt::format("unknown key '{}' in [{}]", key, name));
        }
    }
}

std::string g17(double v) { return fmt::format("{:.17g}", v); }

std::string join(const Vector& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + g17(v[i]);
    return s;
}

std::string join(const std::vector<double>& v) {
    return join(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
}

std::string join(const Matrix& m) {
    std::string s;
    for (Eigen::Index i = 0; i < m.rows(); ++i) s += (i ? ", " : "") + join(Vector(m.row(i).transpose()));
    return s;
}

} // namespace

std::pair<BasisSet, BasisSet> BasisStage::bases(int dim) const {
    return {make_graded_basis(dim, value_min, value_max), make_graded_basis(dim, policy_min, policy_max)};
}

int RunConfig::state_dim() const {
    if (kind == "arm") return 2;
    if (kind == "cascade") return 1;
    return static_cast<int>(a.rows());
}

void RunConfig::validate() const {
    auto positive = [](const char* what, double v) {
        if (!(v > 0) || !std::isfinite(v)) throw ConfigParse(fmt::format("{} must be positive", what));
    };
    if (format_version != kConfigFormatVersion) {
        throw ConfigParse(fmt::format("format_version {} is not supported (expected {})", format_version,
                                      kConfigFormatVersion));
    }
    if (kind != "arm" && kind != "linear" && kind != "robust_linear" && kind != "cascade") {
        throw ConfigParse(fmt::format("plant.kind '{}' is not one of arm, linear, robust_linear, cascade", kind));
    }
    if (!seed_set) throw ConfigParse("exploration.seed is required");
    if (schedule.empty()) throw ConfigParse("basis.schedule must list at least one stage");
    for (const auto& s : schedule) {
        if (s.value_min < 1 || s.value_max < s.value_min || s.policy_min < 0 || s.policy_max < std::max(1, s.policy_min)) {
            throw ConfigParse("basis.schedule: degrees must satisfy 1 <= vmin <= vmax, 0 <= pmin <= pmax, pmax >= 1");
        }
    }
    if (kind == "arm") {
        for (double v : {arm.m, arm.l, arm.g, arm.inertia, arm.tau_n, arm.theta0, arm_gains.eta}) positive("arm parameters", v);
        if (!(arm_gains.mu > 0 && arm_gains.mu < 1)) throw ConfigParse("plant.mu must lie in (0, 1)");
        if (r != 1.0) throw ConfigParse("the arm cost fixes r = 1");
    }
    if (kind == "linear" || kind == "robust_linear") {
        if (a.rows() == 0 || a.rows() != a.cols()) throw ConfigParse("plant.a must be square");
        if (b.rows() != a.rows() || b.cols() != 1) throw ConfigParse("plant.b must be n x 1");
        if (q.rows() != a.rows() || q.cols() != a.rows()) throw ConfigParse("plant.q must be n x n");
        if (x0.size() != a.rows()) throw ConfigParse("plant.x0 must have n entries");
    }
    if (kind == "cascade" && (a.rows() != 1 || a.cols() != 1)) throw ConfigParse("plant.a must be a scalar");
    if (u0_gains.size() != state_dim()) throw ConfigParse("plant.u0 must have one gain per state");
    if (kind == "robust_linear" || kind == "cascade") {
        positive("hidden.a_w", hidden.a_w);
        positive("hidden.w_half_width", hidden.w_half_width);
        if (!(hidden.mu > 0 && hidden.mu < 1)) throw ConfigParse("hidden.mu must lie in (0, 1)");
        if (hidden.c.size() != state_dim()) throw ConfigParse("hidden.c must have one entry per state");
    }
    positive("plant.region", region);
    positive("cost.r", r);
    positive("cost.epsilon", epsilon);
    if (amplitude < 0) throw ConfigParse("exploration.amplitude must be nonnegative");
    if (components == 0) throw ConfigParse("exploration.components must be positive");
    positive("exploration.f_lo", f_lo);
    if (!(f_hi >= f_lo)) throw ConfigParse("exploration.f_hi must not be below f_lo");
    positive("sampling.interval", interval);
    positive("learning.tol", tol);
    if (max_iter < 1) throw ConfigParse("learning.max_iter must be positive");
    positive("learning.pe_delta", pe_delta);
    positive("learning.residual_threshold", residual_threshold);
    if (probe_scales.empty()) throw ConfigParse("invariant_set.probe_scales must not be empty");
    if (rho_ladder.size() != 3 || !(rho_ladder[0] > 0) || !(rho_ladder[1] >= rho_ladder[0]) || rho_ladder[2] < 1) {
        throw ConfigParse("robust.rho_ladder must be 'lo hi count' with 0 < lo <= hi, count >= 1");
    }
    if (rho_slope < 0) throw ConfigParse("robust.rho_slope must be nonnegative");
    if (!(min_relative_margin >= 0 && min_relative_margin < 1)) {
        throw ConfigParse("robust.min_relative_margin must lie in [0, 1)");
    }
    positive("robust.gain_radius", gain_radius);
    if (oracle_degree < 2) throw ConfigParse("robust.oracle_degree must be at least 2");
    positive("robust.settle_horizon", settle_horizon);
    if (kind == "cascade") {
        if (psi_degree < 1 || phi_degree < 0) throw ConfigParse("cascade basis degrees out of range");
        if (phase_two_intervals == 0) throw ConfigParse("cascade.phase_two_intervals must be positive");
        positive("cascade.phase_two_gain", phase_two_gain);
        positive("cascade.tracking_gain", tracking_gain);
        if (phase_two_amplitude < 0) throw ConfigParse("cascade.phase_two_amplitude must be nonnegative");
    }
    positive("integration.step", step);
    positive("integration.horizon", horizon);
    positive("integration.blowup", blowup);
    if (output_dir.empty()) throw ConfigParse("output.dir must not be empty");
}

RunConfig parse_config(std::istream& in) {
    pt::ptree root;
    try {
        std::istringstream clean(strip_comments(in));
        pt::read_ini(clean, root);
    } catch (const pt::ptree_error& e) {
        throw ConfigParse(e.what());
    }
    check_keys(root);
    const Reader rd(root);
    RunConfig c;
    if (!rd.raw("format_version")) throw ConfigParse("format_version is required");
    rd.integer("format_version", c.format_version);
    if (auto v = rd.raw("name")) c.name = *v;

    const auto kind = rd.raw("plant.kind");
    if (!kind) throw ConfigParse("plant.kind is required");
    c.kind = *kind;
    rd.num("plant.mass", c.arm.m);
    rd.num("plant.length", c.arm.l);
    rd.num("plant.gravity", c.arm.g);
    rd.num("plant.inertia", c.arm.inertia);
    rd.num("plant.tau_n", c.arm.tau_n);
    rd.num("plant.theta0", c.arm.theta0);
    rd.num("plant.eta", c.arm_gains.eta);
    rd.num("plant.mu", c.arm_gains.mu);
    rd.vec("plant.u0", c.u0_gains);
    rd.mat("plant.a", c.a);
    rd.mat("plant.b", c.b);
    rd.mat("plant.q", c.q);
    rd.vec("plant.x0", c.x0);
    rd.num("plant.z0", c.z0);
    rd.num("plant.region", c.region);
    rd.num("plant.c_xz", c.c_xz);
    rd.num("plant.c_x", c.c_x);
    rd.num("plant.c_z", c.c_z);

    rd.num("hidden.a_w", c.hidden.a_w);
    rd.num("hidden.beta", c.hidden.beta);
    rd.vec("hidden.c", c.hidden.c);
    rd.num("hidden.delta", c.hidden.delta);
    rd.num("hidden.delta1", c.hidden.delta1);
    rd.num("hidden.mu", c.hidden.mu);
    rd.num("hidden.w0", c.hidden.w0);
    rd.num("hidden.w_half_width", c.hidden.w_half_width);

    rd.num("cost.r", c.r);
    rd.num("cost.epsilon", c.epsilon);

    if (auto v = rd.raw("basis.schedule")) {
        std::istringstream is(*v);
        std::string tok;
        while (is >> tok) c.schedule.push_back(to_stage(tok));
    }

    rd.num("exploration.amplitude", c.amplitude);
    if (auto v = rd.raw("exploration.seed")) {
        const long long s = to_integer("exploration.seed", *v);
        if (s < 0) throw ConfigParse("exploration.seed must be nonnegative");
        c.seed = static_cast<std::uint64_t>(s);
        c.seed_set = true;
    }
    rd.integer("exploration.components", c.components);
    rd.num("exploration.f_lo", c.f_lo);
    rd.num("exploration.f_hi", c.f_hi);

    rd.num("sampling.interval", c.interval);
    rd.integer("sampling.intervals", c.intervals);

    rd.num("learning.tol", c.tol);
    rd.integer("learning.max_iter", c.max_iter);
    rd.num("learning.pe_delta", c.pe_delta);
    rd.num("learning.residual_threshold", c.residual_threshold);

    rd.list("invariant_set.probe_scales", c.probe_scales);

    rd.flag("robust.enabled", c.robust);
    rd.list("robust.rho_ladder", c.rho_ladder);
    rd.num("robust.rho_slope", c.rho_slope);
    rd.num("robust.min_relative_margin", c.min_relative_margin);
    rd.num("robust.gain_radius", c.gain_radius);
    rd.integer("robust.oracle_degree", c.oracle_degree);
    rd.integer("robust.ic_count", c.ic_count);
    rd.num("robust.settle_horizon", c.settle_horizon);

    rd.integer("cascade.psi_degree", c.psi_degree);
    rd.integer("cascade.phi_degree", c.phi_degree);
    rd.integer("cascade.phase_two_intervals", c.phase_two_intervals);
    rd.num("cascade.phase_two_gain", c.phase_two_gain);
    rd.num("cascade.phase_two_amplitude", c.phase_two_amplitude);
    rd.num("cascade.tracking_gain", c.tracking_gain);
    rd.integer("cascade.points", c.cascade_points);

    rd.num("integration.step", c.step);
    rd.num("integration.horizon", c.horizon);
    rd.num("integration.blowup", c.blowup);

    if (auto v = rd.raw("output.dir")) c.output_dir = *v;

    if (c.kind == "cascade" && c.a.size() == 0) c.a = Matrix::Constant(1, 1, -1.0);
    if ((c.kind == "robust_linear" || c.kind == "cascade") && c.hidden.c.size() == 0) {
        c.hidden.c = Vector::Zero(c.state_dim());
        if (c.hidden.c.size() > 0) c.hidden.c[0] = 1.0;
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigParse(fmt::format("cannot open config file '{}'", path.string()));
    return parse_config(in);
}

void write_config(std::ostream& os, const RunConfig& c, bool include_output) {
    os << "format_version = " << c.format_version << "\n";
    os << "name = " << c.name << "\n\n";

    os << "[plant]\n";
    os << "kind = " << c.kind << "\n";
    if (c.kind == "arm") {
        os << "mass = " << g17(c.arm.m) << "  # kg\n";
        os << "length = " << g17(c.arm.l) << "  # m\n";
        os << "gravity = " << g17(c.arm.g) << "  # m/s^2\n";
        os << "inertia = " << g17(c.arm.inertia) << "  # kg m^2\n";
        os << "tau_n = " << g17(c.arm.tau_n) << "  # s\n";
        os << "theta0 = " << g17(c.arm.theta0) << "  # rad\n";
        os << "eta = " << g17(c.arm_gains.eta) << "\n";
        os << "mu = " << g17(c.arm_gains.mu) << "\n";
    } else {
        os << "a = " << join(c.a) << "\n";
        if (c.kind == "cascade") {
            os << "c_xz = " << g17(c.c_xz) << "\n";
            os << "c_x = " << g17(c.c_x) << "\n";
            os << "c_z = " << g17(c.c_z) << "\n";
            os << "x0 = " << join(c.x0) << "\n";
            os << "z0 = " << g17(c.z0) << "\n";
        } else {
            os << "b = " << join(c.b) << "\n";
            os << "q = " << join(c.q) << "\n";
            os << "x0 = " << join(c.x0) << "\n";
        }
        os << "region = " << g17(c.region) << "\n";
    }
    os << "u0 = " << join(c.u0_gains) << "\n\n";

    if (c.kind == "robust_linear" || c.kind == "cascade") {
        os << "[hidden]\n";
        os << "a_w = " << g17(c.hidden.a_w) << "  # 1/s\n";
        os << "beta = " << g17(c.hidden.beta) << "\n";
        os << "c = " << join(c.hidden.c) << "\n";
        os << "delta = " << g17(c.hidden.delta) << "\n";
        os << "delta1 = " << g17(c.hidden.delta1) << "\n";
        os << "mu = " << g17(c.hidden.mu) << "\n";
        os << "w0 = " << g17(c.hidden.w0) << "\n";
        os << "w_half_width = " << g17(c.hidden.w_half_width) << "\n\n";
    }

    os << "[cost]\n";
    os << "r = " << g17(c.r) << "\n";
    os << "epsilon = " << g17(c.epsilon) << "\n\n";

    os << "[basis]\nschedule =";
    for (const auto& s : c.schedule) {
        os << ' ' << s.value_min << '-' << s.value_max << '/' << s.policy_min << '-' << s.policy_max;
    }
    os << "\n\n";

    os << "[exploration]\n";
    os << "amplitude = " << g17(c.amplitude) << "\n";
    os << "seed = " << c.seed << "\n";
    os << "components = " << c.components << "\n";
    os << "f_lo = " << g17(c.f_lo) << "  # Hz\n";
    os << "f_hi = " << g17(c.f_hi) << "  # Hz\n\n";

    os << "[sampling]\n";
    os << "interval = " << g17(c.interval) << "  # s\n";
    os << "intervals = " << c.intervals << "\n\n";

    os << "[learning]\n";
    os << "tol = " << g17(c.tol) << "\n";
    os << "max_iter = " << c.max_iter << "\n";
    os << "pe_delta = " << g17(c.pe_delta) << "\n";
    os << "residual_threshold = " << g17(c.residual_threshold) << "\n\n";

    os << "[invariant_set]\n";
    os << "probe_scales = " << join(c.probe_scales) << "\n\n";

    os << "[robust]\n";
    os << "enabled = " << (c.robust ? "true" : "false") << "\n";
    os << "rho_ladder = " << join(c.rho_ladder) << "\n";
    os << "rho_slope = " << g17(c.rho_slope) << "\n";
    os << "min_relative_margin = " << g17(c.min_relative_margin) << "\n";
    os << "gain_radius = " << g17(c.gain_radius) << "\n";
    os << "oracle_degree = " << c.oracle_degree << "\n";
    os << "ic_count = " << c.ic_count << "\n";
    os << "settle_horizon = " << g17(c.settle_horizon) << "  # s\n\n";

    if (c.kind == "cascade") {
        os << "[cascade]\n";
        os << "psi_degree = " << c.psi_degree << "\n";
        os << "phi_degree = " << c.phi_degree << "\n";
        os << "phase_two_intervals = " << c.phase_two_intervals << "\n";
        os << "phase_two_gain = " << g17(c.phase_two_gain) << "\n";
        os << "phase_two_amplitude = " << g17(c.phase_two_amplitude) << "\n";
        os << "tracking_gain = " << g17(c.tracking_gain) << "\n";
        os << "points = " << c.cascade_points << "\n\n";
    }

    os << "[integration]\n";
    os << "step = " << g17(c.step) << "  # s\n";
    os << "horizon = " << g17(c.horizon) << "  # s\n";
    os << "blowup = " << g17(c.blowup) << "\n";

    if (include_output) os << "\n[output]\ndir = " << c.output_dir << "\n";
}

} // namespace radp
