#include "cli.hpp"

#include "vmstab/ergodic_lab.hpp"
#include "vmstab/tracker.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace vmstab::cli {

namespace fs = std::filesystem;

json default_config() {
    const json species = {{"profile", "relativistic-maxwellian"},
                          {"density", 1.0},
                          {"theta", 1.0},
                          {"drift", 0.0},
                          {"anisotropy", 0.0},
                          {"alpha", 3.0},
                          {"c", 0.0}};
    return {
        {"equilibrium",
         {{"period", 2 * kPi},
          {"nx", 16},
          {"plus", species},
          {"minus", species},
          {"fields", {{"mode", "cosine"}, {"phi_amp", 0.3}, {"psi_amp", 0.3}, {"solver_tol", 1e-10}}},
          {"velocity", {{"vmax", 0.0}, {"tail_tol", 1e-8}, {"points_per_panel", 6}}},
          {"validation_tol", 1e-8}}},
        {"discretization",
         {{"K", 4},
          {"nx", 16},
          {"asymmetry_tol", 1e-6},
          {"dt", 0.02},
          {"orbit_points_per_panel", 6},
          {"momentum_points", 6},
          {"separatrix_levels", 4},
          {"prune_tol", 1e-10}}},
        {"sweep",
         {{"n", 4},
          {"T_min", 1e-3},
          {"T_max", 1e4},
          {"points", 60},
          {"include_infinity", true},
          {"check_anchor", true},
          {"allow_degenerate", true},
          {"gap_tol", 1e-8},
          {"diag_n", json::array({2, 4, 8})}}},
        {"crossing", {{"rel_width", 1e-6}, {"eigen_tol", 1e-8}, {"max_crossings", 2}}},
        {"mode", {{"h", 0.1}, {"nx", 8}, {"points_per_panel", 4}, {"tail_tol", 1e-4}}},
        {"ergodic",
         {{"case", "weighted"},
          {"beta", 0.0},
          {"N", 129},
          {"scheme", "spectral"},
          {"weight_L", 1e4},
          {"kmax", 5},
          {"T_min", 10.0},
          {"T_max", 1e4},
          {"points", 61},
          {"sigma", 1.0},
          {"L", 1e6},
          {"cells", 1024},
          {"l2_T", json::array({10.0, 100.0, 1000.0, 10000.0})},
          {"dim", 64},
          {"finite_support", 4},
          {"N_list", json::array({0, 1, 2, 4, 8, 16, 32, 63})}}},
    };
}

namespace {

// 1-based line of the first occurrence of "key" in the source text, 0 if unknown.
int line_of(const std::string& source, const std::string& key) {
    if (source.empty()) return 0;
    const auto pos = source.find("\"" + key + "\"");
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(source.begin(), source.begin() + static_cast<long>(pos), '\n'));
}

[[noreturn]] void config_error(const std::string& path, const std::string& msg, const std::string& source) {
    const auto leaf = path.substr(path.find_last_of('.') + 1);
    std::ostringstream os;
    os << "'" << path << "': " << msg;
    if (const int line = line_of(source, leaf); line > 0) os << " (line " << line << ")";
    throw ConfigError(os.str());
}

void merge(json& into, const json& user, const std::string& prefix, const std::string& source) {
    if (!user.is_object()) config_error(prefix.empty() ? "<root>" : prefix, "expected an object", source);
    for (const auto& [key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!into.contains(key)) config_error(path, "unknown key", source);
        json& slot = into[key];
        if (slot.is_object()) {
            merge(slot, value, path, source);
        } else if (slot.is_number_integer()) {
            if (!value.is_number_integer()) config_error(path, "expected an integer", source);
            slot = value;
        } else if (slot.is_number()) {
            if (!value.is_number()) config_error(path, "expected a number", source);
            slot = value.get<double>();
        } else if (slot.is_boolean()) {
            if (!value.is_boolean()) config_error(path, "expected true or false", source);
            slot = value;
        } else if (slot.is_string()) {
            if (!value.is_string()) config_error(path, "expected a string", source);
            slot = value;
        } else if (slot.is_array()) {
            if (!value.is_array()) config_error(path, "expected an array", source);
            const bool ints = !slot.empty() && slot.front().is_number_integer();
            for (const auto& e : value)
                if (ints ? !e.is_number_integer() : !e.is_number()) config_error(path, "expected an array of numbers", source);
            slot = value;
        }
    }
}

void require(bool ok, const std::string& path, const std::string& msg, const std::string& source) {
    if (!ok) config_error(path, msg, source);
}

void check_values(const json& c, const std::string& src) {
    const auto& e = c["equilibrium"];
    require(e["period"].get<double>() > 0, "equilibrium.period", "must be positive", src);
    require(e["nx"].get<int>() >= 4, "equilibrium.nx", "must be at least 4", src);
    const auto catalog = species_catalog();
    for (const char* s : {"plus", "minus"}) {
        const auto name = e[s]["profile"].get<std::string>();
        require(std::find(catalog.begin(), catalog.end(), name) != catalog.end(),
                std::string("equilibrium.") + s + ".profile", "unknown profile '" + name + "'", src);
        require(e[s]["theta"].get<double>() > 0, std::string("equilibrium.") + s + ".theta", "must be positive", src);
        require(e[s]["alpha"].get<double>() > 2, std::string("equilibrium.") + s + ".alpha", "must exceed 2", src);
    }
    const auto mode = e["fields"]["mode"].get<std::string>();
    require(mode == "zero" || mode == "cosine" || mode == "self-consistent", "equilibrium.fields.mode",
            "one of zero, cosine, self-consistent", src);
    const auto& d = c["discretization"];
    require(d["K"].get<int>() >= 1, "discretization.K", "must be at least 1", src);
    require(d["nx"].get<int>() >= 4, "discretization.nx", "must be at least 4", src);
    require(d["dt"].get<double>() > 0, "discretization.dt", "must be positive", src);
    const auto& s = c["sweep"];
    require(s["n"].get<int>() >= 1 && s["n"].get<int>() <= 2 * d["K"].get<int>(), "sweep.n", "must lie in [1, 2K]",
            src);
    require(s["T_min"].get<double>() > 0 && s["T_max"].get<double>() > s["T_min"].get<double>(), "sweep.T_max",
            "need 0 < T_min < T_max", src);
    require(s["points"].get<int>() >= 2, "sweep.points", "must be at least 2", src);
    for (const auto& n : s["diag_n"])
        require(n.get<int>() >= 1, "sweep.diag_n", "entries must be positive", src);
    require(c["mode"]["h"].get<double>() > 0, "mode.h", "must be positive", src);
    const auto& g = c["ergodic"];
    const auto kase = g["case"].get<std::string>();
    require(kase == "weighted" || kase == "l2sigma" || kase == "projector", "ergodic.case",
            "one of weighted, l2sigma, projector", src);
    const double beta = g["beta"].get<double>();
    require(beta >= 0 && beta < 2 * kPi, "ergodic.beta", "must lie in [0, 2 pi)", src);
    const auto scheme = g["scheme"].get<std::string>();
    require(scheme == "spectral" || scheme == "fd4", "ergodic.scheme", "spectral or fd4", src);
    require(g["N"].get<int>() >= 16, "ergodic.N", "must be at least 16", src);
    require(g["sigma"].get<double>() >= 0, "ergodic.sigma", "must be nonnegative", src);
    require(g["T_min"].get<double>() > 0 && g["T_max"].get<double>() > g["T_min"].get<double>(), "ergodic.T_max",
            "need 0 < T_min < T_max", src);
}

}  // namespace

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
}

json resolve_config(const json& user, const std::string& source) {
    json c = default_config();
    if (!user.is_null()) merge(c, user, "", source);
    check_values(c, source);
    return c;
}

void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &cfg;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (!node->is_object() && !node->is_null()) throw ConfigError("override '" + key + "' descends into a value");
        start = dot + 1;
    }
}

namespace {

// --- pipeline helpers -------------------------------------------------------

struct Context {
    json cfg;
    fs::path out;
    int threads = 1;
    bool emit_plots = false;
    std::vector<std::string> files;  // in write order
    std::vector<std::string> warnings;
    json summary = json::object();
    std::ostream* log = nullptr;
};

void write_file(Context& cx, const std::string& name, const std::string& content) {
    std::ofstream out(cx.out / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + (cx.out / name).string() + "'");
    out << content;
    cx.files.push_back(name);
}

std::string csv_plot_script(const std::string& csv, const std::string& xcol, bool logx, bool logy) {
    std::ostringstream os;
    os << "# Plots every numeric column of " << csv << " against " << xcol << ".\n"
       << "import csv\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
       << "with open('" << csv << "') as fh:\n    rows = list(csv.DictReader(fh))\n"
       << "rows = [r for r in rows if r['" << xcol << "'] not in ('inf', '')]\n"
       << "x = [float(r['" << xcol << "']) for r in rows]\n"
       << "fig, ax = plt.subplots()\n"
       << "for col in rows[0].keys() if rows else []:\n"
       << "    if col == '" << xcol << "':\n        continue\n"
       << "    ax.plot(x, [float(r[col]) for r in rows], label=col)\n"
       << (logx ? "ax.set_xscale('log')\n" : "") << (logy ? "ax.set_yscale('log')\n" : "")
       << "ax.set_xlabel('" << xcol << "')\nax.legend(fontsize='small')\n"
       << "fig.savefig('" << csv.substr(0, csv.find_last_of('.')) << ".png', dpi=150)\n";
    return os.str();
}

void maybe_plot(Context& cx, const std::string& csv, const std::string& xcol, bool logx, bool logy) {
    if (!cx.emit_plots) return;
    write_file(cx, "plot_" + csv.substr(0, csv.find_last_of('.')) + ".py", csv_plot_script(csv, xcol, logx, logy));
}

SpeciesProfile species_from(const json& s, int sign) {
    SpeciesParams p;
    p.density = s["density"].get<double>();
    p.theta = s["theta"].get<double>();
    p.drift = s["drift"].get<double>();
    p.anisotropy = s["anisotropy"].get<double>();
    p.alpha = s["alpha"].get<double>();
    p.c = s["c"].get<double>();
    return make_species(s["profile"].get<std::string>(), p, sign);
}

EquilibriumSpec build_equilibrium(Context& cx) {
    const auto& e = cx.cfg["equilibrium"];
    auto plus = species_from(e["plus"], +1);
    auto minus = species_from(e["minus"], -1);
    const double P = e["period"].get<double>();
    const int nx = e["nx"].get<int>();
    VelocitySettings vs;
    vs.vmax = e["velocity"]["vmax"].get<double>();
    vs.tail_tol = e["velocity"]["tail_tol"].get<double>();
    vs.points_per_panel = e["velocity"]["points_per_panel"].get<int>();
    if (plus.is_zero() && minus.is_zero() && vs.vmax <= 0) vs.vmax = 4.0;  // nothing to resolve

    const auto& f = e["fields"];
    const auto mode = f["mode"].get<std::string>();
    const double a = f["phi_amp"].get<double>(), b = f["psi_amp"].get<double>();
    FieldProfile fields;
    if (mode == "zero") {
        fields = FieldProfile::zero(P, nx);
    } else if (mode == "cosine") {
        fields = FieldProfile::cosine(P, nx, a, b);
    } else {
        PotentialSolveOptions o;
        o.tol = f["solver_tol"].get<double>();
        const auto guess = FieldProfile::cosine(P, nx, a, b);
        o.initial_guess = std::make_pair(guess.phi0(), guess.psi0());
        const auto sol = solve_potentials(plus, minus, P, nx, vs, o);
        fields = sol.fields;
        cx.summary["potential_iterations"] = sol.iterations;
    }
    auto eq = make_equilibrium(std::move(plus), std::move(minus), std::move(fields), vs,
                               e["validation_tol"].get<double>());
    if (!eq.validated) {
        std::ostringstream os;
        os << "equilibrium is not self-consistent: Poisson/Ampere residual " << eq.consistency_residual
           << " (fields are prescribed)";
        cx.warnings.push_back(os.str());
    }
    return eq;
}

DiscretizationSpec build_discretization(const Context& cx) {
    const auto& d = cx.cfg["discretization"];
    DiscretizationSpec s;
    s.K = d["K"].get<int>();
    s.nx = d["nx"].get<int>();
    s.asymmetry_tol = d["asymmetry_tol"].get<double>();
    s.prune_tol = d["prune_tol"].get<double>();
    s.averaging.integrator.dt = d["dt"].get<double>();
    s.averaging.threads = cx.threads;
    s.orbits.points_per_panel = d["orbit_points_per_panel"].get<int>();
    s.orbits.momentum_points = d["momentum_points"].get<int>();
    s.orbits.separatrix_levels = d["separatrix_levels"].get<int>();
    s.orbits.prune_tol = s.prune_tol;
    return s;
}

void note_operator(Context& cx, const OperatorAssembler& as, const OperatorSet& inf) {
    cx.summary["asymmetry"] = {{"A1", inf.asymmetry_A1}, {"A2", inf.asymmetry_A2}, {"M", inf.asymmetry_M}};
    cx.summary["orbits"] = as.orbit_count();
    if (as.skipped_orbits() > 0)
        cx.warnings.push_back("NoReturn: " + std::to_string(as.skipped_orbits()) +
                              " orbits without detected return were left out of the quadrature");
    const double tol = cx.cfg["discretization"]["asymmetry_tol"].get<double>();
    for (auto [name, r] : {std::pair{"A1", inf.asymmetry_A1}, {"A2", inf.asymmetry_A2}, {"M", inf.asymmetry_M}})
        if (r > 0.1 * tol) {
            std::ostringstream os;
            os << "asymmetry residual of " << name << " is " << r << " (tolerance " << tol << ")";
            cx.warnings.push_back(os.str());
        }
}

// --- commands ---------------------------------------------------------------

void cmd_equilibrium(Context& cx) {
    const auto eq = build_equilibrium(cx);
    json j;
    j["kind"] = "Equilibrium";
    j["plus"] = cx.cfg["equilibrium"]["plus"];
    j["minus"] = cx.cfg["equilibrium"]["minus"];
    j["period"] = eq.fields.period();
    j["vmax"] = eq.velocity.vmax;
    j["velocity_tail_estimate"] = eq.velocity.tail_estimate;
    j["consistency_residual"] = eq.consistency_residual;
    j["validated"] = eq.validated;
    for (int sign : {+1, -1}) {
        const auto& sp = eq.species(sign);
        if (sp.is_zero()) continue;
        const auto r = validate_integrability(sp, 200);
        j["integrability"][sign > 0 ? "plus" : "minus"] = {{"max_ratio", r.max_ratio}, {"pass", r.pass}};
        if (!r.pass) cx.warnings.push_back(std::string("integrability bound fails for species ") + (sign > 0 ? "+" : "-"));
    }
    write_file(cx, "equilibrium.json", j.dump(2) + "\n");

    std::ostringstream os;
    os << std::setprecision(17) << "x,phi0,psi0,E1,B0,rho0,j2\n";
    for (int i = 0; i < eq.fields.size(); ++i) {
        const double x = eq.fields.x()(i);
        const auto m = moments(eq, x);
        os << x << ',' << eq.fields.phi0()(i) << ',' << eq.fields.psi0()(i) << ',' << eq.fields.e1()(i) << ','
           << eq.fields.b0()(i) << ',' << m.rho0 << ',' << m.j2 << '\n';
    }
    write_file(cx, "fields.csv", os.str());
    maybe_plot(cx, "fields.csv", "x", false, false);
    cx.summary["consistency_residual"] = eq.consistency_residual;
}

void cmd_criterion(Context& cx) {
    const auto eq = build_equilibrium(cx);
    const OperatorAssembler as(eq, build_discretization(cx));
    const auto inf = as.assemble(kInf);
    note_operator(cx, as, inf);
    const auto r = check_criterion(inf);
    write_file(cx, "criterion.json", criterion_to_json(r) + "\n");
    write_file(cx, "operators_inf.json", operator_set_to_json(inf) + "\n");
    cx.summary["unstable_predicted"] = r.unstable_predicted;
    cx.summary["lhs"] = r.lhs;
    cx.summary["rhs"] = r.rhs;
    if (!r.condition_i) cx.warnings.push_back("kernel of A1 is not spanned by the constants; the criterion does not apply");
    *cx.log << "unstable_predicted = " << (r.unstable_predicted ? "true" : "false") << " (lhs " << r.lhs << ", rhs "
            << r.rhs << ")\n";
}

SweepOptions sweep_options(const Context& cx) {
    const auto& s = cx.cfg["sweep"];
    SweepOptions o;
    o.n = s["n"].get<int>();
    o.T_grid = geometric_grid(s["T_min"].get<double>(), s["T_max"].get<double>(), s["points"].get<int>());
    if (s["include_infinity"].get<bool>()) o.T_grid.push_back(kInf);
    o.check_anchor = s["check_anchor"].get<bool>();
    o.allow_degenerate = s["allow_degenerate"].get<bool>();
    o.gap_tol = s["gap_tol"].get<double>();
    o.threads = cx.threads;
    return o;
}

struct SweepRun {
    SweepResult result;
    OperatorSet inf;
};

SweepRun run_sweep(Context& cx, const OperatorAssembler& as) {
    SweepRun out;
    out.inf = as.assemble(kInf);
    note_operator(cx, as, out.inf);
    const auto opt = sweep_options(cx);
    out.result = sweep(as, opt);
    const auto& r = out.result;

    std::ostringstream csv;
    write_spectrum_csv(csv, r.records);
    write_file(cx, "spectrum.csv", csv.str());
    maybe_plot(cx, "spectrum.csv", "T", true, false);

    json j;
    j["kind"] = "Sweep";
    j["n"] = opt.n;
    j["anchor"] = {{"T", r.records.front().T}, {"neg", r.records.front().neg}, {"expected", opt.n + 1}};
    j["degenerate_cutoff"] = r.degenerate_cutoff;
    j["brackets"] = json::array();
    for (const auto& [lo, hi] : r.brackets) j["brackets"].push_back({lo, hi});
    if (r.has_infinity) j["diag_l0"] = json::parse(diag_l0_to_json(r.diag));
    std::vector<int> ns;  // entries beyond 2K are dropped
    for (int n : cx.cfg["sweep"]["diag_n"].get<std::vector<int>>())
        if (n <= as.discretization().phi_dim()) ns.push_back(n);
    json series = json::array();
    bool consistent = !r.has_infinity || r.diag.consistent();
    for (const auto& d : diag_l0_series(out.inf, ns, opt.gap_tol, true)) {
        series.push_back(json::parse(diag_l0_to_json(d)));
        consistent = consistent && d.consistent();
    }
    j["diag_l0_series"] = series;
    write_file(cx, "sweep.json", j.dump(2) + "\n");

    if (r.degenerate_cutoff) cx.warnings.push_back("degenerate cutoff: eigenvalue n and n+1 of a limit block coincide");
    cx.summary["anchor_neg"] = r.records.front().neg;
    cx.summary["brackets"] = r.brackets.size();
    if (r.has_infinity) cx.summary["neg_infinity"] = r.diag.direct;
    *cx.log << "sweep: neg " << r.records.front().neg << " at T = " << r.records.front().T << ", "
            << r.records.back().neg << " at the last grid value, " << r.brackets.size() << " bracket(s)\n";
    if (!consistent) throw SmallTAnchorFailed("diag-l0: direct and block-formula counts differ at T = infinity");
    return out;
}

void cmd_sweep(Context& cx) {
    const auto eq = build_equilibrium(cx);
    const OperatorAssembler as(eq, build_discretization(cx));
    run_sweep(cx, as);
}

void cmd_mode(Context& cx) {
    const auto eq = build_equilibrium(cx);
    const auto disc = build_discretization(cx);
    const OperatorAssembler as(eq, disc);
    const auto sw = run_sweep(cx, as);
    if (sw.result.brackets.empty()) throw NoCrossing("the sweep endpoint counts agree; no crossing to locate");
    const auto opt = sweep_options(cx);
    const auto tr = make_truncation(sw.inf, opt.n, opt.gap_tol, opt.allow_degenerate);
    CrossingOptions co;
    co.rel_width = cx.cfg["crossing"]["rel_width"].get<double>();
    co.eigen_tol = cx.cfg["crossing"]["eigen_tol"].get<double>();
    const auto& mc = cx.cfg["mode"];
    ModeOptions mo;
    mo.h = mc["h"].get<double>();
    mo.nx = mc["nx"].get<int>();
    mo.points_per_panel = mc["points_per_panel"].get<int>();
    mo.tail_tol = mc["tail_tol"].get<double>();
    mo.threads = cx.threads;
    mo.averaging = disc.averaging;

    const int max_crossings = cx.cfg["crossing"]["max_crossings"].get<int>();
    json summary = json::array();
    for (std::size_t i = 0; i < sw.result.brackets.size() && static_cast<int>(i) < max_crossings; ++i) {
        const auto [lo, hi] = sw.result.brackets[i];
        auto c = find_crossing(as, tr, lo, hi, co);
        const auto m1 = reconstruct_mode(c.phi, c.psi, c.b, c.T0, eq, disc.K, mo);
        ModeOptions half = mo;
        half.h = 0.5 * mo.h;
        const auto m2 = reconstruct_mode(c.phi, c.psi, c.b, c.T0, eq, disc.K, half);
        c.vlasov_residual = m1.vlasov_residual;
        auto j = json::parse(crossing_to_json(c));
        j["vlasov"] = {{"h", {mo.h, half.h}},
                       {"residual", {m1.vlasov_residual, m2.vlasov_residual}},
                       {"ratio", m1.vlasov_residual / m2.vlasov_residual},
                       {"norm", m1.norm},
                       {"direct_nodes", m1.direct_nodes}};
        const std::string tag = std::to_string(i);
        write_file(cx, "crossing_" + tag + ".json", j.dump(2) + "\n");
        std::ostringstream os;
        os << std::setprecision(17) << "x,v1,v2,f_plus,f_minus\n";
        for (Index k = 0; k < m1.grid.size(); ++k) {
            const auto z = m1.grid.node(k);
            os << z.x << ',' << z.v1 << ',' << z.v2 << ',' << m1.f_plus(k) << ',' << m1.f_minus(k) << '\n';
        }
        write_file(cx, "mode_" + tag + ".csv", os.str());
        if (m1.direct_nodes > 0)
            cx.warnings.push_back("mode " + tag + ": " + std::to_string(m1.direct_nodes) +
                                  " nodes averaged by direct integration (no return detected)");
        summary.push_back({{"T0", c.T0}, {"eigen_residual", c.eigen_residual},
                           {"vlasov_ratio", m1.vlasov_residual / m2.vlasov_residual}});
        *cx.log << "crossing " << tag << ": T0 = " << std::setprecision(10) << c.T0
                << ", eigen residual " << c.eigen_residual << ", vlasov residual ratio "
                << m1.vlasov_residual / m2.vlasov_residual << "\n";
    }
    cx.summary["crossings"] = summary;
}

void cmd_ergodic(Context& cx) {
    const auto& g = cx.cfg["ergodic"];
    const auto kase = g["case"].get<std::string>();
    cx.summary["case"] = kase;
    if (kase == "weighted") {
        const auto w = lorentzian_weight(g["weight_L"].get<double>());
        LineDiscretization d;
        d.N = g["N"].get<int>();
        d.scheme = g["scheme"].get<std::string>() == "fd4" ? DerivativeScheme::FiniteDifference4
                                                           : DerivativeScheme::Spectral;
        const double beta = g["beta"].get<double>();
        const auto s = weighted_eigs(w, std::polar(1.0, beta), d);
        const int kmax = g["kmax"].get<int>();
        write_file(cx, "weighted_spectrum.json", weighted_spectrum_to_json(s, kmax) + "\n");
        const auto Ts = geometric_grid(g["T_min"].get<double>(), g["T_max"].get<double>(), g["points"].get<int>());
        const auto ser = ergodic_series_weighted(s, Ts);
        write_file(cx, "ergodic_weighted.csv", filter_series_csv(ser));
        maybe_plot(cx, "ergodic_weighted.csv", "T", true, true);
        cx.summary["fitted_slope"] = ser.decay_fit_exponent;
        cx.summary["pointwise_slope"] = ser.pointwise_exponent;
        cx.summary["eigenvalue_error"] = eigenvalue_error(s, kmax, kPi);
        cx.summary["kernel_dim"] = ser.kernel_dim;
        cx.summary["gap"] = ser.gap;
        cx.summary["scheme"] = to_string(d.scheme);
        *cx.log << "weighted case, beta = " << beta << ": fitted slope " << ser.decay_fit_exponent << "\n";
    } else if (kase == "l2sigma") {
        LineDiscretization d;
        d.L = g["L"].get<double>();
        d.N = g["cells"].get<int>();
        d.sigma = g["sigma"].get<double>();
        const auto Ts = g["l2_T"].get<std::vector<double>>();
        const auto ser = ergodic_series_L2sigma(Ts, d, cx.threads);
        write_file(cx, "ergodic_l2sigma.csv", filter_series_csv(ser));
        maybe_plot(cx, "ergodic_l2sigma.csv", "T", true, true);
        cx.summary["sigma"] = d.sigma;
        cx.summary["truncation_L"] = d.L;
        cx.summary["fitted_exponent"] = ser.decay_fit_exponent;
        cx.summary["final_norm"] = ser.points.empty() ? 0.0 : ser.points.back().operator_norm;
        *cx.log << "L2 sigma case, sigma = " << d.sigma << ": fitted exponent " << ser.decay_fit_exponent << "\n";
    } else {
        const auto demo = projector_demo(g["N_list"].get<std::vector<int>>(), g["dim"].get<int>(),
                                         g["finite_support"].get<int>());
        write_file(cx, "projector.json", projector_demo_to_json(demo) + "\n");
    }
}

void cmd_demo(Context& cx) {
    const auto& g = cx.cfg["ergodic"];
    const auto demo = projector_demo(g["N_list"].get<std::vector<int>>(), g["dim"].get<int>(),
                                     g["finite_support"].get<int>());
    write_file(cx, "projector.json", projector_demo_to_json(demo) + "\n");
    bool ok = true;
    for (const auto& r : demo.rows) {
        ok = ok && r.max_defect <= 1e-12 && std::abs(r.norm - 1.0) <= 1e-12;
        *cx.log << "N = " << std::setw(3) << r.N << ": spectrum {0 x" << r.zeros << ", 1 x" << r.ones
                << "}, |pi_N f| = " << r.finite_norm << ", |pi_N g| = " << r.decaying_norm << "\n";
    }
    cx.summary["spectra_in_0_1"] = ok;
    const auto w = lorentzian_weight();
    LineDiscretization d;
    d.N = 33;
    for (double beta : {0.0, kPi}) {
        const auto s = weighted_eigs(w, std::polar(1.0, beta), d);
        write_file(cx, beta == 0.0 ? "weighted_periodic.json" : "weighted_antiperiodic.json",
                   weighted_spectrum_to_json(s, 5) + "\n");
    }
}

std::string iso_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json tolerances(const json& c) {
    return {{"velocity_tail_tol", c["equilibrium"]["velocity"]["tail_tol"]},
            {"validation_tol", c["equilibrium"]["validation_tol"]},
            {"asymmetry_tol", c["discretization"]["asymmetry_tol"]},
            {"prune_tol", c["discretization"]["prune_tol"]},
            {"gap_tol", c["sweep"]["gap_tol"]},
            {"zero_threshold", "1e-9 ||M||_inf"},
            {"crossing_rel_width", c["crossing"]["rel_width"]},
            {"crossing_eigen_tol", c["crossing"]["eigen_tol"]},
            {"mode_tail_tol", c["mode"]["tail_tol"]}};
}

}  // namespace

int run(const RunConfig& rc, std::ostream& log) {
    static const std::map<std::string, void (*)(Context&)> commands = {
        {"equilibrium", cmd_equilibrium}, {"criterion", cmd_criterion}, {"sweep", cmd_sweep},
        {"mode", cmd_mode},               {"ergodic", cmd_ergodic},     {"demo", cmd_demo}};
    const std::string started = iso_now();
    Context cx;
    cx.log = &log;
    cx.threads = rc.threads;
    cx.emit_plots = rc.emit_plots;
    int code = kExitOk;
    std::string error_kind, error_text;
    try {
        const auto it = commands.find(rc.command);
        if (it == commands.end()) throw ConfigError("unknown command '" + rc.command + "'");
        if (rc.threads < 1) throw ConfigError("'threads': must be at least 1");
        json user = json::object();
        std::string source;
        if (!rc.config_path.empty()) {
            user = load_config_file(rc.config_path);
            source = read_all(rc.config_path);
        }
        for (const auto& o : rc.overrides) apply_override(user, o);
        cx.cfg = resolve_config(user, source);
        cx.out = rc.out_dir;
        std::error_code ec;
        fs::create_directories(cx.out, ec);
        if (ec || !fs::is_directory(cx.out)) throw ConfigError("output directory '" + rc.out_dir + "' is not writable");
        write_file(cx, "config.resolved.json", cx.cfg.dump(2) + "\n");
        it->second(cx);
    } catch (const ConfigError& e) {
        code = kExitConfig;
        error_kind = e.kind();
        error_text = e.what();
    } catch (const SmallTAnchorFailed& e) {
        code = kExitAudit;
        error_kind = e.kind();
        error_text = e.what();
    } catch (const Error& e) {
        code = kExitPipeline;
        error_kind = "PipelineError";
        error_text = "in '" + rc.command + "': " + e.what();
    } catch (const std::exception& e) {
        code = kExitPipeline;
        error_kind = "PipelineError";
        error_text = "in '" + rc.command + "': " + e.what();
    }
    if (code != kExitOk) log << error_text << "\n";
    if (cx.out.empty()) return code;  // nowhere to put a manifest

    json m;
    m["tool"] = "vmstab";
    m["version"] = kToolVersion;
    m["command"] = rc.command;
    m["threads"] = rc.threads;
    m["started"] = started;
    m["finished"] = iso_now();
    m["exit_code"] = code;
    if (!error_kind.empty()) m["error"] = {{"kind", error_kind}, {"message", error_text}};
    m["config_hash"] = cx.cfg.is_null() ? "" : hex64(fnv1a(cx.cfg.dump()));
    m["overrides"] = rc.overrides;
    if (!cx.cfg.is_null()) m["tolerances"] = tolerances(cx.cfg);
    m["warnings"] = cx.warnings;
    m["summary"] = cx.summary;
    json files = json::array();
    for (const auto& f : cx.files) {
        const auto bytes = read_all(cx.out / f);
        files.push_back({{"name", f}, {"bytes", bytes.size()}, {"fnv1a", hex64(fnv1a(bytes))}});
    }
    m["files"] = files;
    std::ofstream(cx.out / "manifest.json") << m.dump(2) << "\n";
    for (const auto& w : cx.warnings) log << "warning: " << w << "\n";
    return code;
}

}  // namespace vmstab::cli
