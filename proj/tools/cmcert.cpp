#include <CLI11.hpp>
#include <cmcert/cmcert.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace cmcert;

namespace {

constexpr int exit_ok = 0, exit_precondition = 2, exit_certification = 3, exit_oracle = 4;

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::not_contraction:
        case ErrorKind::certification: return exit_certification;
        case ErrorKind::oracle: return exit_oracle;
        default: return exit_precondition;
    }
}

/// Resolved configuration without output destinations, so the hash identifies the computation.
std::string hashed_config(const CLI::App& app) {
    std::istringstream in(app.config_to_str(true, false));
    std::string line, kept;
    while (std::getline(in, line)) {
        std::string key = line.substr(0, line.find('='));
        while (!key.empty() && key.back() == ' ') key.pop_back();
        std::string leaf = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
        if (leaf == "out" || leaf == "csv" || leaf == "json" || leaf == "config") continue;
        kept += line + "\n";
    }
    return kept;
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

struct RunContext {
    std::string config_hash;
    std::string command;

    nlohmann::json header() const {
        nlohmann::json mods = nlohmann::json::object();
        for (const auto& [name, v] : module_versions()) mods[name] = v;
        return {{"tool", "cmcert"}, {"version", version}, {"command", command}, {"config_hash", config_hash},
                {"modules", mods}};
    }
    std::string csv_comment() const {
        return "# cmcert " + std::string(version) + " " + command + " config " + config_hash + "\n";
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::precondition, "cannot open '" + path + "' for writing");
    f << text;
}

void emit_json(const RunContext& ctx, nlohmann::json body, const std::string& path) {
    nlohmann::json out{{"header", ctx.header()}};
    out.update(body);
    std::string text = out.dump(2) + "\n";
    if (path.empty() || path == "-")
        std::cout << text;
    else
        write_text(path, text);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::precondition, "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::precondition, "malformed JSON in '" + path + "': " + e.what());
    }
}

/// A map as a JSON array of jets, or an object with a "jets" array.
JetMap read_map(const std::string& path) {
    nlohmann::json j = read_json(path);
    const nlohmann::json& arr = j.is_object() ? j.at("jets") : j;
    require(arr.is_array() && !arr.empty(), "map file must hold a non-empty array of jets");
    JetMap F;
    for (const auto& e : arr) F.push_back(jet_from_json(e));
    return F;
}

std::vector<int> weights_for(const std::string& mode) {
    if (mode == "weighted") return {2, 1, 1};
    if (mode == "total") return {1, 1, 1};
    fail(ErrorKind::precondition, "weights must be 'weighted' or 'total'");
}

JetMap zero_system(int order) {
    TaylorJet x = TaylorJet::variable(0, 2, order, 0), y = TaylorJet::variable(0, 2, order, 1);
    return {Rational(-1) * x, Rational(-2) * y};
}

struct MapChoice {
    JetMap F;
    LinearSplitting split;
};

MapChoice choose_map(const std::string& system, const std::string& map_file, const std::string& weights, int order) {
    JetMap F;
    if (system == "rdt") {
        F = rdt::xy_jets(weights_for(weights));
    } else if (system == "zero") {
        F = zero_system(order);
    } else if (system == "file") {
        require(!map_file.empty(), "--system file needs --map");
        F = read_map(map_file);
    } else {
        fail(ErrorKind::precondition, "unknown system '" + system + "'");
    }
    for (auto& j : F)
        if (j.max_order() < order) j = j.promote(order);
    return {F, split_spectrum(phase_linear_part(F))};
}

SolveOptions solve_options(const std::vector<std::string>& targets, std::size_t k, std::size_t mc) {
    SolveOptions opt;
    for (const auto& t : targets) opt.targets.push_back(parse_monomial(t, k, mc));
    return opt;
}

void print_solution(const ConjugacySolution& sol) {
    auto names = sol.domain_names();
    for (std::size_t i = 0; i < sol.R.size(); ++i)
        std::cout << "R" << (sol.R.size() > 1 ? std::to_string(i + 1) : "") << " = " << sol.R[i].to_string(names) << "\n";
    for (std::size_t i = 0; i < sol.K.size(); ++i)
        std::cout << "K" << i + 1 << " = " << sol.K[i].to_string(names) << "\n";
}

struct SolveArgs {
    std::string system = "rdt", map_file, weights = "weighted", kc = "normal-form", out;
    std::vector<std::string> targets;
    int order = 3;
};

int cmd_solve(const RunContext& ctx, const SolveArgs& a) {
    require(a.order >= 1, "--order must be at least 1");
    MapChoice m = choose_map(a.system, a.map_file, a.weights, a.order);
    std::size_t k = m.F.front().num_params();
    require(a.kc == "zero" || a.kc == "normal-form", "--kc must be 'zero' or 'normal-form'");
    std::vector<std::string> targets = a.kc == "zero" ? std::vector<std::string>{} : a.targets;
    ConjugacySolution sol =
        solve_order_by_order(m.F, m.split, {}, a.order, solve_options(targets, k, m.split.dim_c));
    print_solution(sol);
    if (!a.out.empty()) emit_json(ctx, {{"solution", to_json(sol)}}, a.out);
    return exit_ok;
}

struct CertifyArgs {
    SolveArgs solve;
    std::string radius = "1/10", shape_mu = "1", delta = "1/1000000";
    int shape_p = 2, refine_iters = 5;
    std::vector<std::string> params;
    std::vector<double> ansatz{0, 0, 0};
};

struct RdtArgs {
    rdt::PipelineOptions opt;
    std::string lambda_max = "7.6e-5", er_coef = "57.1", ek_coef = "61.9", delta = "1e-6", out, csv;
    bool no_bisect = false;

    rdt::PipelineOptions resolve() const {
        rdt::PipelineOptions o = opt;
        o.lambda_max = parse_rational(lambda_max);
        o.er_coef = parse_rational(er_coef);
        o.ek_coef = parse_rational(ek_coef);
        o.delta = parse_rational(delta);
        o.bisect = !no_bisect;
        return o;
    }
};

int cmd_rdt_certify(const RunContext& ctx, const RdtArgs& a) {
    rdt::PipelineOptions o = a.resolve();
    rdt::CertificationBundle b = rdt::certify_pipeline(o);
    for (const auto& s : b.stages) {
        std::cout << "stage " << s.index << " " << s.name << ": " << (s.ran ? (s.passed ? "passed" : "FAILED") : "skipped")
                  << "\n";
        for (const auto& q : s.checks)
            if (s.index != 4 || !q.passed)
                std::cout << "  " << (q.passed ? "ok   " : "FAIL ") << q.name << "  [" << q.lhs.lo << ", " << q.lhs.hi
                          << "]\n";
    }
    std::cout << "remainder certificates: " << b.remainders.size() << " lambda values\n";
    if (!b.passed)
        for (const auto& f : b.failures) std::cout << "failure: " << f << "\n";
    if (b.largest_certifiable)
        std::cout << "largest certifiable lambda_max: " << to_decimal(*b.largest_certifiable) << "\n";
    std::cout << (b.passed ? "CERTIFIED" : "NOT CERTIFIED") << "\n";
    if (!a.out.empty()) emit_json(ctx, {{"bundle", rdt::to_json(b)}}, a.out);
    if (!a.csv.empty()) {
        std::string text = ctx.csv_comment() + rdt::csv_header() + "\n";
        for (const auto& r : b.reports) text += rdt::csv_row(r) + "\n";
        write_text(a.csv, text);
    }
    return b.passed ? exit_ok : exit_certification;
}

int cmd_certify(const RunContext& ctx, const CertifyArgs& a, const RdtArgs& rdt_args) {
    if (a.solve.system == "rdt") return cmd_rdt_certify(ctx, rdt_args);
    MapChoice m = choose_map(a.solve.system, a.solve.map_file, a.solve.weights, a.solve.order);
    std::size_t k = m.F.front().num_params();
    std::vector<Rational> params;
    for (const auto& p : a.params) params.push_back(parse_rational(p));
    require(params.size() == k, "one --param value is required per map parameter");
    std::vector<std::string> targets = a.solve.kc == "zero" ? std::vector<std::string>{} : a.solve.targets;
    ConjugacySolution sol =
        solve_order_by_order(m.F, m.split, {}, a.solve.order, solve_options(targets, k, m.split.dim_c));
    Rational r = parse_rational(a.radius);
    require(r > 0, "--radius must be positive");
    Box U(m.split.dim_c, Interval::hull(-r, r));
    FixedProblem P = fix_parameters(sol, m.split, params, U, BoundShape{parse_rational(a.shape_mu), a.shape_p}, m.F);
    // the nonlinearity is cut off outside the cube of radius 2r in every phase direction
    Rational d = parse_rational(a.delta);
    std::vector<CutoffSpec> specs(P.dim, CutoffSpec{-2 * r, d, 2 * r, d});
    Interval L_g = bound_composed_nonlinearity(P.PF, specs, Box{}, 1e-9);
    JetMap kc(P.Pk.begin(), P.Pk.begin() + static_cast<long>(P.dim_c));
    std::vector<CutoffSpec> cspecs(P.dim_c, CutoffSpec{-r, d, r, d});
    Interval L_c = bound_composed_nonlinearity(kc, cspecs, Box{}, 1e-9);
    require(a.ansatz.size() == 3, "--ansatz takes three values");
    BoundInputs in;
    in.lip = derive_lipschitz(P, L_g, L_c, {a.ansatz[0], a.ansatz[1], a.ansatz[2]});
    BoundCertificate cert = certify_bounds(P, in);
    cert = refine_with_taylor(cert, P, a.refine_iters);
    cert.derivative_certs.push_back(derivative_bound_system(P, cert, 1));
    bool ok = fixed_point_contained(cert.system.A, cert.system.b, cert.C);
    for (const auto& dc : cert.derivative_certs) ok = ok && fixed_point_contained(dc.system.A, dc.system.b, dc.C);
    std::cout << "C_R = " << cert.C[0].hi << "\nC_K,u = " << cert.C[1].hi << "\nC_K,s = " << cert.C[2].hi << "\n";
    std::cout << (ok ? "CERTIFIED" : "NOT CERTIFIED") << "\n";
    if (!a.solve.out.empty()) emit_json(ctx, {{"certificate", to_json(cert)}}, a.solve.out);
    return ok ? exit_ok : exit_certification;
}

struct OracleArgs {
    std::string mode, lambda = "5e-5", lambda_max = "7.6e-5", er_coef = "57.1", ek_coef = "61.9", out, json;
    std::size_t steps = 10000;
};

rdt::EnclosureReport box_for(const Rational& lambda, const std::string& lambda_max, const std::string& er,
                             const std::string& ek) {
    Interval s = rdt::sqrt_lambda(parse_rational(lambda_max));
    return rdt::enclosure_report(lambda, Interval::from_rational(parse_rational(er)) * s,
                                 Interval::from_rational(parse_rational(ek)) * s, "oracle box, uniform coefficients");
}

int cmd_oracle(const RunContext& ctx, const OracleArgs& a) {
    Rational l = parse_rational(a.lambda);
    oracle::RdtSystem sys{l};
    if (a.mode == "period2") {
        oracle::Orbit o = oracle::find_period2(sys);
        rdt::EnclosureReport rep = box_for(l, a.lambda_max, a.er_coef, a.ek_coef);
        oracle::VerificationResult v = oracle::verify_enclosure(o, rep);
        auto m = oracle::period2_multipliers(sys, o);
        std::cout << std::setprecision(17);
        for (const auto& p : o.points)
            std::cout << "point x = " << static_cast<double>(p.xy[0]) << " y = " << static_cast<double>(p.xy[1]) << "\n";
        std::cout << "residual " << static_cast<double>(o.residual) << "\n";
        std::cout << "multipliers of D(F^2): " << static_cast<double>(m[0].real()) << " "
                  << static_cast<double>(m[1].real()) << "\n";
        std::cout << "containment: " << (v.passed ? "PASS" : "FAIL") << " (" << v.detail << ")\n";
        if (!a.out.empty()) write_text(a.out, ctx.csv_comment() + oracle::orbit_csv(o));
        if (!a.json.empty())
            emit_json(ctx, {{"orbit", oracle::summary_json(o)}, {"verification", oracle::to_json(v)}}, a.json);
        return v.passed ? exit_ok : exit_oracle;
    }
    rdt::EnclosureReport rep = box_for(l, a.lambda_max, a.er_coef, a.ek_coef);
    oracle::HeteroclinicOptions opt;
    opt.steps = a.steps;
    oracle::HeteroclinicTrace t = oracle::trace_heteroclinic(sys, rep.B, opt);
    std::cout << std::setprecision(6);
    std::cout << "start center coordinate " << static_cast<double>(t.start_center) << "\n";
    std::cout << "forward: " << (t.forward_hit ? "reached |p| < 1e-10 at step " + std::to_string(*t.forward_hit) : "budget exhausted")
              << ", inside B_lambda: " << (t.forward_inside ? "yes" : "no") << "\n";
    std::cout << "backward: "
              << (t.backward_hit ? "within 1e-8 of the period-2 pair at step " + std::to_string(*t.backward_hit)
                                 : "budget exhausted, distance " + std::to_string(static_cast<double>(t.backward_distance)))
              << ", inside B_lambda: " << (t.backward_inside ? "yes" : "no") << "\n";
    std::cout << "trace: " << (t.passed() ? "PASS" : "FAIL") << "\n";
    if (!a.out.empty()) {
        write_text(a.out + "_forward.csv", ctx.csv_comment() + oracle::orbit_csv(t.forward));
        write_text(a.out + "_backward.csv", ctx.csv_comment() + oracle::orbit_csv(t.backward));
    }
    if (!a.json.empty()) emit_json(ctx, {{"trace", oracle::to_json(t)}}, a.json);
    return t.passed() ? exit_ok : exit_oracle;
}

struct SweepArgs {
    std::string lambda_min = "1e-7", lambda_max = "7.6e-5", er_coef = "57.1", ek_coef = "61.9", csv;
    int points = 16;
};

int cmd_sweep(const RunContext& ctx, const SweepArgs& a) {
    std::vector<Rational> grid = rdt::geometric_grid(parse_rational(a.lambda_min), parse_rational(a.lambda_max), a.points);
    std::string text = ctx.csv_comment() + rdt::csv_header() + ",oracle_passed,oracle_box_margin\n";
    bool all = true;
    for (const auto& l : grid) {
        rdt::EnclosureReport r = box_for(l, a.lambda_max, a.er_coef, a.ek_coef);
        oracle::VerificationResult v = oracle::verify_enclosure(oracle::find_period2(oracle::RdtSystem{l}), r);
        long double margin = *std::min_element(v.box_margins.begin(), v.box_margins.end());
        all = all && r.accepted() && v.passed;
        std::ostringstream row;
        row.precision(17);
        row << rdt::csv_row(r) << ',' << v.passed << ',' << static_cast<double>(margin);
        text += row.str() + "\n";
    }
    if (a.csv.empty())
        std::cout << text;
    else
        write_text(a.csv, text);
    std::cerr << grid.size() << " lambda values, " << (all ? "all accepted" : "some rejected") << "\n";
    return all ? exit_ok : exit_certification;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Center manifold jets with certified remainder bounds"};
    app.set_config("--config", "", "TOML-style file of option values; command-line flags override it");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("cmcert ") + version);

    SolveArgs solve_args;
    auto add_map_options = [](CLI::App* c, SolveArgs& s) {
        c->add_option("--system", s.system, "rdt, zero or file")->check(CLI::IsMember({"rdt", "zero", "file"}));
        c->add_option("--map", s.map_file, "JSON map for --system file");
        c->add_option("--order", s.order, "jet order");
        c->add_option("--weights", s.weights, "degree for the rdt system: weighted (lambda counts twice) or total");
        c->add_option("--kc-target", s.targets, "monomials of R to remove, e.g. x2");
        c->add_option("--kc", s.kc, "zero or normal-form");
        c->add_option("--out", s.out, "output JSON path");
    };
    CLI::App* solve = app.add_subcommand("solve", "solve the conjugacy jets order by order");
    add_map_options(solve, solve_args);

    CertifyArgs cert_args;
    RdtArgs rdt_args;
    auto add_rdt_options = [](CLI::App* c, RdtArgs& r) {
        c->add_option("--lambda-max", r.lambda_max, "largest lambda of the certified range");
        c->add_option("--er-coef", r.er_coef, "E_R = coefficient * sqrt(lambda_max)");
        c->add_option("--ek-coef", r.ek_coef, "E_K = coefficient * sqrt(lambda_max)");
        c->add_option("--delta", r.delta, "cutoff margin");
        c->add_option("--grid-points", r.opt.grid_points, "lambda values in the geometric grid");
        c->add_option("--refine-iters", r.opt.refine_iters, "Taylor refinement passes per certificate");
        c->add_option("--bisect-iters", r.opt.bisect_iters, "bisection steps for the largest certifiable lambda_max");
        c->add_flag("--no-bisect", r.no_bisect, "do not search for the largest certifiable lambda_max");
        c->add_option("--csv", r.csv, "enclosure report table");
    };
    CLI::App* certify = app.add_subcommand("certify", "certify remainder bounds for a fixed parameter");
    add_map_options(certify, cert_args.solve);
    certify->add_option("--radius", cert_args.radius, "half-width of the center box U");
    certify->add_option("--param", cert_args.params, "parameter values");
    certify->add_option("--shape-mu", cert_args.shape_mu, "bound shape mu ||x||^p");
    certify->add_option("--shape-p", cert_args.shape_p, "bound shape exponent p");
    certify->add_option("--ansatz", cert_args.ansatz, "a priori derivative bounds for R, K_u, K_s")->expected(3);
    certify->add_option("--cutoff-delta", cert_args.delta, "cutoff margin for the nonlinearity bounds");
    add_rdt_options(certify, rdt_args);

    CLI::App* rdt_cmd = app.add_subcommand("rdt", "reaction-diffusion lattice application");
    rdt_cmd->require_subcommand(1);
    CLI::App* rdt_certify = rdt_cmd->add_subcommand("certify", "run the full certification pipeline");
    add_rdt_options(rdt_certify, rdt_args);
    rdt_certify->add_option("--out", rdt_args.out, "bundle JSON path");

    OracleArgs oracle_args;
    CLI::App* oracle_cmd = app.add_subcommand("oracle", "floating-point orbit checks");
    oracle_cmd->require_subcommand(1);
    for (const char* mode : {"period2", "hetero"}) {
        CLI::App* c = oracle_cmd->add_subcommand(mode, std::string(mode) == "period2" ? "Newton period-2 orbit"
                                                                                      : "heteroclinic trace");
        c->add_option("--lambda", oracle_args.lambda, "parameter value");
        c->add_option("--lambda-max", oracle_args.lambda_max, "lambda_max of the uniform coefficients");
        c->add_option("--er-coef", oracle_args.er_coef, "E_R coefficient of the box");
        c->add_option("--ek-coef", oracle_args.ek_coef, "E_K coefficient of the box");
        c->add_option("--out", oracle_args.out, "orbit CSV path (prefix for hetero)");
        c->add_option("--json", oracle_args.json, "verdict JSON path");
        if (std::string(mode) == "hetero") c->add_option("--steps", oracle_args.steps, "step budget of each leg");
        c->callback([&oracle_args, mode] { oracle_args.mode = mode; });
    }

    SweepArgs sweep_args;
    CLI::App* sweep = app.add_subcommand("sweep", "enclosure reports and oracle checks over a lambda grid");
    sweep->add_option("--lambda-min", sweep_args.lambda_min, "lower end of the grid (excluded)");
    sweep->add_option("--lambda-max", sweep_args.lambda_max, "upper end of the grid");
    sweep->add_option("--points", sweep_args.points, "grid size");
    sweep->add_option("--er-coef", sweep_args.er_coef, "E_R coefficient");
    sweep->add_option("--ek-coef", sweep_args.ek_coef, "E_K coefficient");
    sweep->add_option("--csv", sweep_args.csv, "output table path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_precondition;
    }

    RunContext ctx;
    ctx.config_hash = fnv1a_hex(hashed_config(app));
    try {
        if (solve->parsed()) {
            ctx.command = "solve";
            return cmd_solve(ctx, solve_args);
        }
        if (certify->parsed()) {
            ctx.command = "certify";
            rdt_args.out = cert_args.solve.out;
            return cmd_certify(ctx, cert_args, rdt_args);
        }
        if (rdt_certify->parsed()) {
            ctx.command = "rdt certify";
            return cmd_rdt_certify(ctx, rdt_args);
        }
        if (oracle_cmd->parsed()) {
            ctx.command = "oracle " + oracle_args.mode;
            return cmd_oracle(ctx, oracle_args);
        }
        if (sweep->parsed()) {
            ctx.command = "sweep";
            return cmd_sweep(ctx, sweep_args);
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    }
    return exit_precondition;
}
