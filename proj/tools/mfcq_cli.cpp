#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mfcq/harness.hpp"

namespace fs = std::filesystem;
using namespace mfcq;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 1;
    std::string out = ".";
    std::optional<std::string> variant;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
    auto* opt = sub->add_option("--config", c.config, "JSON configuration file");
    if (config_required) opt->required();
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--variant", c.variant, "formula variant")->check(CLI::IsMember({"paper", "audited"}));
}

RunConfig load(const Common& c) {
    RunConfig cfg = c.config.empty() ? parse_config(nlohmann::json::object()) : load_config(c.config);
    if (c.variant) cfg.variant = parse_variant(*c.variant);
    return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json mat_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

void print_vec(const char* name, const Vec& v) {
    std::cout << name << " =";
    for (Eigen::Index i = 0; i < v.size(); ++i) std::cout << ' ' << format_double(v(i));
    std::cout << '\n';
}

int run_alg(const Common& c, bool alg2) {
    RunConfig cfg = load(c);
    const RunLog log = alg2 ? run_alg2(cfg, c.seed) : run_alg1(cfg, c.seed);
    const fs::path out(c.out);
    write_params_csv(out / "params.csv", log, cfg.model.example);
    write_value_error_csv(out / "value_error.csv", log);
    write_json(out / "true_params.json", true_params_json(cfg.model, cfg.variant));
    const auto& last = log.params.back();
    std::cout << "episodes completed: " << last.n << '\n';
    print_vec("theta", last.theta);
    print_vec("psi", last.psi);
    print_vec("phi", last.phi);
    if (!log.value_errors.empty())
        std::cout << "value error: first " << format_double(log.value_errors.front().l1_error) << ", last "
                  << format_double(log.value_errors.back().l1_error) << '\n';
    if (log.diverged) {
        std::cerr << "divergence at episode " << log.diverged_at << ": " << log.diagnostic << '\n';
        return 3;
    }
    return 0;
}

int run_grid(const Common& c) {
    const RunConfig cfg = load(c);
    const auto rows = grid_study(cfg, c.seed);
    write_grid_defect_csv(fs::path(c.out) / "grid_defect.csv", rows);
    for (const auto& r : rows)
        std::cout << "dt " << format_double(r.dt) << " defect " << format_double(r.defect) << " stderr "
                  << format_double(r.stderr_) << '\n';
    if (rows.size() >= 2) std::cout << "log-log slope " << format_double(defect_slope(rows)) << '\n';
    return 0;
}

int run_eval(const Common& c) {
    const RunConfig cfg = load(c);
    const Example ex = cfg.model.example;
    const Policy pol =
        cfg.algo.kind == AlgoKind::Alg2 ? phi_to_policy(ex, cfg.phi0) : psi_to_policy(ex, cfg.psi0);
    OutputConfig oc = cfg.output;
    if (oc.eval_every == 0) oc.eval_every = 1;
    const ValueErrorEvaluator ev(cfg.model, cfg.grid, oc);
    RunLog log;
    log.value_errors.push_back(ev.evaluate(pol, 0, cfg.algo.threads));
    write_value_error_csv(fs::path(c.out) / "value_error.csv", log);
    std::cout << "l1 error " << format_double(log.value_errors[0].l1_error) << " stderr "
              << format_double(log.value_errors[0].stderr_) << '\n';
    return 0;
}

int run_riccati(const Common& c) {
    const RunConfig cfg = load(c);
    if (!cfg.lqinf) throw ConfigError("riccati needs an lqinf block");
    const auto& lc = *cfg.lqinf;
    const auto sol = lqinf::riccati_solve(lc.model, lc.riccati_tol, lc.riccati_max_iter);
    const auto u = lqinf::uvsz(sol.Lambda, sol.Gamma, lc.model);
    nlohmann::json j{{"Lambda", mat_json(sol.Lambda)},
                     {"Gamma", mat_json(sol.Gamma)},
                     {"chi", sol.chi},
                     {"U", mat_json(u.U)},
                     {"V", mat_json(u.V)},
                     {"K", mat_json(-u.U.inverse() * u.S)},
                     {"Kbar", mat_json(-u.V.inverse() * u.Z)},
                     {"iterations", sol.iterations},
                     {"residuals",
                      {{"lambda", sol.residuals.lambda}, {"gamma", sol.residuals.gamma}, {"chi", sol.residuals.chi}}}};
    write_json(fs::path(c.out) / "riccati.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_inner(const Common& c) {
    const RunConfig cfg = load(c);
    if (!cfg.lqinf) throw ConfigError("inner-lq needs an lqinf block");
    const auto res = run_inner_lq(*cfg.lqinf);
    write_inner_trace_csv(fs::path(c.out) / "inner_trace.csv", res.trace);
    const auto& ce = res.certificate;
    nlohmann::json j{{"upsilon", ce.upsilon}, {"Upsilon", ce.Upsilon}, {"eta", ce.eta}, {"a", ce.a}, {"b", ce.b}};
    write_json(fs::path(c.out) / "certificate.json", j);
    std::cout << "eta " << format_double(ce.eta) << " final distance " << format_double(std::sqrt(res.trace.dist2.back()))
              << '\n';
    return 0;
}

int run_audit(const Common& c) {
    const RunConfig cfg = load(c);
    const ModelConstants& m = cfg.model;
    const fs::path out(c.out);
    write_json(out / "true_params.json", true_params_json(m, cfg.variant));
    const auto tp = true_params(m, cfg.variant);
    const auto rep = dpp_audit(m, tp.theta, tp.psi, cfg.variant, audit_grid(m, 10, 10));
    std::ofstream csv(out / "dpp_audit.csv", std::ios::binary);
    csv << "t,s1,s2,residual\n";
    for (std::size_t i = 0; i < rep.points.size(); ++i) {
        const auto& p = rep.points[i];
        double s1 = 0, s2 = 0;
        if (m.example == Example::LqFinite) {
            s1 = as_gaussian(p.summary).mean;
            s2 = as_gaussian(p.summary).var;
        } else {
            s1 = as_logmean(p.summary).logmean;
        }
        csv << format_double(p.t) << ',' << format_double(s1) << ',' << format_double(s2) << ','
            << format_double(rep.residuals[i]) << '\n';
    }
    std::cout << "max |residual| " << format_double(rep.max_abs) << " spread " << format_double(rep.spread) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous-time q-learning for mean-field control with common noise"};
    app.require_subcommand(1);
    Common c;
    auto* a1 = app.add_subcommand("run-alg1", "offline optimal q-learning");
    auto* a2 = app.add_subcommand("run-alg2", "offline actor-critic q-learning");
    auto* gs = app.add_subcommand("grid-study", "martingale-defect decay over grid sizes");
    auto* ev = app.add_subcommand("eval-value", "value error of the configured initial policy");
    auto* ri = app.add_subcommand("riccati", "infinite-horizon LQ Riccati solution");
    auto* in = app.add_subcommand("inner-lq", "inner gradient ascent with contraction certificate");
    auto* au = app.add_subcommand("audit", "true parameters and DPP residual audit");
    for (auto* s : {a1, a2, gs, ri, in}) add_common(s, c, true);
    for (auto* s : {ev, au}) add_common(s, c, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (a1->parsed()) return run_alg(c, false);
        if (a2->parsed()) return run_alg(c, true);
        if (gs->parsed()) return run_grid(c);
        if (ev->parsed()) return run_eval(c);
        if (ri->parsed()) return run_riccati(c);
        if (in->parsed()) return run_inner(c);
        if (au->parsed()) return run_audit(c);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 3;
    } catch (const CertificateError& e) {
        std::cerr << "certificate failure: " << e.what() << '\n';
        return 4;
    } catch (const BandViolationError& e) {
        std::cerr << "certificate failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
