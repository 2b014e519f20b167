#include "mfcq/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mfcq {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* block, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(block) + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + block);
}

Vec to_vec(const json& j) {
    if (j.is_number()) return Vec::Constant(1, j.get<double>());
    if (!j.is_array()) throw ConfigError("expected a number or an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

Mat to_mat(const json& j) {
    if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) throw ConfigError("expected a matrix as an array of rows");
    const std::size_t cols = j[0].size();
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw ConfigError("matrix rows must have equal length");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
    return m;
}

json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

ModelConstants parse_model(const json& j) {
    check_keys(j, "model", {"example", "b", "sigma", "sigma_o", "lambda", "beta", "gamma", "T"});
    const Example e = parse_example(j.at("example").get<std::string>());
    ModelConstants c = e == Example::LqFinite ? ModelConstants::lq_paper() : ModelConstants::nlq_paper();
    if (j.contains("b")) c.b = j["b"].get<double>();
    if (j.contains("sigma")) c.sigma = j["sigma"].get<double>();
    if (j.contains("sigma_o")) c.sigma_o = j["sigma_o"].get<double>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("T")) c.T = j["T"].get<double>();
    return c;
}

lqinf::LqInfModel parse_lqinf_model(const json& j) {
    check_keys(j, "lqinf.model",
               {"B", "Bbar", "D", "Dbar", "Do", "Dobar", "M", "Mbar", "C", "F", "Fo", "R", "beta", "gamma"});
    lqinf::LqInfModel m;
    m.B = to_mat(j.at("B"));
    m.C = to_mat(j.at("C"));
    m.M = to_mat(j.at("M"));
    m.R = to_mat(j.at("R"));
    const auto d = m.B.rows();
    const auto p = m.R.rows();
    auto opt = [&](const char* k, Eigen::Index r, Eigen::Index c) {
        return j.contains(k) ? to_mat(j[k]) : Mat(Mat::Zero(r, c));
    };
    m.Bbar = opt("Bbar", d, d);
    m.D = opt("D", d, d);
    m.Dbar = opt("Dbar", d, d);
    m.Do = opt("Do", d, d);
    m.Dobar = opt("Dobar", d, d);
    m.Mbar = opt("Mbar", d, d);
    m.F = opt("F", d, p);
    m.Fo = opt("Fo", d, p);
    m.beta = j.at("beta").get<double>();
    m.gamma = j.at("gamma").get<double>();
    return m;
}

LqInfConfig parse_lqinf(const json& j) {
    check_keys(j, "lqinf", {"model", "qn", "moments", "a", "b", "alphas", "iterations", "phi0", "riccati_tol",
                            "riccati_max_iter"});
    LqInfConfig c;
    if (j.contains("model")) c.model = parse_lqinf_model(j["model"]);
    if (j.contains("qn")) {
        const auto& q = j["qn"];
        check_keys(q, "lqinf.qn", {"L", "G", "c", "S", "U", "Z", "V", "gamma"});
        lqinf::QnCoefficients qn;
        qn.L = to_mat(q.at("L"));
        qn.G = to_mat(q.at("G"));
        qn.c = q.value("c", 0.0);
        qn.S = to_mat(q.at("S"));
        qn.U = to_mat(q.at("U"));
        qn.Z = to_mat(q.at("Z"));
        qn.V = to_mat(q.at("V"));
        qn.gamma = q.at("gamma").get<double>();
        c.qn = qn;
    } else if (!j.contains("model")) {
        throw ConfigError("lqinf needs either model or qn");
    }
    const auto& mo = j.at("moments");
    check_keys(mo, "lqinf.moments", {"C_mu", "C_mubar", "mass", "beta"});
    const Mat cm = to_mat(mo.at("C_mu"));
    const Mat cmb = to_mat(mo.at("C_mubar"));
    if (mo.contains("mass")) {
        c.moments = {cm, cmb, mo["mass"].get<double>()};
    } else {
        const double beta = mo.contains("beta") ? mo["beta"].get<double>() : c.model.beta;
        c.moments = lqinf::DiscountedMoments::with_beta(cm, cmb, beta);
    }
    c.a = j.at("a").get<double>();
    c.b = j.at("b").get<double>();
    if (j.contains("alphas")) {
        const auto& a = j["alphas"];
        check_keys(a, "lqinf.alphas", {"K", "Kbar", "Sigma"});
        c.alphas = lqinf::InnerAlphas{a.at("K").get<double>(), a.at("Kbar").get<double>(),
                                      a.at("Sigma").get<double>()};
    }
    c.iterations = j.value("iterations", 200);
    if (j.contains("phi0")) {
        const auto& f = j["phi0"];
        check_keys(f, "lqinf.phi0", {"K", "Kbar", "Sigma"});
        c.phi0 = lqinf::FeedbackParams{to_mat(f.at("K")), to_mat(f.at("Kbar")), to_mat(f.at("Sigma"))};
    }
    c.riccati_tol = j.value("riccati_tol", 1e-10);
    c.riccati_max_iter = j.value("riccati_max_iter", 200);
    return c;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void check_schedule_dim(const Schedule& s, int dim, const char* name, long episodes) {
    s.validate();
    if (s.dim() != dim)
        throw ConfigError(std::string("rate schedule ") + name + " has dimension " + std::to_string(s.dim()) +
                          ", expected " + std::to_string(dim));
    const auto& last = s.pieces.back().n_upper;
    if (last && *last < episodes)
        throw ConfigError(std::string("rate schedule ") + name + " ends at episode " + std::to_string(*last) +
                          " before N = " + std::to_string(episodes));
}

}  // namespace

std::pair<double, double> ActorWeights::at(long n, long N) const {
    if (static_cast<double>(n) <= switch_fraction * static_cast<double>(N)) return {w_o_early, w_c_early};
    return {w_o_late, w_c_late};
}

Schedule parse_schedule(const json& j) {
    if (j.is_number() || j.is_array()) return Schedule::constant(to_vec(j));
    check_keys(j, "schedule", {"pieces"});
    Schedule s;
    for (const auto& p : j.at("pieces")) {
        check_keys(p, "schedule piece", {"n_upper", "c", "e", "e_inner"});
        SchedulePiece piece;
        if (p.contains("n_upper") && !p["n_upper"].is_null()) piece.n_upper = p["n_upper"].get<long>();
        piece.c = to_vec(p.at("c"));
        piece.e = p.contains("e") ? to_vec(p["e"]) : Vec(Vec::Zero(piece.c.size()));
        if (p.contains("e_inner")) piece.e_inner = to_vec(p["e_inner"]);
        s.pieces.push_back(std::move(piece));
    }
    s.validate();
    return s;
}

Schedule default_rho() {
    Schedule s;
    s.pieces.push_back({4, Vec::Constant(1, 0.5), Vec::Zero(1), {}});
    s.pieces.push_back({std::nullopt, Vec::Constant(1, 1.0), Vec::Constant(1, 0.5), {}});
    return s;
}

void RunConfig::validate() const {
    model.validate();
    if (!(grid.dt > 0) || grid.steps < 1) throw ConfigError("grid needs a positive dt and at least one step");
    if (algo.episodes < 1) throw ConfigError("episodes N must be at least 1");
    if (algo.test_policies < 1) throw ConfigError("test_policies M must be at least 1");
    if (algo.inner_iterations < 1) throw ConfigError("inner_iterations L must be at least 1");
    if (algo.threads < 1) throw ConfigError("threads must be at least 1");
    const Example e = model.example;
    require_dim(theta0, theta_dim(e), "init.theta");
    require_dim(psi0, psi_dim(e), "init.psi");
    check_schedule_dim(rates.theta, theta_dim(e), "theta", algo.episodes);
    check_schedule_dim(rates.psi, psi_dim(e), "psi", algo.episodes);
    check_schedule_dim(rates.p, 1, "p", algo.episodes);
    check_schedule_dim(rates.q, 1, "q", algo.episodes);
    check_schedule_dim(rates.rho, 1, "rho", algo.episodes);
    if (algo.kind == AlgoKind::Alg2) {
        require_dim(phi0, phi_dim(e), "init.phi");
        check_schedule_dim(rates.phi, phi_dim(e), "phi", algo.episodes);
    }
    for (double w : {actor.w_o_early, actor.w_c_early, actor.w_o_late, actor.w_c_late})
        if (!(w >= 0)) throw ConfigError("actor weights must be non-negative");
    if (output.eval_every < 0) throw ConfigError("eval_every must be non-negative");
    if (output.eval_every > 0 && (output.eval_rollouts < 2 || output.eval_initial_states < 1))
        throw ConfigError("value evaluation needs at least 2 rollouts and 1 initial state");
    for (std::size_t i = 0; i < study.dt_list.size(); ++i) {
        if (!(study.dt_list[i] > 0)) throw ConfigError("study.dt_list entries must be positive");
        if (i > 0 && !(study.dt_list[i] < study.dt_list[i - 1]))
            throw ConfigError("study.dt_list must be strictly descending");
    }
    if (study.macro_reps < 0 || study.test_policies < 1) throw ConfigError("study sizes are invalid");
}

RunConfig parse_config(const json& j) {
    try {
        check_keys(j, "config",
                   {"model", "grid", "algo", "rates", "init", "actor", "output", "study", "lqinf", "variant"});
        RunConfig cfg;
        cfg.model = j.contains("model") ? parse_model(j["model"]) : ModelConstants::lq_paper();
        const Example e = cfg.model.example;
        double dt = e == Example::LqFinite ? 0.1 : 0.05;
        if (j.contains("grid")) {
            check_keys(j["grid"], "grid", {"dt"});
            dt = j["grid"].at("dt").get<double>();
        }
        cfg.grid = TimeGrid::make(cfg.model.T, dt);

        if (j.contains("algo")) {
            const auto& a = j["algo"];
            check_keys(a, "algo", {"kind", "episodes", "test_policies", "inner_iterations", "sampling", "threads"});
            const std::string kind = a.value("kind", "alg1");
            if (kind == "alg1")
                cfg.algo.kind = AlgoKind::Alg1;
            else if (kind == "alg2")
                cfg.algo.kind = AlgoKind::Alg2;
            else
                throw ConfigError("algo.kind must be alg1 or alg2");
            cfg.algo.episodes = a.value("episodes", 1L);
            cfg.algo.test_policies = a.value("test_policies", 1);
            cfg.algo.inner_iterations = a.value("inner_iterations", 1);
            cfg.algo.sampling = parse_sampling(a.value("sampling", "literal"));
            cfg.algo.threads = a.value("threads", 1);
        }

        const json r = j.value("rates", json::object());
        check_keys(r, "rates", {"theta", "psi", "phi", "p", "q", "rho"});
        cfg.rates.theta = r.contains("theta") ? parse_schedule(r["theta"])
                                              : Schedule::constant(Vec::Zero(theta_dim(e)));
        cfg.rates.psi = r.contains("psi") ? parse_schedule(r["psi"]) : Schedule::constant(Vec::Zero(psi_dim(e)));
        cfg.rates.phi = r.contains("phi") ? parse_schedule(r["phi"]) : Schedule::constant(Vec::Zero(phi_dim(e)));
        cfg.rates.p = r.contains("p") ? parse_schedule(r["p"]) : Schedule::constant(Vec::Zero(1));
        cfg.rates.q = r.contains("q") ? parse_schedule(r["q"]) : Schedule::constant(Vec::Zero(1));
        cfg.rates.rho = r.contains("rho") ? parse_schedule(r["rho"]) : default_rho();

        const json in = j.value("init", json::object());
        check_keys(in, "init", {"theta", "psi", "phi"});
        const auto tp = true_params(cfg.model, FormulaVariant::Audited);
        cfg.theta0 = in.contains("theta") ? to_vec(in["theta"]) : tp.theta;
        cfg.psi0 = in.contains("psi") ? to_vec(in["psi"]) : tp.psi;
        cfg.phi0 = in.contains("phi") ? to_vec(in["phi"]) : tp.phi;

        if (j.contains("actor")) {
            const auto& a = j["actor"];
            check_keys(a, "actor", {"w_switch", "w_o_early", "w_c_early", "w_o_late", "w_c_late"});
            cfg.actor.switch_fraction = a.value("w_switch", 0.5);
            cfg.actor.w_o_early = a.value("w_o_early", 1.0);
            cfg.actor.w_c_early = a.value("w_c_early", 0.0);
            cfg.actor.w_o_late = a.value("w_o_late", 0.1);
            cfg.actor.w_c_late = a.value("w_c_late", 1.0);
        }
        if (j.contains("output")) {
            const auto& o = j["output"];
            check_keys(o, "output", {"eval_every", "eval_rollouts", "eval_initial_states", "eval_seed", "wall_time"});
            cfg.output.eval_every = o.value("eval_every", 100L);
            cfg.output.eval_rollouts = o.value("eval_rollouts", 3000);
            cfg.output.eval_initial_states = o.value("eval_initial_states", 16);
            cfg.output.eval_seed = o.value("eval_seed", cfg.output.eval_seed);
            cfg.output.wall_time = o.value("wall_time", false);
        }
        if (j.contains("study")) {
            const auto& s = j["study"];
            check_keys(s, "study", {"dt_list", "macro_reps", "test_policies", "test_spread", "control_variate"});
            if (s.contains("dt_list")) cfg.study.dt_list = s["dt_list"].get<std::vector<double>>();
            cfg.study.macro_reps = s.value("macro_reps", 50);
            cfg.study.test_policies = s.value("test_policies", 200);
            cfg.study.test_spread = s.value("test_spread", 0.5);
            cfg.study.control_variate = s.value("control_variate", true);
        }
        if (j.contains("lqinf")) cfg.lqinf = parse_lqinf(j["lqinf"]);
        if (j.contains("variant")) cfg.variant = parse_variant(j["variant"].get<std::string>());
        cfg.validate();
        return cfg;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed config: ") + ex.what());
    } catch (const DomainError& ex) {
        throw ConfigError(ex.what());
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& ex) {
        throw ConfigError("cannot parse " + path.string() + ": " + ex.what());
    }
    return parse_config(j);
}

ValueEstimate eval_value(const ModelConstants& c, const Policy& policy, int rollouts, const TimeGrid& grid,
                         const Summary& initial, Stream& noise) {
    if (rollouts < 2) throw DomainError("eval_value needs at least 2 rollouts");
    double running = 0.0;
    for (int k = 0; k < grid.steps; ++k)
        running += std::exp(-c.beta * grid.t(k)) * c.gamma * entropy(c, policy, grid.t(k)) * grid.dt;
    const double disc_T = std::exp(-c.beta * grid.horizon());
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < rollouts; ++r) {
        const EpisodeLog ep = rollout(c, grid, policy, initial, noise);
        double total = running + disc_T * terminal_reward(c, ep.records.back().summary);
        for (int k = 0; k < grid.steps; ++k)
            total += std::exp(-c.beta * grid.t(k)) * ep.records[k].reward * grid.dt;
        sum += total;
        sum2 += total * total;
    }
    const double n = rollouts;
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

ValueErrorEvaluator::ValueErrorEvaluator(const ModelConstants& c, const TimeGrid& grid, const OutputConfig& out)
    : c_(c), grid_(grid), out_(out) {
    const auto tp = true_params(c, FormulaVariant::Audited);
    for (int i = 0; i < out.eval_initial_states; ++i) {
        Stream s(out.eval_seed, 0, static_cast<std::uint64_t>(i), Purpose::InitialState);
        initial_.push_back(draw_initial_summary(c.example, s));
        optimal_.push_back(value(c, tp.theta, 0.0, initial_.back(), FormulaVariant::Audited));
    }
}

ValueErrorRow ValueErrorEvaluator::evaluate(const Policy& policy, long n, int threads) const {
    const int m = static_cast<int>(initial_.size());
    std::vector<ValueEstimate> est(m);
    // The same evaluation noise at every n, so successive rows differ only through the policy.
    parallel_for(m, threads, [&](int i) {
        Stream s(out_.eval_seed, 0, static_cast<std::uint64_t>(i), Purpose::Evaluation);
        est[i] = eval_value(c_, policy, out_.eval_rollouts, grid_, initial_[i], s);
    });
    ValueErrorRow row{n, 0.0, 0.0};
    double v = 0.0;
    for (int i = 0; i < m; ++i) {
        row.l1_error += std::abs(est[i].estimate - optimal_[i]);
        v += est[i].stderr_ * est[i].stderr_;
    }
    row.l1_error /= m;
    row.stderr_ = std::sqrt(v) / m;
    return row;
}

namespace {

RunLog run_driver(const RunConfig& cfg, std::uint64_t seed, bool with_actor) {
    cfg.validate();
    const ModelConstants& c = cfg.model;
    const Example ex = c.example;
    const TimeGrid& grid = cfg.grid;
    const int M = cfg.algo.test_policies;
    const long N = cfg.algo.episodes;
    const FormulaVariant v = cfg.variant;

    std::optional<ValueErrorEvaluator> evaluator;
    if (cfg.output.eval_every > 0) evaluator.emplace(c, grid, cfg.output);

    Vec theta = cfg.theta0;
    Vec psi = cfg.psi0;
    Vec phi = with_actor ? cfg.phi0 : psi_to_phi(ex, psi);
    RunLog log;
    log.params.push_back({0, theta, psi, phi, 0.0});
    if (evaluator) {
        const Policy pol = with_actor ? phi_to_policy(ex, phi) : psi_to_policy(ex, psi);
        log.value_errors.push_back(evaluator->evaluate(pol, 0, cfg.algo.threads));
    }

    for (long n = 1; n <= N; ++n) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            Stream init(seed, static_cast<std::uint64_t>(n), 0, Purpose::InitialState);
            const Summary mu0 = draw_initial_summary(ex, init);
            const double pn = cfg.rates.p.eval_scalar(n);
            const double qn = cfg.rates.q.eval_scalar(n);
            const Vec base = with_actor ? phi : psi_to_phi(ex, psi);

            std::vector<EpisodeLog> batch(M);
            parallel_for(M, cfg.algo.threads, [&](int m) {
                const auto role = static_cast<std::uint64_t>(m + 1);
                Stream ts(seed, static_cast<std::uint64_t>(n), role, Purpose::TestParams);
                const Vec tp = sample_test_params(base, pn, qn, ts, cfg.algo.sampling);
                const Policy pol = phi_to_policy(ex, tp);
                Stream ns(seed, static_cast<std::uint64_t>(n), role, Purpose::CommonNoise);
                batch[m] = rollout(c, grid, pol, mu0, ns);
            });

            EpisodeLog own;
            if (with_actor) {
                Stream ns(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(M + 1),
                          Purpose::CommonNoise);
                own = rollout(c, grid, phi_to_policy(ex, phi), mu0, ns);
            }

            auto [th, ps] = critic_update(c, theta, psi, batch, cfg.rates.theta.eval(n), cfg.rates.psi.eval(n), v, n);
            theta = std::move(th);
            psi = std::move(ps);

            if (with_actor) {
                const double rho = cfg.rates.rho.eval_scalar(n);
                std::vector<Summary> path;
                path.reserve(grid.steps);
                for (int k = 0; k < grid.steps; ++k)
                    path.push_back(mixture(own.records[k].summary, batch[0].records[k].summary, rho).collapse());
                const auto [wo, wc] = cfg.actor.at(n, N);
                phi = actor_inner_loop(c, psi, phi, grid, path, cfg.rates.phi, cfg.algo.inner_iterations, wo, wc, n, v)
                          .phi;
            } else {
                phi = psi_to_phi(ex, psi);
            }
        } catch (const DivergenceError& e) {
            log.diverged = true;
            log.diverged_at = n;
            log.diagnostic = e.what();
        } catch (const OverflowError& e) {
            log.diverged = true;
            log.diverged_at = n;
            log.diagnostic = e.what();
        } catch (const SingularParameterError& e) {
            log.diverged = true;
            log.diverged_at = n;
            log.diagnostic = e.what();
        }
        if (log.diverged) break;
        log.params.push_back({n, theta, psi, phi, cfg.output.wall_time ? elapsed_ms(t0) : 0.0});
        if (evaluator && n % cfg.output.eval_every == 0) {
            const Policy pol = with_actor ? phi_to_policy(ex, phi) : psi_to_policy(ex, psi);
            log.value_errors.push_back(evaluator->evaluate(pol, n, cfg.algo.threads));
        }
    }
    return log;
}

}  // namespace

RunLog run_alg1(const RunConfig& cfg, std::uint64_t seed) { return run_driver(cfg, seed, false); }

RunLog run_alg2(const RunConfig& cfg, std::uint64_t seed) { return run_driver(cfg, seed, true); }

std::vector<DefectRow> grid_study(const RunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const ModelConstants& c = cfg.model;
    const StudyConfig& st = cfg.study;
    std::vector<DefectRow> rows;
    if (st.macro_reps == 0) return rows;
    const auto tp = true_params(c, FormulaVariant::Audited);
    const int dim = theta_dim(c.example);
    const int R = st.macro_reps;
    const int M = st.test_policies;

    for (std::size_t d = 0; d < st.dt_list.size(); ++d) {
        const TimeGrid grid = TimeGrid::make(c.T, st.dt_list[d]);
        std::vector<Vec> rep(R, Vec::Zero(dim));
        parallel_for(R, cfg.algo.threads, [&](int r) {
            const std::uint64_t key = (static_cast<std::uint64_t>(d) << 32) | static_cast<std::uint64_t>(r);
            Vec acc = Vec::Zero(dim);
            std::vector<double> z(grid.steps);
            for (int m = 0; m < M; ++m) {
                const auto role = static_cast<std::uint64_t>(m);
                Stream init(seed, key, role, Purpose::InitialState);
                const Summary mu0 = draw_initial_summary(c.example, init);
                Stream ts(seed, key, role, Purpose::TestParams);
                const Policy pol =
                    psi_to_policy(c.example, sample_test_params(tp.psi, 0.0, st.test_spread, ts, SamplingMode::Perturb));
                Stream ns(seed, key, role, Purpose::CommonNoise);
                for (double& x : z) x = ns.normal();
                const EpisodeLog ep = rollout_with_draws(c, grid, pol, mu0, z);
                for (int k = 0; k < grid.steps; ++k) {
                    const auto& rec = ep.records[k];
                    double G = td_residual(c, tp.theta, tp.psi, ep, k, FormulaVariant::Audited);
                    if (st.control_variate) {
                        // Odd part of the value increment in the step's draw: zero conditional mean.
                        const double t1 = ep.records[k + 1].t, h = t1 - rec.t;
                        const auto up = env_step(c, rec.summary, rec.t, pol, h, z[k]);
                        const auto dn = env_step(c, rec.summary, rec.t, pol, h, -z[k]);
                        G -= 0.5 * (value(c, tp.theta, t1, up.next, FormulaVariant::Audited) -
                                    value(c, tp.theta, t1, dn.next, FormulaVariant::Audited));
                    }
                    acc += std::exp(-c.beta * rec.t) * G *
                           value_grad(c, tp.theta, rec.t, rec.summary, FormulaVariant::Audited);
                }
            }
            rep[r] = acc / M;
        });
        Vec mean = Vec::Zero(dim);
        for (const auto& x : rep) mean += x;
        mean /= R;
        const double defect = mean.norm();
        double se = 0.0;
        if (R > 1 && defect > 0) {
            const Vec u = mean / defect;
            double s = 0.0;
            for (const auto& x : rep) s += std::pow(u.dot(x) - defect, 2);
            se = std::sqrt(s / (R - 1.0) / R);
        }
        rows.push_back({st.dt_list[d], defect, se});
    }
    return rows;
}

double defect_slope(const std::vector<DefectRow>& rows) {
    if (rows.size() < 2) throw DomainError("slope needs at least two rows");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        if (!(r.defect > 0)) throw DomainError("slope needs positive defects");
        const double x = std::log(r.dt), y = std::log(r.defect);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

InnerLqResult run_inner_lq(const LqInfConfig& cfg) {
    InnerLqResult res;
    if (cfg.qn) {
        res.qn = *cfg.qn;
    } else {
        const auto sol = lqinf::riccati_solve(cfg.model, cfg.riccati_tol, cfg.riccati_max_iter);
        res.qn = lqinf::qn_from_value(cfg.model, sol.Lambda, sol.Gamma, sol.chi);
    }
    res.qn.validate();
    res.certificate = lqinf::contraction_certificate(res.qn, cfg.moments, cfg.a, cfg.b);
    const lqinf::InnerAlphas alphas =
        cfg.alphas ? *cfg.alphas
                   : lqinf::InnerAlphas{1.0 / res.certificate.Upsilon, 1.0 / res.certificate.Upsilon,
                                        lqinf::band_sigma_step(res.qn, cfg.moments, cfg.a)};
    const auto p = res.qn.U.rows();
    const auto d = res.qn.L.rows();
    const lqinf::FeedbackParams phi0 =
        cfg.phi0 ? *cfg.phi0
                 : lqinf::FeedbackParams{Mat::Zero(p, d), Mat::Zero(p, d), cfg.a * Mat::Identity(p, p)};
    res.maximizer = lqinf::closed_maximizer(res.qn);
    res.trace = lqinf::inner_ascent(res.qn, cfg.moments, phi0, alphas, cfg.iterations, lqinf::SigmaBand{cfg.a, cfg.b});
    return res;
}

std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

void write_vec(std::ostream& os, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_double(v(i));
}

}  // namespace

void write_params_csv(const std::filesystem::path& path, const RunLog& log, Example e) {
    auto out = open_out(path);
    out << 'n';
    for (int i = 1; i <= theta_dim(e); ++i) out << ",theta_" << i;
    for (int i = 1; i <= psi_dim(e); ++i) out << ",psi_" << i;
    for (int i = 1; i <= phi_dim(e); ++i) out << ",phi_" << i;
    out << ",wall_ms\n";
    for (const auto& r : log.params) {
        out << r.n;
        write_vec(out, r.theta);
        write_vec(out, r.psi);
        write_vec(out, r.phi);
        out << ',' << format_double(r.wall_ms) << '\n';
    }
}

void write_value_error_csv(const std::filesystem::path& path, const RunLog& log) {
    auto out = open_out(path);
    out << "n,l1_error,stderr\n";
    for (const auto& r : log.value_errors)
        out << r.n << ',' << format_double(r.l1_error) << ',' << format_double(r.stderr_) << '\n';
}

void write_grid_defect_csv(const std::filesystem::path& path, const std::vector<DefectRow>& rows) {
    auto out = open_out(path);
    out << "dt,defect,stderr\n";
    for (const auto& r : rows)
        out << format_double(r.dt) << ',' << format_double(r.defect) << ',' << format_double(r.stderr_) << '\n';
}

void write_inner_trace_csv(const std::filesystem::path& path, const lqinf::InnerTrace& trace) {
    auto out = open_out(path);
    out << "l,objective,dist_to_max\n";
    for (std::size_t l = 0; l < trace.objective.size(); ++l)
        out << l << ',' << format_double(trace.objective[l]) << ',' << format_double(std::sqrt(trace.dist2[l]))
            << '\n';
}

json true_params_json(const ModelConstants& c, FormulaVariant v) {
    const auto tp = true_params(c, v);
    return json{{"example", to_string(c.example)},
                {"variant", to_string(v)},
                {"theta", vec_json(tp.theta)},
                {"psi", vec_json(tp.psi)},
                {"phi", vec_json(tp.phi)}};
}

}  // namespace mfcq
