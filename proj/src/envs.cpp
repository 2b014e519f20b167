#include "mfcq/envs.hpp"

#include <cmath>

namespace mfcq {

namespace {

void check_step_args(double t, double dt, double T) {
    if (!(dt > 0)) throw DomainError("step size dt must be positive");
    if (!(t >= 0 && t < T + 1e-12)) throw DomainError("step time outside [0, T)");
}

}  // namespace

StepOutcome lq_step(const ModelConstants& c, const GaussianSummary& state, double t, const LqPolicy& p, double dt,
                    double dW) {
    check_step_args(t, dt, c.T);
    const double tau = t - c.T;
    const double sdt = std::sqrt(dt);
    const double s2 = c.sigma * c.sigma;
    const double so2 = c.sigma_o * c.sigma_o;
    const double e_off = std::exp(-p.a2 * tau);

    const double mean = state.mean - p.a4 * e_off * (c.b * dt + c.sigma_o * sdt * dW);
    const double drift = (-2.0 * c.b * p.a3 + s2 * p.a3 * p.a3 + so2 * p.a3 * p.a3) * state.var +
                         s2 * p.a4 * p.a4 * e_off * e_off + (s2 + so2) * c.gamma * std::exp(-p.a1 - p.a2 * tau);
    double var = state.var + drift * dt - 2.0 * c.sigma_o * p.a3 * state.var * sdt * dW;
    if (!std::isfinite(mean) || !std::isfinite(var)) throw OverflowError("lq_step produced a non-finite summary");
    StepOutcome out;
    if (var < 0) {
        var = 0;
        out.clamped = true;
    }
    out.next = GaussianSummary{mean, var};
    return out;
}

StepOutcome nlq_step(const ModelConstants& c, const LogMeanSummary& state, double t, const NlqPolicy& p, double dt,
                     double dW) {
    check_step_args(t, dt, c.T);
    const double hbar = p.mean(t, c.gamma, c.beta, c.T);
    const double so2 = c.sigma_o * c.sigma_o;
    const double lm =
        state.logmean + (c.b * hbar - 0.5 * so2 * hbar * hbar) * dt + c.sigma_o * hbar * std::sqrt(dt) * dW;
    if (!std::isfinite(lm)) throw OverflowError("nlq_step produced a non-finite summary");
    StepOutcome out;
    out.next = LogMeanSummary{lm};
    return out;
}

StepOutcome env_step(const ModelConstants& c, const Summary& state, double t, const Policy& policy, double dt,
                     double dW) {
    if (auto* lq = std::get_if<LqPolicy>(&policy)) return lq_step(c, as_gaussian(state), t, *lq, dt, dW);
    return nlq_step(c, as_logmean(state), t, std::get<NlqPolicy>(policy), dt, dW);
}

double terminal_reward(const ModelConstants& c, const Summary& state) {
    if (!summary_matches(c.example, state)) throw DomainError("summary type does not match the example");
    if (c.example == Example::LqFinite) {
        const auto& g = as_gaussian(state);
        return g.mean - c.lambda * g.var;
    }
    return as_logmean(state).logmean;
}

namespace {

template <class DrawFn>
EpisodeLog rollout_impl(const ModelConstants& c, const TimeGrid& grid, const Policy& behavior, const Summary& initial,
                        DrawFn&& draw) {
    if (!policy_matches(c.example, behavior) || !summary_matches(c.example, initial))
        throw DomainError("policy or summary type does not match the example");
    EpisodeLog log{grid, behavior, {}, 0};
    log.records.reserve(grid.steps + 1);
    log.records.push_back({0.0, initial, 0.0});
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        StepOutcome o = env_step(c, log.records.back().summary, t, behavior, grid.dt, draw(k));
        log.records.back().reward = o.reward;
        log.clamps += o.clamped ? 1 : 0;
        log.records.push_back({grid.t(k + 1), o.next, 0.0});
    }
    return log;
}

}  // namespace

EpisodeLog rollout(const ModelConstants& c, const TimeGrid& grid, const Policy& behavior, const Summary& initial,
                   Stream& noise) {
    return rollout_impl(c, grid, behavior, initial, [&](int) { return noise.normal(); });
}

EpisodeLog rollout_with_draws(const ModelConstants& c, const TimeGrid& grid, const Policy& behavior,
                              const Summary& initial, const std::vector<double>& draws) {
    if (static_cast<int>(draws.size()) < grid.steps) throw DomainError("not enough common-noise draws");
    return rollout_impl(c, grid, behavior, initial, [&](int k) { return draws[k]; });
}

namespace {

void standardize(std::vector<double>& z) {
    const double n = static_cast<double>(z.size());
    double m = 0.0;
    for (double v : z) m += v;
    m /= n;
    double s = 0.0;
    for (double v : z) s += (v - m) * (v - m);
    s = std::sqrt(s / n);
    for (double& v : z) v = (v - m) / s;
}

struct Moments {
    double mean = 0.0, var = 0.0, m4 = 0.0;
};

Moments moments(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    Moments r;
    for (double v : x) r.mean += v;
    r.mean /= n;
    for (double v : x) {
        const double d2 = (v - r.mean) * (v - r.mean);
        r.var += d2;
        r.m4 += d2 * d2;
    }
    r.var /= n;
    r.m4 /= n;
    return r;
}

ParticlePath particles_lq(const ModelConstants& c, const TimeGrid& grid, const LqPolicy& p,
                          const GaussianSummary& init, const std::vector<double>& draws, int n, Stream& s) {
    std::vector<double> x(n);
    for (double& v : x) v = s.normal();
    standardize(x);
    for (double& v : x) v = init.mean + std::sqrt(init.var) * v;

    ParticlePath out;
    auto record = [&] {
        Moments m = moments(x);
        out.summaries.push_back(GaussianSummary{m.mean, m.var});
        out.se_first.push_back(std::sqrt(m.var / n));
        out.se_second.push_back(std::sqrt(std::max(m.m4 - m.var * m.var, 0.0) / n));
        return m.mean;
    };
    double mubar = record();
    const double sdt = std::sqrt(grid.dt);
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        const double sd_a = std::sqrt(p.variance(t, c.gamma, c.T));
        const double common = c.b * grid.dt + c.sigma_o * sdt * draws[k];
        for (double& xi : x) {
            const double a = p.mean(t, xi, mubar, c.T) + sd_a * s.normal();
            xi += a * (common + c.sigma * sdt * s.normal());
        }
        mubar = record();
    }
    out.positions = std::move(x);
    return out;
}

ParticlePath particles_nlq(const ModelConstants& c, const TimeGrid& grid, const NlqPolicy& p,
                           const LogMeanSummary& init, const std::vector<double>& draws, const ParticleOptions& opt,
                           Stream& s) {
    const int n = opt.particles;
    const double nd = static_cast<double>(n);
    // Relative positions R_i = X_i / mean(X) have empirical mean exactly 1.
    std::vector<double> r(n);
    {
        const double sig = std::sqrt(std::log1p(opt.nlq_dispersion * opt.nlq_dispersion));
        double m = 0.0;
        for (double& v : r) {
            v = std::exp(sig * s.normal());
            m += v;
        }
        m /= nd;
        for (double& v : r) v /= m;
    }
    double logmean = init.logmean;
    double acc_var = 0.0;

    ParticlePath out;
    auto record = [&] {
        out.summaries.push_back(LogMeanSummary{logmean});
        out.se_first.push_back(std::sqrt(acc_var));
        out.se_second.push_back(0.0);
    };
    record();
    const double sdt = std::sqrt(grid.dt);
    const double so2 = c.sigma_o * c.sigma_o;
    const double s2 = c.sigma * c.sigma;
    std::vector<double> a(n), dz(n);
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        const double rate = p.rate(t, c.gamma, c.beta, c.T);
        const double dB = sdt * draws[k];
        double abar = 0.0, a2bar = 0.0, zeta = 0.0, contrib2 = 0.0;
        for (int i = 0; i < n; ++i) {
            a[i] = s.exponential(rate);
            dz[i] = c.b * grid.dt + c.sigma * sdt * s.normal() + c.sigma_o * dB;
            const double d = a[i] * dz[i];
            abar += a[i];
            a2bar += a[i] * a[i];
            zeta += d;
            contrib2 += d * d;
        }
        abar /= nd;
        a2bar /= nd;
        zeta /= nd;
        const double qv = (abar * abar * so2 + s2 * a2bar / nd) * grid.dt;
        // d log mean = d zeta - d<zeta>/2 holds exactly while the actions are frozen.
        logmean += zeta - 0.5 * qv;
        acc_var += std::max(contrib2 / nd - zeta * zeta, 0.0) / nd;
        double rmean = 0.0;
        for (int i = 0; i < n; ++i) {
            const double cross = (abar * so2 + s2 * a[i] / nd) * grid.dt;
            r[i] += a[i] * dz[i] - r[i] * zeta + r[i] * qv - a[i] * cross;
            rmean += r[i];
        }
        rmean /= nd;
        if (!(rmean > 0) || !std::isfinite(logmean))
            throw PositivityError("NLQ particle mean left the positive half-line; refine dt");
        record();
    }
    out.positions.resize(n);
    const double mu = std::exp(logmean);
    for (int i = 0; i < n; ++i) out.positions[i] = mu * r[i];
    return out;
}

}  // namespace

ParticlePath particle_sim(const ModelConstants& c, const TimeGrid& grid, const Policy& behavior,
                          const Summary& initial, const std::vector<double>& draws, const ParticleOptions& opt,
                          Stream& particles) {
    if (opt.particles < 2) throw DomainError("particle_sim needs at least 2 particles");
    if (static_cast<int>(draws.size()) < grid.steps) throw DomainError("not enough common-noise draws");
    if (!policy_matches(c.example, behavior) || !summary_matches(c.example, initial))
        throw DomainError("policy or summary type does not match the example");
    if (c.example == Example::LqFinite)
        return particles_lq(c, grid, std::get<LqPolicy>(behavior), as_gaussian(initial), draws, opt.particles,
                            particles);
    return particles_nlq(c, grid, std::get<NlqPolicy>(behavior), as_logmean(initial), draws, opt, particles);
}

}  // namespace mfcq
