#include "mfcq/critic.hpp"

#include <cmath>

namespace mfcq {

SamplingMode parse_sampling(const std::string& s) {
    if (s == "perturb") return SamplingMode::Perturb;
    if (s == "literal") return SamplingMode::Literal;
    throw ConfigError("unknown sampling mode '" + s + "' (expected perturb or literal)");
}

Vec sample_test_params(const Vec& base, double p, double q, Stream& s, SamplingMode mode) {
    if (p > q) throw ConfigError("test-policy bounds need p <= q");
    Vec out(base.size());
    for (Eigen::Index i = 0; i < base.size(); ++i) {
        const double u = s.uniform(p, q);
        out(i) = mode == SamplingMode::Perturb ? base(i) * (1.0 + u) : base(i) * u;
    }
    return out;
}

double td_residual(const ModelConstants& c, const Vec& theta, const Vec& psi, const EpisodeLog& ep, int k,
                   FormulaVariant v) {
    if (k < 0 || k >= ep.grid.steps) throw DomainError("td_residual index out of range");
    const auto& r0 = ep.records[k];
    const auto& r1 = ep.records[k + 1];
    const double j0 = value(c, theta, r0.t, r0.summary, v);
    const double j1 = value(c, theta, r1.t, r1.summary, v);
    return j1 - j0 + (r0.reward - c.beta * j0 - q0(c, psi, r0.t, r0.summary, ep.behavior, v)) * ep.grid.dt;
}

CriticDirection episode_direction(const ModelConstants& c, const Vec& theta, const Vec& psi, const EpisodeLog& ep,
                                  FormulaVariant v) {
    CriticDirection d{Vec::Zero(theta.size()), Vec::Zero(psi.size())};
    for (int k = 0; k < ep.grid.steps; ++k) {
        const auto& r = ep.records[k];
        const double G = td_residual(c, theta, psi, ep, k, v);
        const double disc = std::exp(-c.beta * r.t);
        d.theta += disc * G * value_grad(c, theta, r.t, r.summary, v);
        d.psi += disc * G * q0_grad(c, psi, r.t, r.summary, ep.behavior, v);
    }
    return d;
}

CriticDirection critic_direction(const ModelConstants& c, const Vec& theta, const Vec& psi,
                                 const std::vector<EpisodeLog>& batch, FormulaVariant v, long episode) {
    if (batch.empty()) throw DomainError("critic batch is empty");
    CriticDirection total{Vec::Zero(theta.size()), Vec::Zero(psi.size())};
    for (const auto& ep : batch) {
        const auto d = episode_direction(c, theta, psi, ep, v);
        total.theta += d.theta;
        total.psi += d.psi;
    }
    const double m = static_cast<double>(batch.size());
    total.theta /= m;
    total.psi /= m;
    if (!total.theta.allFinite() || !total.psi.allFinite())
        throw DivergenceError("critic direction is not finite", episode);
    return total;
}

std::pair<Vec, Vec> critic_update(const ModelConstants& c, const Vec& theta, const Vec& psi,
                                  const std::vector<EpisodeLog>& batch, const Vec& alpha_theta, const Vec& alpha_psi,
                                  FormulaVariant v, long episode) {
    require_dim(alpha_theta, static_cast<int>(theta.size()), "alpha_theta");
    require_dim(alpha_psi, static_cast<int>(psi.size()), "alpha_psi");
    const auto d = critic_direction(c, theta, psi, batch, v, episode);
    Vec th = theta + alpha_theta.cwiseProduct(d.theta);
    Vec ps = psi + alpha_psi.cwiseProduct(d.psi);
    if (!th.allFinite() || !ps.allFinite()) throw DivergenceError("critic update is not finite", episode);
    return {th, ps};
}

}  // namespace mfcq
