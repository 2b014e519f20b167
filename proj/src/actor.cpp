#include "mfcq/actor.hpp"

#include <cmath>

#include "mfcq/funcs.hpp"

namespace mfcq {

MixtureSummary mixture(const Summary& mu_pi, const Summary& mu_h, double rho) {
    if (!(rho >= 0 && rho <= 1)) throw DomainError("mixture weight rho must lie in [0, 1]");
    if (mu_pi.index() != mu_h.index()) throw DomainError("mixture components must share a summary type");
    MixtureSummary m;
    if (rho == 0.0) {
        m.components.push_back({1.0, mu_pi});
    } else {
        m.components.push_back({1.0 - rho, mu_pi});
        m.components.push_back({rho, mu_h});
    }
    return m;
}

double q_gamma(const ModelConstants& c, const Vec& psi, const Vec& phi, double t, const Summary& mu,
               FormulaVariant v) {
    const Policy pol = phi_to_policy(c.example, phi);
    return q0(c, psi, t, mu, pol, v) + c.gamma * entropy(c, pol, t);
}

Vec score_integral(const ModelConstants& c, const Vec& psi, const Vec& phi, double t, const Summary& mu) {
    const double tau = t - c.T;
    if (c.example == Example::LqFinite) {
        require_dim(psi, 5, "psi");
        require_dim(phi, 4, "phi");
        const auto& g = as_gaussian(mu);
        const double E = std::exp(psi(0) + psi(1) * tau);
        const double v = c.gamma * std::exp(-phi(0) - phi(1) * tau);
        const double ephi = std::exp(-phi(1) * tau);
        const double hbar = -phi(3) * ephi;
        // x-average of the a-linear coefficient of dq0/dh at hbar.
        const double D = psi(4) * psi(4) * hbar + psi(3) * psi(4) * std::exp(-psi(1) * tau);
        Vec out(4);
        out(0) = 0.5 * E * v - 0.5 * c.gamma;
        out(1) = tau * out(0) - tau * phi(3) * ephi * E * D;
        out(2) = E * (psi(2) - phi(2)) * g.var;
        out(3) = ephi * E * D;
        return out;
    }
    require_dim(psi, 3, "psi");
    require_dim(phi, 2, "phi");
    const NlqPolicy pol{phi(0), phi(1)};
    const double lam = pol.rate(t, c.gamma, c.beta, c.T);
    const double hbar = pol.mean(t, c.gamma, c.beta, c.T);
    const double e2 = std::exp(phi(1));
    const double root = std::sqrt(e2 * e2 + c.gamma * std::exp(-phi(0) - c.beta * tau));
    const double coef = 0.5 * std::exp(psi(0) + c.beta * tau) * (4.0 * std::exp(psi(1)) - 2.0 * hbar) + c.gamma * lam;
    // E[a (1/lam - a)] = -1/lam^2 under Exp(lam).
    const double scale = -coef / (lam * lam);
    return Vec{{scale * (lam - 0.5 / root), scale * (-lam * e2 / root)}};
}

Vec actor_gradient(const ModelConstants& c, const Vec& psi, const Vec& phi, const TimeGrid& grid,
                   const std::vector<Summary>& path, double w_o, double w_c, FormulaVariant v, long episode) {
    if (static_cast<int>(path.size()) < grid.steps) throw DomainError("mixture path does not cover the grid");
    Vec grad = Vec::Zero(phi.size());
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        double w = w_o;
        if (w_c != 0.0) w -= w_c * q_gamma(c, psi, phi, t, path[k], v);
        grad += std::exp(-c.beta * t) * w * score_integral(c, psi, phi, t, path[k]);
    }
    if (!grad.allFinite()) throw DivergenceError("actor gradient is not finite", episode);
    return grad;
}

double actor_objective(const ModelConstants& c, const Vec& psi, const Vec& phi, const TimeGrid& grid,
                       const std::vector<Summary>& path, double w_o, double w_c, FormulaVariant v) {
    double total = 0.0;
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        const double q = q_gamma(c, psi, phi, t, path[k], v);
        total += std::exp(-c.beta * t) * (w_o * q - 0.5 * w_c * q * q);
    }
    return total;
}

InnerLoopResult actor_inner_loop(const ModelConstants& c, const Vec& psi, const Vec& phi0, const TimeGrid& grid,
                                 const std::vector<Summary>& path, const Schedule& alpha_phi, int L, double w_o,
                                 double w_c, long n, FormulaVariant v) {
    if (L < 1) throw ConfigError("inner iteration count L must be at least 1");
    InnerLoopResult r{phi0, {}};
    r.objective.push_back(actor_objective(c, psi, r.phi, grid, path, 1.0, 0.0, v));
    for (int l = 1; l <= L; ++l) {
        const bool last = l == L;
        const Vec g = actor_gradient(c, psi, r.phi, grid, path, last ? w_o : 1.0, last ? w_c : 0.0, v, n);
        r.phi += alpha_phi.eval(n, l).cwiseProduct(g);
        if (!r.phi.allFinite()) throw DivergenceError("actor iterate is not finite", n);
        r.objective.push_back(actor_objective(c, psi, r.phi, grid, path, 1.0, 0.0, v));
    }
    return r;
}

}  // namespace mfcq
