#pragma once

#include <vector>

#include "mfcq/core.hpp"

namespace mfcq {

MixtureSummary mixture(const Summary& mu_pi, const Summary& mu_h, double rho);

// q^{gamma,psi}(t, mu, pi^phi) = q^{0,psi}(t, mu, pi^phi) + gamma * entropy.
double q_gamma(const ModelConstants& c, const Vec& psi, const Vec& phi, double t, const Summary& mu,
               FormulaVariant v);

// Closed-form score integral: the double integral of {dq0/dh - gamma log pi} grad_phi log pi
// against pi^phi and mu, at a collapsed mixture summary.
Vec score_integral(const ModelConstants& c, const Vec& psi, const Vec& phi, double t, const Summary& mu);

// Ascent gradient of sum_k e^{-beta t_k} (w_o q^gamma - (w_c/2) (q^gamma)^2) over k < steps.
// path[k] is the collapsed mixture summary at t_k.
Vec actor_gradient(const ModelConstants& c, const Vec& psi, const Vec& phi, const TimeGrid& grid,
                   const std::vector<Summary>& path, double w_o, double w_c, FormulaVariant v, long episode = 0);
double actor_objective(const ModelConstants& c, const Vec& psi, const Vec& phi, const TimeGrid& grid,
                       const std::vector<Summary>& path, double w_o, double w_c, FormulaVariant v);

struct InnerLoopResult {
    Vec phi;
    std::vector<double> objective;  // optimality objective at phi^{n,0}, ..., phi^{n,L}
};

// L-1 steps with (w_o, w_c) = (1, 0), then one step with the given weights.
InnerLoopResult actor_inner_loop(const ModelConstants& c, const Vec& psi, const Vec& phi0, const TimeGrid& grid,
                                 const std::vector<Summary>& path, const Schedule& alpha_phi, int L, double w_o,
                                 double w_c, long n, FormulaVariant v);

}  // namespace mfcq
