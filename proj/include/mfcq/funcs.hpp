#pragma once

#include <vector>

#include "mfcq/core.hpp"

namespace mfcq {

// LQ value family J^theta, theta in R^3.
double lq_value(const ModelConstants& c, const Vec& theta, double t, const GaussianSummary& s);
Vec lq_value_grad(const ModelConstants& c, const Vec& theta, double t, const GaussianSummary& s);

// LQ Iq-function q^{0,psi}(t, mu, h), psi in R^5, with the Gaussian double integral in closed form.
double lq_q0(const ModelConstants& c, const Vec& psi, double t, const GaussianSummary& s, const LqPolicy& h,
             FormulaVariant v);
Vec lq_q0_grad(const ModelConstants& c, const Vec& psi, double t, const GaussianSummary& s, const LqPolicy& h,
               FormulaVariant v);
// Partial linear functional derivative, modulo a-independent terms.
double lq_dq0_dh(const ModelConstants& c, const Vec& psi, double t, const GaussianSummary& s, double x, double a,
                 double hbar);

// NLQ value family, theta in R^2. Audited replaces the additive time function with
// the solution of the consistency ODE whose entropy term has the corrected sign.
double nlq_value(const ModelConstants& c, const Vec& theta, double t, const LogMeanSummary& s, FormulaVariant v);
Vec nlq_value_grad(const ModelConstants& c, const Vec& theta, double t, const LogMeanSummary& s, FormulaVariant v);

double nlq_q0(const ModelConstants& c, const Vec& psi, double t, const NlqPolicy& h, FormulaVariant v);
Vec nlq_q0_grad(const ModelConstants& c, const Vec& psi, double t, const NlqPolicy& h, FormulaVariant v);
double nlq_dq0_dh(const ModelConstants& c, const Vec& psi, double t, double a, double hbar);

// Dispatch on the example.
double value(const ModelConstants& c, const Vec& theta, double t, const Summary& s, FormulaVariant v);
Vec value_grad(const ModelConstants& c, const Vec& theta, double t, const Summary& s, FormulaVariant v);
double q0(const ModelConstants& c, const Vec& psi, double t, const Summary& s, const Policy& h, FormulaVariant v);
Vec q0_grad(const ModelConstants& c, const Vec& psi, double t, const Summary& s, const Policy& h, FormulaVariant v);

double entropy(const ModelConstants& c, const Policy& p, double t);

// Additive time function C(t) of the optimal NLQ value, obtained by RK4 integration of
// C' - beta C = -(b/2) e^{beta(t-T)} hbar*(t) - gamma/2 -+ gamma log hbar*(t), C(T) = 0,
// with "-" under Audited (entropy of Exp is 1 + log mean) and "+" as displayed in the paper.
double nlq_consistency_C(const ModelConstants& c, double t, FormulaVariant v, int steps = 4000);

struct TrueParams {
    Vec theta;
    Vec psi;
    Vec phi;
};

TrueParams true_params(const ModelConstants& c, FormulaVariant v = FormulaVariant::Audited);

// Optimal value J*(t, mu) used as the reference for value-error curves.
double optimal_value(const ModelConstants& c, double t, const Summary& s);

struct AuditPoint {
    double t = 0.0;
    Summary summary;
};

struct AuditReport {
    std::vector<AuditPoint> points;
    std::vector<double> residuals;
    double max_abs = 0.0;
    double spread = 0.0;
};

AuditReport dpp_audit(const ModelConstants& c, const Vec& theta, const Vec& psi, FormulaVariant v,
                      const std::vector<AuditPoint>& points);
// Regular grid of nt times in [0, T] crossed with ns summaries.
std::vector<AuditPoint> audit_grid(const ModelConstants& c, int nt, int ns);

}  // namespace mfcq
