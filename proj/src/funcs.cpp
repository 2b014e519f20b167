#include "mfcq/funcs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mfcq {

namespace {

constexpr double kPi = std::numbers::pi;

double sign_of(FormulaVariant v) { return v == FormulaVariant::Audited ? 1.0 : -1.0; }

}  // namespace

double lq_value(const ModelConstants& c, const Vec& th, double t, const GaussianSummary& s) {
    require_dim(th, 3, "theta");
    const double tau = t - c.T;
    return s.mean - c.lambda * std::exp(th(0) * tau) * s.var + 0.25 * c.gamma * th(0) * tau * tau + th(1) * tau +
           th(2) * (std::exp(-th(0) * tau) - 1.0);
}

Vec lq_value_grad(const ModelConstants& c, const Vec& th, double t, const GaussianSummary& s) {
    require_dim(th, 3, "theta");
    const double tau = t - c.T;
    Vec g(3);
    g(0) = -c.lambda * tau * std::exp(th(0) * tau) * s.var + 0.25 * c.gamma * tau * tau -
           th(2) * tau * std::exp(-th(0) * tau);
    g(1) = tau;
    g(2) = std::exp(-th(0) * tau) - 1.0;
    return g;
}

namespace {

struct LqQ0Parts {
    double tau, E, cpsi, hb, vh, D, I;
};

LqQ0Parts lq_q0_parts(const ModelConstants& c, const Vec& psi, double t, const GaussianSummary& s,
                      const LqPolicy& h) {
    require_dim(psi, 5, "psi");
    LqQ0Parts p{};
    p.tau = t - c.T;
    p.E = std::exp(psi(0) + psi(1) * p.tau);
    p.cpsi = psi(3) * std::exp(-psi(1) * p.tau);
    p.hb = h.offset(t, c.T);
    p.vh = h.variance(t, c.gamma, c.T);
    p.D = p.cpsi + psi(4) * p.hb;
    const double d3 = psi(2) - h.a3;
    p.I = d3 * d3 * s.var + p.D * p.D + p.vh;
    return p;
}

}  // namespace

double lq_q0(const ModelConstants& c, const Vec& psi, double t, const GaussianSummary& s, const LqPolicy& h,
             FormulaVariant v) {
    const auto p = lq_q0_parts(c, psi, t, s, h);
    return -0.5 * p.E * p.I - 0.5 * c.gamma * std::log(2.0 * kPi * c.gamma) + sign_of(v) * 0.5 * c.gamma * psi(0) +
           0.5 * c.gamma * psi(1) * p.tau;
}

Vec lq_q0_grad(const ModelConstants& c, const Vec& psi, double t, const GaussianSummary& s, const LqPolicy& h,
               FormulaVariant v) {
    const auto p = lq_q0_parts(c, psi, t, s, h);
    Vec g(5);
    g(0) = -0.5 * p.E * p.I + sign_of(v) * 0.5 * c.gamma;
    g(1) = -0.5 * p.E * p.tau * p.I + p.E * p.tau * p.D * p.cpsi + 0.5 * c.gamma * p.tau;
    g(2) = -p.E * (psi(2) - h.a3) * s.var;
    g(3) = -p.E * p.D * std::exp(-psi(1) * p.tau);
    g(4) = -p.E * p.D * p.hb;
    return g;
}

double lq_dq0_dh(const ModelConstants& c, const Vec& psi, double t, const GaussianSummary& s, double x, double a,
                 double hbar) {
    require_dim(psi, 5, "psi");
    const double tau = t - c.T;
    const double E = std::exp(psi(0) + psi(1) * tau);
    return -0.5 * E *
           (a * a + 2.0 * psi(2) * (x - s.mean) * a + 2.0 * psi(3) * psi(4) * std::exp(-psi(1) * tau) * a -
            2.0 * (1.0 - psi(4) * psi(4)) * hbar * a);
}

namespace {

// Closed form of C(t) for the audited family: theta1 (A - 1) + I1 + I2 + I3 where
// I1, I2, I3 integrate e^{-beta(s-t)} times E A, E sqrt(A^2 + gamma A / E) and
// gamma log(1 + sqrt(1 + gamma / (E A))) over [t, T].
struct NlqAuditedParts {
    double A, I1, I2, I3;
};

NlqAuditedParts nlq_audited_parts(const ModelConstants& c, double theta2, double t) {
    const double beta = c.beta;
    const double A = std::exp(beta * (t - c.T));
    const double E = std::exp(theta2);
    const double cc = c.gamma / E;
    const double r1 = std::sqrt(1.0 + cc);
    const double rA = std::sqrt(1.0 + cc / A);
    NlqAuditedParts p{};
    p.A = A;
    p.I1 = E * (c.T - t) * A;
    // F(w) = -2 r + log((r+1)/(r-1)), r = sqrt(1 + cc/w); the log(cc) parts cancel in F(1) - F(A).
    const double dF = -2.0 * (r1 - rA) + 2.0 * std::log((r1 + 1.0) / (rA + 1.0)) - std::log(A);
    p.I2 = A * E / beta * dF;
    // G(v) = v log(1+p) - cc v^2 / (2 (p+1)^2) + const, p = sqrt(1 + cc v).
    auto G = [cc](double v) {
        const double pp = std::sqrt(1.0 + cc * v);
        return v * std::log1p(pp) - cc * v * v / (2.0 * (pp + 1.0) * (pp + 1.0));
    };
    p.I3 = A * c.gamma / beta * (G(1.0 / A) - G(1.0));
    return p;
}

}  // namespace

double nlq_value(const ModelConstants& c, const Vec& th, double t, const LogMeanSummary& s, FormulaVariant v) {
    require_dim(th, 2, "theta");
    const double beta = c.beta;
    const double A = std::exp(beta * (t - c.T));
    if (v == FormulaVariant::Audited) {
        const auto p = nlq_audited_parts(c, th(1), t);
        return A * s.logmean + th(0) * (A - 1.0) + p.I1 + p.I2 + p.I3;
    }
    const double E = std::exp(th(1));
    const double g = c.gamma * std::exp(-th(1));
    const double gam = c.gamma;
    return A * s.logmean + th(0) * A - th(0) + (c.T - t) * E * A -
           E / beta * A * std::log(2.0 * std::sqrt(A * A + g * A) + 2.0 * A + g) +
           E / beta * std::log(2.0 * std::sqrt(1.0 + g) + 2.0 + g) -
           gam / beta * std::log(std::sqrt(1.0 + g / A) + 1.0) + gam / beta * std::log(std::sqrt(1.0 + g) + 1.0) +
           E / beta * A * std::sqrt(1.0 + g / A) - E / beta * std::sqrt(1.0 + g);
}

Vec nlq_value_grad(const ModelConstants& c, const Vec& th, double t, const LogMeanSummary&, FormulaVariant v) {
    require_dim(th, 2, "theta");
    const double beta = c.beta;
    const double A = std::exp(beta * (t - c.T));
    Vec grad(2);
    grad(0) = A - 1.0;
    if (v == FormulaVariant::Audited) {
        const auto p = nlq_audited_parts(c, th(1), t);
        grad(1) = p.I1 + p.I2 + 0.5 * c.gamma / beta * (A - 1.0);
        return grad;
    }
    const double E = std::exp(th(1));
    const double g = c.gamma * std::exp(-th(1));  // d g / d theta2 = -g
    const double gam = c.gamma;
    const double sqA = std::sqrt(A * A + g * A);
    const double QA = 2.0 * sqA + 2.0 * A + g;
    const double s1 = std::sqrt(1.0 + g);
    const double Q1 = 2.0 * s1 + 2.0 + g;
    const double sA = std::sqrt(1.0 + g / A);
    double d = (c.T - t) * E * A;
    d += -E / beta * A * std::log(QA) - E / beta * A / QA * (A / sqA + 1.0) * (-g);
    d += E / beta * std::log(Q1) + E / beta / Q1 * (1.0 / s1 + 1.0) * (-g);
    d += -gam / beta / (sA + 1.0) / (2.0 * sA) / A * (-g);
    d += gam / beta / (s1 + 1.0) / (2.0 * s1) * (-g);
    d += E / beta * A * sA + E / beta * A / (2.0 * sA) / A * (-g);
    d += -E / beta * s1 - E / beta / (2.0 * s1) * (-g);
    grad(1) = d;
    return grad;
}

namespace {

struct NlqQ0Parts {
    double A, E1, hb, w, s;
};

NlqQ0Parts nlq_q0_parts(const ModelConstants& c, const Vec& psi, double t, const NlqPolicy& h) {
    require_dim(psi, 3, "psi");
    NlqQ0Parts p{};
    const double tau = t - c.T;
    p.A = std::exp(c.beta * tau);
    p.E1 = std::exp(psi(0) + c.beta * tau);
    p.hb = h.mean(t, c.gamma, c.beta, c.T);
    p.w = c.gamma * std::exp(-psi(2) - c.beta * tau);
    p.s = std::sqrt(1.0 + p.w);
    return p;
}

}  // namespace

double nlq_q0(const ModelConstants& c, const Vec& psi, double t, const NlqPolicy& h, FormulaVariant v) {
    const auto p = nlq_q0_parts(c, psi, t, h);
    const double quad = 0.5 * p.E1 * (4.0 * std::exp(psi(1)) * p.hb - p.hb * p.hb);
    const double gam = c.gamma;
    if (v == FormulaVariant::Audited) {
        const double E3 = std::exp(psi(2)) * p.A;
        return quad - E3 - E3 * p.s - gam * std::log1p(p.s) - gam * psi(1) - 0.5 * gam;
    }
    const double E3 = psi(2) * p.A;
    return quad - E3 - E3 * p.s + gam * std::log1p(p.s) + gam * psi(1) - 0.5 * gam;
}

Vec nlq_q0_grad(const ModelConstants& c, const Vec& psi, double t, const NlqPolicy& h, FormulaVariant v) {
    const auto p = nlq_q0_parts(c, psi, t, h);
    const double gam = c.gamma;
    const double e2 = std::exp(psi(1));
    Vec g(3);
    g(0) = 0.5 * p.E1 * (4.0 * e2 * p.hb - p.hb * p.hb);
    const double ds = -p.w / (2.0 * p.s);  // d s / d psi3
    if (v == FormulaVariant::Audited) {
        const double E3 = std::exp(psi(2)) * p.A;
        g(1) = 2.0 * p.E1 * e2 * p.hb - gam;
        g(2) = -E3 * (1.0 + p.s) - E3 * ds - gam * ds / (1.0 + p.s);
    } else {
        g(1) = 2.0 * p.E1 * e2 * p.hb + gam;
        g(2) = -p.A * (1.0 + p.s) - psi(2) * p.A * ds + gam * ds / (1.0 + p.s);
    }
    return g;
}

double nlq_dq0_dh(const ModelConstants& c, const Vec& psi, double t, double a, double hbar) {
    require_dim(psi, 3, "psi");
    return 0.5 * std::exp(psi(0) + c.beta * (t - c.T)) * (4.0 * std::exp(psi(1)) - 2.0 * hbar) * a;
}

double value(const ModelConstants& c, const Vec& theta, double t, const Summary& s, FormulaVariant v) {
    if (c.example == Example::LqFinite) return lq_value(c, theta, t, as_gaussian(s));
    return nlq_value(c, theta, t, as_logmean(s), v);
}

Vec value_grad(const ModelConstants& c, const Vec& theta, double t, const Summary& s, FormulaVariant v) {
    if (c.example == Example::LqFinite) return lq_value_grad(c, theta, t, as_gaussian(s));
    return nlq_value_grad(c, theta, t, as_logmean(s), v);
}

double q0(const ModelConstants& c, const Vec& psi, double t, const Summary& s, const Policy& h, FormulaVariant v) {
    if (c.example == Example::LqFinite) return lq_q0(c, psi, t, as_gaussian(s), std::get<LqPolicy>(h), v);
    return nlq_q0(c, psi, t, std::get<NlqPolicy>(h), v);
}

Vec q0_grad(const ModelConstants& c, const Vec& psi, double t, const Summary& s, const Policy& h, FormulaVariant v) {
    if (c.example == Example::LqFinite) return lq_q0_grad(c, psi, t, as_gaussian(s), std::get<LqPolicy>(h), v);
    return nlq_q0_grad(c, psi, t, std::get<NlqPolicy>(h), v);
}

double entropy(const ModelConstants& c, const Policy& p, double t) {
    if (auto* lq = std::get_if<LqPolicy>(&p))
        return 0.5 * std::log(2.0 * kPi * std::numbers::e * lq->variance(t, c.gamma, c.T));
    return 1.0 - std::log(std::get<NlqPolicy>(p).rate(t, c.gamma, c.beta, c.T));
}

double nlq_consistency_C(const ModelConstants& c, double t, FormulaVariant v, int steps) {
    const double so2 = c.sigma_o * c.sigma_o;
    const double k = c.b / (2.0 * so2);
    const double sgn = v == FormulaVariant::Audited ? -1.0 : 1.0;
    auto rhs = [&](double s, double C) {
        const double A = std::exp(c.beta * (s - c.T));
        const double u = k + std::sqrt(k * k + c.gamma / (so2 * A));
        return c.beta * C - 0.5 * c.b * A * u - 0.5 * c.gamma + sgn * c.gamma * std::log(u);
    };
    const double h = (t - c.T) / steps;
    double s = c.T, C = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double k1 = rhs(s, C);
        const double k2 = rhs(s + 0.5 * h, C + 0.5 * h * k1);
        const double k3 = rhs(s + 0.5 * h, C + 0.5 * h * k2);
        const double k4 = rhs(s + h, C + h * k3);
        C += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    return C;
}

TrueParams true_params(const ModelConstants& c, FormulaVariant v) {
    c.validate();
    TrueParams tp;
    const double so2 = c.sigma_o * c.sigma_o;
    if (c.example == Example::LqFinite) {
        const double s2 = c.sigma * c.sigma + so2;
        tp.theta = Vec{{c.b * c.b / s2, -0.5 * c.gamma * std::log(kPi * c.gamma / (s2 * c.lambda)),
                        s2 / (4.0 * c.lambda * c.sigma * c.sigma)}};
        tp.psi = Vec{{std::log(2.0 * c.lambda * s2), c.b * c.b / s2, c.b / s2,
                      -c.b / (2.0 * c.lambda * c.sigma * std::sqrt(s2)), c.sigma / std::sqrt(s2)}};
    } else {
        const double theta2 = std::log(c.b * c.b / (4.0 * so2));
        tp.psi = Vec{{std::log(so2), std::log(c.b / (2.0 * so2)), theta2}};
        // Match theta1 so that the family's C(0) equals the ODE solution at t = 0.
        const Vec probe{{0.0, theta2}};
        const double base = nlq_value(c, probe, 0.0, LogMeanSummary{0.0}, v);
        const double A0 = std::exp(-c.beta * c.T);
        tp.theta = Vec{{(nlq_consistency_C(c, 0.0, v) - base) / (A0 - 1.0), theta2}};
    }
    tp.phi = psi_to_phi(c.example, tp.psi);
    return tp;
}

double optimal_value(const ModelConstants& c, double t, const Summary& s) {
    const auto tp = true_params(c, FormulaVariant::Audited);
    return value(c, tp.theta, t, s, FormulaVariant::Audited);
}

AuditReport dpp_audit(const ModelConstants& c, const Vec& theta, const Vec& psi, FormulaVariant v,
                      const std::vector<AuditPoint>& points) {
    require_dim(theta, theta_dim(c.example), "theta");
    if (points.size() < 10) throw DomainError("dpp_audit needs at least 10 grid points");
    double tmin = points.front().t, tmax = points.front().t;
    for (const auto& p : points) {
        tmin = std::min(tmin, p.t);
        tmax = std::max(tmax, p.t);
    }
    if (tmin > 1e-12 || tmax < c.T - 1e-12) throw DomainError("dpp_audit grid must span [0, T]");
    const Policy pol = psi_to_policy(c.example, psi);
    AuditReport r;
    r.points = points;
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const double res = q0(c, psi, p.t, p.summary, pol, v) + c.gamma * entropy(c, pol, p.t);
        r.residuals.push_back(res);
        lo = i == 0 ? res : std::min(lo, res);
        hi = i == 0 ? res : std::max(hi, res);
        r.max_abs = std::max(r.max_abs, std::abs(res));
    }
    r.spread = hi - lo;
    return r;
}

std::vector<AuditPoint> audit_grid(const ModelConstants& c, int nt, int ns) {
    std::vector<AuditPoint> pts;
    for (int i = 0; i < nt; ++i) {
        const double t = nt == 1 ? 0.0 : c.T * i / (nt - 1);
        for (int j = 0; j < ns; ++j) {
            const double u = ns == 1 ? 0.5 : static_cast<double>(j) / (ns - 1);
            if (c.example == Example::LqFinite)
                pts.push_back({t, GaussianSummary{-2.0 + 4.0 * u, 0.05 + 2.0 * u}});
            else
                pts.push_back({t, LogMeanSummary{-2.0 + 4.0 * u}});
        }
    }
    return pts;
}

}  // namespace mfcq
