#include "mfcq/core.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace mfcq {

std::string to_string(Example e) { return e == Example::LqFinite ? "lq" : "nlq"; }

std::string to_string(FormulaVariant v) { return v == FormulaVariant::Audited ? "audited" : "paper"; }

Example parse_example(const std::string& s) {
    if (s == "lq") return Example::LqFinite;
    if (s == "nlq") return Example::NlqFinite;
    throw ConfigError("unknown example '" + s + "' (expected lq or nlq)");
}

FormulaVariant parse_variant(const std::string& s) {
    if (s == "audited") return FormulaVariant::Audited;
    if (s == "paper") return FormulaVariant::PaperLiteral;
    throw ConfigError("unknown variant '" + s + "' (expected paper or audited)");
}

void ModelConstants::validate() const {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!(finite(b) && finite(sigma) && finite(sigma_o) && finite(lambda) && finite(beta) && finite(gamma) &&
          finite(T)))
        throw ConfigError("model constants must be finite");
    if (!(sigma_o > 0)) throw ConfigError("sigma_o must be positive");
    if (!(gamma > 0)) throw ConfigError("gamma must be positive");
    if (!(T > 0)) throw ConfigError("T must be positive");
    if (sigma < 0) throw ConfigError("sigma must be non-negative");
    if (example == Example::LqFinite) {
        if (!(lambda > 0)) throw ConfigError("lambda must be positive for the LQ example");
        if (!(sigma > 0)) throw ConfigError("sigma must be positive for the LQ example");
    } else {
        if (!(beta > 0)) throw ConfigError("beta must be positive for the NLQ example");
    }
}

ModelConstants ModelConstants::lq_paper() {
    ModelConstants c;
    c.example = Example::LqFinite;
    c.b = 0.25;
    c.sigma = 0.5;
    c.sigma_o = 0.5;
    c.lambda = 1.5;
    c.beta = 0.0;
    c.gamma = 0.5;
    c.T = 1.0;
    return c;
}

ModelConstants ModelConstants::nlq_paper() {
    ModelConstants c;
    c.example = Example::NlqFinite;
    c.b = 1.5;
    c.sigma = 0.5;
    c.sigma_o = 1.0;
    c.lambda = 0.0;
    c.beta = 1.0;
    c.gamma = 0.2;
    c.T = 1.0;
    return c;
}

TimeGrid TimeGrid::make(double T, double dt) {
    if (!(dt > 0) || !(T > 0)) throw DomainError("time grid needs dt > 0 and T > 0");
    long steps = std::lround(T / dt);
    if (steps < 1 || std::abs(steps * dt - T) > 1e-12)
        throw ConfigError("dt must divide the horizon T");
    return TimeGrid{dt, static_cast<int>(steps)};
}

const GaussianSummary& as_gaussian(const Summary& s) {
    if (auto* g = std::get_if<GaussianSummary>(&s)) return *g;
    throw DomainError("expected a Gaussian summary");
}

const LogMeanSummary& as_logmean(const Summary& s) {
    if (auto* g = std::get_if<LogMeanSummary>(&s)) return *g;
    throw DomainError("expected a log-mean summary");
}

bool summary_matches(Example e, const Summary& s) {
    return e == Example::LqFinite ? std::holds_alternative<GaussianSummary>(s)
                                  : std::holds_alternative<LogMeanSummary>(s);
}

void MixtureSummary::validate() const {
    if (components.empty()) throw DomainError("mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components) {
        if (!(c.weight >= 0)) throw DomainError("mixture weights must be non-negative");
        if (c.summary.index() != components.front().summary.index())
            throw DomainError("mixture components must share a summary type");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights must sum to 1");
}

double MixtureSummary::mean() const {
    double m = 0.0;
    for (const auto& c : components) {
        if (auto* g = std::get_if<GaussianSummary>(&c.summary))
            m += c.weight * g->mean;
        else
            m += c.weight * std::exp(std::get<LogMeanSummary>(c.summary).logmean);
    }
    return m;
}

double MixtureSummary::central_second_moment() const {
    const double m = mean();
    double v = 0.0;
    for (const auto& c : components) {
        const auto& g = as_gaussian(c.summary);
        v += c.weight * (g.var + (g.mean - m) * (g.mean - m));
    }
    return v;
}

Summary MixtureSummary::collapse() const {
    validate();
    if (std::holds_alternative<GaussianSummary>(components.front().summary))
        return GaussianSummary{mean(), central_second_moment()};
    return LogMeanSummary{std::log(mean())};
}

double LqPolicy::offset(double t, double T) const { return -a4 * std::exp(-a2 * (t - T)); }

double LqPolicy::mean(double t, double x, double mubar, double T) const {
    return -a3 * (x - mubar) + offset(t, T);
}

double LqPolicy::variance(double t, double gamma, double T) const { return gamma * std::exp(-a1 - a2 * (t - T)); }

Vec LqPolicy::params() const { return Vec{{a1, a2, a3, a4}}; }

double NlqPolicy::rate(double t, double gamma, double beta, double T) const {
    // e^{c1 + beta tau} / gamma * (sqrt(e2^2 + gamma e^{-c1 - beta tau}) - e2), rationalised.
    return 1.0 / mean(t, gamma, beta, T);
}

double NlqPolicy::mean(double t, double gamma, double beta, double T) const {
    const double e2 = std::exp(c2);
    return e2 + std::sqrt(e2 * e2 + gamma * std::exp(-c1 - beta * (t - T)));
}

Vec NlqPolicy::params() const { return Vec{{c1, c2}}; }

bool policy_matches(Example e, const Policy& p) {
    return e == Example::LqFinite ? std::holds_alternative<LqPolicy>(p) : std::holds_alternative<NlqPolicy>(p);
}

int theta_dim(Example e) { return e == Example::LqFinite ? 3 : 2; }
int psi_dim(Example e) { return e == Example::LqFinite ? 5 : 3; }
int phi_dim(Example e) { return e == Example::LqFinite ? 4 : 2; }

void require_dim(const Vec& v, int n, const char* what) {
    if (v.size() != n)
        throw DomainError(std::string(what) + " has " + std::to_string(v.size()) + " components, expected " +
                          std::to_string(n));
}

void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) throw DomainError(std::string(what) + " has non-finite components");
}

Policy psi_to_policy(Example e, const Vec& psi) {
    require_dim(psi, psi_dim(e), "psi");
    if (e == Example::LqFinite) {
        if (psi(4) == 0.0) throw SingularParameterError("psi_5 = 0 makes the policy offset psi_4/psi_5 undefined");
        return LqPolicy{psi(0), psi(1), psi(2), psi(3) / psi(4)};
    }
    return NlqPolicy{psi(0), psi(1)};
}

Policy phi_to_policy(Example e, const Vec& phi) {
    require_dim(phi, phi_dim(e), "phi");
    if (e == Example::LqFinite) return LqPolicy{phi(0), phi(1), phi(2), phi(3)};
    return NlqPolicy{phi(0), phi(1)};
}

Vec psi_to_phi(Example e, const Vec& psi) {
    Policy p = psi_to_policy(e, psi);
    if (auto* lq = std::get_if<LqPolicy>(&p)) return lq->params();
    return std::get<NlqPolicy>(p).params();
}

Schedule Schedule::constant(const Vec& c) { return Schedule{{SchedulePiece{std::nullopt, c, Vec::Zero(c.size()), {}}}}; }

Schedule Schedule::power(const Vec& c, const Vec& e) { return Schedule{{SchedulePiece{std::nullopt, c, e, {}}}}; }

void Schedule::validate() const {
    if (pieces.empty()) throw ConfigError("schedule has no pieces");
    const long dim = pieces.front().c.size();
    std::optional<long> prev;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& p = pieces[i];
        if (p.c.size() != dim || p.e.size() != dim || (p.e_inner && p.e_inner->size() != dim))
            throw ConfigError("schedule pieces must share one dimension");
        if ((p.c.array() < 0).any() || (p.e.array() < 0).any() || (p.e_inner && (p.e_inner->array() < 0).any()))
            throw ConfigError("schedule coefficients and exponents must be non-negative");
        if (!p.n_upper && i + 1 != pieces.size()) throw ConfigError("only the last schedule piece may be unbounded");
        if (p.n_upper) {
            if (*p.n_upper < 1 || (prev && *p.n_upper <= *prev))
                throw ConfigError("schedule piece bounds must be increasing and at least 1");
            prev = p.n_upper;
        }
    }
}

int Schedule::dim() const { return pieces.empty() ? 0 : static_cast<int>(pieces.front().c.size()); }

Vec Schedule::eval(long n, long l) const {
    if (n < 1) throw DomainError("schedule index n must be at least 1");
    for (const auto& p : pieces) {
        if (p.n_upper && n > *p.n_upper) continue;
        Vec out(p.c.size());
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            double denom = std::pow(static_cast<double>(n), p.e(i));
            if (p.e_inner) {
                if (l < 1) throw DomainError("inner index l must be at least 1 for this schedule");
                denom *= std::pow(static_cast<double>(l), (*p.e_inner)(i));
            }
            out(i) = p.c(i) / denom;
        }
        return out;
    }
    throw ConfigError("no schedule piece covers n = " + std::to_string(n));
}

double Schedule::eval_scalar(long n, long l) const {
    Vec v = eval(n, l);
    if (v.size() != 1) throw ConfigError("expected a scalar schedule");
    return v(0);
}

Stream::Stream(std::uint64_t seed, std::uint64_t episode, std::uint64_t role, Purpose purpose) {
    auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x & 0xffffffffu); };
    auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(episode), hi(episode), lo(role), hi(role),
                      static_cast<std::uint32_t>(purpose)};
    engine_.seed(seq);
}

double Stream::exponential(double rate) {
    std::exponential_distribution<double> d(rate);
    return d(engine_);
}

Summary draw_initial_summary(Example e, Stream& s) {
    if (e == Example::LqFinite) {
        const double mean = s.normal();
        const double var = s.uniform();
        return GaussianSummary{mean, var};
    }
    return LogMeanSummary{s.normal()};
}

}  // namespace mfcq
