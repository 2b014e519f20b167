#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "mfcq/errors.hpp"

namespace mfcq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Example { LqFinite, NlqFinite };

// PaperLiteral keeps the displayed constants; Audited applies the sign fixes
// that make the DPP residual vanish at the true parameters.
enum class FormulaVariant { PaperLiteral, Audited };

std::string to_string(Example e);
std::string to_string(FormulaVariant v);
Example parse_example(const std::string& s);
FormulaVariant parse_variant(const std::string& s);

struct ModelConstants {
    Example example = Example::LqFinite;
    double b = 0.0;
    double sigma = 0.0;
    double sigma_o = 0.0;
    double lambda = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double T = 1.0;

    void validate() const;

    static ModelConstants lq_paper();
    static ModelConstants nlq_paper();
};

struct TimeGrid {
    double dt = 0.0;
    int steps = 0;

    static TimeGrid make(double T, double dt);
    double t(int k) const { return k * dt; }
    double horizon() const { return steps * dt; }
};

struct GaussianSummary {
    double mean = 0.0;
    double var = 0.0;
};

struct LogMeanSummary {
    double logmean = 0.0;
};

using Summary = std::variant<GaussianSummary, LogMeanSummary>;

const GaussianSummary& as_gaussian(const Summary& s);
const LogMeanSummary& as_logmean(const Summary& s);
bool summary_matches(Example e, const Summary& s);

struct MixtureComponent {
    double weight = 1.0;
    Summary summary;
};

struct MixtureSummary {
    std::vector<MixtureComponent> components;

    void validate() const;
    // Mean of the mixture law; for log-mean components this is a mean of e^{logmean}.
    double mean() const;
    // Second central moment about the mixture mean (Gaussian components only).
    double central_second_moment() const;
    // Moment-equivalent single summary: every LQ functional is quadratic in x,
    // every NLQ functional depends on the mean only.
    Summary collapse() const;
};

// Gaussian policy N(-a3 (x - mubar) - a4 e^{-a2 (t-T)}, gamma e^{-a1 - a2 (t-T)}).
struct LqPolicy {
    double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;

    double offset(double t, double T) const;  // population mean action hbar
    double mean(double t, double x, double mubar, double T) const;
    double variance(double t, double gamma, double T) const;
    Vec params() const;
};

// Exponential policy with rate (1/gamma) e^{c1+beta(t-T)} (-e^{c2} + sqrt(e^{2c2} + gamma e^{-c1-beta(t-T)})).
struct NlqPolicy {
    double c1 = 0.0, c2 = 0.0;

    double rate(double t, double gamma, double beta, double T) const;
    double mean(double t, double gamma, double beta, double T) const;  // hbar = 1/rate
    Vec params() const;
};

using Policy = std::variant<LqPolicy, NlqPolicy>;

bool policy_matches(Example e, const Policy& p);

int theta_dim(Example e);
int psi_dim(Example e);
int phi_dim(Example e);
void require_dim(const Vec& v, int n, const char* what);
void require_finite(const Vec& v, const char* what);

Policy psi_to_policy(Example e, const Vec& psi);
Policy phi_to_policy(Example e, const Vec& phi);
// Actor parameters at the within-family maximizer of q^gamma for a given psi.
Vec psi_to_phi(Example e, const Vec& psi);

struct SchedulePiece {
    std::optional<long> n_upper;  // empty = unbounded
    Vec c;
    Vec e;
    std::optional<Vec> e_inner;
};

struct Schedule {
    std::vector<SchedulePiece> pieces;

    static Schedule constant(const Vec& c);
    static Schedule power(const Vec& c, const Vec& e);
    void validate() const;
    int dim() const;
    Vec eval(long n, long l = 0) const;
    double eval_scalar(long n, long l = 0) const;
};

// Keyed random streams: the engine state is a pure function of (seed, episode,
// role, purpose), so results do not depend on the order streams are created.
enum class Purpose : std::uint32_t {
    InitialState = 1,
    TestParams = 2,
    CommonNoise = 3,
    Particles = 4,
    Evaluation = 5,
    Oracle = 6,
};

class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t episode, std::uint64_t role, Purpose purpose);

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
    double exponential(double rate);
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Initialization law for episode summaries: LQ mean ~ N(0,1), var ~ U[0,1]; NLQ logmean ~ N(0,1).
Summary draw_initial_summary(Example e, Stream& s);

}  // namespace mfcq
