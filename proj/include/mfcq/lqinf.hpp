#pragma once

#include <optional>
#include <vector>

#include "mfcq/core.hpp"

namespace mfcq::lqinf {

struct LqInfModel {
    Mat B, Bbar, D, Dbar, Do, Dobar, M, Mbar;  // d x d
    Mat C, F, Fo;                              // d x p
    Mat R;                                     // p x p
    double beta = 0.5;
    double gamma = 0.5;

    int d() const { return static_cast<int>(B.rows()); }
    int p() const { return static_cast<int>(R.rows()); }
    void validate() const;

    // B = 0, C = 1, D = D_o = 0, F = 0, F_o = 1, M = -1, R = -1, beta = 0.1, all bars zero.
    static LqInfModel scalar_example(double gamma = 0.5);
};

struct UVSZ {
    Mat U, V, S, Z;
};

UVSZ uvsz(const Mat& Lambda, const Mat& Gamma, const LqInfModel& m);

struct PolicyValue {
    Mat Lambda;
    Mat Gamma;
    double chi = 0.0;
};

// Value coefficients of the Gaussian feedback policy N(K (x - mubar) + Kbar mubar, Sigma).
PolicyValue policy_value(const Mat& K, const Mat& Kbar, const Mat& Sigma, const LqInfModel& m);

struct RiccatiResiduals {
    double lambda = 0.0;
    double gamma = 0.0;
    double chi = 0.0;
};

RiccatiResiduals riccati_residuals(const LqInfModel& m, const Mat& Lambda, const Mat& Gamma, double chi);

struct RiccatiSolution {
    Mat Lambda;
    Mat Gamma;
    double chi = 0.0;
    int iterations = 0;
    std::vector<double> lambda_traces;  // trace of Lambda after each policy-iteration sweep
    RiccatiResiduals residuals;
};

RiccatiSolution riccati_solve(const LqInfModel& m, double tol = 1e-10, int max_iter = 200);

struct QnCoefficients {
    Mat L, G;  // d x d
    double c = 0.0;
    Mat S, Z;  // p x d
    Mat U, V;  // p x p
    double gamma = 0.5;

    void validate() const;
};

struct DiscountedMoments {
    Mat C_mu, C_mubar;
    double mass = 2.0;

    static DiscountedMoments with_beta(const Mat& C_mu, const Mat& C_mubar, double beta);
};

struct FeedbackParams {
    Mat K, Kbar, Sigma;
};

double approx_q_pointwise(const QnCoefficients& q, const Vec& mean, const Mat& cov, const FeedbackParams& f);
double approx_q_aggregated(const QnCoefficients& q, const DiscountedMoments& dm, const FeedbackParams& f);
FeedbackParams approx_q_grads(const QnCoefficients& q, const DiscountedMoments& dm, const FeedbackParams& f);

FeedbackParams closed_maximizer(const QnCoefficients& q);

// Iq-function coefficients induced by value coefficients (Lambda, Gamma, chi): the
// K-free parts of the Lambda, Gamma and chi equations plus (S, U, Z, V).
QnCoefficients qn_from_value(const LqInfModel& m, const Mat& Lambda, const Mat& Gamma, double chi);

struct InnerAlphas {
    double K = 0.0, Kbar = 0.0, Sigma = 0.0;
};

struct SigmaBand {
    double a = 0.0, b = 0.0;
};

struct InnerTrace {
    std::vector<FeedbackParams> iterates;  // L + 1 entries, starting at phi0
    std::vector<double> objective;
    std::vector<double> dist2;  // squared Frobenius distance to the closed maximizer
};

InnerTrace inner_ascent(const QnCoefficients& q, const DiscountedMoments& dm, const FeedbackParams& phi0,
                        const InnerAlphas& alphas, int L, std::optional<SigmaBand> band = std::nullopt);

struct ContractionCertificate {
    double upsilon = 0.0, Upsilon = 0.0, eta = 0.0, a = 0.0, b = 0.0;
};

ContractionCertificate contraction_certificate(const QnCoefficients& q, const DiscountedMoments& dm, double a,
                                               double b);

// Sigma step size under which the Sigma iterates stay inside [a I, b I].
double band_sigma_step(const QnCoefficients& q, const DiscountedMoments& dm, double a);

// Sufficient conditions for [a I, b I] to be invariant under the band_sigma_step update:
// a <= gamma / (2 ||U||), b >= gamma / (2 sigma_min(-U)) and b >= 2a - 2a^2 sigma_min(-U) / gamma.
bool band_is_invariant(const QnCoefficients& q, double a, double b);

double sigma_min(const Mat& A);
double spectral_norm(const Mat& A);

}  // namespace mfcq::lqinf
