#include "mfcq/lqinf.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace mfcq::lqinf {

namespace {

void require_shape(const Mat& A, Eigen::Index r, Eigen::Index c, const char* name) {
    if (A.rows() != r || A.cols() != c)
        throw DomainError(std::string(name) + " has shape " + std::to_string(A.rows()) + "x" +
                          std::to_string(A.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(c));
}

bool symmetric(const Mat& A, double tol = 1e-10) { return (A - A.transpose()).cwiseAbs().maxCoeff() <= tol; }

Mat sym(const Mat& A) { return 0.5 * (A + A.transpose()); }

double max_eig(const Mat& A) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(A), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double min_eig(const Mat& A) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(A), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

void require_negative_definite(const Mat& A, const char* name) {
    if (!(max_eig(A) < 0.0)) throw StabilityError(std::string(name) + " is not negative definite");
}

void require_pd(const Mat& S, const char* name) {
    if (!symmetric(S, 1e-10)) throw DomainError(std::string(name) + " is not symmetric");
    if (!(min_eig(S) > 0.0)) throw DomainError(std::string(name) + " is not positive definite");
}

// Solves f(X) = 0 for an affine map f on d x d matrices by a dense vectorized solve.
template <class Fn>
Mat solve_affine(Fn f, int d, const char* what) {
    const int n = d * d;
    const Mat f0 = f(Mat::Zero(d, d));
    Mat A(n, n);
    for (int j = 0; j < n; ++j) {
        Mat E = Mat::Zero(d, d);
        E(j % d, j / d) = 1.0;
        const Mat col = f(E) - f0;
        A.col(j) = Eigen::Map<const Vec>(col.data(), n);
    }
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible() || lu.rcond() < 1e-14)
        throw StabilityError(std::string(what) + ": linear system is singular; policy is not admissible");
    const Vec x = lu.solve(-Eigen::Map<const Vec>(f0.data(), n));
    return sym(Eigen::Map<const Mat>(x.data(), d, d));
}

Mat lambda_operator(const LqInfModel& m, const Mat& Lam, const Mat& K) {
    const UVSZ u = uvsz(Lam, Mat::Zero(m.d(), m.d()), m);
    return -m.beta * Lam + m.D.transpose() * Lam * m.D + m.Do.transpose() * Lam * m.Do + m.B.transpose() * Lam +
           Lam * m.B + m.M + u.S.transpose() * K + K.transpose() * u.S + K.transpose() * u.U * K;
}

Mat gamma_operator(const LqInfModel& m, const Mat& Lam, const Mat& Gam, const Mat& Kbar) {
    const UVSZ u = uvsz(Lam, Gam, m);
    const Mat DD = m.D + m.Dbar;
    const Mat DO = m.Do + m.Dobar;
    const Mat BB = m.B + m.Bbar;
    return -m.beta * Gam + DD.transpose() * Lam * DD + DO.transpose() * Gam * DO + BB.transpose() * Gam + Gam * BB +
           m.M + m.Mbar + u.Z.transpose() * Kbar + Kbar.transpose() * u.Z + Kbar.transpose() * u.V * Kbar;
}

double log_det_pd(const Mat& A) {
    Eigen::LLT<Mat> llt(sym(A));
    if (llt.info() != Eigen::Success) throw DomainError("matrix is not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double chi_optimal(const LqInfModel& m, const Mat& U) {
    const double p = m.p();
    return (0.5 * m.gamma * p * std::log(m.gamma * std::numbers::pi) - 0.5 * m.gamma * log_det_pd(-U)) / m.beta;
}

void check_feedback(const QnCoefficients& q, const FeedbackParams& f) {
    const auto p = q.U.rows();
    const auto d = q.L.rows();
    require_shape(f.K, p, d, "K");
    require_shape(f.Kbar, p, d, "Kbar");
    require_shape(f.Sigma, p, p, "Sigma");
    require_pd(f.Sigma, "Sigma");
}

double dist2(const FeedbackParams& a, const FeedbackParams& b) {
    return (a.K - b.K).squaredNorm() + (a.Kbar - b.Kbar).squaredNorm() + (a.Sigma - b.Sigma).squaredNorm();
}

double q3(const QnCoefficients& q, const Mat& Sigma) {
    return q.c + 0.5 * q.gamma * log_det_pd(Sigma) + (q.U * Sigma).trace();
}

Mat q1_matrix(const QnCoefficients& q, const Mat& K) {
    return q.L + q.S.transpose() * K + K.transpose() * q.S + K.transpose() * q.U * K;
}

Mat q2_matrix(const QnCoefficients& q, const Mat& Kbar) {
    return q.G + q.Z.transpose() * Kbar + Kbar.transpose() * q.Z + Kbar.transpose() * q.V * Kbar;
}

}  // namespace

double sigma_min(const Mat& A) {
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues().minCoeff();
}

double spectral_norm(const Mat& A) {
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues().maxCoeff();
}

void LqInfModel::validate() const {
    const int n = d();
    const int k = p();
    if (n < 1 || k < 1) throw ConfigError("lqinf dimensions must be positive");
    for (const Mat* A : {&B, &Bbar, &D, &Dbar, &Do, &Dobar, &M, &Mbar}) require_shape(*A, n, n, "state matrix");
    for (const Mat* A : {&C, &F, &Fo}) require_shape(*A, n, k, "control matrix");
    require_shape(R, k, k, "R");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("lqinf beta must lie in (0, 1)");
    if (!(gamma > 0.0)) throw ConfigError("lqinf gamma must be positive");
    if (!symmetric(M) || !symmetric(Mbar) || !symmetric(R)) throw ConfigError("M, Mbar and R must be symmetric");
    if (max_eig(M) > 1e-12) throw ConfigError("M must be negative semidefinite");
    if (max_eig(M + Mbar) > 1e-12) throw ConfigError("M + Mbar must be negative semidefinite");
    if (!(max_eig(R) < 0.0)) throw ConfigError("R must be negative definite");
}

LqInfModel LqInfModel::scalar_example(double gamma) {
    LqInfModel m;
    const Mat z = Mat::Zero(1, 1);
    const Mat one = Mat::Ones(1, 1);
    m.B = m.Bbar = m.D = m.Dbar = m.Do = m.Dobar = m.Mbar = z;
    m.M = -one;
    m.C = one;
    m.F = z;
    m.Fo = one;
    m.R = -one;
    m.beta = 0.1;
    m.gamma = gamma;
    return m;
}

UVSZ uvsz(const Mat& Lambda, const Mat& Gamma, const LqInfModel& m) {
    const int d = m.d();
    require_shape(Lambda, d, d, "Lambda");
    require_shape(Gamma, d, d, "Gamma");
    UVSZ o;
    o.U = m.F.transpose() * Lambda * m.F + m.Fo.transpose() * Lambda * m.Fo + m.R;
    o.V = m.F.transpose() * Lambda * m.F + m.Fo.transpose() * Gamma * m.Fo + m.R;
    o.S = m.C.transpose() * Lambda + m.F.transpose() * Lambda * m.D + m.Fo.transpose() * Lambda * m.Do;
    o.Z = m.C.transpose() * Gamma + m.F.transpose() * Lambda * (m.D + m.Dbar) +
          m.Fo.transpose() * Gamma * (m.Do + m.Dobar);
    return o;
}

PolicyValue policy_value(const Mat& K, const Mat& Kbar, const Mat& Sigma, const LqInfModel& m) {
    m.validate();
    const int d = m.d();
    const int p = m.p();
    require_shape(K, p, d, "K");
    require_shape(Kbar, p, d, "Kbar");
    require_shape(Sigma, p, p, "Sigma");
    require_pd(Sigma, "Sigma");
    PolicyValue pv;
    pv.Lambda = solve_affine([&](const Mat& X) { return lambda_operator(m, X, K); }, d, "policy Lambda equation");
    pv.Gamma = solve_affine([&](const Mat& X) { return gamma_operator(m, pv.Lambda, X, Kbar); }, d,
                            "policy Gamma equation");
    const Mat U = uvsz(pv.Lambda, pv.Gamma, m).U;
    pv.chi = (0.5 * m.gamma * p * (std::log(2.0 * std::numbers::pi) + 1.0) + 0.5 * m.gamma * log_det_pd(Sigma) +
              (U * Sigma).trace()) /
             m.beta;
    return pv;
}

RiccatiResiduals riccati_residuals(const LqInfModel& m, const Mat& Lambda, const Mat& Gamma, double chi) {
    const UVSZ u = uvsz(Lambda, Gamma, m);
    const Mat Ui = u.U.inverse();
    const Mat Vi = u.V.inverse();
    const Mat rl = -m.beta * Lambda + m.M + m.D.transpose() * Lambda * m.D + m.Do.transpose() * Lambda * m.Do +
                   m.B.transpose() * Lambda + Lambda * m.B - u.S.transpose() * Ui * u.S;
    const Mat DD = m.D + m.Dbar;
    const Mat DO = m.Do + m.Dobar;
    const Mat BB = m.B + m.Bbar;
    const Mat rg = -m.beta * Gamma + m.M + m.Mbar + DD.transpose() * Lambda * DD + DO.transpose() * Gamma * DO +
                   BB.transpose() * Gamma + Gamma * BB - u.Z.transpose() * Vi * u.Z;
    RiccatiResiduals r;
    r.lambda = rl.cwiseAbs().maxCoeff();
    r.gamma = rg.cwiseAbs().maxCoeff();
    r.chi = std::abs(m.beta * (chi_optimal(m, u.U) - chi));
    return r;
}

RiccatiSolution riccati_solve(const LqInfModel& m, double tol, int max_iter) {
    m.validate();
    if (max_iter < 1) throw ConfigError("riccati max_iter must be positive");
    const int d = m.d();
    const int p = m.p();
    const Mat zero = Mat::Zero(d, d);
    RiccatiSolution sol;

    Mat K = Mat::Zero(p, d);
    Mat Lam;
    bool done = false;
    for (int it = 0; it < max_iter && !done; ++it) {
        const Mat next = solve_affine([&](const Mat& X) { return lambda_operator(m, X, K); }, d, "Riccati Lambda");
        sol.lambda_traces.push_back(next.trace());
        ++sol.iterations;
        const UVSZ u = uvsz(next, zero, m);
        require_negative_definite(u.U, "U at a policy-iteration iterate (ill-conditioned)");
        done = it > 0 && (next - Lam).cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + next.cwiseAbs().maxCoeff());
        Lam = next;
        K = -u.U.ldlt().solve(u.S);
    }
    if (!done) throw ConvergenceError("Riccati Lambda policy iteration did not converge within max_iter");

    Mat Kbar = Mat::Zero(p, d);
    Mat Gam;
    done = false;
    for (int it = 0; it < max_iter && !done; ++it) {
        const Mat next =
            solve_affine([&](const Mat& X) { return gamma_operator(m, Lam, X, Kbar); }, d, "Riccati Gamma");
        ++sol.iterations;
        const UVSZ u = uvsz(Lam, next, m);
        require_negative_definite(u.V, "V at a policy-iteration iterate (ill-conditioned)");
        done = it > 0 && (next - Gam).cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + next.cwiseAbs().maxCoeff());
        Gam = next;
        Kbar = -u.V.ldlt().solve(u.Z);
    }
    if (!done) throw ConvergenceError("Riccati Gamma policy iteration did not converge within max_iter");

    sol.Lambda = Lam;
    sol.Gamma = Gam;
    sol.chi = chi_optimal(m, uvsz(Lam, Gam, m).U);
    sol.residuals = riccati_residuals(m, Lam, Gam, sol.chi);
    if (sol.residuals.lambda > tol || sol.residuals.gamma > tol || sol.residuals.chi > tol)
        throw ConvergenceError("Riccati residuals exceed tolerance");
    return sol;
}

void QnCoefficients::validate() const {
    const auto d = L.rows();
    const auto p = U.rows();
    require_shape(L, d, d, "L");
    require_shape(G, d, d, "G");
    require_shape(S, p, d, "S");
    require_shape(Z, p, d, "Z");
    require_shape(U, p, p, "U");
    require_shape(V, p, p, "V");
    if (!symmetric(L) || !symmetric(G) || !symmetric(U) || !symmetric(V))
        throw DomainError("L, G, U and V must be symmetric");
    if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
    require_negative_definite(U, "U");
    require_negative_definite(V, "V");
}

DiscountedMoments DiscountedMoments::with_beta(const Mat& C_mu, const Mat& C_mubar, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("discount beta must lie in (0, 1)");
    return {C_mu, C_mubar, 1.0 / (1.0 - beta)};
}

double approx_q_pointwise(const QnCoefficients& q, const Vec& mean, const Mat& cov, const FeedbackParams& f) {
    check_feedback(q, f);
    const auto d = q.L.rows();
    if (mean.size() != d) throw DomainError("mean has the wrong dimension");
    require_shape(cov, d, d, "cov");
    return (q1_matrix(q, f.K) * cov).trace() + mean.dot(q2_matrix(q, f.Kbar) * mean) + q3(q, f.Sigma);
}

double approx_q_aggregated(const QnCoefficients& q, const DiscountedMoments& dm, const FeedbackParams& f) {
    check_feedback(q, f);
    return (q1_matrix(q, f.K) * dm.C_mu).trace() + (q2_matrix(q, f.Kbar) * dm.C_mubar).trace() +
           dm.mass * q3(q, f.Sigma);
}

FeedbackParams approx_q_grads(const QnCoefficients& q, const DiscountedMoments& dm, const FeedbackParams& f) {
    check_feedback(q, f);
    FeedbackParams g;
    g.K = 2.0 * (q.S + q.U * f.K) * dm.C_mu;
    g.Kbar = 2.0 * (q.Z + q.V * f.Kbar) * dm.C_mubar;
    g.Sigma = dm.mass * (0.5 * q.gamma * f.Sigma.inverse() + q.U);
    g.Sigma = sym(g.Sigma);
    return g;
}

FeedbackParams closed_maximizer(const QnCoefficients& q) {
    q.validate();
    FeedbackParams f;
    f.K = -q.U.ldlt().solve(q.S);
    f.Kbar = -q.V.ldlt().solve(q.Z);
    f.Sigma = sym(-0.5 * q.gamma * q.U.inverse());
    return f;
}

QnCoefficients qn_from_value(const LqInfModel& m, const Mat& Lambda, const Mat& Gamma, double chi) {
    const int d = m.d();
    const UVSZ u = uvsz(Lambda, Gamma, m);
    QnCoefficients q;
    q.L = sym(lambda_operator(m, Lambda, Mat::Zero(m.p(), d)));
    q.G = sym(gamma_operator(m, Lambda, Gamma, Mat::Zero(m.p(), d)));
    q.c = -m.beta * chi + 0.5 * m.gamma * m.p() * (std::log(2.0 * std::numbers::pi) + 1.0);
    q.S = u.S;
    q.Z = u.Z;
    q.U = sym(u.U);
    q.V = sym(u.V);
    q.gamma = m.gamma;
    return q;
}

InnerTrace inner_ascent(const QnCoefficients& q, const DiscountedMoments& dm, const FeedbackParams& phi0,
                        const InnerAlphas& alphas, int L, std::optional<SigmaBand> band) {
    if (L < 0) throw ConfigError("inner iteration count must be non-negative");
    const FeedbackParams star = closed_maximizer(q);
    auto check_band = [&](const Mat& S, int l) {
        const double lo = min_eig(S);
        const double hi = max_eig(S);
        if (!(lo > 0.0))
            throw BandViolationError("Sigma lost positive definiteness at iteration " + std::to_string(l));
        if (band && (lo < band->a - 1e-12 || hi > band->b + 1e-12))
            throw BandViolationError("Sigma left the band [a, b] at iteration " + std::to_string(l));
    };
    check_band(phi0.Sigma, 0);
    InnerTrace tr;
    FeedbackParams cur = phi0;
    tr.iterates.push_back(cur);
    tr.objective.push_back(approx_q_aggregated(q, dm, cur));
    tr.dist2.push_back(dist2(cur, star));
    for (int l = 1; l <= L; ++l) {
        const FeedbackParams g = approx_q_grads(q, dm, cur);
        cur.K += alphas.K * g.K;
        cur.Kbar += alphas.Kbar * g.Kbar;
        cur.Sigma = sym(cur.Sigma + alphas.Sigma * g.Sigma);
        check_band(cur.Sigma, l);
        tr.iterates.push_back(cur);
        tr.objective.push_back(approx_q_aggregated(q, dm, cur));
        tr.dist2.push_back(dist2(cur, star));
    }
    return tr;
}

ContractionCertificate contraction_certificate(const QnCoefficients& q, const DiscountedMoments& dm, double a,
                                               double b) {
    q.validate();
    require_pd(dm.C_mu, "C_mu");
    require_pd(dm.C_mubar, "C_mubar");
    if (!(dm.mass > 0.0)) throw DomainError("discount mass must be positive");
    if (!(a > 0.0 && a <= b)) throw CertificateError("band needs 0 < a <= b");
    const double normU = spectral_norm(q.U);
    const double smU = sigma_min(-q.U);
    if (a < 0.5 * q.gamma * normU)
        throw CertificateError("hypothesis a >= (gamma/2) ||U|| fails: a = " + std::to_string(a) +
                               ", (gamma/2) ||U|| = " + std::to_string(0.5 * q.gamma * normU));
    const double bmin = 2.0 * a * a / (q.gamma * smU);
    if (b < bmin)
        throw CertificateError("hypothesis b >= 2 a^2 / (gamma sigma_min(-U)) fails: b = " + std::to_string(b) +
                               ", bound = " + std::to_string(bmin));
    ContractionCertificate c;
    c.a = a;
    c.b = b;
    c.upsilon = std::min({smU * sigma_min(dm.C_mu), sigma_min(-q.V) * sigma_min(dm.C_mubar), q.gamma / (2.0 * b * b)});
    c.Upsilon = std::max({2.0 * normU * spectral_norm(dm.C_mu), 2.0 * spectral_norm(q.V) * spectral_norm(dm.C_mubar),
                          q.gamma * dm.mass / (2.0 * a * a)});
    c.eta = c.upsilon / c.Upsilon;
    return c;
}

double band_sigma_step(const QnCoefficients& q, const DiscountedMoments& dm, double a) {
    if (!(a > 0.0)) throw DomainError("band lower bound must be positive");
    return 2.0 * a * a / (q.gamma * dm.mass);
}

bool band_is_invariant(const QnCoefficients& q, double a, double b) {
    q.validate();
    if (!(a > 0.0 && a <= b)) return false;
    const double normU = spectral_norm(q.U);
    const double smU = sigma_min(-q.U);
    const double tol = 1e-12 * (1.0 + b);
    return a <= q.gamma / (2.0 * normU) + tol && b >= q.gamma / (2.0 * smU) - tol &&
           b >= 2.0 * a - 2.0 * a * a * smU / q.gamma - tol;
}

}  // namespace mfcq::lqinf
