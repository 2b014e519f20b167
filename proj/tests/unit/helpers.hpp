#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "mfcq/core.hpp"

namespace mfcq::test {

inline Vec central_diff(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec up = x, dn = x;
        up(i) += h;
        dn(i) -= h;
        g(i) = (f(up) - f(dn)) / (2.0 * h);
    }
    return g;
}

// Relative error with an absolute floor so gradients near zero do not blow up the ratio.
inline double rel_err(const Vec& a, const Vec& b, double floor = 1e-3) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(floor, b.cwiseAbs().maxCoeff());
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    Vec uniform_vec(int n, double lo, double hi) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v(i) = uniform(lo, hi);
        return v;
    }
    Mat normal_mat(int r, int c) {
        Mat m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = normal();
        return m;
    }
    // Symmetric positive definite with eigenvalues in [lo, hi].
    Mat spd(int n, double lo, double hi) {
        Eigen::HouseholderQR<Mat> qr(normal_mat(n, n));
        const Mat Q = qr.householderQ();
        return Q * uniform_vec(n, lo, hi).asDiagonal() * Q.transpose();
    }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    double s = 0.0, s2 = 0.0;
    for (double x : xs) s += x;
    const double n = static_cast<double>(xs.size());
    const double m = s / n;
    for (double x : xs) s2 += (x - m) * (x - m);
    return {m, std::sqrt(s2 / (n - 1.0) / n)};
}

}  // namespace mfcq::test
