#pragma once

#include <utility>
#include <vector>

#include "mfcq/envs.hpp"
#include "mfcq/funcs.hpp"

namespace mfcq {

enum class SamplingMode { Perturb, Literal };

SamplingMode parse_sampling(const std::string& s);

// Perturb: base_i (1 + u_i); Literal: base_i u_i; u_i iid U[p, q].
Vec sample_test_params(const Vec& base, double p, double q, Stream& s, SamplingMode mode);

double td_residual(const ModelConstants& c, const Vec& theta, const Vec& psi, const EpisodeLog& ep, int k,
                   FormulaVariant v);

// Unscaled critic directions (1/M) sum_m sum_k e^{-beta t_k} grad * G.
struct CriticDirection {
    Vec theta;
    Vec psi;
};

CriticDirection episode_direction(const ModelConstants& c, const Vec& theta, const Vec& psi, const EpisodeLog& ep,
                                  FormulaVariant v);
CriticDirection critic_direction(const ModelConstants& c, const Vec& theta, const Vec& psi,
                                 const std::vector<EpisodeLog>& batch, FormulaVariant v, long episode = 0);

std::pair<Vec, Vec> critic_update(const ModelConstants& c, const Vec& theta, const Vec& psi,
                                  const std::vector<EpisodeLog>& batch, const Vec& alpha_theta, const Vec& alpha_psi,
                                  FormulaVariant v, long episode = 0);

}  // namespace mfcq
