#pragma once

#include <vector>

#include "mfcq/core.hpp"

namespace mfcq {

struct StepOutcome {
    Summary next;
    double reward = 0.0;
    bool clamped = false;  // LQ variance hit the zero floor
};

StepOutcome lq_step(const ModelConstants& c, const GaussianSummary& state, double t, const LqPolicy& policy,
                    double dt, double dW);
StepOutcome nlq_step(const ModelConstants& c, const LogMeanSummary& state, double t, const NlqPolicy& policy,
                     double dt, double dW);
StepOutcome env_step(const ModelConstants& c, const Summary& state, double t, const Policy& policy, double dt,
                     double dW);

double terminal_reward(const ModelConstants& c, const Summary& state);

struct EpisodeRecord {
    double t = 0.0;
    Summary summary;
    double reward = 0.0;
};

struct EpisodeLog {
    TimeGrid grid;
    Policy behavior;
    std::vector<EpisodeRecord> records;  // steps + 1 entries
    int clamps = 0;
};

EpisodeLog rollout(const ModelConstants& c, const TimeGrid& grid, const Policy& behavior, const Summary& initial,
                   Stream& noise);
EpisodeLog rollout_with_draws(const ModelConstants& c, const TimeGrid& grid, const Policy& behavior,
                              const Summary& initial, const std::vector<double>& draws);

struct ParticlePath {
    std::vector<Summary> summaries;  // steps + 1 empirical summaries
    // Monte Carlo standard errors per grid point: LQ (mean, variance); NLQ (log-mean, unused).
    std::vector<double> se_first;
    std::vector<double> se_second;
    std::vector<double> positions;  // final particle positions
};

struct ParticleOptions {
    int particles = 100000;
    // Coefficient of variation of the initial NLQ cloud around its mean.
    double nlq_dispersion = 0.5;
};

// N-particle simulation of the exploratory dynamics under one common-noise path
// (draws[k] is the standard normal common increment of step k). LQ particles move
// exactly over each interval because the coefficients do not depend on the law.
// NLQ particles interact through the empirical mean, which solves a linear SDE in
// the interval; it is integrated in closed form and positions are carried relative
// to it.
ParticlePath particle_sim(const ModelConstants& c, const TimeGrid& grid, const Policy& behavior,
                          const Summary& initial, const std::vector<double>& draws, const ParticleOptions& opt,
                          Stream& particles);

}  // namespace mfcq
