#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mfcq/actor.hpp"
#include "mfcq/critic.hpp"
#include "mfcq/envs.hpp"
#include "mfcq/funcs.hpp"
#include "mfcq/lqinf.hpp"

namespace mfcq {

enum class AlgoKind { Alg1, Alg2 };

struct AlgoConfig {
    AlgoKind kind = AlgoKind::Alg1;
    long episodes = 1;
    int test_policies = 1;
    int inner_iterations = 1;
    SamplingMode sampling = SamplingMode::Literal;
    int threads = 1;
};

struct RateConfig {
    Schedule theta, psi, phi;
    Schedule p, q, rho;
};

// (w_o, w_c) = early weights for n <= switch_fraction * N, late weights afterwards.
struct ActorWeights {
    double switch_fraction = 0.5;
    double w_o_early = 1.0, w_c_early = 0.0;
    double w_o_late = 0.1, w_c_late = 1.0;

    std::pair<double, double> at(long n, long N) const;
};

struct OutputConfig {
    long eval_every = 100;
    int eval_rollouts = 3000;
    int eval_initial_states = 16;
    std::uint64_t eval_seed = 20240601;
    bool wall_time = false;  // off keeps params.csv byte-identical across runs
};

struct StudyConfig {
    std::vector<double> dt_list{0.2, 0.1, 0.05, 0.025};
    int macro_reps = 50;
    int test_policies = 200;
    double test_spread = 0.5;  // test policies perturb the optimal parameters by U[0, spread]
    bool control_variate = true;  // subtract the odd part of each value increment in its draw
};

struct LqInfConfig {
    lqinf::LqInfModel model;
    std::optional<lqinf::QnCoefficients> qn;  // absent: derived from the Riccati solution
    lqinf::DiscountedMoments moments;
    double a = 0.0, b = 0.0;
    std::optional<lqinf::InnerAlphas> alphas;  // absent: 1/Upsilon for K, Kbar and the band step for Sigma
    int iterations = 200;
    std::optional<lqinf::FeedbackParams> phi0;
    double riccati_tol = 1e-10;
    int riccati_max_iter = 200;
};

struct RunConfig {
    ModelConstants model;
    TimeGrid grid;
    AlgoConfig algo;
    RateConfig rates;
    Vec theta0, psi0, phi0;
    ActorWeights actor;
    OutputConfig output;
    StudyConfig study;
    std::optional<LqInfConfig> lqinf;
    FormulaVariant variant = FormulaVariant::Audited;

    void validate() const;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
Schedule parse_schedule(const nlohmann::json& j);
// Default exploration weight of the mixture: min(0.5, n^{-1/2}).
Schedule default_rho();

struct ParamRow {
    long n = 0;
    Vec theta, psi, phi;
    double wall_ms = 0.0;
};

struct ValueErrorRow {
    long n = 0;
    double l1_error = 0.0;
    double stderr_ = 0.0;
};

struct RunLog {
    std::vector<ParamRow> params;
    std::vector<ValueErrorRow> value_errors;
    bool diverged = false;
    long diverged_at = 0;
    std::string diagnostic;
};

RunLog run_alg1(const RunConfig& cfg, std::uint64_t seed);
RunLog run_alg2(const RunConfig& cfg, std::uint64_t seed);

struct ValueEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
};

// Monte Carlo value of a policy from one initial summary: discounted rewards plus
// gamma * entropy along the grid, plus the discounted terminal reward.
ValueEstimate eval_value(const ModelConstants& c, const Policy& policy, int rollouts, const TimeGrid& grid,
                         const Summary& initial, Stream& noise);

struct ValueErrorEvaluator {
    ValueErrorEvaluator(const ModelConstants& c, const TimeGrid& grid, const OutputConfig& out);

    // L1 error of the policy value against J*(0, mu_i), averaged over the fixed initial summaries.
    ValueErrorRow evaluate(const Policy& policy, long n, int threads = 1) const;

    const std::vector<Summary>& initial_states() const { return initial_; }
    const std::vector<double>& optimal_values() const { return optimal_; }

private:
    ModelConstants c_;
    TimeGrid grid_;
    OutputConfig out_;
    std::vector<Summary> initial_;
    std::vector<double> optimal_;
};

struct DefectRow {
    double dt = 0.0;
    double defect = 0.0;
    double stderr_ = 0.0;
};

// Martingale defect |E sum_k e^{-beta t_k} dJ/dtheta(t_k) G_k| at the true parameters for each grid size.
std::vector<DefectRow> grid_study(const RunConfig& cfg, std::uint64_t seed);

// Log-log least-squares slope of defect against dt.
double defect_slope(const std::vector<DefectRow>& rows);

struct InnerLqResult {
    lqinf::QnCoefficients qn;
    lqinf::ContractionCertificate certificate;
    lqinf::InnerTrace trace;
    lqinf::FeedbackParams maximizer;
};

InnerLqResult run_inner_lq(const LqInfConfig& cfg);

// Output helpers. Floats use the shortest round-trip decimal form.
std::string format_double(double x);
void write_params_csv(const std::filesystem::path& path, const RunLog& log, Example e);
void write_value_error_csv(const std::filesystem::path& path, const RunLog& log);
void write_grid_defect_csv(const std::filesystem::path& path, const std::vector<DefectRow>& rows);
void write_inner_trace_csv(const std::filesystem::path& path, const lqinf::InnerTrace& trace);
nlohmann::json true_params_json(const ModelConstants& c, FormulaVariant v);

// Runs f(i) for i in [0, n) on up to `threads` threads; the first exception by index is rethrown.
template <class Fn>
void parallel_for(int n, int threads, Fn&& f);

}  // namespace mfcq

#include "mfcq/detail/parallel.hpp"
