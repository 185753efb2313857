#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "breachcast/stochastic.hpp"

namespace breachcast::mcmc {

/// Log density of the target at `x`. The stream is unique to the (generation,
/// chain) pair, so stochastic targets stay reproducible.
using LogTarget = std::function<double(std::span<const double> x, const stochastic::RngStream& rng)>;
/// Draws one initial state.
using InitialDraw = std::function<std::vector<double>(stochastic::RngStream& rng)>;

/// Default jump scale 2.38 / sqrt(2 d).
double default_jump_scale(std::size_t dimension);

/// N chains by (I + 1) generations by d parameters; generation 0 holds the initial states.
class ChainArchive {
public:
    ChainArchive() = default;
    ChainArchive(std::vector<std::string> names, std::size_t chains);

    [[nodiscard]] std::size_t chains() const noexcept { return chains_; }
    [[nodiscard]] std::size_t dimension() const noexcept { return names_.size(); }
    /// Stored generations including the initial one.
    [[nodiscard]] std::size_t generations() const noexcept { return log_posterior_.size() / std::max<std::size_t>(chains_, 1); }
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }

    [[nodiscard]] std::span<const double> state(std::size_t generation, std::size_t chain) const;
    [[nodiscard]] double log_posterior(std::size_t generation, std::size_t chain) const;
    [[nodiscard]] bool accepted(std::size_t generation, std::size_t chain) const;
    [[nodiscard]] double value(std::size_t generation, std::size_t chain, std::size_t parameter) const {
        return states_[(generation * chains_ + chain) * names_.size() + parameter];
    }

    /// Appends one generation: `states` is chains x dimension, row-major.
    void append(std::span<const double> states, std::span<const double> log_posterior,
                std::span<const std::uint8_t> accepted);
    /// Drops generations at and after `generations`.
    void truncate(std::size_t generations);

    // Run metadata.
    std::uint64_t seed = 0;
    double jump_scale = 0.0;
    std::vector<double> jitter;
    std::size_t burn_in = 0;
    std::size_t thinning_lag = 1;
    std::string residual_model;
    bool budget_exhausted = false;
    double elapsed_seconds = 0.0;  ///< wall time spent sampling, summed over resumed runs
    /// Settings of the log target that must match when a run is resumed; empty when unrecorded.
    std::map<std::string, double> target_settings;

private:
    std::vector<std::string> names_;
    std::size_t chains_ = 0;
    std::vector<double> states_;
    std::vector<double> log_posterior_;
    std::vector<std::uint8_t> accepted_;
};

/// DE-MC proposal for chain j: x_j + scale (x_r2 - x_r1) + e, with r1, r2, j distinct
/// and e componentwise Normal(0, jitter). `states` is chains x d, row-major.
std::vector<double> propose(std::size_t chain, std::span<const double> states, std::size_t chains, double scale,
                            std::span<const double> jitter, stochastic::RngStream& rng);

/// Metropolis decision in log space; a proposal at -inf is never accepted.
bool metropolis_accept(double current_log_posterior, double proposed_log_posterior, stochastic::RngStream& rng);

struct SamplerConfig {
    std::size_t chains = 12;
    std::size_t iterations = 3000;
    std::optional<double> jump_scale;  ///< default 2.38 / sqrt(2 d)
    std::vector<double> jitter;        ///< per-parameter sd of the additive proposal noise
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::size_t checkpoint_every = 50;
    /// When positive, stop once every parameter has more effective samples
    /// after the detected burn-in; checked at each checkpoint.
    double min_effective_samples = 0.0;
    double burn_in_threshold = 1.1;
};

using Checkpoint = std::function<void(const ChainArchive&)>;

/// Generation-synchronous DE-MC: every chain proposes against the previous
/// generation. Resumes when `archive` already holds generations; outputs do not
/// depend on the thread count.
void run(const LogTarget& target, const InitialDraw& initial, const SamplerConfig& config, ChainArchive& archive,
         const Checkpoint& checkpoint = {});

struct PsrfResult {
    std::vector<double> univariate;
    double multivariate = 0.0;
};

/// Corrected PSRF over generations [begin, end) of every chain.
PsrfResult psrf(const ChainArchive& archive, std::size_t begin, std::size_t end);

struct PsrfTrace {
    std::vector<std::size_t> generation;  ///< end of each window; the window is its second half
    std::vector<std::vector<double>> univariate;  ///< [point][parameter]
    std::vector<double> multivariate;
};

PsrfTrace psrf_trace(const ChainArchive& archive, std::size_t stride);

struct BurnIn {
    std::size_t generations = 0;
    bool converged = false;
};

/// Smallest trace generation after which every univariate and the multivariate
/// PSRF stay below `threshold`.
BurnIn detect_burn_in(const ChainArchive& archive, double threshold = 1.1, std::size_t stride = 0);

struct EffectiveSamples {
    std::vector<double> count;        ///< per parameter
    std::vector<double> denominator;  ///< 1 + 2 sum of autocorrelations, per parameter
    std::size_t thinning_lag = 1;     ///< ceiling of the largest denominator
};

EffectiveSamples effective_samples(const ChainArchive& archive, std::size_t burn_in);

double chain_acceptance_rate(const ChainArchive& archive, std::size_t chain, std::size_t begin = 1);
double acceptance_rate(const ChainArchive& archive, std::size_t begin = 1);

struct ThinnedSamples {
    std::vector<std::string> names;
    std::vector<std::vector<double>> draws;  ///< [draw][parameter]
    std::vector<double> log_posterior;
};

/// Pools all chains after `burn_in`, keeping every `lag`-th generation per chain, chain by chain.
ThinnedSamples thin(const ChainArchive& archive, std::size_t burn_in, std::size_t lag);

/// Everything the diagnose step reports about an archive.
struct DiagnosticsReport {
    PsrfTrace trace;
    BurnIn burn_in;
    std::size_t analysis_start = 0;  ///< burn-in used for N_eff and thinning; half the run when not converged
    PsrfResult final_psrf;           ///< over the second half of the run
    EffectiveSamples effective;
    double acceptance = 0.0;         ///< after the initial generation
    std::vector<double> chain_acceptance;
};

DiagnosticsReport diagnose(const ChainArchive& archive, double threshold = 1.1);

}  // namespace breachcast::mcmc
