#pragma once

#include <span>
#include <vector>

#include "breachcast/inference.hpp"
#include "breachcast/mcmc.hpp"
#include "breachcast/stochastic.hpp"

namespace breachcast::calibration {

/// Per-parameter proposal jitter, 1e-4 times the prior range; normal
/// components use six standard deviations as their range.
std::vector<double> default_jitter(inference::ResidualKind kind);

/// One draw from the joint prior in the flat parameter layout.
std::vector<double> draw_prior(inference::ResidualKind kind, stochastic::RngStream& rng);

struct Config {
    inference::ResidualKind kind = inference::ResidualKind::gaussian;
    mcmc::SamplerConfig sampler{};  ///< jitter filled from default_jitter when empty
    inference::LikelihoodOptions likelihood{};
};

/// DE-MC over the marginalised posterior of `records`. Resumes when `archive`
/// already holds generations from the same configuration.
void calibrate(std::span<const inference::ObservationRecord> records, const Config& config,
               mcmc::ChainArchive& archive, const mcmc::Checkpoint& checkpoint = {});

}  // namespace breachcast::calibration
