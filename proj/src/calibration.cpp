#include "breachcast/calibration.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "breachcast/error.hpp"

namespace breachcast::calibration {

std::vector<double> default_jitter(inference::ResidualKind kind) {
    constexpr double fraction = 1e-4;
    std::vector<double> j{fraction * 20.0, fraction * 2.0, fraction * 6.0 * 0.9, fraction * 6.0 * 0.3};
    if (kind == inference::ResidualKind::gaussian) {
        j.push_back(fraction * 0.6);
        j.push_back(fraction * 0.6);
    }
    return j;
}

std::vector<double> draw_prior(inference::ResidualKind kind, stochastic::RngStream& rng) {
    const auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    std::vector<double> x{uniform(-15.0, 5.0), uniform(0.0, 2.0)};
    // Correlated normal pair for the transport exponents.
    constexpr double rho = -0.1;
    const double z1 = rng.standard_normal();
    const double z2 = rng.standard_normal();
    x.push_back(4.0 + 0.9 * z1);
    x.push_back(-0.5 + 0.3 * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2));
    if (kind == inference::ResidualKind::gaussian) {
        x.push_back(uniform(0.0, 0.6));
        x.push_back(uniform(0.0, 0.6));
    }
    return x;
}

void calibrate(std::span<const inference::ObservationRecord> records, const Config& config,
               mcmc::ChainArchive& archive, const mcmc::Checkpoint& checkpoint) {
    if (records.empty()) throw ConfigError("calibrate: no observation records");
    for (const auto& r : records) inference::validate(r);
    const auto names = inference::parameter_names(config.kind);
    const std::map<std::string, double> settings{
        {"initial_draws", static_cast<double>(config.likelihood.initial_draws)},
        {"max_draws", static_cast<double>(config.likelihood.max_draws)},
        {"target_precision", config.likelihood.target_precision},
        {"min_bandwidth", config.likelihood.min_bandwidth},
    };
    if (archive.generations() == 0) {
        archive = mcmc::ChainArchive(names, config.sampler.chains);
    } else if (archive.names() != names || archive.chains() != config.sampler.chains ||
               archive.seed != config.sampler.seed) {
        throw ConfigError("calibrate: archive to resume was produced by a different configuration");
    } else if (!archive.target_settings.empty() && archive.target_settings != settings) {
        throw ConfigError("calibrate: archive to resume used different likelihood settings");
    }
    // Archives written before the settings were recorded adopt the current ones.
    archive.target_settings = settings;
    auto sampler = config.sampler;
    if (sampler.jitter.empty()) sampler.jitter = default_jitter(config.kind);
    archive.residual_model = config.kind == inference::ResidualKind::gaussian ? "gaussian" : "zero-noise";

    const auto kind = config.kind;
    const auto& options = config.likelihood;
    const mcmc::LogTarget target = [&](std::span<const double> x, const stochastic::RngStream& rng) {
        const double lp = inference::log_posterior(inference::from_vector(x, kind), records, kind, rng, options)
                              .log_posterior;
        return std::isnan(lp) ? -std::numeric_limits<double>::infinity() : lp;
    };
    const mcmc::InitialDraw initial = [kind](stochastic::RngStream& rng) { return draw_prior(kind, rng); };
    mcmc::run(target, initial, sampler, archive, checkpoint);
}

}  // namespace breachcast::calibration
