#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "breachcast/forward_model.hpp"
#include "breachcast/stochastic.hpp"

namespace breachcast::inference {

enum class ResidualKind { gaussian, zero_noise };

/// Globally inferred quantities. The transport scaling coefficient of each
/// experiment is LogNormal(gamma_location, gamma_scale).
struct QoI {
    double gamma_location = 0.0;
    double gamma_scale = 0.0;
    double velocity_exponent = 0.0;
    double radius_exponent = 0.0;
    std::optional<double> sigma_discharge;  ///< residual sd of log10 Q_p, gaussian model only
    std::optional<double> sigma_width;      ///< residual sd of log10 W_f, gaussian model only
};

/// Parameter count of the flat layout for a residual model (6 or 4).
std::size_t dimension(ResidualKind kind);
std::vector<std::string> parameter_names(ResidualKind kind);
std::vector<double> to_vector(const QoI& q, ResidualKind kind);
QoI from_vector(std::span<const double> values, ResidualKind kind);
/// Throws ConfigError when the sigma fields do not match the residual model.
void check_layout(const QoI& q, ResidualKind kind);

/// Experiment-specific knowns of one historical failure.
struct Knowns {
    double dam_height;           ///< [m]
    double released_volume;      ///< [m^3]
    double level_drop;           ///< [m]
    double final_height;         ///< [m]
    double initial_depth_ratio;  ///< [-]
};

/// Distributions of the uncertain dam and reservoir properties of one experiment.
struct UncertainInputs {
    stochastic::DistSpec embankment_slope;
    stochastic::DistSpec crest_width;
    stochastic::DistSpec basin_exponent;
    stochastic::DistSpec side_angle;
};

struct ObservationRecord {
    std::string name;
    Knowns knowns;
    UncertainInputs inputs;
    double log_peak;                  ///< log10 of Q_p [m^3/s]
    std::optional<double> log_width;  ///< log10 of W_f [m]; absent for discharge-only records
};

/// Throws ValidationError when a record violates its physical invariants.
void validate(const ObservationRecord& record);

/// Builds the forward-model case for one draw of the uncertain inputs.
forward::DamCase make_case(const ObservationRecord& record, double embankment_slope, double crest_width,
                           double basin_exponent, double side_angle);

double log_prior(const QoI& q, ResidualKind kind);

/// Independent Gaussian log density of log10 residuals; the width term is
/// skipped when `width_residual` is absent.
double residual_log_density(double peak_residual, std::optional<double> width_residual, double sigma_discharge,
                            double sigma_width);

struct LikelihoodOptions {
    std::size_t initial_draws = 512;
    std::size_t max_draws = std::size_t{1} << 17;
    double target_precision = 0.01;  ///< relative standard error of the estimate
    double failure_tolerance = 0.01;  ///< fraction of failed forward runs before flagging
    double min_bandwidth = 1e-3;      ///< kernel bandwidth floor [log10 units]
    unsigned threads = 1;
    forward::SimulationOptions simulation = [] {
        forward::SimulationOptions o;
        o.record_series = false;
        return o;
    }();
};

struct LikelihoodEstimate {
    double log_value = 0.0;       ///< log of the estimated density
    std::size_t draws = 0;        ///< K used
    double relative_error = 0.0;  ///< estimated relative standard error
    bool precise = false;         ///< relative_error <= target
    std::size_t failures = 0;     ///< forward runs that failed and contributed zero density
    bool failures_flagged = false;
};

/// Marginalised likelihood of one record: the transport scaling and uncertain
/// inputs are integrated out by Monte Carlo, doubling K until the relative
/// standard error meets the target or the cap is reached.
LikelihoodEstimate estimate_likelihood(const QoI& q, const ObservationRecord& record, ResidualKind kind,
                                       const stochastic::RngStream& rng, const LikelihoodOptions& options = {});

struct PosteriorValue {
    double log_posterior = 0.0;
    double log_prior = 0.0;
    std::vector<LikelihoodEstimate> records;  ///< empty when the prior is zero
};

/// Unnormalised log posterior. Record i draws from rng.substream(i); a zero
/// prior returns without any forward-model call.
PosteriorValue log_posterior(const QoI& q, std::span<const ObservationRecord> records, ResidualKind kind,
                             const stochastic::RngStream& rng, const LikelihoodOptions& options = {});

/// Simulated (log10 Q_p, log10 W_f) for one draw of transport scaling and uncertain inputs.
struct ModelOutput {
    double log_peak;
    double log_width;
    forward::FailureMode failure_mode;
};

/// One forward evaluation at a draw taken from `rng`. Throws on forward-model failure.
ModelOutput draw_model_output(const QoI& q, const ObservationRecord& record, stochastic::RngStream& rng,
                              const forward::SimulationOptions& options);

}  // namespace breachcast::inference
