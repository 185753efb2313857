#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "breachcast/forward_model.hpp"
#include "breachcast/inference.hpp"
#include "breachcast/stochastic.hpp"

namespace breachcast::predict {

/// A new dam-reservoir case. Geometry entries may be point masses or
/// distributions; every non-degenerate entry becomes an LHS column.
struct PredictionCase {
    std::string name;
    stochastic::DistSpec dam_height;
    stochastic::DistSpec crest_width;
    stochastic::DistSpec embankment_slope;
    stochastic::DistSpec side_angle;      ///< [deg]
    stochastic::DistSpec basin_exponent;
    double level_drop = 0.0;              ///< [m]
    double released_volume = 0.0;         ///< [m^3]
    double final_height = 0.0;            ///< [m]
    double initial_depth_ratio = 0.0;     ///< [-]
    /// Point estimate of the transport law; gamma ~ LogNormal(location, scale).
    inference::QoI erosion;
    /// When non-empty, each member takes the transport law of one of these draws instead.
    std::vector<inference::QoI> posterior_draws;
};

/// Throws ValidationError when the case cannot satisfy the forward-model preconditions.
void validate(const PredictionCase& c);

struct Member {
    std::size_t index = 0;
    bool ok = false;                 ///< false when the simulation failed
    double peak_discharge = 0.0;     ///< [m^3/s]
    double final_width = 0.0;        ///< [m]
    double time_to_peak = 0.0;       ///< [s]
    double duration = 0.0;           ///< [s]
    forward::FailureMode failure_mode = forward::FailureMode::partial;
    bool wider_than_dam = false;     ///< final width exceeds the dam height
    double scaling = 0.0;            ///< transport scaling of the member
};

struct Histogram {
    std::vector<double> edges;  ///< bins+1 edges in log10 units
    std::vector<std::size_t> counts;
};

struct EnsembleSummary {
    std::vector<Member> members;
    std::vector<double> levels;              ///< probability levels of the bands, ascending
    std::vector<double> time_grid;           ///< [s]
    std::vector<std::vector<double>> bands;  ///< [level][time] discharge quantiles [m^3/s]
    Histogram peak_histogram;                ///< of log10 Q_p
    Histogram width_histogram;               ///< of log10 W_f
    std::size_t failed = 0;
    std::size_t total_failures = 0;
    std::size_t partial_failures = 0;
};

struct EnsembleOptions {
    std::vector<double> levels{0.05, 0.25, 0.5, 0.75, 0.95};
    std::size_t grid_points = 512;
    double duration_quantile = 0.99;  ///< grid ends at this quantile of member durations
    std::size_t histogram_bins = 40;
    unsigned threads = 1;
    forward::SimulationOptions simulation{};
};

/// Monte Carlo ensemble over an LHS design of the case's random inputs. Member
/// failures are flagged and left out of the pooled bands and histograms.
EnsembleSummary predict_ensemble(const PredictionCase& c, std::size_t n, const stochastic::RngStream& rng,
                                 const EnsembleOptions& options = {});

/// Deterministic transport law at the median scaling, exp(location) v^nu r^eta.
struct TransportFormula {
    double coefficient = 0.0;
    double velocity_exponent = 0.0;
    double radius_exponent = 0.0;
    std::string text;
};

TransportFormula transport_formula_report(const inference::QoI& mode);

}  // namespace breachcast::predict
