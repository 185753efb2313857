#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "breachcast/inference.hpp"
#include "breachcast/stochastic.hpp"

namespace breachcast::analysis {

/// Thinned posterior draws with their log posterior values.
struct PosteriorSamples {
    std::vector<std::string> names;
    std::vector<std::vector<double>> draws;  ///< [draw][parameter]
    std::vector<double> log_posterior;       ///< empty when not recorded
    inference::ResidualKind kind = inference::ResidualKind::gaussian;
};

struct ModeEstimate {
    std::vector<double> values;
    std::vector<double> standard_errors;  ///< bootstrap over draws
    std::size_t index = 0;                ///< row of the selected draw
};

/// Draw with the highest log posterior; ties resolve to the lexicographically
/// smallest parameter vector so the result does not depend on row order.
ModeEstimate mode_estimate(const PosteriorSamples& samples, std::size_t resamples, stochastic::RngStream& rng);

/// GoF samples of one record, all in log10 units.
struct GofRecord {
    std::string name;
    std::vector<double> model_peak;   ///< simulated log10 Q_p
    std::vector<double> model_width;  ///< simulated log10 W_f, empty for discharge-only records
    std::vector<double> noise_peak;   ///< residual draws added to the discharge component
    std::vector<double> noise_width;
    double observed_peak = 0.0;
    std::optional<double> observed_width;
    std::size_t failures = 0;

    /// r = model - observed + noise.
    [[nodiscard]] std::vector<double> residual_peak() const;
    [[nodiscard]] std::vector<double> residual_width() const;
    [[nodiscard]] double percentile_peak() const;  ///< Pr[r_Q <= 0]
    [[nodiscard]] std::optional<double> percentile_width() const;
};

/// Reruns the forward model at fixed parameters with fresh aleatory draws per
/// record; the gaussian model adds fresh residual noise.
std::vector<GofRecord> gof_evaluate(const inference::QoI& q, std::span<const inference::ObservationRecord> records,
                                    inference::ResidualKind kind, const stochastic::RngStream& rng,
                                    std::size_t replications = 2000, unsigned threads = 1,
                                    const forward::SimulationOptions& options = inference::LikelihoodOptions{}.simulation);

double mean(std::span<const double> x);
double variance(std::span<const double> x);
double covariance(std::span<const double> x, std::span<const double> y);
double correlation(std::span<const double> x, std::span<const double> y);
/// Linear-interpolated empirical quantile of unsorted data.
double empirical_quantile(std::vector<double> x, double p);

/// Width of the 95% prediction band, 2 times the sample standard deviation.
double prediction_interval(std::span<const double> residuals);

struct BootstrapBands {
    double median = 0.0;
    double q25 = 0.0, q75 = 0.0;
    double q05 = 0.0, q95 = 0.0;
};

using Statistic = std::function<double(std::span<const double>)>;

BootstrapBands bootstrap_ci(const Statistic& statistic, std::span<const double> samples, std::size_t resamples,
                            stochastic::RngStream& rng);

enum class Component { overall, peak, width };

struct VarianceParts {
    double residual = 0.0;     ///< Var[r]
    double model_error = 0.0;  ///< Var[y - y_model]
    double noise = 0.0;        ///< Var[eps]
    double cross = 0.0;        ///< Cov[y - y_model, eps]
};

VarianceParts variance_decomposition(std::span<const GofRecord> gof, Component component);

/// Residual samples pooled over records for a component.
std::vector<double> pooled_residuals(std::span<const GofRecord> gof, Component component);

struct PercentilePoint {
    std::string name;
    double percentile = 0.0;
    BootstrapBands bands;
};

/// Per-record Pr[r <= 0] sorted ascending, each with bootstrap bands.
std::vector<PercentilePoint> percentile_sequence(std::span<const GofRecord> gof, Component component,
                                                 std::size_t resamples, stochastic::RngStream& rng);

struct GofSummary {
    double mean_residual = 0.0;
    double mean_residual_error = 0.0;  ///< bootstrap over records
    double interval95 = 0.0;
    double interval95_error = 0.0;
    VarianceParts variance;
};

GofSummary summarize(std::span<const GofRecord> gof, Component component, std::size_t resamples,
                     stochastic::RngStream& rng);

/// Correlation of paired discharge and width residuals pooled over records with widths.
double residual_correlation(std::span<const GofRecord> gof);

}  // namespace breachcast::analysis
