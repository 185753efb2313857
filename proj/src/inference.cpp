#include "breachcast/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "breachcast/error.hpp"
#include "parallel.hpp"

namespace breachcast::inference {
namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();
const double log_inv_sqrt_2pi = -0.5 * std::log(2.0 * std::numbers::pi);

double normal_log_pdf(double x, double sd) {
    const double z = x / sd;
    return -0.5 * z * z - std::log(sd) + log_inv_sqrt_2pi;
}

const stochastic::BivariateNormal exponent_prior{{4.0, -0.5}, {0.9, 0.3}, -0.1};
constexpr stochastic::Interval location_prior{-15.0, 5.0};
constexpr stochastic::Interval scale_prior{0.0, 2.0};
constexpr stochastic::Interval sigma_prior{0.0, 0.6};

double uniform_log_density(double x, stochastic::Interval range) {
    return x >= range.lo && x <= range.hi ? -std::log(range.hi - range.lo) : neg_inf;
}

struct Slot {
    ModelOutput output{};
    bool ok = false;
};

}  // namespace

std::size_t dimension(ResidualKind kind) { return kind == ResidualKind::gaussian ? 6 : 4; }

std::vector<std::string> parameter_names(ResidualKind kind) {
    std::vector<std::string> names{"gamma_location", "gamma_scale", "velocity_exponent", "radius_exponent"};
    if (kind == ResidualKind::gaussian) {
        names.emplace_back("sigma_discharge");
        names.emplace_back("sigma_width");
    }
    return names;
}

void check_layout(const QoI& q, ResidualKind kind) {
    const bool has_sigma = q.sigma_discharge.has_value() || q.sigma_width.has_value();
    if (kind == ResidualKind::gaussian && !(q.sigma_discharge && q.sigma_width)) {
        throw ConfigError("gaussian residual model needs both sigma_discharge and sigma_width");
    }
    if (kind == ResidualKind::zero_noise && has_sigma) {
        throw ConfigError("zero-noise residual model does not accept sigma parameters");
    }
}

std::vector<double> to_vector(const QoI& q, ResidualKind kind) {
    check_layout(q, kind);
    std::vector<double> v{q.gamma_location, q.gamma_scale, q.velocity_exponent, q.radius_exponent};
    if (kind == ResidualKind::gaussian) {
        v.push_back(*q.sigma_discharge);
        v.push_back(*q.sigma_width);
    }
    return v;
}

QoI from_vector(std::span<const double> v, ResidualKind kind) {
    if (v.size() != dimension(kind)) throw ConfigError("parameter vector length does not match the residual model");
    QoI q{v[0], v[1], v[2], v[3], std::nullopt, std::nullopt};
    if (kind == ResidualKind::gaussian) {
        q.sigma_discharge = v[4];
        q.sigma_width = v[5];
    }
    return q;
}

void validate(const ObservationRecord& r) {
    const auto& k = r.knowns;
    const auto fail = [&r](const std::string& what) { throw ValidationError("record '" + r.name + "': " + what); };
    for (double v : {k.dam_height, k.released_volume, k.level_drop, k.final_height, k.initial_depth_ratio}) {
        if (!(std::isfinite(v) && v > 0.0)) fail("experimental conditions must be positive and finite");
    }
    if (k.final_height > k.dam_height) fail("final breach height exceeds dam height");
    if (k.initial_depth_ratio > 1.0) fail("initial depth ratio exceeds 1");
    if (!std::isfinite(r.log_peak)) fail("peak discharge must be positive");
    if (r.log_width && !std::isfinite(*r.log_width)) fail("final breach width must be positive");
    try {
        for (const auto* spec : {&r.inputs.embankment_slope, &r.inputs.crest_width, &r.inputs.basin_exponent,
                                 &r.inputs.side_angle}) {
            stochastic::validate(*spec);
        }
    } catch (const DomainError& e) {
        fail(e.what());
    }
}

forward::DamCase make_case(const ObservationRecord& r, double embankment_slope, double crest_width,
                           double basin_exponent, double side_angle) {
    const auto& k = r.knowns;
    return {{k.dam_height, crest_width, embankment_slope, side_angle},
            {basin_exponent, k.level_drop, k.released_volume},
            {k.final_height, k.initial_depth_ratio}};
}

double log_prior(const QoI& q, ResidualKind kind) {
    check_layout(q, kind);
    double lp = uniform_log_density(q.gamma_location, location_prior) + uniform_log_density(q.gamma_scale, scale_prior);
    if (kind == ResidualKind::gaussian) {
        lp += uniform_log_density(*q.sigma_discharge, sigma_prior) + uniform_log_density(*q.sigma_width, sigma_prior);
    }
    if (lp == neg_inf) return neg_inf;
    return lp + stochastic::log_density(exponent_prior, q.velocity_exponent, q.radius_exponent);
}

double residual_log_density(double peak_residual, std::optional<double> width_residual, double sigma_discharge,
                            double sigma_width) {
    if (!(sigma_discharge > 0.0) || (width_residual && !(sigma_width > 0.0))) {
        throw DomainError("residual_log_density: residual widths must be positive");
    }
    double l = normal_log_pdf(peak_residual, sigma_discharge);
    if (width_residual) l += normal_log_pdf(*width_residual, sigma_width);
    return l;
}

ModelOutput draw_model_output(const QoI& q, const ObservationRecord& r, stochastic::RngStream& rng,
                              const forward::SimulationOptions& options) {
    const double scaling = std::exp(q.gamma_location + q.gamma_scale * rng.standard_normal());
    const double slope = stochastic::sample(r.inputs.embankment_slope, rng);
    const double crest = stochastic::sample(r.inputs.crest_width, rng);
    const double basin = stochastic::sample(r.inputs.basin_exponent, rng);
    const double angle = stochastic::sample(r.inputs.side_angle, rng);
    const auto h = forward::simulate(make_case(r, slope, crest, basin, angle),
                                     {scaling, q.velocity_exponent, q.radius_exponent}, options);
    return {std::log10(h.peak_discharge), std::log10(h.final_width), h.failure_mode};
}

LikelihoodEstimate estimate_likelihood(const QoI& q, const ObservationRecord& record, ResidualKind kind,
                                       const stochastic::RngStream& rng, const LikelihoodOptions& options) {
    check_layout(q, kind);
    if (options.initial_draws < 2 || options.max_draws < options.initial_draws) {
        throw ConfigError("likelihood options: need 2 <= initial_draws <= max_draws");
    }
    const bool with_width = record.log_width.has_value();
    std::vector<Slot> slots;
    std::vector<double> terms;
    LikelihoodEstimate est;
    std::size_t draws = options.initial_draws;
    for (;;) {
        const std::size_t previous = slots.size();
        slots.resize(draws);
        detail::parallel_for(draws - previous, options.threads, [&](std::size_t j) {
            const std::size_t i = previous + j;
            auto stream = rng.substream(i);
            try {
                slots[i].output = draw_model_output(q, record, stream, options.simulation);
                slots[i].ok = std::isfinite(slots[i].output.log_peak) && std::isfinite(slots[i].output.log_width);
            } catch (const Error&) {
                slots[i].ok = false;
            }
        });

        // Log density contribution of every draw; failed draws contribute zero density.
        terms.assign(draws, neg_inf);
        std::size_t failures = 0;
        if (kind == ResidualKind::gaussian) {
            for (std::size_t i = 0; i < draws; ++i) {
                if (!slots[i].ok) {
                    ++failures;
                    continue;
                }
                const auto& o = slots[i].output;
                const std::optional<double> width_residual =
                    with_width ? std::optional<double>(*record.log_width - o.log_width) : std::nullopt;
                terms[i] = residual_log_density(record.log_peak - o.log_peak, width_residual, *q.sigma_discharge,
                                                *q.sigma_width);
            }
        } else {
            // Product Gaussian kernels with the normal-reference bandwidth per dimension.
            const int dims = with_width ? 2 : 1;
            double sum[2] = {0.0, 0.0}, sum_sq[2] = {0.0, 0.0};
            std::size_t n = 0;
            for (const auto& s : slots) {
                if (!s.ok) continue;
                ++n;
                const double v[2] = {s.output.log_peak, s.output.log_width};
                for (int d = 0; d < dims; ++d) {
                    sum[d] += v[d];
                    sum_sq[d] += v[d] * v[d];
                }
            }
            failures = draws - n;
            double bandwidth[2] = {options.min_bandwidth, options.min_bandwidth};
            if (n >= 2) {
                const double factor = std::pow(4.0 / ((dims + 2.0) * static_cast<double>(n)), 1.0 / (dims + 4.0));
                for (int d = 0; d < dims; ++d) {
                    const double mean = sum[d] / static_cast<double>(n);
                    const double var = std::max(0.0, (sum_sq[d] - static_cast<double>(n) * mean * mean) /
                                                          static_cast<double>(n - 1));
                    bandwidth[d] = std::max(options.min_bandwidth, std::sqrt(var) * factor);
                }
            }
            for (std::size_t i = 0; i < draws; ++i) {
                if (!slots[i].ok) continue;
                const auto& o = slots[i].output;
                double l = normal_log_pdf(record.log_peak - o.log_peak, bandwidth[0]);
                if (with_width) l += normal_log_pdf(*record.log_width - o.log_width, bandwidth[1]);
                terms[i] = l;
            }
        }

        // Mean of exp(terms) and its relative standard error, shifted by the maximum.
        const double top = *std::max_element(terms.begin(), terms.end());
        est.draws = draws;
        est.failures = failures;
        est.failures_flagged = static_cast<double>(failures) > options.failure_tolerance * static_cast<double>(draws);
        if (top == neg_inf) {
            est.log_value = neg_inf;
            est.relative_error = std::numeric_limits<double>::infinity();
        } else {
            double s = 0.0, s2 = 0.0;
            for (double t : terms) {
                const double w = std::exp(t - top);
                s += w;
                s2 += w * w;
            }
            const double k = static_cast<double>(draws);
            const double mean = s / k;
            const double var = std::max(0.0, (s2 - k * mean * mean) / (k - 1.0));
            est.log_value = top + std::log(mean);
            est.relative_error = std::sqrt(var / k) / mean;
        }
        est.precise = est.relative_error <= options.target_precision;
        if (est.precise || draws >= options.max_draws) break;
        draws = std::min(2 * draws, options.max_draws);
    }
    return est;
}

PosteriorValue log_posterior(const QoI& q, std::span<const ObservationRecord> records, ResidualKind kind,
                             const stochastic::RngStream& rng, const LikelihoodOptions& options) {
    PosteriorValue out;
    out.log_prior = log_prior(q, kind);
    out.log_posterior = out.log_prior;
    if (out.log_prior == neg_inf) return out;
    out.records.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        out.records.push_back(estimate_likelihood(q, records[i], kind, rng.substream(i), options));
        out.log_posterior += out.records.back().log_value;
    }
    return out;
}

}  // namespace breachcast::inference
