#include "breachcast/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "breachcast/error.hpp"
#include "parallel.hpp"

namespace breachcast::analysis {
namespace {

double fraction_nonpositive(std::span<const double> x) {
    if (x.empty()) throw DomainError("percentile of an empty sample");
    const auto hits = std::count_if(x.begin(), x.end(), [](double v) { return v <= 0.0; });
    return static_cast<double>(hits) / static_cast<double>(x.size());
}

std::vector<double> resample(std::span<const double> x, stochastic::RngStream& rng) {
    std::vector<double> out(x.size());
    for (auto& v : out) v = x[rng.index(x.size())];
    return out;
}

std::vector<double> combine(std::span<const double> model, double observed, std::span<const double> noise) {
    std::vector<double> r(model.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = model[i] - observed + noise[i];
    return r;
}

}  // namespace

ModeEstimate mode_estimate(const PosteriorSamples& s, std::size_t resamples, stochastic::RngStream& rng) {
    if (s.draws.empty()) throw DomainError("mode_estimate: no draws");
    if (s.log_posterior.size() != s.draws.size()) throw DomainError("mode_estimate: missing log-posterior column");
    const auto better = [&s](std::size_t a, std::size_t b) {
        if (s.log_posterior[a] != s.log_posterior[b]) return s.log_posterior[a] > s.log_posterior[b];
        return s.draws[a] < s.draws[b];
    };
    const auto best_of = [&](const std::vector<std::size_t>& rows) {
        return *std::min_element(rows.begin(), rows.end(), better);
    };
    std::vector<std::size_t> all(s.draws.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    ModeEstimate out;
    out.index = best_of(all);
    out.values = s.draws[out.index];
    const std::size_t d = out.values.size();
    out.standard_errors.assign(d, 0.0);
    if (resamples < 2) return out;
    std::vector<std::vector<double>> boot(d, std::vector<double>(resamples));
    std::vector<std::size_t> rows(s.draws.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        for (auto& r : rows) r = rng.index(rows.size());
        const auto pick = best_of(rows);
        for (std::size_t p = 0; p < d; ++p) boot[p][b] = s.draws[pick][p];
    }
    for (std::size_t p = 0; p < d; ++p) out.standard_errors[p] = std::sqrt(variance(boot[p]));
    return out;
}

std::vector<double> GofRecord::residual_peak() const { return combine(model_peak, observed_peak, noise_peak); }

std::vector<double> GofRecord::residual_width() const {
    if (!observed_width) return {};
    return combine(model_width, *observed_width, noise_width);
}

double GofRecord::percentile_peak() const { return fraction_nonpositive(residual_peak()); }

std::optional<double> GofRecord::percentile_width() const {
    if (!observed_width) return std::nullopt;
    return fraction_nonpositive(residual_width());
}

std::vector<GofRecord> gof_evaluate(const inference::QoI& q, std::span<const inference::ObservationRecord> records,
                                    inference::ResidualKind kind, const stochastic::RngStream& rng,
                                    std::size_t replications, unsigned threads,
                                    const forward::SimulationOptions& options) {
    inference::check_layout(q, kind);
    if (replications < 2) throw DomainError("gof_evaluate: need at least two replications");
    std::vector<GofRecord> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        struct Rep {
            bool ok = false;
            double peak = 0.0, width = 0.0, noise_peak = 0.0, noise_width = 0.0;
        };
        std::vector<Rep> reps(replications);
        const auto record_stream = rng.substream(i);
        detail::parallel_for(replications, threads, [&](std::size_t k) {
            auto stream = record_stream.substream(k);
            try {
                const auto o = inference::draw_model_output(q, rec, stream, options);
                reps[k] = {std::isfinite(o.log_peak) && std::isfinite(o.log_width), o.log_peak, o.log_width, 0.0, 0.0};
            } catch (const Error&) {
                reps[k].ok = false;
            }
            if (kind == inference::ResidualKind::gaussian) {
                reps[k].noise_peak = *q.sigma_discharge * stream.standard_normal();
                reps[k].noise_width = *q.sigma_width * stream.standard_normal();
            }
        });
        auto& g = out[i];
        g.name = rec.name;
        g.observed_peak = rec.log_peak;
        g.observed_width = rec.log_width;
        for (const auto& r : reps) {
            if (!r.ok) {
                ++g.failures;
                continue;
            }
            g.model_peak.push_back(r.peak);
            g.noise_peak.push_back(r.noise_peak);
            if (rec.log_width) {
                g.model_width.push_back(r.width);
                g.noise_width.push_back(r.noise_width);
            }
        }
        if (g.model_peak.empty()) throw NumericalError("gof_evaluate: every forward run failed for '" + rec.name + "'");
    }
    return out;
}

double mean(std::span<const double> x) {
    if (x.empty()) throw DomainError("mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double covariance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("covariance: need two equally sized samples of size >= 2");
    // Shifted by the first pair so constant samples give exactly zero.
    const double kx = x[0], ky = y[0];
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - kx, dy = y[i] - ky;
        sx += dx;
        sy += dy;
        sxy += dx * dy;
    }
    const auto n = static_cast<double>(x.size());
    return (sxy - sx * sy / n) / (n - 1.0);
}

double variance(std::span<const double> x) { return covariance(x, x); }

double correlation(std::span<const double> x, std::span<const double> y) {
    const double sxy = covariance(x, y), sx = variance(x), sy = variance(y);
    if (!(sx > 0.0 && sy > 0.0)) throw DomainError("correlation: constant sample");
    return sxy / std::sqrt(sx * sy);
}

double empirical_quantile(std::vector<double> x, double p) {
    if (x.empty()) throw DomainError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
    std::sort(x.begin(), x.end());
    const double pos = p * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return x[lo] + frac * (x[hi] - x[lo]);
}

double prediction_interval(std::span<const double> residuals) {
    if (residuals.size() < 30) throw DomainError("prediction_interval: need at least 30 samples");
    return 2.0 * std::sqrt(variance(residuals));
}

BootstrapBands bootstrap_ci(const Statistic& statistic, std::span<const double> samples, std::size_t resamples,
                            stochastic::RngStream& rng) {
    if (resamples < 200) throw DomainError("bootstrap_ci: need at least 200 resamples");
    if (samples.empty()) throw DomainError("bootstrap_ci: empty sample");
    std::vector<double> stats(resamples);
    for (auto& s : stats) s = statistic(resample(samples, rng));
    std::sort(stats.begin(), stats.end());
    BootstrapBands b;
    b.median = empirical_quantile(stats, 0.5);
    b.q25 = empirical_quantile(stats, 0.25);
    b.q75 = empirical_quantile(stats, 0.75);
    b.q05 = empirical_quantile(stats, 0.05);
    b.q95 = empirical_quantile(stats, 0.95);
    return b;
}

namespace {

struct Parts {
    std::vector<double> residual, model_error, noise;
};

void append_parts(Parts& p, std::span<const double> model, double observed, std::span<const double> noise) {
    for (std::size_t i = 0; i < model.size(); ++i) {
        p.model_error.push_back(observed - model[i]);
        p.noise.push_back(noise[i]);
        p.residual.push_back(model[i] - observed + noise[i]);
    }
}

Parts collect(std::span<const GofRecord> gof, Component c) {
    Parts p;
    for (const auto& g : gof) {
        if (c != Component::width) append_parts(p, g.model_peak, g.observed_peak, g.noise_peak);
        if (c != Component::peak && g.observed_width) append_parts(p, g.model_width, *g.observed_width, g.noise_width);
    }
    return p;
}

}  // namespace

std::vector<double> pooled_residuals(std::span<const GofRecord> gof, Component component) {
    return collect(gof, component).residual;
}

VarianceParts variance_decomposition(std::span<const GofRecord> gof, Component component) {
    const auto p = collect(gof, component);
    VarianceParts v;
    v.residual = variance(p.residual);
    v.model_error = variance(p.model_error);
    v.noise = variance(p.noise);
    v.cross = covariance(p.model_error, p.noise);
    return v;
}

std::vector<PercentilePoint> percentile_sequence(std::span<const GofRecord> gof, Component component,
                                                 std::size_t resamples, stochastic::RngStream& rng) {
    if (gof.empty()) throw DomainError("percentile_sequence: no records");
    std::vector<PercentilePoint> out;
    const Statistic stat = [](std::span<const double> x) { return fraction_nonpositive(x); };
    for (const auto& g : gof) {
        std::vector<double> r;
        if (component != Component::width) {
            const auto rq = g.residual_peak();
            r.insert(r.end(), rq.begin(), rq.end());
        }
        if (component != Component::peak && g.observed_width) {
            const auto rw = g.residual_width();
            r.insert(r.end(), rw.begin(), rw.end());
        }
        if (r.empty()) continue;
        out.push_back({g.name, fraction_nonpositive(r), bootstrap_ci(stat, r, resamples, rng)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PercentilePoint& a, const PercentilePoint& b) { return a.percentile < b.percentile; });
    return out;
}

GofSummary summarize(std::span<const GofRecord> gof, Component component, std::size_t resamples,
                     stochastic::RngStream& rng) {
    GofSummary s;
    const auto pooled = collect(gof, component);
    s.mean_residual = mean(pooled.residual);
    s.interval95 = prediction_interval(pooled.residual);
    s.variance = variance_decomposition(gof, component);
    // Errors by resampling whole records, which carry the between-record spread.
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < gof.size(); ++i) {
        if (component != Component::width || gof[i].observed_width) usable.push_back(i);
    }
    if (resamples >= 2 && usable.size() >= 2) {
        std::vector<double> means(resamples), widths(resamples);
        std::vector<GofRecord> pick(usable.size());
        for (std::size_t b = 0; b < resamples; ++b) {
            for (auto& p : pick) p = gof[usable[rng.index(usable.size())]];
            const auto r = collect(pick, component).residual;
            means[b] = mean(r);
            widths[b] = r.size() >= 30 ? prediction_interval(r) : 0.0;
        }
        s.mean_residual_error = std::sqrt(variance(means));
        s.interval95_error = std::sqrt(variance(widths));
    }
    return s;
}

double residual_correlation(std::span<const GofRecord> gof) {
    std::vector<double> rq, rw;
    for (const auto& g : gof) {
        if (!g.observed_width) continue;
        const auto a = g.residual_peak();
        const auto b = g.residual_width();
        rq.insert(rq.end(), a.begin(), a.end());
        rw.insert(rw.end(), b.begin(), b.end());
    }
    return correlation(rq, rw);
}

}  // namespace breachcast::analysis
