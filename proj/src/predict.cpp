#include "breachcast/predict.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "breachcast/analysis.hpp"
#include "breachcast/error.hpp"
#include "parallel.hpp"

namespace breachcast::predict {
namespace {

std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

// Draws that fix one member: LHS column values resolved into physical inputs.
struct MemberInputs {
    forward::DamCase dam_case;
    forward::ErosionParams erosion;
};

// LHS columns: standard normal for the scaling, then every non-degenerate
// input, then a uniform selector over posterior draws when present.
class Design {
public:
    explicit Design(const PredictionCase& c) : case_(c) {
        columns_.push_back(stochastic::Normal{0.0, 1.0});
        for (const auto* spec : fields()) {
            slot_.push_back(stochastic::is_point_mass(*spec) ? -1 : static_cast<int>(columns_.size()));
            if (!stochastic::is_point_mass(*spec)) columns_.push_back(*spec);
        }
        if (!c.posterior_draws.empty()) {
            selector_ = static_cast<int>(columns_.size());
            columns_.push_back(stochastic::Uniform{0.0, 1.0});
        }
    }

    [[nodiscard]] const std::vector<stochastic::DistSpec>& columns() const { return columns_; }

    [[nodiscard]] MemberInputs resolve(const std::vector<double>& row) const {
        const auto f = fields();
        double v[5];
        for (std::size_t i = 0; i < f.size(); ++i) {
            v[i] = slot_[i] < 0 ? std::get<stochastic::Constant>(*f[i]).value : row[static_cast<std::size_t>(slot_[i])];
        }
        const inference::QoI* q = &case_.erosion;
        if (selector_ >= 0) {
            const auto m = case_.posterior_draws.size();
            const auto pick = std::min(m - 1, static_cast<std::size_t>(row[static_cast<std::size_t>(selector_)] *
                                                                         static_cast<double>(m)));
            q = &case_.posterior_draws[pick];
        }
        MemberInputs in;
        in.dam_case = {{v[0], v[1], v[2], v[3]},
                       {v[4], case_.level_drop, case_.released_volume},
                       {case_.final_height, case_.initial_depth_ratio}};
        in.erosion = {std::exp(q->gamma_location + q->gamma_scale * row[0]), q->velocity_exponent,
                      q->radius_exponent};
        return in;
    }

private:
    [[nodiscard]] std::array<const stochastic::DistSpec*, 5> fields() const {
        return {&case_.dam_height, &case_.crest_width, &case_.embankment_slope, &case_.side_angle,
                &case_.basin_exponent};
    }

    const PredictionCase& case_;
    std::vector<stochastic::DistSpec> columns_;
    std::vector<int> slot_;
    int selector_ = -1;
};

Histogram log_histogram(std::vector<double> values, std::size_t bins) {
    Histogram h;
    if (values.empty() || bins == 0) return h;
    for (auto& v : values) v = std::log10(v);
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (double v : values) {
        const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        ++h.counts[std::min(b, bins - 1)];
    }
    return h;
}

// Linear interpolation of the discharge series on the grid; zero past the end.
void resample_onto(const std::vector<forward::HydrographSample>& s, const std::vector<double>& grid,
                   std::vector<double>& out) {
    out.assign(grid.size(), 0.0);
    std::size_t j = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double t = grid[g];
        if (s.empty() || t > s.back().time) break;
        while (j + 1 < s.size() && s[j + 1].time < t) ++j;
        if (j + 1 >= s.size()) {
            out[g] = s.back().discharge;
            continue;
        }
        const double t0 = s[j].time, t1 = s[j + 1].time;
        const double w = t1 > t0 ? std::clamp((t - t0) / (t1 - t0), 0.0, 1.0) : 1.0;
        out[g] = s[j].discharge + w * (s[j + 1].discharge - s[j].discharge);
    }
}

}  // namespace

void validate(const PredictionCase& c) {
    const auto fail = [&c](const std::string& what) { throw ValidationError("case '" + c.name + "': " + what); };
    try {
        for (const auto* s : {&c.dam_height, &c.crest_width, &c.embankment_slope, &c.side_angle, &c.basin_exponent}) {
            stochastic::validate(*s);
        }
    } catch (const DomainError& e) {
        fail(e.what());
    }
    for (double v : {c.level_drop, c.released_volume, c.final_height, c.initial_depth_ratio}) {
        if (!(std::isfinite(v) && v > 0.0)) fail("reservoir and breach knowns must be positive and finite");
    }
    if (c.initial_depth_ratio > 1.0) fail("initial depth ratio exceeds 1");
    if (c.erosion.gamma_scale < 0.0) fail("scaling spread must be non-negative");
    if (c.erosion.radius_exponent > 0.0) fail("radius exponent must be non-positive");
    for (const auto& q : c.posterior_draws) {
        if (q.gamma_scale < 0.0 || q.radius_exponent > 0.0) fail("posterior draw outside the admissible range");
    }
}

EnsembleSummary predict_ensemble(const PredictionCase& c, std::size_t n, const stochastic::RngStream& rng,
                                 const EnsembleOptions& options) {
    if (n < 2) throw DomainError("predict_ensemble: need at least two members");
    if (options.grid_points < 2) throw ConfigError("predict_ensemble: need at least two grid points");
    if (options.levels.empty()) throw ConfigError("predict_ensemble: no probability levels");
    for (double p : options.levels) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("predict_ensemble: probability levels must lie in [0, 1]");
    }
    validate(c);

    const Design design(c);
    auto lhs_stream = rng.substream(0);
    const auto rows = stochastic::lhs_sample(design.columns(), n, lhs_stream);

    EnsembleSummary out;
    out.members.resize(n);
    auto scalar_options = options.simulation;
    scalar_options.record_series = false;
    detail::parallel_for(n, options.threads, [&](std::size_t i) {
        auto& m = out.members[i];
        m.index = i;
        try {
            const auto in = design.resolve(rows[i]);
            m.scaling = in.erosion.scaling;
            const auto h = forward::simulate(in.dam_case, in.erosion, scalar_options);
            m.ok = std::isfinite(h.peak_discharge) && h.peak_discharge > 0.0 && !h.horizon_reached;
            m.peak_discharge = h.peak_discharge;
            m.final_width = h.final_width;
            m.time_to_peak = h.time_to_peak;
            m.duration = h.duration;
            m.failure_mode = h.failure_mode;
            m.wider_than_dam = h.final_width > in.dam_case.geometry.height;
        } catch (const Error&) {
            m.ok = false;
        }
    });

    std::vector<double> durations, peaks, widths;
    for (const auto& m : out.members) {
        if (!m.ok) {
            ++out.failed;
            continue;
        }
        ++(m.failure_mode == forward::FailureMode::total ? out.total_failures : out.partial_failures);
        durations.push_back(m.duration);
        peaks.push_back(m.peak_discharge);
        widths.push_back(m.final_width);
    }
    if (durations.empty()) throw NumericalError("predict_ensemble: every member failed");

    out.levels = options.levels;
    std::sort(out.levels.begin(), out.levels.end());
    const double end = analysis::empirical_quantile(durations, options.duration_quantile);
    out.time_grid.resize(options.grid_points);
    for (std::size_t g = 0; g < options.grid_points; ++g) {
        out.time_grid[g] = end * static_cast<double>(g) / static_cast<double>(options.grid_points - 1);
    }

    // Second pass with series: only the resampled discharge is kept per member.
    std::vector<std::size_t> usable;
    for (const auto& m : out.members) {
        if (m.ok) usable.push_back(m.index);
    }
    std::vector<std::vector<double>> grid_values(usable.size());
    auto series_options = options.simulation;
    series_options.record_series = true;
    detail::parallel_for(usable.size(), options.threads, [&](std::size_t u) {
        const auto in = design.resolve(rows[usable[u]]);
        const auto h = forward::simulate(in.dam_case, in.erosion, series_options);
        resample_onto(h.samples, out.time_grid, grid_values[u]);
    });

    out.bands.assign(out.levels.size(), std::vector<double>(options.grid_points));
    std::vector<double> column(usable.size());
    for (std::size_t g = 0; g < options.grid_points; ++g) {
        for (std::size_t u = 0; u < usable.size(); ++u) column[u] = grid_values[u][g];
        std::sort(column.begin(), column.end());
        for (std::size_t l = 0; l < out.levels.size(); ++l) {
            out.bands[l][g] = analysis::empirical_quantile(column, out.levels[l]);
        }
    }
    out.peak_histogram = log_histogram(peaks, options.histogram_bins);
    out.width_histogram = log_histogram(widths, options.histogram_bins);
    return out;
}

TransportFormula transport_formula_report(const inference::QoI& mode) {
    if (!std::isfinite(mode.gamma_location) || !std::isfinite(mode.velocity_exponent) ||
        !std::isfinite(mode.radius_exponent)) {
        throw DomainError("transport_formula_report: non-finite mode");
    }
    TransportFormula f;
    f.coefficient = std::exp(mode.gamma_location);
    f.velocity_exponent = mode.velocity_exponent;
    f.radius_exponent = mode.radius_exponent;
    char coeff[32];
    std::snprintf(coeff, sizeof coeff, "%.3e", f.coefficient);
    f.text = std::string("q_s = ") + coeff + " * v^" + shortest(f.velocity_exponent) + " * r_hy^" +
             shortest(f.radius_exponent);
    return f;
}

}  // namespace breachcast::predict
