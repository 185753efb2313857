#include "breachcast/forward_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "breachcast/error.hpp"
#include "wall_length.hpp"

namespace breachcast::forward {
namespace {

bool finite(std::initializer_list<double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void require(bool condition, const char* what) {
    if (!condition) throw DomainError(what);
}

double tan_deg(double angle_deg) {
    // tan(90 deg) evaluates to a huge finite number, which gives the rectangular limit.
    return std::tan(angle_deg * std::numbers::pi / 180.0);
}

// Relative elevation of the lower end of the erodible wall, as a fraction of
// the water level, during lateral widening. Tends to exp(-2) as k -> 1.
double erodible_floor_fraction(double k) {
    if (k >= 2.0) return 0.0;
    const double km1 = k - 1.0;
    return std::exp(std::log1p(-2.0 * km1 / k) / km1);
}

}  // namespace

double shape_exponent(double breach_height, double top_width, double side_angle_deg) {
    require(finite({breach_height, top_width, side_angle_deg}), "shape_exponent: non-finite input");
    require(breach_height > 0.0 && top_width > 0.0, "shape_exponent: breach height and width must be positive");
    require(side_angle_deg > 0.0 && side_angle_deg <= 90.0, "shape_exponent: side angle must lie in (0, 90]");
    const double k = 2.0 * breach_height / (top_width * tan_deg(side_angle_deg)) + 1.0;
    return std::max(k, min_shape_exponent);
}

Section section_geometry(double depth, double k, double top_width, double breach_height) {
    require(finite({depth, k, top_width, breach_height}), "section_geometry: non-finite input");
    require(depth >= 0.0, "section_geometry: negative depth");
    require(k > 1.0 && top_width > 0.0 && breach_height > 0.0, "section_geometry: invalid section");
    require(depth <= breach_height * (1.0 + 1e-9), "section_geometry: depth exceeds breach height");
    if (depth == 0.0) return {0.0, 0.0};
    if (k < rectangular_threshold) return {top_width, top_width * depth};
    const double level = depth / breach_height;
    const double width = top_width * std::pow(level, k - 1.0);
    return {width, width * depth / k};
}

double side_wall_length(double from, double to, double k, double top_width, double breach_height) {
    require(finite({from, to, k, top_width, breach_height}), "side_wall_length: non-finite input");
    require(k > 1.0 && top_width > 0.0 && breach_height > 0.0, "side_wall_length: invalid section");
    const double half = 0.5 * top_width;
    require(from >= 0.0 && from <= to && to <= half * (1.0 + 1e-12), "side_wall_length: need 0 <= from <= to <= W/2");
    if (from == to) return 0.0;
    // The wall is integrated along elevation, where the integrand stays bounded for every k.
    const double lo = detail::level_at_offset(from, k, top_width);
    const double hi = std::min(1.0, detail::level_at_offset(std::min(to, half), k, top_width));
    return detail::wall_length_exact(lo, hi, k, top_width, breach_height);
}

double side_wall_slope(double offset, double k, double top_width, double breach_height) {
    require(finite({offset, k, top_width, breach_height}), "side_wall_slope: non-finite input");
    require(offset > 0.0 && k > 1.0 && top_width > 0.0, "side_wall_slope: invalid arguments");
    const double rel = 2.0 * offset / top_width;
    return 2.0 * breach_height / (top_width * (k - 1.0)) * std::pow(rel, 1.0 / (k - 1.0) - 1.0);
}

CriticalFlow critical_flow(double energy_head, double k) {
    require(finite({energy_head, k}), "critical_flow: non-finite input");
    require(k > 1.0, "critical_flow: shape exponent must exceed 1");
    if (energy_head <= 0.0) return {0.0, 0.0};
    const double depth = 2.0 * k / (2.0 * k + 1.0) * energy_head;
    return {depth, std::sqrt(gravity * depth / k)};
}

double breach_discharge(double energy_head, double k, double top_width, double breach_height) {
    require(finite({energy_head, k, top_width, breach_height}), "breach_discharge: non-finite input");
    require(k > 1.0 && top_width > 0.0 && breach_height > 0.0, "breach_discharge: invalid section");
    if (energy_head <= 0.0) return 0.0;
    const auto flow = critical_flow(energy_head, k);
    const double area = k < rectangular_threshold
                            ? top_width * flow.depth
                            : top_width * breach_height * std::pow(flow.depth / breach_height, k) / k;
    return area * flow.velocity;
}

double reference_discharge(double energy_head) {
    require(std::isfinite(energy_head), "reference_discharge: non-finite input");
    if (energy_head <= 0.0) return 0.0;
    return std::sqrt(512.0 / 3125.0 * gravity * std::pow(energy_head, 5));
}

double wetted_perimeter(double depth, double k, double top_width, double breach_height) {
    require(finite({depth, k, top_width, breach_height}), "wetted_perimeter: non-finite input");
    require(depth >= 0.0 && k > 1.0 && top_width > 0.0 && breach_height > 0.0, "wetted_perimeter: invalid section");
    return 2.0 * detail::wall_length_exact(0.0, depth / breach_height, k, top_width, breach_height);
}

double hydraulic_radius(double critical_depth, double k, double top_width, double breach_height) {
    require(critical_depth > 0.0, "hydraulic_radius: critical depth must be positive");
    const double perimeter = wetted_perimeter(critical_depth, k, top_width, breach_height);
    require(perimeter > 0.0, "hydraulic_radius: degenerate wetted perimeter");
    const double level = critical_depth / breach_height;
    const double area = k < rectangular_threshold ? top_width * critical_depth
                                                  : top_width * critical_depth * std::pow(level, k - 1.0) / k;
    return area / perimeter;
}

double sediment_transport(double velocity, double hydraulic_radius, const ErosionParams& erosion) {
    require(finite({velocity, hydraulic_radius}), "sediment_transport: non-finite input");
    require(velocity >= 0.0 && hydraulic_radius >= 0.0, "sediment_transport: negative velocity or radius");
    if (erosion.scaling == 0.0 || velocity == 0.0) return 0.0;
    if (hydraulic_radius == 0.0) {
        if (erosion.radius_exponent < 0.0) throw DomainError("sediment_transport: zero hydraulic radius with flow");
        return erosion.radius_exponent == 0.0 ? erosion.scaling * std::pow(velocity, erosion.velocity_exponent) : 0.0;
    }
    return erosion.scaling * std::pow(velocity, erosion.velocity_exponent) *
           std::pow(hydraulic_radius, erosion.radius_exponent);
}

double erodible_perimeter(double depth, double k, double top_width, double breach_height, Stage stage) {
    const double wetted = wetted_perimeter(depth, k, top_width, breach_height);
    if (stage == Stage::vertical || depth == 0.0) return wetted;
    const double floor = depth / breach_height * erodible_floor_fraction(k);
    if (floor <= 0.0) return wetted;
    return wetted - 2.0 * detail::wall_length_exact(0.0, floor, k, top_width, breach_height);
}

double breach_volume(double k, double top_width, double breach_height, double crest_width, double embankment_slope) {
    require(k > 1.0, "breach_volume: shape exponent must exceed 1");
    return top_width * breach_height / k * (crest_width + 2.0 * embankment_slope * breach_height / (k + 1.0));
}

double breach_volume_rate(double k, double breach_height, double crest_width, double embankment_slope, Stage stage) {
    require(finite({k, breach_height, crest_width, embankment_slope}), "breach_volume_rate: non-finite input");
    require(k > 1.0, "breach_volume_rate: shape exponent must exceed 1");
    const double hb = breach_height;
    if (stage == Stage::vertical) {
        // Self-similar deepening: breach height grows in proportion to the top width.
        return hb * (2.0 * crest_width / k + 6.0 * embankment_slope * hb / (k * (k + 1.0)));
    }
    const double k2 = k * k;
    const double kp1 = k + 1.0;
    return hb * ((2.0 * k - 1.0) / k2 * crest_width +
                 2.0 * (3.0 * k2 - 1.0) / (k2 * kp1 * kp1) * embankment_slope * hb);
}

double reservoir_volume(double level, double basin_exponent, double full_volume, double full_level) {
    require(level >= 0.0, "reservoir_volume: negative level");
    return full_volume * std::pow(level / full_level, basin_exponent);
}

double reservoir_rate(double level, double basin_exponent, double full_volume, double full_level) {
    require(finite({level, basin_exponent, full_volume, full_level}), "reservoir_rate: non-finite input");
    require(level >= 0.0, "reservoir_rate: negative level");
    require(full_level > 0.0, "reservoir_rate: full level must be positive");
    return basin_exponent * full_volume / full_level * std::pow(level / full_level, basin_exponent - 1.0);
}

void validate(const DamCase& c) {
    const auto& g = c.geometry;
    const auto& r = c.reservoir;
    const auto& b = c.breach;
    require(finite({g.height, g.crest_width, g.embankment_slope, g.side_angle_deg, r.basin_exponent, r.level_drop,
                    r.released_volume, b.final_height, b.initial_depth_ratio}),
            "dam case: non-finite field");
    require(g.height > 0.0, "dam case: dam height must be positive");
    require(g.crest_width >= 0.0, "dam case: crest width must be non-negative");
    require(g.embankment_slope >= 0.0, "dam case: embankment slope must be non-negative");
    require(g.crest_width + g.embankment_slope > 0.0, "dam case: crest width and embankment slope both zero");
    require(g.side_angle_deg > 0.0 && g.side_angle_deg <= 90.0, "dam case: side angle must lie in (0, 90]");
    require(r.basin_exponent >= 1.0, "dam case: basin exponent must be at least 1");
    require(r.level_drop > 0.0, "dam case: reservoir level drop must be positive");
    require(r.released_volume > 0.0, "dam case: released volume must be positive");
    require(b.final_height > 0.0 && b.final_height <= g.height, "dam case: final breach height must lie in (0, h_d]");
    require(b.initial_depth_ratio > 0.0 && b.initial_depth_ratio <= 1.0,
            "dam case: initial depth ratio must lie in (0, 1]");
    const double min_bottom = g.height - b.final_height;
    const double bottom = min_bottom + (1.0 - b.initial_depth_ratio) * r.level_drop;
    require(g.height - bottom > 0.0, "dam case: initial breach bottom lies at or above the crest");
}

void validate(const ErosionParams& e) {
    require(finite({e.scaling, e.velocity_exponent, e.radius_exponent}), "erosion parameters: non-finite field");
    require(e.scaling >= 0.0, "erosion parameters: scaling must be non-negative");
    require(e.velocity_exponent > 0.0, "erosion parameters: velocity exponent must be positive");
    require(e.radius_exponent <= 0.0, "erosion parameters: radius exponent must be non-positive");
}

InitialConditions initial_conditions(const DamCase& c) {
    validate(c);
    InitialConditions ic{};
    ic.min_bottom_level = c.geometry.height - c.breach.final_height;
    ic.bottom_level = ic.min_bottom_level + (1.0 - c.breach.initial_depth_ratio) * c.reservoir.level_drop;
    ic.reservoir_level = ic.min_bottom_level + c.reservoir.level_drop;
    const double alpha = c.reservoir.basin_exponent;
    const double full = std::pow(ic.reservoir_level, alpha);
    const double empty = std::pow(ic.min_bottom_level, alpha);
    if (!(full > empty)) throw DomainError("initial_conditions: degenerate reservoir, full and drained volumes coincide");
    ic.full_volume = c.reservoir.released_volume * full / (full - empty);
    ic.top_width = 16.0 / 25.0 * (5.0 - c.geometry.side_angle_deg / 24.0) * (c.geometry.height - ic.bottom_level);
    return ic;
}

namespace {

struct Rates {
    double level_rate = 0.0;   // dH_r/dt
    double width_rate = 0.0;   // dW_b/dt
    double discharge = 0.0;    // Q_b
    double sediment = 0.0;     // Q_s
    double head = 0.0;         // H_e
    double head_rate = 0.0;    // dH_e/dt
    double bottom = 0.0;       // H_b
    double k = 0.0;
    double discharge_rate = 0.0;  // dQ_b/dt
};

struct Node {
    double time;
    double level;  // H_r
    double width;  // W_b
    bool lateral;
    Rates rates;
};

// Right-hand side of the coupled reservoir and breach equations for one case.
class BreachSystem {
public:
    BreachSystem(const DamCase& c, const ErosionParams& e, const InitialConditions& ic)
        : erosion_(e),
          dam_height_(c.geometry.height),
          crest_width_(c.geometry.crest_width),
          slope_(c.geometry.embankment_slope),
          tan_angle_(tan_deg(c.geometry.side_angle_deg)),
          final_height_(c.breach.final_height),
          alpha_(c.reservoir.basin_exponent),
          full_volume_(ic.full_volume),
          full_level_(ic.reservoir_level),
          initial_width_(ic.top_width),
          aspect_(( c.geometry.height - ic.bottom_level) / ic.top_width),
          min_bottom_(ic.min_bottom_level) {
        vertical_k_ = std::max(2.0 * aspect_ / tan_angle_ + 1.0, min_shape_exponent);
        switch_width_ = final_height_ / aspect_;
    }

    [[nodiscard]] double switch_width() const { return switch_width_; }
    [[nodiscard]] double min_bottom() const { return min_bottom_; }
    [[nodiscard]] double full_volume() const { return full_volume_; }
    [[nodiscard]] double full_level() const { return full_level_; }

    [[nodiscard]] double breach_height(double width, bool lateral) const {
        return lateral ? final_height_ : aspect_ * width;
    }
    [[nodiscard]] double bottom_level(double width, bool lateral) const {
        return lateral ? min_bottom_ : dam_height_ - aspect_ * width;
    }

    [[nodiscard]] Rates operator()(double level, double width, bool lateral) const {
        Rates out;
        const double hb = breach_height(width, lateral);
        out.bottom = dam_height_ - hb;
        if (lateral) out.bottom = min_bottom_;
        out.k = lateral ? std::max(2.0 * hb / (width * tan_angle_) + 1.0, min_shape_exponent) : vertical_k_;
        out.head = level - out.bottom;
        if (out.head <= 0.0) return out;
        const double k = out.k;
        const bool rectangular = k < rectangular_threshold;

        const double depth = 2.0 * k / (2.0 * k + 1.0) * out.head;
        const double velocity = std::sqrt(gravity * depth / k);
        const double rel = depth / hb;
        const double log_rel = std::log(rel);
        const double area = rectangular ? width * depth : width * hb * std::exp(k * log_rel) / k;
        out.discharge = area * velocity;
        const double storage_rate =
            alpha_ * full_volume_ / full_level_ * std::exp((alpha_ - 1.0) * std::log(level / full_level_));
        out.level_rate = -out.discharge / storage_rate;

        if (erosion_.scaling > 0.0) {
            const double log_half_aspect = std::log(0.5 * width / hb);
            const double wall = detail::wall_length_fast_log(rel, log_rel, k, log_half_aspect, width, hb);
            const double radius = area / (2.0 * wall);
            const double transport = erosion_.scaling * std::exp(erosion_.velocity_exponent * std::log(velocity) +
                                                                 erosion_.radius_exponent * std::log(radius));
            double erodible = 2.0 * wall;
            if (lateral) {
                const double fraction = erodible_floor_fraction(k);
                if (fraction > 0.0) {
                    const double floor = rel * fraction;
                    erodible -= 2.0 * detail::wall_length_fast_log(floor, std::log(floor), k, log_half_aspect, width, hb);
                }
            }
            out.sediment = std::max(erodible, 0.0) * transport;
            const auto stage = lateral ? Stage::lateral : Stage::vertical;
            out.width_rate = out.sediment / breach_volume_rate(k, hb, crest_width_, slope_, stage);
        }
        out.head_rate = out.level_rate + (lateral ? 0.0 : aspect_ * out.width_rate);
        // Q_b = W hb^(1-k) sqrt(g/k^3) h_c^(k+1/2); in the vertical stage hb is proportional
        // to W at fixed k, in the lateral stage hb is fixed and dk/dW = -(k-1)/W.
        const double width_log_rate = out.width_rate / width;
        double log_rate = (k + 0.5) * out.head_rate / out.head;
        if (!lateral) {
            log_rate += (2.0 - k) * width_log_rate;
        } else {
            const double shape_log_rate = rectangular && k <= min_shape_exponent ? 0.0 : -(k - 1.0) * width_log_rate;
            log_rate += width_log_rate + (log_rel - 1.0 / k) * shape_log_rate;
        }
        out.discharge_rate = out.discharge * log_rate;
        return out;
    }

private:
    ErosionParams erosion_;
    double dam_height_, crest_width_, slope_, tan_angle_, final_height_;
    double alpha_, full_volume_, full_level_, initial_width_, aspect_, min_bottom_;
    double vertical_k_ = 0.0;
    double switch_width_ = 0.0;
};

struct StepResult {
    double level;
    double width;
};

// Classic RK4 step with the first stage supplied by the caller.
StepResult rk4_step(const BreachSystem& system, const Node& from, double dt) {
    const auto& k1 = from.rates;
    const bool lat = from.lateral;
    const auto k2 = system(from.level + 0.5 * dt * k1.level_rate, from.width + 0.5 * dt * k1.width_rate, lat);
    const auto k3 = system(from.level + 0.5 * dt * k2.level_rate, from.width + 0.5 * dt * k2.width_rate, lat);
    const auto k4 = system(from.level + dt * k3.level_rate, from.width + dt * k3.width_rate, lat);
    return {from.level + dt / 6.0 * (k1.level_rate + 2.0 * k2.level_rate + 2.0 * k3.level_rate + k4.level_rate),
            from.width + dt / 6.0 * (k1.width_rate + 2.0 * k2.width_rate + 2.0 * k3.width_rate + k4.width_rate)};
}

struct Pass {
    std::vector<Node> nodes;
    std::vector<Node> captures;
    double peak = 0.0;
    double peak_time = 0.0;
    double switch_time = -1.0;
    bool horizon_reached = false;
};

constexpr std::size_t max_steps = 2'000'000;
constexpr int max_captures = 8;

void check_finite(const Node& n) {
    if (!std::isfinite(n.level) || !std::isfinite(n.width) || !std::isfinite(n.rates.discharge) ||
        !std::isfinite(n.rates.width_rate)) {
        std::ostringstream msg;
        msg << "simulate: non-finite state at t=" << n.time << " (H_r=" << n.level << ", W_b=" << n.width << ")";
        throw NumericalError(msg.str());
    }
}

Pass integrate_pass(const BreachSystem& system, const InitialConditions& ic, const SimulationOptions& opt,
                    double step_scale) {
    Pass pass;
    pass.nodes.reserve(256);
    const auto make_node = [&](double t, double level, double width, bool lateral) {
        Node n{t, level, width, lateral, system(level, width, lateral)};
        check_finite(n);
        return n;
    };

    bool lateral = ic.top_width >= system.switch_width();
    pass.nodes.push_back(make_node(0.0, ic.reservoir_level, ic.top_width, lateral));
    if (lateral) pass.switch_time = 0.0;
    double previous_dt = std::numeric_limits<double>::infinity();
    int captures = 0;

    const auto record_peak = [&pass](const Node& n) {
        if (n.rates.discharge > pass.peak) {
            pass.peak = n.rates.discharge;
            pass.peak_time = n.time;
        }
    };
    record_peak(pass.nodes.front());

    // Side evaluation at the discharge maximum inside [a, b], located on the cubic
    // Hermite interpolant of Q_b. `right_slope` is the one-sided derivative at b
    // from within the interval. The main trajectory is not altered.
    const auto capture_peak = [&](const Node& a, const Node& b, double right_slope) {
        const double h = b.time - a.time;
        const double q0 = a.rates.discharge, q1 = b.rates.discharge;
        const double m0 = a.rates.discharge_rate * h, m1 = right_slope * h;
        // Derivative of the Hermite cubic in s in [0, 1]: c2 s^2 + c1 s + c0.
        const double c2 = 3.0 * (2.0 * q0 + m0 - 2.0 * q1 + m1);
        const double c1 = 2.0 * (-3.0 * q0 - 2.0 * m0 + 3.0 * q1 - m1);
        const double c0 = m0;
        double s = -1.0;
        if (std::abs(c2) < 1e-14 * (std::abs(c1) + std::abs(c0))) {
            if (c1 != 0.0) s = -c0 / c1;
        } else {
            const double disc = c1 * c1 - 4.0 * c2 * c0;
            if (disc >= 0.0) {
                const double root = std::sqrt(disc);
                const double q = -0.5 * (c1 + std::copysign(root, c1));
                for (double cand : {q / c2, q != 0.0 ? c0 / q : -1.0}) {
                    // The maximum is where the derivative falls through zero.
                    if (cand > 0.0 && cand < 1.0 && 2.0 * c2 * cand + c1 < 0.0) s = cand;
                }
            }
        }
        if (!(s > 0.0 && s < 1.0)) return;
        const auto state = rk4_step(system, a, s * h);
        const double level = std::clamp(state.level, b.level, a.level);
        const double width = std::clamp(state.width, a.width, b.width);
        Node n = make_node(a.time + s * h, level, width, a.lateral);
        record_peak(n);
        pass.captures.push_back(n);
    };

    for (std::size_t step = 0;; ++step) {
        if (step >= max_steps) throw NumericalError("simulate: step limit exceeded");
        const Node& cur = pass.nodes.back();
        const Rates& r = cur.rates;

        // Termination tests on the current node.
        if (r.head <= opt.stop_head) break;
        if (r.discharge <= opt.stop_discharge && r.width_rate <= opt.stop_widening_rate) break;
        if (pass.peak > 0.0 && r.discharge < pass.peak && r.discharge <= opt.quiescent_discharge_fraction * pass.peak) {
            const double head_time = r.head / std::max(std::abs(r.head_rate), std::numeric_limits<double>::min());
            if (r.width_rate * head_time <= opt.quiescent_width_fraction * cur.width) break;
        }
        if (cur.time >= opt.horizon) {
            pass.horizon_reached = true;
            break;
        }

        const double rate = std::max(std::abs(r.head_rate) / r.head, r.width_rate / cur.width);
        if (!(rate > 0.0)) break;
        double dt = std::min(step_scale / rate, 1.5 * previous_dt);
        previous_dt = dt;
        dt = std::min(dt, opt.horizon - cur.time);

        auto next = rk4_step(system, cur, dt);
        bool switched = false;
        if (!cur.lateral && next.width >= system.switch_width()) {
            // Locate the sub-step that lands exactly on the switch width (Illinois false position).
            double lo = 0.0, glo = cur.width - system.switch_width();
            double hi = 1.0, ghi = next.width - system.switch_width();
            int side = 0;
            double theta = 1.0;
            StepResult at = next;
            for (int it = 0; it < 60; ++it) {
                theta = (lo * ghi - hi * glo) / (ghi - glo);
                at = rk4_step(system, cur, theta * dt);
                const double g = at.width - system.switch_width();
                if (std::abs(g) <= 1e-13 * system.switch_width() || hi - lo <= 1e-15) break;
                if (g < 0.0) {
                    lo = theta, glo = g;
                    if (side == -1) ghi *= 0.5;
                    side = -1;
                } else {
                    hi = theta, ghi = g;
                    if (side == 1) glo *= 0.5;
                    side = 1;
                }
            }
            dt *= theta;
            next = {at.level, system.switch_width()};
            switched = true;
        }
        // Guard the exact monotonicity of the stored series against round-off.
        next.level = std::min(next.level, cur.level);
        next.width = std::max(next.width, cur.width);

        const bool next_lateral = cur.lateral || switched;
        pass.nodes.push_back(make_node(cur.time + dt, next.level, next.width, next_lateral));
        const std::size_t last = pass.nodes.size() - 1;
        if (switched) {
            pass.switch_time = pass.nodes.back().time;
        }
        record_peak(pass.nodes.back());
        if (captures < max_captures) {
            const Node& a = pass.nodes[last - 1];
            const Node& b = pass.nodes[last];
            const double right_slope =
                switched ? system(b.level, b.width, false).discharge_rate : b.rates.discharge_rate;
            if (a.rates.discharge_rate > 0.0 && right_slope < 0.0) {
                capture_peak(a, b, right_slope);
                ++captures;
            }
        }
    }
    return pass;
}

}  // namespace

Hydrograph simulate(const DamCase& dam_case, const ErosionParams& erosion, const SimulationOptions& options) {
    validate(erosion);
    const auto ic = initial_conditions(dam_case);
    if (!(ic.top_width > 0.0)) throw DomainError("simulate: initial breach width must be positive");
    const BreachSystem system(dam_case, erosion, ic);

    double scale = options.fixed_step_scale > 0.0 ? options.fixed_step_scale : options.initial_step_scale;
    Pass pass = integrate_pass(system, ic, options, scale);
    int refinements = 0;
    if (options.fixed_step_scale <= 0.0) {
        for (;;) {
            if (refinements >= options.max_refinements) {
                throw NumericalError("simulate: peak discharge did not settle within the refinement budget");
            }
            scale *= 0.5;
            ++refinements;
            Pass finer = integrate_pass(system, ic, options, scale);
            const double change = std::abs(finer.peak - pass.peak);
            pass = std::move(finer);
            if (change <= options.peak_tolerance * pass.peak) break;
        }
    }
    // A recorded series must also resolve the volumes under it, which needs a
    // finer grid than the peak alone.
    if (options.record_series && options.output_step_scale > 0.0 && scale > options.output_step_scale) {
        scale = options.output_step_scale;
        pass = integrate_pass(system, ic, options, scale);
    }

    Hydrograph out;
    out.peak_discharge = pass.peak;
    out.time_to_peak = pass.peak_time;
    out.switch_time = pass.switch_time;
    out.failure_mode = pass.switch_time >= 0.0 ? FailureMode::total : FailureMode::partial;
    out.horizon_reached = pass.horizon_reached;
    out.step_scale = scale;
    out.refinements = refinements;
    out.steps = pass.nodes.size() - 1;
    const Node& end = pass.nodes.back();
    out.duration = end.time;
    out.final_width = end.width / end.rates.k;

    if (options.record_series) {
        out.samples.reserve(pass.nodes.size() + pass.captures.size());
        const auto emit = [&](const Node& n) {
            out.samples.push_back({n.time, n.rates.discharge, n.width, n.rates.bottom, n.level, n.rates.sediment});
        };
        std::size_t c = 0;
        for (const auto& n : pass.nodes) {
            while (c < pass.captures.size() && pass.captures[c].time < n.time) emit(pass.captures[c++]);
            if (n.lateral && n.time == pass.switch_time && n.time > 0.0) {
                // The erodible perimeter jumps at the switch; store the left limit too.
                Node left{n.time, n.level, n.width, false, system(n.level, n.width, false)};
                left.rates.bottom = n.rates.bottom;
                emit(left);
            }
            emit(n);
        }
        while (c < pass.captures.size()) emit(pass.captures[c++]);
    }
    return out;
}

}  // namespace breachcast::forward
