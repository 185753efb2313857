#include "wall_length.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "breachcast/error.hpp"
#include "breachcast/forward_model.hpp"

namespace breachcast::forward::detail {
namespace {

constexpr double quadrature_tolerance = 1e-10;
constexpr double accepted_error = 1e-7;
constexpr std::size_t max_levels = 12;

struct Estimate {
    double value = 0.0;
    double error = 0.0;
};

template <class F>
Estimate integrate(F f, double lo, double hi) {
    thread_local boost::math::quadrature::tanh_sinh<double> rule(max_levels);
    Estimate out;
    if (!(hi > lo)) return out;
    if (hi - lo <= 1e-9 * std::max(std::abs(lo), std::abs(hi))) {
        out.value = f(0.5 * (lo + hi)) * (hi - lo);
        return out;
    }
    double l1 = 0.0;
    out.value = rule.integrate([&f](double x, double) { return f(x); }, lo, hi, quadrature_tolerance, &out.error, &l1);
    return out;
}

// Relative elevation grid coordinate u = log(k - 1), offset coordinate z = log(b),
// b = run/rise of the normalised curve (sigma, b sigma^(k-1)) on [0, 1].
class WallLengthTable {
public:
    static constexpr double u_min = -9.2103403719761836;  // log(1e-4)
    static constexpr double u_max = 1.9459101090932196;   // log(7)
    static constexpr double z_min = -12.0;
    static constexpr double z_max = 12.0;
    static constexpr int nu = 225;
    static constexpr int nz = 401;

    static const WallLengthTable& instance() {
        static const WallLengthTable table;
        return table;
    }

    [[nodiscard]] bool covers(double u, double z) const {
        return u >= u_min && u <= u_max && z >= z_min && z <= z_max;
    }

    // Ratio of arc length to the sum of rise and run of the normalised curve.
    [[nodiscard]] double ratio(double u, double z) const {
        const double fu = (u - u_min) / du_;
        const double fz = (z - z_min) / dz_;
        int iu = std::clamp(static_cast<int>(fu) - 1, 0, nu - 4);
        int iz = std::clamp(static_cast<int>(fz) - 1, 0, nz - 4);
        const auto wu = weights(fu - iu);
        const auto wz = weights(fz - iz);
        double sum = 0.0;
        for (int a = 0; a < 4; ++a) {
            const double* row = &values_[static_cast<std::size_t>(iu + a) * nz + iz];
            const double inner = wz[0] * row[0] + wz[1] * row[1] + wz[2] * row[2] + wz[3] * row[3];
            sum += wu[a] * inner;
        }
        return sum;
    }

private:
    WallLengthTable() : values_(static_cast<std::size_t>(nu) * nz) {
        for (int i = 0; i < nu; ++i) {
            const double m = std::exp(u_min + i * du_);
            for (int j = 0; j < nz; ++j) {
                const double b = std::exp(z_min + j * dz_);
                values_[static_cast<std::size_t>(i) * nz + j] = power_curve_length(1.0, b, m, 0.0, 1.0) / (1.0 + b);
            }
        }
    }

    // Cubic Lagrange weights on nodes 0..3 at position x.
    static std::array<double, 4> weights(double x) {
        const double x0 = x, x1 = x - 1.0, x2 = x - 2.0, x3 = x - 3.0;
        return {-x1 * x2 * x3 / 6.0, x0 * x2 * x3 / 2.0, -x0 * x1 * x3 / 2.0, x0 * x1 * x2 / 6.0};
    }

    double du_ = (u_max - u_min) / (nu - 1);
    double dz_ = (z_max - z_min) / (nz - 1);
    std::vector<double> values_;
};

}  // namespace

double power_curve_length(double rise, double run, double m, double from, double to) {
    if (!(to > from)) return 0.0;
    if (run == 0.0) return rise * (to - from);
    if (rise == 0.0) return run * (std::pow(to, m) - std::pow(from, m));
    if (std::abs(m - 1.0) < 1e-12) return std::hypot(rise, run) * (to - from);

    // The curve is split at its unit-slope point. On the flat side the length is
    // rise*(extent in sigma) plus an excess integral in sigma; on the steep side it
    // is the offset extent plus an excess integral in the slope coordinate
    // q = dX/dY. Both excess integrands are bounded by (sqrt(2)-1) times the scale.
    const double log_split = (std::log(rise) - std::log(run * m)) / (m - 1.0);
    const double split = std::exp(std::clamp(log_split, -700.0, 700.0));
    const double power = 1.0 / m - 1.0;
    const double scale = rise / (m * run);

    auto flat_part = [&](double lo, double hi) {
        const auto excess = [&](double s) {
            const double slope = run * m * std::exp((m - 1.0) * std::log(s));
            return slope * slope / (std::sqrt(rise * rise + slope * slope) + rise);
        };
        Estimate part;
        if (lo > 0.0 && hi > 4.0 * lo) {
            part = integrate([&](double t) { const double s = std::exp(t); return excess(s) * s; }, std::log(lo),
                             std::log(hi));
        } else {
            part = integrate(excess, lo, hi);
        }
        part.value += rise * (hi - lo);
        return part;
    };
    auto steep_part = [&](double lo, double hi) {
        const double y_lo = run * std::pow(lo, m);
        const double y_hi = run * std::pow(hi, m);
        Estimate part;
        if (std::abs(power) > 0.5) {
            // dY/dq = Y/(power*q), Y(q) = run*(q/scale)^(1/power).
            const double q_lo = scale * std::exp((1.0 - m) * std::log(lo));
            const double q_hi = scale * std::exp((1.0 - m) * std::log(hi));
            part = integrate(
                [&](double q) {
                    const double y = run * std::exp(std::log(q / scale) / power);
                    return q / (std::sqrt(1.0 + q * q) + 1.0) * y / std::abs(power);
                },
                std::min(q_lo, q_hi), std::max(q_lo, q_hi));
        } else {
            part = integrate(
                [&](double y) {
                    const double q = scale * std::exp(power * std::log(y / run));
                    return q * q / (std::sqrt(1.0 + q * q) + 1.0);
                },
                y_lo, y_hi);
        }
        part.value += y_hi - y_lo;
        return part;
    };

    Estimate total;
    const auto add = [&total](Estimate part) {
        total.value += part.value;
        total.error += part.error;
    };
    if (m < 1.0) {
        const double steep_hi = std::min(split, to);
        if (steep_hi > from) add(steep_part(from, steep_hi));
        const double flat_lo = std::max(split, from);
        if (to > flat_lo) add(flat_part(flat_lo, to));
    } else {
        const double flat_hi = std::min(split, to);
        if (flat_hi > from) add(flat_part(from, flat_hi));
        const double steep_lo = std::max(split, from);
        if (to > steep_lo) add(steep_part(steep_lo, to));
    }
    if (!std::isfinite(total.value) || total.error > accepted_error * total.value) {
        std::ostringstream msg;
        msg << "wall length quadrature did not converge: k=" << m + 1.0 << " on [" << from << ", " << to
            << "], estimate " << total.value << ", error " << total.error;
        throw NumericalError(msg.str());
    }
    return total.value;
}

double wall_length_exact(double from, double to, double k, double top_width, double breach_height) {
    if (k < rectangular_threshold) {
        const auto manhattan = [&](double s) { return 0.5 * top_width * std::pow(s, k - 1.0) + breach_height * s; };
        return manhattan(to) - manhattan(from);
    }
    return power_curve_length(breach_height, 0.5 * top_width, k - 1.0, from, to);
}

double wall_length_fast_log(double level, double log_level, double k, double log_half_aspect,
                            double top_width, double breach_height) {
    if (!(level > 0.0)) return 0.0;
    if (k < rectangular_threshold) {
        return 0.5 * top_width * std::exp((k - 1.0) * log_level) + breach_height * level;
    }
    const double u = std::log(k - 1.0);
    const double z = log_half_aspect + (k - 2.0) * log_level;
    const auto& table = WallLengthTable::instance();
    if (!table.covers(u, z)) return wall_length_exact(0.0, level, k, top_width, breach_height);
    return breach_height * level * (1.0 + std::exp(z)) * table.ratio(u, z);
}

double wall_length_fast(double level, double k, double top_width, double breach_height) {
    if (!(level > 0.0)) return 0.0;
    return wall_length_fast_log(level, std::log(level), k, std::log(0.5 * top_width / breach_height), top_width,
                                breach_height);
}

double level_at_offset(double offset, double k, double top_width) {
    if (!(offset > 0.0)) return 0.0;
    return std::exp(std::log(2.0 * offset / top_width) / (k - 1.0));
}

}  // namespace breachcast::forward::detail
