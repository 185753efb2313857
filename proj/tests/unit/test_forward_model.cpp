#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "breachcast/error.hpp"
#include "breachcast/forward_model.hpp"
#include "support/oracles.hpp"

using namespace breachcast;
using namespace breachcast::forward;
using doctest::Approx;

namespace {

double tan_deg(double a) { return std::tan(a * std::numbers::pi / 180.0); }

// Arc length of the wall by composite Simpson over elevation, where the wall is
// x(z) = (W/2) (z/h)^(k-1); smooth for k < 2 after substituting z = h s^2.
double wall_length_oracle(double from_offset, double to_offset, double k, double width, double height) {
    const auto level = [&](double offset) { return std::pow(2.0 * offset / width, 1.0 / (k - 1.0)); };
    const double s0 = std::sqrt(level(from_offset));
    const double s1 = std::sqrt(level(to_offset));
    const auto integrand = [&](double s) {
        // d/ds of (x, z) with z = h s^2.
        const double dz = 2.0 * height * s;
        const double dx = 0.5 * width * (k - 1.0) * std::pow(s, 2.0 * (k - 1.0) - 1.0) * 2.0;
        return std::hypot(dx, dz);
    };
    const int n = 200000;
    const double step = (s1 - s0) / n;
    double sum = integrand(s0) + integrand(s1);
    for (int i = 1; i < n; ++i) sum += integrand(s0 + i * step) * (i % 2 ? 4.0 : 2.0);
    return sum * step / 3.0;
}

DamCase apishapa_like(double side_angle = 60.0) {
    return {{34.1, 4.9, 2.5, side_angle}, {2.5, 28.0, 22.2e6}, {31.1, 0.2}};
}

}  // namespace

TEST_SUITE("forward-model") {

TEST_CASE("shape exponent") {
    CHECK(shape_exponent(1.0, 2.0, 45.0) == Approx(2.0).epsilon(1e-14));
    CHECK(shape_exponent(1.0, 1e15, 45.0) == min_shape_exponent);
    CHECK(shape_exponent(30.5, 100.0, 60.0) == Approx(61.0 / (100.0 * tan_deg(60.0)) + 1.0).epsilon(1e-14));
    CHECK(shape_exponent(30.5, 100.0, 60.0) == Approx(1.3522).epsilon(1e-4));
    CHECK_THROWS_AS(shape_exponent(std::nan(""), 1.0, 45.0), DomainError);
    CHECK_NOTHROW(shape_exponent(1.0, 2.0, 5.0));
}

TEST_CASE("section geometry") {
    const auto tri = section_geometry(5.0, 2.0, 10.0, 5.0);
    CHECK(tri.width == Approx(10.0));
    CHECK(tri.area == Approx(25.0));
    CHECK(section_geometry(2.0, min_shape_exponent, 10.0, 5.0).area == Approx(20.0).epsilon(1e-5));
    CHECK(section_geometry(3.0, 1.5, 8.0, 4.0).area == Approx(8.0 * std::pow(3.0, 1.5) / (1.5 * 2.0)).epsilon(1e-12));
    CHECK(section_geometry(3.0, 1.5, 8.0, 4.0).area == Approx(13.856).epsilon(1e-4));
    CHECK_THROWS_AS(section_geometry(-1.0, 1.5, 8.0, 4.0), DomainError);
}

TEST_CASE("area is the integral of the surface width") {
    for (double k : {1.2, 1.7, 2.0, 3.5}) {
        const double width = 9.0, height = 4.0, depth = 3.1;
        const int n = 20000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += section_geometry((i + 0.5) * depth / n, k, width, height).width;
        CHECK(section_geometry(depth, k, width, height).area == Approx(sum * depth / n).epsilon(1e-6));
    }
}

TEST_CASE("side wall length") {
    CHECK(side_wall_length(0.0, 5.0, 2.0, 10.0, 5.0) == Approx(5.0 * std::sqrt(2.0)).epsilon(1e-6));
    CHECK(side_wall_length(2.0, 2.0, 1.5, 8.0, 4.0) == 0.0);
    CHECK(side_wall_length(0.0, 4.0, 1.5, 8.0, 4.0) ==
          Approx(wall_length_oracle(0.0, 4.0, 1.5, 8.0, 4.0)).epsilon(1e-5));
    CHECK(side_wall_length(1.0, 3.0, 1.25, 8.0, 4.0) ==
          Approx(wall_length_oracle(1.0, 3.0, 1.25, 8.0, 4.0)).epsilon(1e-5));
    // k > 2: the slope is unbounded at the centre line but the length is finite.
    CHECK(side_wall_length(0.0, 4.0, 3.0, 8.0, 4.0) ==
          Approx(wall_length_oracle(0.0, 4.0, 3.0, 8.0, 4.0)).epsilon(1e-5));
}

TEST_CASE("wall slope at the top equals the side angle") {
    for (double beta : {45.0, 60.0, 75.0, 89.0}) {
        for (double width : {3.0, 20.0, 150.0}) {
            const double height = 7.0;
            const double k = shape_exponent(height, width, beta);
            if (k < rectangular_threshold) continue;
            CHECK(side_wall_slope(width / 2.0, k, width, height) == Approx(tan_deg(beta)).epsilon(1e-6));
        }
    }
}

TEST_CASE("critical flow") {
    const auto rect = critical_flow(1.0, min_shape_exponent);
    CHECK(rect.depth == Approx(2.0 / 3.0).epsilon(1e-6));
    const auto dry = critical_flow(0.0, 1.7);
    CHECK(dry.depth == 0.0);
    CHECK(dry.velocity == 0.0);
    const auto c = critical_flow(2.0, 2.0);
    CHECK(c.depth == Approx(1.6).epsilon(1e-14));
    CHECK(c.velocity == Approx(std::sqrt(9.81 * 0.8)).epsilon(1e-14));
    CHECK(c.velocity == Approx(2.8014).epsilon(1e-4));
}

TEST_CASE("breach discharge") {
    CHECK(breach_discharge(0.0, 1.5, 10.0, 5.0) == 0.0);
    CHECK(breach_discharge(-0.3, 1.5, 10.0, 5.0) == 0.0);
    const double ref = std::sqrt(512.0 / 3125.0 * 9.81);
    CHECK(reference_discharge(1.0) == Approx(ref).epsilon(1e-14));
    CHECK(ref == Approx(1.2678).epsilon(1e-4));
    for (double h : {1.0, 3.0, 12.0}) CHECK(breach_discharge(1.0, 2.0, 2.0 * h, h) == Approx(ref).epsilon(1e-6));
    CHECK(breach_discharge(1.0, min_shape_exponent, 5.0, 3.0) ==
          Approx(5.0 * std::sqrt(9.81) * std::pow(2.0 / 3.0, 1.5)).epsilon(1e-5));
    CHECK(breach_discharge(1.0, min_shape_exponent, 5.0, 3.0) == Approx(8.524).epsilon(1e-4));
}

TEST_CASE("hydraulic radius") {
    CHECK(hydraulic_radius(5.0, 2.0, 10.0, 5.0) == Approx(25.0 / (10.0 * std::sqrt(2.0))).epsilon(1e-6));
    CHECK(hydraulic_radius(5.0, 2.0, 10.0, 5.0) == Approx(1.7678).epsilon(1e-4));
    const double rect = hydraulic_radius(0.5, min_shape_exponent, 200.0, 5.0);
    CHECK(rect == Approx(200.0 * 0.5 / (200.0 + 1.0)).epsilon(1e-5));
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double k = 1.0 + 4.0 * u(gen) + 1e-3, height = 1.0 + 20.0 * u(gen), width = 1.0 + 80.0 * u(gen);
        const double depth = height * (0.01 + 0.99 * u(gen));
        CHECK(hydraulic_radius(depth, k, width, height) <= depth);
    }
    CHECK_THROWS_AS(hydraulic_radius(0.0, 1.5, 10.0, 5.0), DomainError);
}

TEST_CASE("sediment transport") {
    CHECK(sediment_transport(3.0, 1.0, {0.0, 3.0, -0.5}) == 0.0);
    CHECK(sediment_transport(2.0, 1.0, {1e-3, 3.0, -0.5}) == Approx(0.008).epsilon(1e-14));
    const ErosionParams law{1e-3, 3.0, -0.5};
    CHECK(sediment_transport(2.5, 1.0, law) > sediment_transport(2.0, 1.0, law));
    CHECK(sediment_transport(2.0, 1.5, law) < sediment_transport(2.0, 1.0, law));
    CHECK(sediment_transport(0.0, 0.0, law) == 0.0);
    CHECK_THROWS_AS(sediment_transport(1.0, 0.0, law), DomainError);
}

TEST_CASE("erodible perimeter") {
    for (double k : {1.3, 2.0, 2.7}) {
        CHECK(erodible_perimeter(3.0, k, 10.0, 5.0, Stage::vertical) == Approx(wetted_perimeter(3.0, k, 10.0, 5.0)));
    }
    CHECK(erodible_perimeter(3.0, 2.0, 10.0, 5.0, Stage::lateral) ==
          Approx(wetted_perimeter(3.0, 2.0, 10.0, 5.0)).epsilon(1e-9));
    CHECK(erodible_perimeter(3.0, 2.7, 10.0, 5.0, Stage::lateral) ==
          Approx(wetted_perimeter(3.0, 2.7, 10.0, 5.0)).epsilon(1e-9));
    // Near-rectangular: the floor is not erodible, only the walls up from h e^-2.
    const double k = 1.0 + 2e-4;
    const double lateral = erodible_perimeter(3.0, k, 10.0, 5.0, Stage::lateral);
    CHECK(lateral < wetted_perimeter(3.0, k, 10.0, 5.0) - 9.0);
    CHECK(lateral == Approx(2.0 * 3.0 * (1.0 - std::exp(-2.0))).epsilon(2e-3));
}

TEST_CASE("breach volume rate") {
    CHECK(breach_volume_rate(min_shape_exponent, 5.0, 4.0, 0.0, Stage::vertical) == Approx(2.0 * 5.0 * 4.0).epsilon(1e-5));
    CHECK(breach_volume_rate(min_shape_exponent, 5.0, 4.0, 0.0, Stage::lateral) == Approx(5.0 * 4.0).epsilon(1e-5));
    // Derivative-consistent vertical term 6/(k(k+1)) s_e h_b.
    CHECK(breach_volume_rate(2.0, 5.0, 4.0, 2.0, Stage::vertical) == Approx(70.0).epsilon(1e-12));
}

TEST_CASE("breach volume rate is the derivative of the breach volume") {
    const double crest = 6.0, slope = 2.5, beta = 55.0;
    for (double width : {8.0, 30.0}) {
        const double height = 9.0, dw = 1e-5 * width;
        // Vertical stage: depth grows with width, k fixed.
        const double k = shape_exponent(height, width, beta);
        const auto v_vert = [&](double w) { return breach_volume(k, w, height * w / width, crest, slope); };
        CHECK(breach_volume_rate(k, height, crest, slope, Stage::vertical) ==
              Approx((v_vert(width + dw) - v_vert(width - dw)) / (2.0 * dw)).epsilon(1e-6));
        // Lateral stage: depth fixed, k follows the width.
        const auto v_lat = [&](double w) {
            return breach_volume(shape_exponent(height, w, beta), w, height, crest, slope);
        };
        CHECK(breach_volume_rate(k, height, crest, slope, Stage::lateral) ==
              Approx((v_lat(width + dw) - v_lat(width - dw)) / (2.0 * dw)).epsilon(1e-6));
    }
}

TEST_CASE("reservoir rate") {
    CHECK(reservoir_rate(4.0, 1.0, 1e6, 10.0) == Approx(1e5));
    CHECK(reservoir_rate(7.0, 1.0, 1e6, 10.0) == Approx(1e5));
    CHECK(reservoir_rate(5.0, 3.0, 1e6, 10.0) == Approx(7.5e4).epsilon(1e-14));
    CHECK(reservoir_rate(10.0, 2.6, 1e6, 10.0) == Approx(2.6e5).epsilon(1e-14));
}

TEST_CASE("initial conditions") {
    SUBCASE("45 degrees gives the triangular width") {
        const DamCase c{{20.0, 5.0, 2.0, 45.0}, {2.0, 15.0, 1e6}, {18.0, 0.4}};
        const auto ic = initial_conditions(c);
        CHECK(ic.top_width == Approx(2.0 * (20.0 - ic.bottom_level)).epsilon(1e-15));
    }
    SUBCASE("benchmark reservoir") {
        const DamCase c{{61.0, 24.0, 3.0, 67.5}, {2.85, 61.0, 38276344.0}, {61.0, 0.82}};
        const auto ic = initial_conditions(c);
        CHECK(ic.min_bottom_level == 0.0);
        CHECK(ic.bottom_level == Approx(10.98).epsilon(1e-12));
        CHECK(61.0 - ic.bottom_level == Approx(50.02).epsilon(1e-12));
        CHECK(ic.reservoir_level == 61.0);
    }
    SUBCASE("breach starting at the foundation") {
        const DamCase c{{12.0, 5.0, 2.0, 70.0}, {2.0, 10.0, 1e6}, {12.0, 1.0}};
        CHECK(initial_conditions(c).bottom_level == 0.0);
    }
    SUBCASE("full volume") {
        const DamCase c{{20.0, 5.0, 2.0, 60.0}, {2.0, 10.0, 3e6}, {15.0, 0.5}};
        const auto ic = initial_conditions(c);
        const double lo = 5.0, hi = 15.0;
        CHECK(ic.full_volume == Approx(3e6 * hi * hi / (hi * hi - lo * lo)).epsilon(1e-14));
    }
}

TEST_CASE("validation rejects inadmissible cases") {
    auto c = apishapa_like();
    c.geometry.height = -1.0;
    CHECK_THROWS_AS(validate(c), DomainError);
    c = apishapa_like();
    c.breach.initial_depth_ratio = 1.5;
    CHECK_THROWS_AS(validate(c), DomainError);
    c = apishapa_like();
    c.reservoir.basin_exponent = 0.5;
    CHECK_THROWS_AS(validate(c), DomainError);
    CHECK_THROWS_AS(validate(ErosionParams{1e-4, 3.0, 0.2}), DomainError);
    CHECK_THROWS_AS(validate(ErosionParams{-1e-4, 3.0, -0.2}), DomainError);
}

TEST_CASE("no erosion keeps the breach fixed") {
    const auto c = apishapa_like();
    const auto h = simulate(c, {0.0, 4.0, -0.6});
    const auto ic = initial_conditions(c);
    REQUIRE(h.samples.size() > 10);
    for (const auto& s : h.samples) {
        CHECK(s.top_width == ic.top_width);
        CHECK(s.bottom_level == ic.bottom_level);
    }
    for (std::size_t i = 1; i < h.samples.size(); ++i) CHECK(h.samples[i].discharge <= h.samples[i - 1].discharge);
    CHECK(h.failure_mode == FailureMode::partial);
    CHECK(h.switch_time < 0.0);
}

TEST_CASE("discharge vanishes exactly when the head does") {
    CHECK(breach_discharge(0.0, 1.4, 10.0, 3.0) == 0.0);
    CHECK(breach_discharge(1e-9, 1.4, 10.0, 3.0) > 0.0);
}

TEST_CASE("simulate is deterministic") {
    const auto c = apishapa_like();
    const ErosionParams e{std::exp(-8.3), 4.1, -0.6};
    const auto a = simulate(c, e);
    const auto b = simulate(c, e);
    REQUIRE(a.samples.size() == b.samples.size());
    CHECK(a.peak_discharge == b.peak_discharge);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].discharge == b.samples[i].discharge);
        CHECK(a.samples[i].top_width == b.samples[i].top_width);
    }
}

TEST_CASE("summary fields match the series") {
    const auto c = apishapa_like();
    const auto h = simulate(c, {std::exp(-8.3), 4.1, -0.6});
    double peak = 0.0;
    for (const auto& s : h.samples) peak = std::max(peak, s.discharge);
    CHECK(h.peak_discharge == peak);
    CHECK(h.final_width > 0.0);
    CHECK(h.failure_mode == FailureMode::total);
    CHECK(h.switch_time > 0.0);
    CHECK(h.samples.back().bottom_level == Approx(initial_conditions(c).min_bottom_level));
}

TEST_CASE("random cases: balances, monotonicity and irreversible stage switch") {
    std::mt19937_64 gen(7);
    for (int i = 0; i < 25; ++i) {
        const auto rc = breachcast::testing::random_case(gen);
        CAPTURE(i);
        const auto h = simulate(rc.dam, rc.erosion);
        CHECK(breachcast::testing::monotone(h));
        const auto b = breachcast::testing::volume_balances(rc.dam, h);
        CHECK(b.released <= 1e-2);
        CHECK(b.eroded <= 1e-2);
        const double floor = initial_conditions(rc.dam).min_bottom_level;
        bool reached = false;
        for (const auto& s : h.samples) {
            if (reached) CHECK(s.bottom_level == Approx(floor));
            reached = reached || s.bottom_level <= floor + 1e-9 * rc.dam.geometry.height;
        }
        CHECK(reached == (h.failure_mode == FailureMode::total));
    }
}

TEST_CASE("one further halving keeps the peak") {
    std::mt19937_64 gen(8);
    for (int i = 0; i < 10; ++i) {
        const auto rc = breachcast::testing::random_case(gen);
        SimulationOptions scalar;
        scalar.record_series = false;
        const auto h = simulate(rc.dam, rc.erosion, scalar);
        SimulationOptions finer = scalar;
        finer.fixed_step_scale = h.step_scale / 2.0;
        const auto f = simulate(rc.dam, rc.erosion, finer);
        CHECK(std::abs(f.peak_discharge - h.peak_discharge) <= 1e-3 * h.peak_discharge);
    }
}

TEST_CASE("horizon stops and flags the run") {
    SimulationOptions o;
    o.horizon = 60.0;
    const auto h = simulate(apishapa_like(), {std::exp(-8.3), 4.1, -0.6}, o);
    CHECK(h.horizon_reached);
    CHECK(h.duration <= 60.0 + 1e-9);
}

}  // TEST_SUITE
