#include <doctest.h>

#include <cmath>
#include <numbers>

#include "breachcast/error.hpp"
#include "breachcast/inference.hpp"
#include "breachcast/io.hpp"

using namespace breachcast;
using namespace breachcast::inference;
using doctest::Approx;

namespace {

const double neg_inf = -std::numeric_limits<double>::infinity();

QoI gaussian_qoi(double location = -8.37, double scale = 0.34) {
    return {location, scale, 4.12, -0.61, 0.22, 0.139};
}

QoI zero_noise_qoi(double location = -8.25, double scale = 0.833) {
    return {location, scale, 4.17, -0.669, std::nullopt, std::nullopt};
}

// A record whose uncertain inputs are all point masses.
ObservationRecord degenerate_record(double log_peak, std::optional<double> log_width) {
    using stochastic::Constant;
    return {"point", {34.1, 22.2e6, 28.0, 31.1, 0.2}, {Constant{2.5}, Constant{4.9}, Constant{2.5}, Constant{67.5}},
            log_peak, log_width};
}

double normal_log_pdf(double x, double sd) {
    return -0.5 * (x / sd) * (x / sd) - std::log(sd * std::sqrt(2.0 * std::numbers::pi));
}

LikelihoodOptions fixed_draws(std::size_t k) {
    LikelihoodOptions o;
    o.initial_draws = k;
    o.max_draws = k;
    return o;
}

const io::Dataset& bundled() {
    static const io::Dataset ds = io::read_dataset(BREACHCAST_DATA_DIR "/dams.csv");
    return ds;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("parameter layout") {
    CHECK(dimension(ResidualKind::gaussian) == 6);
    CHECK(dimension(ResidualKind::zero_noise) == 4);
    const auto q = gaussian_qoi();
    const auto v = to_vector(q, ResidualKind::gaussian);
    CHECK(v == std::vector<double>{-8.37, 0.34, 4.12, -0.61, 0.22, 0.139});
    const auto back = from_vector(v, ResidualKind::gaussian);
    CHECK(back.sigma_width == 0.139);
    CHECK_THROWS_AS(check_layout(q, ResidualKind::zero_noise), ConfigError);
    CHECK_THROWS_AS(check_layout(zero_noise_qoi(), ResidualKind::gaussian), ConfigError);
    CHECK_THROWS_AS(from_vector(v, ResidualKind::zero_noise), ConfigError);
}

TEST_CASE("prior") {
    const QoI mode{-8.0, 1.0, 4.0, -0.5, 0.3, 0.3};
    const double expected = std::log(0.5925 * (1.0 / 20.0) * (1.0 / 2.0) * (1.0 / 0.6) * (1.0 / 0.6));
    CHECK(log_prior(mode, ResidualKind::gaussian) == Approx(expected).epsilon(1e-4));
    const double exact = -std::log(2.0 * std::numbers::pi * 0.9 * 0.3 * std::sqrt(0.99)) - std::log(20.0) -
                         std::log(2.0) - 2.0 * std::log(0.6);
    CHECK(log_prior(mode, ResidualKind::gaussian) == Approx(exact).epsilon(1e-13));
    QoI out = mode;
    out.gamma_location = 6.0;
    CHECK(log_prior(out, ResidualKind::gaussian) == neg_inf);
    out = mode;
    out.gamma_scale = -0.1;
    CHECK(log_prior(out, ResidualKind::gaussian) == neg_inf);
    out = mode;
    out.sigma_width = 0.7;
    CHECK(log_prior(out, ResidualKind::gaussian) == neg_inf);
    CHECK(std::isfinite(log_prior(zero_noise_qoi(), ResidualKind::zero_noise)));
}

TEST_CASE("residual density") {
    CHECK(residual_log_density(0.0, 0.0, 1.0, 1.0) == Approx(std::log(1.0 / (2.0 * std::numbers::pi))).epsilon(1e-14));
    CHECK(residual_log_density(0.0, 0.0, 1.0, 1.0) == Approx(-1.8379).epsilon(1e-4));
    const double std_normal_at_1 = std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi);
    const double std_normal_at_0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    CHECK(std::exp(residual_log_density(0.22, 0.0, 0.22, 0.14)) ==
          Approx(std_normal_at_1 / 0.22 * std_normal_at_0 / 0.14).epsilon(1e-13));
    CHECK(residual_log_density(0.3, -0.1, 0.22, 0.14) == residual_log_density(-0.3, 0.1, 0.22, 0.14));
    CHECK(residual_log_density(0.3, std::nullopt, 0.22, 0.14) == Approx(normal_log_pdf(0.3, 0.22)).epsilon(1e-14));
}

TEST_CASE("point-mass record gives the residual density exactly") {
    const auto q0 = QoI{-8.3, 0.0, 4.1, -0.6, 0.2, 0.15};
    const auto probe = degenerate_record(0.0, 0.0);
    const auto h = forward::simulate(make_case(probe, 2.5, 4.9, 2.5, 67.5), {std::exp(-8.3), 4.1, -0.6},
                                     LikelihoodOptions{}.simulation);
    const double model_peak = std::log10(h.peak_discharge), model_width = std::log10(h.final_width);
    const auto record = degenerate_record(std::log10(6850.0), std::log10(93.0));
    const double exact =
        residual_log_density(record.log_peak - model_peak, *record.log_width - model_width, 0.2, 0.15);
    for (std::size_t k : {2u, 16u, 512u}) {
        const auto est = estimate_likelihood(q0, record, ResidualKind::gaussian, stochastic::RngStream(1, 2),
                                             fixed_draws(k));
        CHECK(est.log_value == Approx(exact).epsilon(1e-12));
        CHECK(est.relative_error == Approx(0.0).scale(1.0));
    }
    // Composition: posterior = prior + residual density for a single record.
    const auto post = log_posterior(q0, std::span(&record, 1), ResidualKind::gaussian, stochastic::RngStream(1, 2));
    CHECK(post.log_posterior == Approx(log_prior(q0, ResidualKind::gaussian) + exact).epsilon(1e-12));
}

TEST_CASE("discharge-only records use the discharge residual alone") {
    const auto q0 = QoI{-8.3, 0.0, 4.1, -0.6, 0.2, 0.15};
    const auto with = degenerate_record(std::log10(6850.0), std::log10(93.0));
    const auto without = degenerate_record(std::log10(6850.0), std::nullopt);
    const auto a = estimate_likelihood(q0, with, ResidualKind::gaussian, stochastic::RngStream(1, 2), fixed_draws(4));
    const auto b =
        estimate_likelihood(q0, without, ResidualKind::gaussian, stochastic::RngStream(1, 2), fixed_draws(4));
    const auto probe = forward::simulate(make_case(with, 2.5, 4.9, 2.5, 67.5), {std::exp(-8.3), 4.1, -0.6},
                                         LikelihoodOptions{}.simulation);
    CHECK(b.log_value == Approx(normal_log_pdf(with.log_peak - std::log10(probe.peak_discharge), 0.2)).epsilon(1e-12));
    CHECK(a.log_value != b.log_value);
    // The width sigma has no influence without an observed width.
    auto q1 = q0;
    q1.sigma_width = 0.5;
    CHECK(estimate_likelihood(q1, without, ResidualKind::gaussian, stochastic::RngStream(1, 2), fixed_draws(4))
              .log_value == b.log_value);
}

TEST_CASE("large residual widths flatten the likelihood") {
    const auto& rec = bundled().records[0];
    const QoI wide{-8.3, 0.5, 4.1, -0.6, 1e4, 1e4};
    const auto est = estimate_likelihood(wide, rec, ResidualKind::gaussian, stochastic::RngStream(3, 0), fixed_draws(64));
    CHECK(est.log_value == Approx(-std::log(2.0 * std::numbers::pi * 1e4 * 1e4)).epsilon(1e-9));
}

TEST_CASE("kernel density estimate matches an independent evaluation") {
    const auto& rec = bundled().records[0];
    const auto q = zero_noise_qoi();
    const std::size_t k = 256;
    const stochastic::RngStream rng(9, 1);
    const auto est = estimate_likelihood(q, rec, ResidualKind::zero_noise, rng, fixed_draws(k));

    std::vector<double> peak, width;
    for (std::size_t i = 0; i < k; ++i) {
        auto s = rng.substream(i);
        const auto o = draw_model_output(q, rec, s, LikelihoodOptions{}.simulation);
        peak.push_back(o.log_peak);
        width.push_back(o.log_width);
    }
    const auto sd = [](const std::vector<double>& x) {
        double m = 0.0, v = 0.0;
        for (double a : x) m += a;
        m /= x.size();
        for (double a : x) v += (a - m) * (a - m);
        return std::sqrt(v / (x.size() - 1));
    };
    // Two-dimensional normal-reference rule: h = sd * n^(-1/6).
    const double hq = std::max(1e-3, sd(peak) * std::pow(static_cast<double>(k), -1.0 / 6.0));
    const double hw = std::max(1e-3, sd(width) * std::pow(static_cast<double>(k), -1.0 / 6.0));
    double f = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        f += std::exp(normal_log_pdf(rec.log_peak - peak[i], hq) + normal_log_pdf(*rec.log_width - width[i], hw));
    }
    f /= static_cast<double>(k);
    CHECK(est.log_value == Approx(std::log(f)).epsilon(1e-10));
}

TEST_CASE("kernel bandwidth floor for degenerate outputs") {
    const auto record = degenerate_record(std::log10(6850.0), std::log10(93.0));
    const auto q = QoI{-8.3, 0.0, 4.1, -0.6, std::nullopt, std::nullopt};
    const auto probe = forward::simulate(make_case(record, 2.5, 4.9, 2.5, 67.5), {std::exp(-8.3), 4.1, -0.6},
                                         LikelihoodOptions{}.simulation);
    const double rq = record.log_peak - std::log10(probe.peak_discharge);
    const double rw = *record.log_width - std::log10(probe.final_width);
    const auto est = estimate_likelihood(q, record, ResidualKind::zero_noise, stochastic::RngStream(2, 0), fixed_draws(8));
    CHECK(est.log_value == Approx(normal_log_pdf(rq, 1e-3) + normal_log_pdf(rw, 1e-3)).epsilon(1e-10));
}

TEST_CASE("zero-noise rejects residual widths") {
    const auto& rec = bundled().records[0];
    CHECK_THROWS_AS(estimate_likelihood(gaussian_qoi(), rec, ResidualKind::zero_noise, stochastic::RngStream(0, 0)),
                    ConfigError);
    CHECK_THROWS_AS(log_prior(gaussian_qoi(), ResidualKind::zero_noise), ConfigError);
}

TEST_CASE("out-of-support posterior skips the likelihood") {
    auto q = gaussian_qoi();
    q.gamma_location = 6.0;
    const auto post = log_posterior(q, bundled().records, ResidualKind::gaussian, stochastic::RngStream(0, 0));
    CHECK(post.log_posterior == neg_inf);
    CHECK(post.records.empty());
}

TEST_CASE("posterior is deterministic and thread independent") {
    std::vector<ObservationRecord> few(bundled().records.begin(), bundled().records.begin() + 3);
    auto opt = fixed_draws(64);
    const auto a = log_posterior(gaussian_qoi(), few, ResidualKind::gaussian, stochastic::RngStream(5, 0), opt);
    opt.threads = 3;
    const auto b = log_posterior(gaussian_qoi(), few, ResidualKind::gaussian, stochastic::RngStream(5, 0), opt);
    CHECK(a.log_posterior == b.log_posterior);
    CHECK(std::isfinite(a.log_posterior));
}

TEST_CASE("adaptive draws reach the precision target") {
    const auto& rec = bundled().records[0];
    LikelihoodOptions opt;
    opt.max_draws = 1 << 14;
    const auto est = estimate_likelihood(gaussian_qoi(), rec, ResidualKind::gaussian, stochastic::RngStream(4, 0), opt);
    CHECK(est.precise);
    CHECK(est.relative_error <= 0.01);
    CHECK(est.draws >= 512);
    CHECK((est.draws & (est.draws - 1)) == 0);
}

TEST_CASE("small-K estimates average to the large-K reference") {
    const auto& rec = bundled().records[0];
    const auto q = gaussian_qoi(-8.37, 0.5);
    const auto reference =
        estimate_likelihood(q, rec, ResidualKind::gaussian, stochastic::RngStream(100, 0), fixed_draws(8192));
    const int m = 24;
    std::vector<double> values;
    for (int r = 0; r < m; ++r) {
        const auto e = estimate_likelihood(q, rec, ResidualKind::gaussian, stochastic::RngStream(200, r), fixed_draws(256));
        values.push_back(std::exp(e.log_value));
    }
    double mean = 0.0, var = 0.0;
    for (double v : values) mean += v;
    mean /= m;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= m - 1;
    const double ref = std::exp(reference.log_value);
    const double se = std::sqrt(var / m + std::pow(ref * reference.relative_error, 2));
    CHECK(std::abs(mean - ref) <= 4.0 * se);
}

TEST_CASE("doubling K does not increase the estimator spread") {
    const auto& rec = bundled().records[0];
    const auto q = gaussian_qoi(-8.37, 0.5);
    const auto spread = [&](std::size_t k) {
        std::vector<double> v;
        for (int r = 0; r < 16; ++r) {
            v.push_back(std::exp(
                estimate_likelihood(q, rec, ResidualKind::gaussian, stochastic::RngStream(300 + k, r), fixed_draws(k))
                    .log_value));
        }
        double m = 0.0, s = 0.0;
        for (double x : v) m += x;
        m /= v.size();
        for (double x : v) s += (x - m) * (x - m);
        return s / (v.size() - 1);
    };
    // Allow sampling noise of the variance estimate itself (16 repetitions).
    CHECK(spread(256) <= 1.5 * spread(128));
}

}  // TEST_SUITE
