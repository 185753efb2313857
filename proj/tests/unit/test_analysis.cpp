#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "breachcast/analysis.hpp"
#include "breachcast/error.hpp"
#include "breachcast/inference.hpp"

using namespace breachcast;
using namespace breachcast::analysis;
using doctest::Approx;

namespace {

inference::ObservationRecord point_record(double height) {
    using stochastic::Constant;
    return {"point", {height, 22.2e6, 0.8 * height, 0.9 * height, 0.2},
            {Constant{2.5}, Constant{4.9}, Constant{2.5}, Constant{67.5}}, 0.0, 0.0};
}

// Deterministic transport law: gamma_scale 0 removes the aleatory spread.
inference::QoI fixed_law(std::optional<double> sigma_discharge = std::nullopt,
                         std::optional<double> sigma_width = std::nullopt) {
    return {-8.3, 0.0, 4.1, -0.6, sigma_discharge, sigma_width};
}

GofRecord synthetic(std::vector<double> model, double observed, std::vector<double> noise) {
    GofRecord g;
    g.name = "synthetic";
    g.model_peak = std::move(model);
    g.noise_peak = std::move(noise);
    g.observed_peak = observed;
    return g;
}

std::vector<double> normal_sample(std::size_t n, double sd, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> x(n);
    for (auto& v : x) v = d(gen);
    return x;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("mode of identical draws has zero bootstrap error") {
    PosteriorSamples s;
    s.names = inference::parameter_names(inference::ResidualKind::zero_noise);
    s.kind = inference::ResidualKind::zero_noise;
    s.draws.assign(50, {-8.0, 0.5, 4.0, -0.6});
    s.log_posterior.assign(50, -3.0);
    stochastic::RngStream rng(1, 0);
    const auto m = mode_estimate(s, 200, rng);
    CHECK(m.values == s.draws.front());
    for (double e : m.standard_errors) CHECK(e == 0.0);
}

TEST_CASE("mode ignores row order") {
    PosteriorSamples s;
    s.kind = inference::ResidualKind::zero_noise;
    s.names = inference::parameter_names(s.kind);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> d;
    for (int i = 0; i < 40; ++i) {
        s.draws.push_back({d(gen), d(gen), d(gen), d(gen)});
        s.log_posterior.push_back(std::round(d(gen) * 2.0));  // ties on purpose
    }
    stochastic::RngStream a(5, 0);
    const auto first = mode_estimate(s, 200, a);

    std::vector<std::size_t> perm(s.draws.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    PosteriorSamples t = s;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        t.draws[i] = s.draws[perm[i]];
        t.log_posterior[i] = s.log_posterior[perm[i]];
    }
    stochastic::RngStream b(5, 0);
    const auto second = mode_estimate(t, 200, b);
    CHECK(first.values == second.values);
    CHECK(t.draws[second.index] == second.values);
}

TEST_CASE("mode needs log posterior values") {
    PosteriorSamples s;
    s.kind = inference::ResidualKind::zero_noise;
    s.names = inference::parameter_names(s.kind);
    s.draws.assign(5, {0.0, 0.0, 0.0, 0.0});
    stochastic::RngStream rng(1, 0);
    CHECK_THROWS_AS(mode_estimate(s, 200, rng), DomainError);
    s.draws.clear();
    CHECK_THROWS_AS(mode_estimate(s, 200, rng), DomainError);
}

TEST_CASE("prediction interval") {
    CHECK(prediction_interval(std::vector<double>(100, 0.7)) == 0.0);
    const auto x = normal_sample(100000, 1.0, 11);
    CHECK(prediction_interval(x) == Approx(2.0).epsilon(0.025));
    CHECK_THROWS_AS(prediction_interval(std::vector<double>(29, 1.0)), DomainError);
}

TEST_CASE("bootstrap bands") {
    stochastic::RngStream rng(2, 0);
    const Statistic avg = [](std::span<const double> x) { return mean(x); };

    const auto flat = bootstrap_ci(avg, std::vector<double>(100, 3.0), 200, rng);
    CHECK(flat.q05 == 3.0);
    CHECK(flat.q95 == 3.0);

    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(10000);
    for (auto& v : x) v = u(gen);
    const auto b = bootstrap_ci(avg, x, 2000, rng);
    CHECK(b.median == Approx(0.5).epsilon(0.01));
    // Central limit band of a mean of U(0,1) draws.
    const double clt = 2.0 * 1.6448536 / std::sqrt(12.0 * 1e4);
    CHECK((b.q95 - b.q05) == Approx(clt).epsilon(0.1));
    CHECK(b.q05 <= b.q25);
    CHECK(b.q25 <= b.median);
    CHECK(b.median <= b.q75);
    CHECK(b.q75 <= b.q95);

    CHECK_THROWS_AS(bootstrap_ci(avg, x, 199, rng), DomainError);
    CHECK_THROWS_AS(bootstrap_ci(avg, std::vector<double>{}, 500, rng), DomainError);
}

TEST_CASE("moments and quantiles") {
    const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> y{2.0, 4.0, 6.0, 8.0};
    CHECK(mean(x) == 2.5);
    CHECK(correlation(x, y) == Approx(1.0));
    CHECK(covariance(x, y) == Approx(2.0 * variance(x)));
    CHECK(empirical_quantile(x, 0.5) == Approx(2.5));
    CHECK(empirical_quantile(x, 0.0) == 1.0);
    CHECK(empirical_quantile(x, 1.0) == 4.0);
    CHECK_THROWS_AS(correlation(x, std::vector<double>(4, 1.0)), DomainError);
}

TEST_CASE("variance decomposition") {
    // Zero-noise model: all the residual variance is model error.
    auto g = synthetic({1.0, 2.0, 4.0, 7.0}, 3.0, {0.0, 0.0, 0.0, 0.0});
    const std::vector<GofRecord> gof{g};
    const auto v = variance_decomposition(gof, Component::peak);
    CHECK(v.noise == 0.0);
    CHECK(v.cross == 0.0);
    CHECK(v.residual == Approx(v.model_error));

    // r = eps - (y - model), so Var[r] = Var[model error] + Var[noise] - 2 Cov.
    const auto noise = normal_sample(4, 0.3, 4);
    auto h = synthetic({1.0, 2.0, 4.0, 7.0}, 3.0, noise);
    const std::vector<GofRecord> gof2{h};
    const auto w = variance_decomposition(gof2, Component::peak);
    CHECK(w.residual == Approx(w.model_error + w.noise - 2.0 * w.cross));
}

TEST_CASE("percentile sequence") {
    // A model that overpredicts every record puts no mass at r <= 0.
    std::vector<GofRecord> gof;
    for (int i = 0; i < 5; ++i) gof.push_back(synthetic(std::vector<double>(50, 4.0 + i), 1.0, std::vector<double>(50, 0.0)));
    stochastic::RngStream rng(3, 0);
    const auto seq = percentile_sequence(gof, Component::peak, 200, rng);
    REQUIRE(seq.size() == 5);
    for (const auto& p : seq) CHECK(p.percentile == 0.0);

    gof.push_back(synthetic({0.0, 1.0, 2.0, 3.0}, 1.5, {0.0, 0.0, 0.0, 0.0}));
    const auto sorted = percentile_sequence(gof, Component::peak, 200, rng);
    CHECK(std::is_sorted(sorted.begin(), sorted.end(),
                         [](const auto& a, const auto& b) { return a.percentile < b.percentile; }));
    CHECK(sorted.back().percentile == 0.5);
    CHECK_THROWS_AS(percentile_sequence(std::vector<GofRecord>{}, Component::peak, 200, rng), DomainError);
}

TEST_CASE("percentiles are invariant under a monotone transform") {
    auto g = synthetic(normal_sample(200, 1.0, 9), 0.3, std::vector<double>(200, 0.0));
    const double before = g.percentile_peak();
    for (auto& v : g.model_peak) v = v * v * v + 2.0 * v;
    g.observed_peak = 0.3 * 0.3 * 0.3 + 0.6;
    CHECK(g.percentile_peak() == before);
}

TEST_CASE("gof of a deterministic model matches its own output") {
    // Observations equal the model output, so residuals vanish under zero noise.
    std::vector<inference::ObservationRecord> records{point_record(20.0), point_record(34.1)};
    const auto q = fixed_law();
    stochastic::RngStream seed(4, 0);
    for (auto& r : records) {
        stochastic::RngStream s(1, 0);
        const auto out = inference::draw_model_output(q, r, s, inference::LikelihoodOptions{}.simulation);
        r.log_peak = out.log_peak;
        r.log_width = out.log_width;
    }
    const auto gof = gof_evaluate(q, records, inference::ResidualKind::zero_noise, seed, 10);
    for (const auto& g : gof) {
        CHECK(g.failures == 0);
        for (double r : g.residual_peak()) CHECK(r == Approx(0.0).scale(1.0).epsilon(1e-12));
        for (double r : g.residual_width()) CHECK(r == Approx(0.0).scale(1.0).epsilon(1e-12));
    }

    // The gaussian model adds fresh noise with the stated spread and zero mean.
    const auto noisy = gof_evaluate(fixed_law(0.2, 0.1), records, inference::ResidualKind::gaussian, seed, 2000);
    stochastic::RngStream boot(8, 0);
    const auto peak = summarize(noisy, Component::peak, 500, boot);
    CHECK(std::abs(peak.mean_residual) <= 3.0 * peak.mean_residual_error + 0.2 * 3.0 / std::sqrt(4000.0));
    CHECK(peak.interval95 == Approx(0.4).epsilon(0.05));
    CHECK(peak.variance.model_error == Approx(0.0).scale(1.0).epsilon(1e-20));
}

TEST_CASE("gof is reproducible and thread independent") {
    std::vector<inference::ObservationRecord> records{point_record(20.0), point_record(30.0)};
    records[0].log_peak = 2.5;
    records[1].log_peak = 3.0;
    records[1].log_width = std::nullopt;
    inference::QoI q{-8.3, 0.4, 4.1, -0.6, 0.2, 0.1};
    stochastic::RngStream rng(6, 0);
    const auto a = gof_evaluate(q, records, inference::ResidualKind::gaussian, rng, 20, 1);
    const auto b = gof_evaluate(q, records, inference::ResidualKind::gaussian, rng, 20, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].model_peak == b[i].model_peak);
        CHECK(a[i].noise_peak == b[i].noise_peak);
        CHECK(a[i].model_width == b[i].model_width);
    }
    CHECK(a[1].model_width.empty());
    CHECK_FALSE(a[1].percentile_width().has_value());
    CHECK_THROWS_AS(gof_evaluate(q, records, inference::ResidualKind::gaussian, rng, 1), DomainError);
}

TEST_CASE("residual correlation") {
    GofRecord g = synthetic({1.0, 2.0, 3.0, 4.0}, 0.0, {0.0, 0.0, 0.0, 0.0});
    g.model_width = {2.0, 4.0, 6.0, 8.0};
    g.noise_width = {0.0, 0.0, 0.0, 0.0};
    g.observed_width = 1.0;
    const std::vector<GofRecord> gof{g};
    CHECK(residual_correlation(gof) == Approx(1.0));
}

}  // TEST_SUITE
