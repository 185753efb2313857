#include <doctest.h>

#include <cmath>
#include <numbers>
#include <map>
#include <random>

#include "breachcast/error.hpp"
#include "breachcast/mcmc.hpp"

using namespace breachcast;
using namespace breachcast::mcmc;
using doctest::Approx;

namespace {

std::vector<std::string> names(std::size_t d) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < d; ++i) out.push_back("x" + std::to_string(i));
    return out;
}

// Archive of `chains` x `gens` generations filled by `value(gen, chain, param)`.
template <class F>
ChainArchive synthetic(std::size_t chains, std::size_t gens, std::size_t d, F&& value) {
    ChainArchive a(names(d), chains);
    std::vector<double> states(chains * d), lp(chains, 0.0);
    std::vector<std::uint8_t> acc(chains, 1);
    for (std::size_t g = 0; g < gens; ++g) {
        for (std::size_t c = 0; c < chains; ++c)
            for (std::size_t p = 0; p < d; ++p) states[c * d + p] = value(g, c, p);
        a.append(states, lp, acc);
    }
    return a;
}

ChainArchive white_noise(std::size_t chains, std::size_t gens, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    return synthetic(chains, gens, d, [&](std::size_t, std::size_t, std::size_t) { return n(gen); });
}

// Correlated 2-D Gaussian target.
struct Gaussian2 {
    double mx = 1.0, my = -2.0, sx = 2.0, sy = 0.5, rho = 0.7;
    double operator()(std::span<const double> x, const stochastic::RngStream&) const {
        const double zx = (x[0] - mx) / sx, zy = (x[1] - my) / sy;
        return -0.5 * (zx * zx - 2.0 * rho * zx * zy + zy * zy) / (1.0 - rho * rho);
    }
};

std::vector<double> broad_start(stochastic::RngStream& rng) {
    return {rng.standard_normal() * 5.0, rng.standard_normal() * 5.0};
}

SamplerConfig config_for(std::size_t chains, std::size_t iterations, std::size_t d) {
    SamplerConfig c;
    c.chains = chains;
    c.iterations = iterations;
    c.seed = 17;
    c.jitter.assign(d, 1e-4);
    return c;
}

bool same_archive(const ChainArchive& a, const ChainArchive& b) {
    if (a.generations() != b.generations() || a.chains() != b.chains()) return false;
    for (std::size_t g = 0; g < a.generations(); ++g)
        for (std::size_t c = 0; c < a.chains(); ++c) {
            if (a.log_posterior(g, c) != b.log_posterior(g, c) || a.accepted(g, c) != b.accepted(g, c)) return false;
            for (std::size_t p = 0; p < a.dimension(); ++p)
                if (a.value(g, c, p) != b.value(g, c, p)) return false;
        }
    return true;
}

}  // namespace

TEST_SUITE("mcmc") {

TEST_CASE("jump scale") {
    CHECK(default_jump_scale(6) == Approx(2.38 / std::sqrt(12.0)).epsilon(1e-15));
    CHECK(default_jump_scale(6) == Approx(0.6870).epsilon(1e-4));
    CHECK(default_jump_scale(4) == Approx(0.8415).epsilon(1e-4));
}

TEST_CASE("proposal") {
    stochastic::RngStream rng(1, 0);
    const std::vector<double> same{1.0, 2.0, 1.0, 2.0, 1.0, 2.0};
    const std::vector<double> zero{0.0, 0.0};
    CHECK(propose(1, same, 3, 0.8, zero, rng) == std::vector<double>{1.0, 2.0});
    // With three chains the difference uses the two others, in either order.
    const std::vector<double> states{0.0, 0.0, 1.0, 1.0, 3.0, 5.0};
    const auto p = propose(0, states, 3, 0.5, zero, rng);
    const bool forward = p == std::vector<double>{1.0, 2.0};
    const bool backward = p == std::vector<double>{-1.0, -2.0};
    CHECK((forward || backward));
    CHECK_THROWS_AS(propose(0, std::vector<double>{1, 2, 3, 4}, 2, 0.5, zero, rng), ConfigError);
}

TEST_CASE("proposal partners are distinct and uniform") {
    stochastic::RngStream rng(2, 0);
    const std::size_t n = 5;
    std::vector<double> states;
    for (std::size_t c = 0; c < n; ++c) states.push_back(std::pow(10.0, static_cast<double>(c)));
    const std::vector<double> zero{0.0};
    std::map<double, int> counts;
    for (int i = 0; i < 40000; ++i) counts[propose(0, states, n, 1.0, zero, rng)[0] - 1.0]++;
    // 4 * 3 ordered pairs from chains 1..4.
    CHECK(counts.size() == 12);
    for (const auto& [diff, hits] : counts) CHECK(hits == doctest::Approx(40000.0 / 12).epsilon(0.08));
}

TEST_CASE("metropolis decision") {
    stochastic::RngStream rng(3, 0);
    for (int i = 0; i < 1000; ++i) {
        CHECK(metropolis_accept(-3.0, -3.0, rng));
        CHECK(metropolis_accept(-3.0, -1.0, rng));
        CHECK_FALSE(metropolis_accept(-3.0, -std::numeric_limits<double>::infinity(), rng));
    }
    int hits = 0;
    const int trials = 200000;
    for (int i = 0; i < trials; ++i) hits += metropolis_accept(0.0, -std::numbers::ln2, rng) ? 1 : 0;
    CHECK(static_cast<double>(hits) / trials == Approx(0.5).epsilon(0.01));
}

TEST_CASE("rejected steps repeat the previous state") {
    ChainArchive a(names(2), 6);
    run(Gaussian2{}, broad_start, config_for(6, 200, 2), a);
    std::size_t rejected = 0;
    for (std::size_t g = 1; g < a.generations(); ++g)
        for (std::size_t c = 0; c < 6; ++c) {
            if (a.accepted(g, c)) continue;
            ++rejected;
            CHECK(a.value(g, c, 0) == a.value(g - 1, c, 0));
            CHECK(a.value(g, c, 1) == a.value(g - 1, c, 1));
            CHECK(a.log_posterior(g, c) == a.log_posterior(g - 1, c));
        }
    CHECK(rejected > 0);
}

TEST_CASE("a constant offset of the target changes nothing") {
    ChainArchive a(names(2), 6), b(names(2), 6);
    run(Gaussian2{}, broad_start, config_for(6, 150, 2), a);
    const Gaussian2 g;
    run([&](std::span<const double> x, const stochastic::RngStream& r) { return g(x, r) + 123.25; }, broad_start,
        config_for(6, 150, 2), b);
    for (std::size_t gen = 0; gen < a.generations(); ++gen)
        for (std::size_t c = 0; c < 6; ++c) {
            CHECK(a.accepted(gen, c) == b.accepted(gen, c));
            CHECK(a.value(gen, c, 0) == b.value(gen, c, 0));
        }
}

TEST_CASE("identical starts without jitter stay identical") {
    auto cfg = config_for(4, 50, 2);
    cfg.jitter.assign(2, 0.0);
    ChainArchive a(names(2), 4);
    run(Gaussian2{}, [](stochastic::RngStream&) { return std::vector<double>{0.3, -1.0}; }, cfg, a);
    for (std::size_t g = 0; g < a.generations(); ++g)
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(a.value(g, c, 0) == 0.3);
            CHECK(a.value(g, c, 1) == -1.0);
        }
}

TEST_CASE("runs are reproducible, thread independent and resumable") {
    auto cfg = config_for(6, 120, 2);
    ChainArchive a(names(2), 6), b(names(2), 6), c(names(2), 6);
    run(Gaussian2{}, broad_start, cfg, a);
    cfg.threads = 3;
    run(Gaussian2{}, broad_start, cfg, b);
    CHECK(same_archive(a, b));
    cfg.threads = 1;
    cfg.iterations = 60;
    run(Gaussian2{}, broad_start, cfg, c);
    cfg.iterations = 120;
    run(Gaussian2{}, broad_start, cfg, c);
    CHECK(same_archive(a, c));
}

TEST_CASE("checkpoints fire and configuration errors are caught") {
    auto cfg = config_for(6, 120, 2);
    cfg.checkpoint_every = 50;
    int calls = 0;
    ChainArchive a(names(2), 6);
    run(Gaussian2{}, broad_start, cfg, a, [&](const ChainArchive&) { ++calls; });
    CHECK(calls == 3);
    ChainArchive two(names(2), 2);
    auto bad = config_for(2, 10, 2);
    CHECK_THROWS_AS(run(Gaussian2{}, broad_start, bad, two), ConfigError);
    ChainArchive wrong(names(2), 6);
    auto mismatch = config_for(6, 10, 2);
    mismatch.jitter.assign(3, 0.0);
    CHECK_THROWS_AS(run(Gaussian2{}, broad_start, mismatch, wrong), ConfigError);
}

TEST_CASE("sampler recovers a correlated two-dimensional Gaussian") {
    const Gaussian2 target;
    ChainArchive a(names(2), 8);
    run(target, broad_start, config_for(8, 7000, 2), a);
    const std::size_t burn = 500;
    double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t g = burn + 1; g < a.generations(); ++g)
        for (std::size_t c = 0; c < 8; ++c) {
            const double x = a.value(g, c, 0), y = a.value(g, c, 1);
            n += 1;
            sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
        }
    REQUIRE(n >= 5e4);
    const double mx = sx / n, my = sy / n;
    const double vx = sxx / n - mx * mx, vy = syy / n - my * my, cxy = sxy / n - mx * my;
    CHECK(std::abs(mx - target.mx) <= 0.05 * target.sx);
    CHECK(std::abs(my - target.my) <= 0.05 * target.sy);
    CHECK(vx == Approx(target.sx * target.sx).epsilon(0.1));
    CHECK(vy == Approx(target.sy * target.sy).epsilon(0.1));
    CHECK(cxy == Approx(target.rho * target.sx * target.sy).epsilon(0.1));
    const double rate = acceptance_rate(a);
    CHECK(rate > 0.1);
    CHECK(rate < 0.9);
}

TEST_CASE("stopping rule ends the run once enough effective samples exist") {
    auto cfg = config_for(6, 5000, 2);
    cfg.min_effective_samples = 300.0;
    ChainArchive a(names(2), 6);
    run(Gaussian2{}, broad_start, cfg, a);
    CHECK(a.generations() < 5001);
    CHECK_FALSE(a.budget_exhausted);
    cfg.min_effective_samples = 1e9;
    cfg.iterations = 100;
    ChainArchive b(names(2), 6);
    run(Gaussian2{}, broad_start, cfg, b);
    CHECK(b.budget_exhausted);
}

TEST_CASE("PSRF on independent chains") {
    const auto a = white_noise(12, 4000, 3, 5);
    const auto r = psrf(a, 0, a.generations());
    for (double u : r.univariate) {
        CHECK(u >= 0.995);
        CHECK(u <= 1.05);
    }
    CHECK(r.multivariate >= 0.995);
    CHECK(r.multivariate <= 1.05);
}

TEST_CASE("PSRF flags separated chains") {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto a = synthetic(2, 500, 1, [&](std::size_t, std::size_t c, std::size_t) { return n(gen) + 10.0 * c; });
    CHECK(psrf(a, 0, 500).univariate[0] > 10.0);
    CHECK(psrf(a, 0, 500).multivariate > 5.0);
    CHECK_THROWS_AS(psrf(a, 3, 4), DomainError);
    CHECK_THROWS_AS(psrf(a, 0, 9), DomainError);
}

TEST_CASE("univariate PSRF is affine invariant") {
    std::mt19937_64 gen(7);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> raw(4 * 300);
    for (auto& v : raw) v = n(gen);
    const auto a = synthetic(4, 300, 1, [&](std::size_t g, std::size_t c, std::size_t) { return raw[c * 300 + g] + 0.3 * c; });
    const auto b = synthetic(4, 300, 1,
                             [&](std::size_t g, std::size_t c, std::size_t) { return -7.0 * (raw[c * 300 + g] + 0.3 * c) + 42.0; });
    CHECK(psrf(a, 0, 300).univariate[0] == Approx(psrf(b, 0, 300).univariate[0]).epsilon(1e-10));
}

TEST_CASE("effective samples of white noise") {
    const auto a = white_noise(12, 3001, 2, 8);
    const std::size_t burn = 1000;
    const auto e = effective_samples(a, burn);
    for (double c : e.count) CHECK(c == Approx(12.0 * 2000.0).epsilon(0.1));
    CHECK(e.thinning_lag <= 2);
}

TEST_CASE("effective samples of AR(1) chains") {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> n(0.0, 1.0);
    const double rho = 0.5;
    std::vector<double> last(12, 0.0);
    const auto a = synthetic(12, 5001, 1, [&](std::size_t g, std::size_t c, std::size_t) {
        last[c] = g == 0 ? n(gen) / std::sqrt(1 - rho * rho) : rho * last[c] + n(gen);
        return last[c];
    });
    const auto e = effective_samples(a, 0);
    CHECK(e.denominator[0] == Approx((1 + rho) / (1 - rho)).epsilon(0.15));
    CHECK(e.thinning_lag == static_cast<std::size_t>(std::ceil(e.denominator[0])));
}

TEST_CASE("burn-in of stationary chains is the first window") {
    const auto a = white_noise(8, 600, 2, 10);
    const auto b = detect_burn_in(a, 1.1);
    CHECK(b.converged);
    CHECK(b.generations <= 30);
}

TEST_CASE("burn-in waits for dispersed chains to mix") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> n(0.0, 1.0);
    // Chains start spread out and relax geometrically to a common distribution.
    const auto a = synthetic(8, 1001, 1, [&](std::size_t g, std::size_t c, std::size_t) {
        return 20.0 * (c - 3.5) * std::exp(-static_cast<double>(g) / 40.0) + n(gen);
    });
    const auto b = detect_burn_in(a, 1.1, 10);
    CHECK(b.converged);
    CHECK(b.generations > 100);
    CHECK(b.generations < 600);
}

TEST_CASE("thinning pools chains in order") {
    const auto a = synthetic(3, 11, 1, [](std::size_t g, std::size_t c, std::size_t) { return 100.0 * c + g; });
    const auto t = thin(a, 4, 3);
    // Generations 5, 8 of chain 0, then chain 1, then chain 2.
    std::vector<double> got;
    for (const auto& row : t.draws) got.push_back(row[0]);
    CHECK(got == std::vector<double>{5, 8, 105, 108, 205, 208});
    CHECK_THROWS_AS(thin(a, 4, 0), DomainError);
}

TEST_CASE("diagnose uses the detected burn-in when converged") {
    ChainArchive a(names(2), 8);
    run(Gaussian2{}, broad_start, config_for(8, 1500, 2), a);
    const auto r = diagnose(a, 1.1);
    if (r.burn_in.converged) CHECK(r.analysis_start == r.burn_in.generations);
    else CHECK(r.analysis_start == (a.generations() - 1) / 2);
    CHECK(r.chain_acceptance.size() == 8);
    CHECK(r.acceptance == Approx(acceptance_rate(a)));
    CHECK(r.final_psrf.multivariate < 1.1);
    CHECK(r.effective.thinning_lag >= 1);
}

}  // TEST_SUITE
