#include "breachcast/stochastic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "breachcast/error.hpp"

namespace breachcast::stochastic {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double inv_sqrt_2pi = 0.39894228040143267794;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

double phi(double z) { return 0.5 * boost::math::erfc(-z / std::numbers::sqrt2); }

double phi_inv(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

double normal_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return inv_sqrt_2pi / sd * std::exp(-0.5 * z * z);
}

double normal_log_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) + std::log(inv_sqrt_2pi);
}

bool finite_all(std::initializer_list<double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

constexpr std::size_t max_rejections = 1'000'000;

}  // namespace

void validate(const DistSpec& spec) {
    std::visit(overloaded{
                   [](const Constant& d) {
                       if (!std::isfinite(d.value)) throw DomainError("point mass: non-finite value");
                   },
                   [](const Normal& d) {
                       if (!finite_all({d.mean, d.sd}) || !(d.sd > 0.0))
                           throw DomainError("normal: need finite mean and positive sd");
                   },
                   [](const LogNormal& d) {
                       if (!finite_all({d.location, d.scale}) || !(d.scale > 0.0))
                           throw DomainError("lognormal: need finite location and positive scale");
                   },
                   [](const Uniform& d) {
                       if (!finite_all({d.lo, d.hi}) || !(d.lo < d.hi)) throw DomainError("uniform: need lo < hi");
                   },
                   [](const TruncatedNormal& d) {
                       if (!finite_all({d.mean, d.sd, d.lo, d.hi}) || !(d.sd > 0.0) || !(d.lo < d.hi))
                           throw DomainError("truncated normal: need positive sd and lo < hi");
                   },
               },
               spec);
}

void validate(const BivariateNormal& spec) {
    if (!finite_all({spec.mean[0], spec.mean[1], spec.sd[0], spec.sd[1], spec.correlation}) || !(spec.sd[0] > 0.0) ||
        !(spec.sd[1] > 0.0) || !(std::abs(spec.correlation) < 1.0)) {
        throw DomainError("bivariate normal: need positive sds and |correlation| < 1");
    }
}

bool is_point_mass(const DistSpec& spec) { return std::holds_alternative<Constant>(spec); }

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

RngStream RngStream::substream(std::uint64_t key) const {
    return RngStream(seed_, splitmix64(stream_ ^ splitmix64(key + 0x632be59bd9b4e019ULL)));
}

double RngStream::uniform() {
    // 53 random bits centred in their cell, so 0 and 1 are never returned.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::standard_normal() { return phi_inv(uniform()); }

std::size_t RngStream::index(std::size_t n) {
    if (n == 0) throw DomainError("RngStream::index: empty range");
    // Rejection on the top of the range keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % n);
}

double sample(const DistSpec& spec, RngStream& rng) {
    validate(spec);
    return std::visit(overloaded{
                          [](const Constant& d) { return d.value; },
                          [&rng](const Normal& d) { return d.mean + d.sd * rng.standard_normal(); },
                          [&rng](const LogNormal& d) { return std::exp(d.location + d.scale * rng.standard_normal()); },
                          [&rng](const Uniform& d) { return d.lo + (d.hi - d.lo) * rng.uniform(); },
                          [&rng](const TruncatedNormal& d) {
                              for (std::size_t i = 0; i < max_rejections; ++i) {
                                  const double x = d.mean + d.sd * rng.standard_normal();
                                  if (x >= d.lo && x <= d.hi) return x;
                              }
                              throw DomainError("truncated normal: rejection sampling found no draw inside bounds");
                          },
                      },
                      spec);
}

std::vector<double> sample(const DistSpec& spec, RngStream& rng, std::size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) x = sample(spec, rng);
    return out;
}

double density(const DistSpec& spec, double x) {
    return std::visit(overloaded{
                          [](const Constant&) -> double { throw DomainError("point mass has no density"); },
                          [x](const Normal& d) { return normal_pdf(x, d.mean, d.sd); },
                          [x](const LogNormal& d) {
                              if (!(x > 0.0)) return 0.0;
                              return normal_pdf(std::log(x), d.location, d.scale) / x;
                          },
                          [x](const Uniform& d) { return x >= d.lo && x <= d.hi ? 1.0 / (d.hi - d.lo) : 0.0; },
                          [x](const TruncatedNormal& d) {
                              if (x < d.lo || x > d.hi) return 0.0;
                              const double mass = phi((d.hi - d.mean) / d.sd) - phi((d.lo - d.mean) / d.sd);
                              return normal_pdf(x, d.mean, d.sd) / mass;
                          },
                      },
                      spec);
}

double log_density(const DistSpec& spec, double x) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    return std::visit(overloaded{
                          [](const Constant&) -> double { throw DomainError("point mass has no density"); },
                          [x](const Normal& d) { return normal_log_pdf(x, d.mean, d.sd); },
                          [x](const LogNormal& d) {
                              if (!(x > 0.0)) return neg_inf;
                              const double lx = std::log(x);
                              return normal_log_pdf(lx, d.location, d.scale) - lx;
                          },
                          [x](const Uniform& d) { return x >= d.lo && x <= d.hi ? -std::log(d.hi - d.lo) : neg_inf; },
                          [x](const TruncatedNormal& d) {
                              if (x < d.lo || x > d.hi) return neg_inf;
                              const double mass = phi((d.hi - d.mean) / d.sd) - phi((d.lo - d.mean) / d.sd);
                              return normal_log_pdf(x, d.mean, d.sd) - std::log(mass);
                          },
                      },
                      spec);
}

double log_density(const BivariateNormal& s, double x, double y) {
    const double zx = (x - s.mean[0]) / s.sd[0];
    const double zy = (y - s.mean[1]) / s.sd[1];
    const double one_minus = 1.0 - s.correlation * s.correlation;
    const double quad = (zx * zx - 2.0 * s.correlation * zx * zy + zy * zy) / one_minus;
    return -0.5 * quad - std::log(2.0 * std::numbers::pi * s.sd[0] * s.sd[1] * std::sqrt(one_minus));
}

double density(const BivariateNormal& s, double x, double y) { return std::exp(log_density(s, x, y)); }

double cdf(const DistSpec& spec, double x) {
    return std::visit(overloaded{
                          [x](const Constant& d) { return x >= d.value ? 1.0 : 0.0; },
                          [x](const Normal& d) { return phi((x - d.mean) / d.sd); },
                          [x](const LogNormal& d) { return x > 0.0 ? phi((std::log(x) - d.location) / d.scale) : 0.0; },
                          [x](const Uniform& d) { return std::clamp((x - d.lo) / (d.hi - d.lo), 0.0, 1.0); },
                          [x](const TruncatedNormal& d) {
                              if (x <= d.lo) return 0.0;
                              if (x >= d.hi) return 1.0;
                              const double a = phi((d.lo - d.mean) / d.sd);
                              const double b = phi((d.hi - d.mean) / d.sd);
                              return (phi((x - d.mean) / d.sd) - a) / (b - a);
                          },
                      },
                      spec);
}

double quantile(const DistSpec& spec, double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: probability must lie in (0, 1)");
    return std::visit(overloaded{
                          [](const Constant& d) { return d.value; },
                          [p](const Normal& d) { return d.mean + d.sd * phi_inv(p); },
                          [p](const LogNormal& d) { return std::exp(d.location + d.scale * phi_inv(p)); },
                          [p](const Uniform& d) { return d.lo + (d.hi - d.lo) * p; },
                          [p](const TruncatedNormal& d) {
                              const double a = phi((d.lo - d.mean) / d.sd);
                              const double b = phi((d.hi - d.mean) / d.sd);
                              return std::clamp(d.mean + d.sd * phi_inv(a + p * (b - a)), d.lo, d.hi);
                          },
                      },
                      spec);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_number(std::string_view text, std::string_view context) {
    const auto t = trim(text);
    double value = 0.0;
    const auto* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (t.empty() || ec != std::errc() || ptr != end) {
        throw ParseError("distribution '" + std::string(context) + "': invalid number '" + std::string(t) + "'");
    }
    return value;
}

std::string format_number(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

DistSpec parse_distribution(std::string_view text) {
    const auto t = trim(text);
    if (t.empty()) throw ParseError("distribution: empty text");
    const auto open = t.find('(');
    if (open == std::string_view::npos) {
        DistSpec spec = Constant{parse_number(t, t)};
        validate(spec);
        return spec;
    }
    if (t.back() != ')') throw ParseError("distribution '" + std::string(t) + "': missing closing parenthesis");
    const auto name = trim(t.substr(0, open));
    const auto body = t.substr(open + 1, t.size() - open - 2);
    std::vector<double> args;
    std::size_t start = 0;
    for (;;) {
        const auto comma = body.find(',', start);
        args.push_back(parse_number(body.substr(start, comma - start), t));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    const auto expect = [&](std::size_t n) {
        if (args.size() != n) {
            std::ostringstream msg;
            msg << "distribution '" << t << "': expected " << n << " arguments, got " << args.size();
            throw ParseError(msg.str());
        }
    };
    DistSpec spec;
    if (name == "N") {
        expect(2);
        spec = Normal{args[0], args[1]};
    } else if (name == "LN") {
        expect(2);
        spec = LogNormal{args[0], args[1]};
    } else if (name == "U") {
        expect(2);
        spec = Uniform{args[0], args[1]};
    } else if (name == "TN") {
        expect(4);
        spec = TruncatedNormal{args[0], args[1], args[2], args[3]};
    } else {
        throw ParseError("distribution '" + std::string(t) + "': unknown family '" + std::string(name) + "'");
    }
    validate(spec);
    return spec;
}

std::string format_distribution(const DistSpec& spec) {
    const auto f = format_number;
    return std::visit(overloaded{
                          [&](const Constant& d) { return f(d.value); },
                          [&](const Normal& d) { return "N(" + f(d.mean) + "," + f(d.sd) + ")"; },
                          [&](const LogNormal& d) { return "LN(" + f(d.location) + "," + f(d.scale) + ")"; },
                          [&](const Uniform& d) { return "U(" + f(d.lo) + "," + f(d.hi) + ")"; },
                          [&](const TruncatedNormal& d) {
                              return "TN(" + f(d.mean) + "," + f(d.sd) + "," + f(d.lo) + "," + f(d.hi) + ")";
                          },
                      },
                      spec);
}

std::vector<std::vector<double>> lhs_sample(std::span<const DistSpec> specs, std::size_t n, RngStream& rng) {
    if (n < 1) throw DomainError("lhs_sample: need at least one row");
    for (const auto& s : specs) validate(s);
    std::vector<std::vector<double>> rows(n, std::vector<double>(specs.size()));
    std::vector<std::size_t> strata(n);
    for (std::size_t j = 0; j < specs.size(); ++j) {
        std::iota(strata.begin(), strata.end(), std::size_t{0});
        // Fisher-Yates with the stream's own index draws keeps the permutation portable.
        for (std::size_t i = n; i > 1; --i) std::swap(strata[i - 1], strata[rng.index(i)]);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(n);
            rows[i][j] = quantile(specs[j], p);
        }
    }
    return rows;
}

ExponentBounds erosion_exponent_prior_bounds() {
    ExponentBounds b{{1.0, 2.2}, {0.0, 2.0}, {-0.6, 0.0}, {0.4, 0.72}, {}, {}};
    b.velocity_exponent = {2.0 * b.c1.lo + b.c2.lo, 2.0 * b.c1.hi + b.c2.hi};
    // eta = c1 (1 - 2 c4) + c3 is bilinear in (c1, c4); its extremes sit on the box corners.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double c1 : {b.c1.lo, b.c1.hi}) {
        for (double c4 : {b.c4.lo, b.c4.hi}) {
            const double base = c1 * (1.0 - 2.0 * c4);
            lo = std::min(lo, base + b.c3.lo);
            hi = std::max(hi, base + b.c3.hi);
        }
    }
    b.radius_exponent = {lo, hi};
    return b;
}

CombinedExponents combine_exponents(double c1, double c2, double c3, double c4) {
    return {2.0 * c1 + c2, c1 * (1.0 - 2.0 * c4) + c3};
}

std::vector<CombinedExponents> sample_exponent_cloud(std::size_t n, RngStream& rng) {
    const auto b = erosion_exponent_prior_bounds();
    const auto draw = [&rng](Interval i) { return i.lo + (i.hi - i.lo) * rng.uniform(); };
    std::vector<CombinedExponents> out(n);
    for (auto& e : out) {
        const double c1 = draw(b.c1), c2 = draw(b.c2), c3 = draw(b.c3), c4 = draw(b.c4);
        e = combine_exponents(c1, c2, c3, c4);
    }
    return out;
}

}  // namespace breachcast::stochastic
