#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace breachcast::stochastic {

/// Point mass; written as a bare number in the distribution grammar.
struct Constant {
    double value;
    friend bool operator==(const Constant&, const Constant&) = default;
};
struct Normal {
    double mean;
    double sd;
    friend bool operator==(const Normal&, const Normal&) = default;
};
/// exp of Normal(location, scale).
struct LogNormal {
    double location;
    double scale;
    friend bool operator==(const LogNormal&, const LogNormal&) = default;
};
struct Uniform {
    double lo;
    double hi;
    friend bool operator==(const Uniform&, const Uniform&) = default;
};
struct TruncatedNormal {
    double mean;
    double sd;
    double lo;
    double hi;
    friend bool operator==(const TruncatedNormal&, const TruncatedNormal&) = default;
};

using DistSpec = std::variant<Constant, Normal, LogNormal, Uniform, TruncatedNormal>;

struct BivariateNormal {
    std::array<double, 2> mean;
    std::array<double, 2> sd;
    double correlation;
};

/// Throws DomainError unless scales are positive, bounds ordered and values finite.
void validate(const DistSpec& spec);
void validate(const BivariateNormal& spec);

[[nodiscard]] bool is_point_mass(const DistSpec& spec);

/// Seeded 64-bit generator. Identical (seed, stream) pairs give identical sequences.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream);

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t stream() const noexcept { return stream_; }

    /// Independent stream keyed by `key`, derived from this stream's identity only.
    [[nodiscard]] RngStream substream(std::uint64_t key) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on the open interval (0, 1).
    double uniform();
    double standard_normal();
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

double sample(const DistSpec& spec, RngStream& rng);
std::vector<double> sample(const DistSpec& spec, RngStream& rng, std::size_t n);

/// Probability density; throws DomainError for point masses.
double density(const DistSpec& spec, double x);
double log_density(const DistSpec& spec, double x);
double density(const BivariateNormal& spec, double x, double y);
double log_density(const BivariateNormal& spec, double x, double y);

double cdf(const DistSpec& spec, double x);
/// Inverse CDF for p in (0, 1).
double quantile(const DistSpec& spec, double p);

/// Parses `N(loc,sd)`, `LN(loc,sd)`, `U(lo,hi)`, `TN(loc,sd,lo,hi)` or a bare number.
/// Throws ParseError on malformed text and DomainError on invalid parameters.
DistSpec parse_distribution(std::string_view text);
/// Inverse of parse_distribution with shortest round-trip number formatting.
std::string format_distribution(const DistSpec& spec);

/// Latin hypercube design: n rows, one column per spec. Each column visits every
/// one of n equiprobable strata exactly once, in an independently permuted order.
std::vector<std::vector<double>> lhs_sample(std::span<const DistSpec> specs, std::size_t n, RngStream& rng);

struct Interval {
    double lo;
    double hi;
};

/// Ranges of the empirical transport and friction exponents c1..c4 and the
/// induced box of the combined exponents.
struct ExponentBounds {
    Interval c1, c2, c3, c4;
    Interval velocity_exponent;
    Interval radius_exponent;
};

ExponentBounds erosion_exponent_prior_bounds();

struct CombinedExponents {
    double velocity_exponent;  ///< 2 c1 + c2
    double radius_exponent;    ///< c1 (1 - 2 c4) + c3
};

CombinedExponents combine_exponents(double c1, double c2, double c3, double c4);

/// Combined exponents of n points drawn uniformly from the c1..c4 box.
std::vector<CombinedExponents> sample_exponent_cloud(std::size_t n, RngStream& rng);

}  // namespace breachcast::stochastic
