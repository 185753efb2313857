#include "breachcast/mcmc.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "breachcast/error.hpp"
#include "parallel.hpp"

namespace breachcast::mcmc {
namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// Stream of generation g, chain j; the target receives a child of it.
stochastic::RngStream generation_stream(std::uint64_t seed, std::size_t generation, std::size_t chain) {
    return stochastic::RngStream(seed, 0).substream(generation).substream(chain);
}
constexpr std::uint64_t target_key = 0x7461726765ULL;

std::size_t auto_stride(std::size_t generations) { return std::max<std::size_t>(10, (generations - 1) / 200); }

}  // namespace

double default_jump_scale(std::size_t dimension) {
    if (dimension == 0) throw ConfigError("jump scale: dimension must be positive");
    return 2.38 / std::sqrt(2.0 * static_cast<double>(dimension));
}

ChainArchive::ChainArchive(std::vector<std::string> names, std::size_t chains)
    : names_(std::move(names)), chains_(chains) {
    if (names_.empty()) throw ConfigError("chain archive: no parameters");
    if (chains_ < 2) throw ConfigError("chain archive: need at least two chains");
}

std::span<const double> ChainArchive::state(std::size_t generation, std::size_t chain) const {
    const std::size_t d = names_.size();
    return {states_.data() + (generation * chains_ + chain) * d, d};
}

double ChainArchive::log_posterior(std::size_t generation, std::size_t chain) const {
    return log_posterior_[generation * chains_ + chain];
}

bool ChainArchive::accepted(std::size_t generation, std::size_t chain) const {
    return accepted_[generation * chains_ + chain] != 0;
}

void ChainArchive::append(std::span<const double> states, std::span<const double> log_posterior,
                          std::span<const std::uint8_t> accepted) {
    if (states.size() != chains_ * names_.size() || log_posterior.size() != chains_ || accepted.size() != chains_) {
        throw ConfigError("chain archive: generation shape mismatch");
    }
    states_.insert(states_.end(), states.begin(), states.end());
    log_posterior_.insert(log_posterior_.end(), log_posterior.begin(), log_posterior.end());
    accepted_.insert(accepted_.end(), accepted.begin(), accepted.end());
}

void ChainArchive::truncate(std::size_t generations) {
    if (generations >= this->generations()) return;
    states_.resize(generations * chains_ * names_.size());
    log_posterior_.resize(generations * chains_);
    accepted_.resize(generations * chains_);
}

std::vector<double> propose(std::size_t chain, std::span<const double> states, std::size_t chains, double scale,
                            std::span<const double> jitter, stochastic::RngStream& rng) {
    if (chains < 3) throw ConfigError("DE-MC proposal needs at least three chains");
    const std::size_t d = states.size() / chains;
    if (jitter.size() != d || states.size() != chains * d) throw ConfigError("DE-MC proposal: shape mismatch");
    // r1 uniform over the other chains, r2 uniform over chains other than j and r1.
    std::size_t r1 = rng.index(chains - 1);
    if (r1 >= chain) ++r1;
    std::size_t r2 = rng.index(chains - 2);
    const std::size_t lo = std::min(chain, r1), hi = std::max(chain, r1);
    if (r2 >= lo) ++r2;
    if (r2 >= hi) ++r2;
    std::vector<double> out(d);
    for (std::size_t p = 0; p < d; ++p) {
        const double noise = jitter[p] > 0.0 ? jitter[p] * rng.standard_normal() : 0.0;
        out[p] = states[chain * d + p] + scale * (states[r2 * d + p] - states[r1 * d + p]) + noise;
    }
    return out;
}

bool metropolis_accept(double current, double proposed, stochastic::RngStream& rng) {
    const double u = rng.uniform();
    if (std::isnan(proposed) || proposed == neg_inf) return false;
    if (proposed >= current) return true;
    return std::log(u) < proposed - current;
}

void run(const LogTarget& target, const InitialDraw& initial, const SamplerConfig& config, ChainArchive& archive,
         const Checkpoint& checkpoint) {
    const std::size_t n = config.chains;
    const std::size_t d = archive.dimension();
    if (n < 3) throw ConfigError("DE-MC needs at least three chains");
    if (archive.chains() != n) throw ConfigError("archive chain count does not match the sampler configuration");
    if (config.jitter.size() != d) throw ConfigError("jitter must have one entry per parameter");
    const double scale = config.jump_scale.value_or(default_jump_scale(d));
    archive.seed = config.seed;
    archive.jump_scale = scale;
    archive.jitter = config.jitter;
    archive.budget_exhausted = false;

    std::vector<double> states(n * d), logp(n);
    std::vector<std::uint8_t> flags(n, 1);
    if (archive.generations() == 0) {
        detail::parallel_for(n, config.threads, [&](std::size_t j) {
            auto rng = generation_stream(config.seed, 0, j);
            auto x = initial(rng);
            if (x.size() != d) throw ConfigError("initial draw has the wrong dimension");
            std::copy(x.begin(), x.end(), states.begin() + static_cast<std::ptrdiff_t>(j * d));
            logp[j] = target(x, rng.substream(target_key));
        });
        archive.append(states, logp, flags);
    }

    const std::size_t total = config.iterations + 1;
    const auto last = [&] {
        const std::size_t g = archive.generations() - 1;
        for (std::size_t j = 0; j < n; ++j) {
            const auto s = archive.state(g, j);
            std::copy(s.begin(), s.end(), states.begin() + static_cast<std::ptrdiff_t>(j * d));
            logp[j] = archive.log_posterior(g, j);
        }
    };
    last();

    std::vector<double> next(n * d), next_logp(n);
    for (std::size_t g = archive.generations(); g < total; ++g) {
        detail::parallel_for(n, config.threads, [&](std::size_t j) {
            auto rng = generation_stream(config.seed, g, j);
            auto candidate = propose(j, states, n, scale, config.jitter, rng);
            const double lp = target(candidate, rng.substream(target_key));
            const bool take = metropolis_accept(logp[j], lp, rng);
            flags[j] = take ? 1 : 0;
            const auto* src = take ? candidate.data() : states.data() + j * d;
            std::copy(src, src + d, next.begin() + static_cast<std::ptrdiff_t>(j * d));
            next_logp[j] = take ? lp : logp[j];
        });
        std::swap(states, next);
        std::swap(logp, next_logp);
        archive.append(states, logp, flags);

        const bool at_checkpoint = config.checkpoint_every > 0 && g % config.checkpoint_every == 0;
        if (at_checkpoint && config.min_effective_samples > 0.0 && g >= 20) {
            const auto burn = detect_burn_in(archive, config.burn_in_threshold);
            if (burn.converged && burn.generations + 2 < archive.generations()) {
                const auto ess = effective_samples(archive, burn.generations);
                const bool enough = std::all_of(ess.count.begin(), ess.count.end(),
                                                [&](double c) { return c > config.min_effective_samples; });
                if (enough) {
                    if (checkpoint) checkpoint(archive);
                    return;
                }
            }
        }
        if (at_checkpoint && checkpoint) checkpoint(archive);
    }
    archive.budget_exhausted = config.min_effective_samples > 0.0;
    if (checkpoint) checkpoint(archive);
}

PsrfResult psrf(const ChainArchive& archive, std::size_t begin, std::size_t end) {
    const std::size_t m = archive.chains();
    const std::size_t d = archive.dimension();
    if (end > archive.generations() || begin >= end) throw DomainError("psrf: window outside the archive");
    const std::size_t len = end - begin;
    if (len < 10) throw DomainError("psrf: window must span at least 10 generations");
    if (m < 2) throw DomainError("psrf: need at least two chains");
    const double nf = static_cast<double>(len);
    const double mf = static_cast<double>(m);

    Eigen::MatrixXd means(m, d);
    std::vector<Eigen::MatrixXd> covs(m, Eigen::MatrixXd::Zero(d, d));
    for (std::size_t c = 0; c < m; ++c) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
        for (std::size_t g = begin; g < end; ++g) {
            const auto s = archive.state(g, c);
            for (std::size_t p = 0; p < d; ++p) mean(p) += s[p];
        }
        mean /= nf;
        means.row(c) = mean.transpose();
        for (std::size_t g = begin; g < end; ++g) {
            const auto s = archive.state(g, c);
            Eigen::VectorXd dev(d);
            for (std::size_t p = 0; p < d; ++p) dev(p) = s[p] - mean(p);
            covs[c].noalias() += dev * dev.transpose();
        }
        covs[c] /= nf - 1.0;
    }

    PsrfResult out;
    out.univariate.resize(d);
    for (std::size_t p = 0; p < d; ++p) {
        Eigen::VectorXd s2(m), xbar(m);
        for (std::size_t c = 0; c < m; ++c) {
            s2(c) = covs[c](p, p);
            xbar(c) = means(c, p);
        }
        const double w = s2.mean();
        const double grand = xbar.mean();
        const double var_xbar = (xbar.array() - grand).square().sum() / (mf - 1.0);
        const double b = nf * var_xbar;
        if (w <= 0.0) {
            out.univariate[p] = b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
            continue;
        }
        // Brooks-Gelman corrected estimate with the sampling variance of V.
        const auto cov = [mf](const Eigen::VectorXd& a, const Eigen::VectorXd& c) {
            return ((a.array() - a.mean()) * (c.array() - c.mean())).sum() / (mf - 1.0);
        };
        const Eigen::VectorXd xbar2 = xbar.array().square();
        const double var_w = cov(s2, s2) / mf;
        const double var_b = 2.0 * b * b / (mf - 1.0);
        const double cov_wb = nf / mf * (cov(s2, xbar2) - 2.0 * grand * cov(s2, xbar));
        const double v = (nf - 1.0) * w / nf + (1.0 + 1.0 / mf) * b / nf;
        const double var_v = ((nf - 1.0) * (nf - 1.0) * var_w + (1.0 + 1.0 / mf) * (1.0 + 1.0 / mf) * var_b +
                              2.0 * (nf - 1.0) * (1.0 + 1.0 / mf) * cov_wb) /
                             (nf * nf);
        const double df = var_v > 0.0 ? 2.0 * v * v / var_v : std::numeric_limits<double>::infinity();
        const double df_adj = std::isfinite(df) ? (df + 3.0) / (df + 1.0) : 1.0;
        out.univariate[p] = std::sqrt(df_adj * v / w);
    }

    // Multivariate: largest eigenvalue of W^-1 B/n over parameters that vary within chains.
    std::vector<Eigen::Index> keep;
    Eigen::MatrixXd w_full = Eigen::MatrixXd::Zero(d, d);
    for (const auto& c : covs) w_full += c;
    w_full /= mf;
    for (std::size_t p = 0; p < d; ++p) {
        if (w_full(p, p) > 0.0) keep.push_back(static_cast<Eigen::Index>(p));
    }
    if (keep.empty()) {
        out.multivariate = 1.0;
        return out;
    }
    const auto k = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd w(k, k), bn(k, k);
    const Eigen::RowVectorXd grand = means.colwise().mean();
    Eigen::MatrixXd centred = means.rowwise() - grand;
    const Eigen::MatrixXd between = centred.transpose() * centred / (mf - 1.0);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            w(i, j) = w_full(keep[i], keep[j]);
            bn(i, j) = between(keep[i], keep[j]);
        }
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(bn, w, Eigen::EigenvaluesOnly);
    const double lambda = solver.info() == Eigen::Success ? solver.eigenvalues().maxCoeff()
                                                           : std::numeric_limits<double>::infinity();
    out.multivariate = std::sqrt((nf - 1.0) / nf + (1.0 + 1.0 / mf) * lambda);
    return out;
}

PsrfTrace psrf_trace(const ChainArchive& archive, std::size_t stride) {
    const std::size_t gens = archive.generations();
    if (gens < 21) throw DomainError("psrf_trace: archive too short for a 10-generation window");
    if (stride == 0) stride = auto_stride(gens);
    PsrfTrace trace;
    for (std::size_t t = 20; t < gens; t += stride) {
        const auto r = psrf(archive, (t + 1) / 2, t + 1);
        trace.generation.push_back(t);
        trace.univariate.push_back(r.univariate);
        trace.multivariate.push_back(r.multivariate);
    }
    return trace;
}

BurnIn detect_burn_in(const ChainArchive& archive, double threshold, std::size_t stride) {
    const auto trace = psrf_trace(archive, stride);
    BurnIn out{archive.generations() - 1, false};
    for (std::size_t i = trace.generation.size(); i-- > 0;) {
        const bool ok = trace.multivariate[i] < threshold &&
                        std::all_of(trace.univariate[i].begin(), trace.univariate[i].end(),
                                    [threshold](double r) { return r < threshold; });
        if (!ok) break;
        out = {trace.generation[i], true};
    }
    return out;
}

EffectiveSamples effective_samples(const ChainArchive& archive, std::size_t burn_in) {
    const std::size_t gens = archive.generations();
    if (gens == 0 || burn_in + 4 > gens) throw DomainError("effective_samples: burn-in leaves too few generations");
    const std::size_t begin = burn_in + 1;
    const std::size_t len = gens - begin;
    const std::size_t m = archive.chains();
    const std::size_t d = archive.dimension();
    EffectiveSamples out;
    out.count.resize(d);
    out.denominator.resize(d);
    std::vector<double> dev(m * len);
    for (std::size_t p = 0; p < d; ++p) {
        // Each chain centred on its own mean; autocovariances pooled over chains.
        for (std::size_t c = 0; c < m; ++c) {
            double mean = 0.0;
            for (std::size_t t = 0; t < len; ++t) mean += archive.value(begin + t, c, p);
            mean /= static_cast<double>(len);
            for (std::size_t t = 0; t < len; ++t) dev[c * len + t] = archive.value(begin + t, c, p) - mean;
        }
        const auto acov = [&](std::size_t lag) {
            double s = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
                const double* x = dev.data() + c * len;
                for (std::size_t t = 0; t + lag < len; ++t) s += x[t] * x[t + lag];
            }
            return s;
        };
        double denom = 1.0;
        const double var0 = acov(0);
        if (var0 > 0.0) {
            const auto rho = [&](std::size_t l) { return acov(l) / var0; };
            double sum = 0.0;
            double odd = rho(1);
            for (std::size_t lag = 1; lag + 2 < len; lag += 2) {
                // Truncate at the first odd lag L with rho(L+1) + rho(L+2) < 0.
                sum += odd;
                const double even = rho(lag + 1);
                odd = rho(lag + 2);
                if (even + odd < 0.0) break;
                sum += even;
            }
            denom = std::max(1.0 + 2.0 * sum, 1e-12);
        }
        out.denominator[p] = denom;
        out.count[p] = static_cast<double>(m * len) / denom;
    }
    const double worst = *std::max_element(out.denominator.begin(), out.denominator.end());
    out.thinning_lag = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(worst)));
    return out;
}

double chain_acceptance_rate(const ChainArchive& archive, std::size_t chain, std::size_t begin) {
    const std::size_t gens = archive.generations();
    if (begin >= gens) return 0.0;
    std::size_t hits = 0;
    for (std::size_t g = begin; g < gens; ++g) hits += archive.accepted(g, chain) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(gens - begin);
}

double acceptance_rate(const ChainArchive& archive, std::size_t begin) {
    double sum = 0.0;
    for (std::size_t c = 0; c < archive.chains(); ++c) sum += chain_acceptance_rate(archive, c, begin);
    return sum / static_cast<double>(archive.chains());
}

ThinnedSamples thin(const ChainArchive& archive, std::size_t burn_in, std::size_t lag) {
    if (lag == 0) throw DomainError("thin: lag must be positive");
    ThinnedSamples out;
    out.names = archive.names();
    for (std::size_t c = 0; c < archive.chains(); ++c) {
        for (std::size_t g = burn_in + 1; g < archive.generations(); g += lag) {
            const auto s = archive.state(g, c);
            out.draws.emplace_back(s.begin(), s.end());
            out.log_posterior.push_back(archive.log_posterior(g, c));
        }
    }
    return out;
}

DiagnosticsReport diagnose(const ChainArchive& archive, double threshold) {
    DiagnosticsReport r;
    const std::size_t gens = archive.generations();
    r.trace = psrf_trace(archive, 0);
    r.burn_in = detect_burn_in(archive, threshold);
    r.analysis_start = r.burn_in.converged ? r.burn_in.generations : (gens - 1) / 2;
    if (r.analysis_start + 4 > gens) r.analysis_start = (gens - 1) / 2;
    r.final_psrf = psrf(archive, gens / 2, gens);
    r.effective = effective_samples(archive, r.analysis_start);
    r.acceptance = acceptance_rate(archive);
    for (std::size_t c = 0; c < archive.chains(); ++c) r.chain_acceptance.push_back(chain_acceptance_rate(archive, c));
    return r;
}

}  // namespace breachcast::mcmc
