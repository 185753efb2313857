#include "breachcast/breachcast.h"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "breachcast/analysis.hpp"
#include "breachcast/calibration.hpp"
#include "breachcast/error.hpp"
#include "breachcast/forward_model.hpp"
#include "breachcast/inference.hpp"
#include "breachcast/io.hpp"
#include "breachcast/mcmc.hpp"
#include "breachcast/predict.hpp"

namespace bc = breachcast;

struct bc_hydrograph {
    bc::forward::Hydrograph value;
};
struct bc_dataset {
    bc::io::Dataset value;
};
struct bc_archive {
    bc::mcmc::ChainArchive value;
};
struct bc_diagnostics {
    bc::mcmc::DiagnosticsReport report;
    bc::mcmc::ChainArchive archive;  // the report refers to parameter names and chain counts
};
struct bc_posterior {
    bc::analysis::PosteriorSamples value;
};
struct bc_gof {
    std::vector<bc::analysis::GofRecord> value;
};
struct bc_prediction_case {
    bc::predict::PredictionCase value;
};
struct bc_ensemble {
    bc::predict::EnsembleSummary value;
};

namespace {

thread_local std::string last_error;

// Fixed stream keys so each entry point draws from its own family of streams.
constexpr std::uint64_t gof_stream = 0x676f66;
constexpr std::uint64_t predict_stream = 0x70726564;
constexpr std::uint64_t mode_stream = 0x6d6f6465;
constexpr std::uint64_t likelihood_stream = 0x6c696b;

bc_status status_of(bc::ErrorKind kind) {
    switch (kind) {
        case bc::ErrorKind::domain: return BC_ERR_DOMAIN;
        case bc::ErrorKind::numerical: return BC_ERR_NUMERICAL;
        case bc::ErrorKind::parse: return BC_ERR_PARSE;
        case bc::ErrorKind::validation: return BC_ERR_VALIDATION;
        case bc::ErrorKind::config: return BC_ERR_CONFIG;
        case bc::ErrorKind::schema: return BC_ERR_SCHEMA;
        case bc::ErrorKind::io: return BC_ERR_IO;
    }
    return BC_ERR_INTERNAL;
}

bc_status fail(bc_status status, const char* message) {
    last_error = message;
    return status;
}

template <class F>
bc_status guard(F&& body) noexcept {
    try {
        body();
        return BC_OK;
    } catch (const bc::Error& e) {
        return fail(status_of(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(BC_ERR_INTERNAL, "out of memory");
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(BC_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(BC_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(BC_ERR_INTERNAL, "unknown failure");
    }
}

#define BC_REQUIRE(ptr) \
    if ((ptr) == nullptr) return fail(BC_ERR_NULL_ARGUMENT, "null argument: " #ptr)

bc::inference::ResidualKind kind_of(bc_residual_model model) {
    switch (model) {
        case BC_RESIDUAL_GAUSSIAN: return bc::inference::ResidualKind::gaussian;
        case BC_RESIDUAL_ZERO_NOISE: return bc::inference::ResidualKind::zero_noise;
    }
    throw bc::ConfigError("unknown residual model");
}

bc_residual_model model_of(bc::inference::ResidualKind kind) {
    return kind == bc::inference::ResidualKind::gaussian ? BC_RESIDUAL_GAUSSIAN : BC_RESIDUAL_ZERO_NOISE;
}

bc::analysis::Component component_of(bc_component c) {
    switch (c) {
        case BC_COMPONENT_OVERALL: return bc::analysis::Component::overall;
        case BC_COMPONENT_PEAK: return bc::analysis::Component::peak;
        case BC_COMPONENT_WIDTH: return bc::analysis::Component::width;
    }
    throw bc::ConfigError("unknown GoF component");
}

bc::inference::QoI qoi_of(const double* params, std::size_t count, bc::inference::ResidualKind kind) {
    return bc::inference::from_vector(std::span<const double>(params, count), kind);
}

}  // namespace

extern "C" {

const char* bc_version(void) { return "1.0.0"; }

const char* bc_last_error(void) { return last_error.c_str(); }

const char* bc_status_name(bc_status status) {
    switch (status) {
        case BC_OK: return "ok";
        case BC_ERR_DOMAIN: return "domain error";
        case BC_ERR_NUMERICAL: return "numerical error";
        case BC_ERR_PARSE: return "parse error";
        case BC_ERR_VALIDATION: return "validation error";
        case BC_ERR_CONFIG: return "configuration error";
        case BC_ERR_SCHEMA: return "schema error";
        case BC_ERR_IO: return "i/o error";
        case BC_ERR_NULL_ARGUMENT: return "null argument";
        case BC_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

size_t bc_parameter_count(bc_residual_model model) {
    return model == BC_RESIDUAL_ZERO_NOISE ? 4 : 6;
}

const char* bc_parameter_name(bc_residual_model model, size_t index) {
    static const char* const names[] = {"gamma_location", "gamma_scale",     "velocity_exponent",
                                        "radius_exponent", "sigma_discharge", "sigma_width"};
    return index < bc_parameter_count(model) ? names[index] : nullptr;
}

// ---- Forward model -----------------------------------------------------------

bc_status bc_simulate(const bc_case* c, const bc_erosion* e, bc_hydrograph** out) {
    BC_REQUIRE(c);
    BC_REQUIRE(e);
    BC_REQUIRE(out);
    return guard([&] {
        const bc::forward::DamCase dam{{c->dam_height, c->crest_width, c->embankment_slope, c->side_angle_deg},
                                       {c->basin_exponent, c->level_drop, c->released_volume},
                                       {c->final_height, c->initial_depth_ratio}};
        auto h = bc::forward::simulate(dam, {e->scaling, e->velocity_exponent, e->radius_exponent});
        *out = new bc_hydrograph{std::move(h)};
    });
}

bc_status bc_hydrograph_summary_get(const bc_hydrograph* h, bc_hydrograph_summary* out) {
    BC_REQUIRE(h);
    BC_REQUIRE(out);
    const auto& v = h->value;
    *out = {v.peak_discharge,
            v.final_width,
            v.time_to_peak,
            v.duration,
            v.switch_time,
            v.failure_mode == bc::forward::FailureMode::total ? 1 : 0,
            v.horizon_reached ? 1 : 0,
            v.samples.size()};
    return BC_OK;
}

bc_status bc_hydrograph_sample(const bc_hydrograph* h, size_t index, bc_sample* out) {
    BC_REQUIRE(h);
    BC_REQUIRE(out);
    if (index >= h->value.samples.size()) return fail(BC_ERR_DOMAIN, "sample index out of range");
    const auto& s = h->value.samples[index];
    *out = {s.time, s.discharge, s.top_width, s.bottom_level, s.reservoir_level};
    return BC_OK;
}

bc_status bc_hydrograph_write_csv(const bc_hydrograph* h, const char* path) {
    BC_REQUIRE(h);
    BC_REQUIRE(path);
    return guard([&] { bc::io::write_text_atomic(path, bc::io::hydrograph_csv(h->value)); });
}

void bc_hydrograph_free(bc_hydrograph* h) { delete h; }

// ---- Dataset -----------------------------------------------------------------

bc_status bc_dataset_load(const char* path, bc_dataset** out) {
    BC_REQUIRE(path);
    BC_REQUIRE(out);
    return guard([&] { *out = new bc_dataset{bc::io::read_dataset(path)}; });
}

size_t bc_dataset_size(const bc_dataset* ds) { return ds ? ds->value.records.size() : 0; }

const char* bc_dataset_name(const bc_dataset* ds, size_t index) {
    if (!ds || index >= ds->value.records.size()) return nullptr;
    return ds->value.records[index].name.c_str();
}

int bc_dataset_has_width(const bc_dataset* ds, size_t index) {
    if (!ds || index >= ds->value.records.size()) return 0;
    return ds->value.records[index].log_width.has_value() ? 1 : 0;
}

bc_status bc_dataset_write(const bc_dataset* ds, const char* path) {
    BC_REQUIRE(ds);
    BC_REQUIRE(path);
    return guard([&] { bc::io::write_text_atomic(path, bc::io::serialize_dataset(ds->value)); });
}

void bc_dataset_free(bc_dataset* ds) { delete ds; }

bc_status bc_log_posterior(const bc_dataset* ds, bc_residual_model model, const double* params, size_t count,
                           uint64_t seed, size_t max_draws, unsigned threads, double* out) {
    BC_REQUIRE(ds);
    BC_REQUIRE(params);
    BC_REQUIRE(out);
    return guard([&] {
        const auto kind = kind_of(model);
        bc::inference::LikelihoodOptions opt;
        if (max_draws > 0) opt.max_draws = max_draws;
        opt.initial_draws = std::min(opt.initial_draws, opt.max_draws);
        opt.threads = threads;
        *out = bc::inference::log_posterior(qoi_of(params, count, kind), ds->value.records, kind,
                                            bc::stochastic::RngStream(seed, likelihood_stream), opt)
                   .log_posterior;
    });
}

// ---- Calibration -------------------------------------------------------------

void bc_calibration_config_default(bc_calibration_config* config) {
    if (!config) return;
    const bc::inference::LikelihoodOptions lik;
    *config = {BC_RESIDUAL_GAUSSIAN, 12, 3000, 0, 1, lik.initial_draws, lik.max_draws, lik.target_precision,
               0.0, 0.0, nullptr};
}

bc_status bc_calibration_config_load(const char* path, bc_calibration_config* config) {
    BC_REQUIRE(path);
    BC_REQUIRE(config);
    return guard([&] {
        const auto rc = bc::io::parse_run_config(bc::io::read_text(path));
        auto next = *config;
        if (rc.residual_model) next.model = model_of(bc::io::parse_residual_kind(*rc.residual_model));
        if (rc.chains) next.chains = *rc.chains;
        if (rc.iterations) next.iterations = *rc.iterations;
        if (rc.seed) next.seed = *rc.seed;
        if (rc.initial_draws) next.initial_draws = *rc.initial_draws;
        if (rc.max_draws) next.max_draws = *rc.max_draws;
        if (rc.target_precision) next.target_precision = *rc.target_precision;
        if (rc.min_effective_samples) next.min_effective_samples = *rc.min_effective_samples;
        if (rc.jump_scale) next.jump_scale = *rc.jump_scale;
        *config = next;
    });
}

bc_status bc_calibrate(const bc_dataset* ds, const bc_calibration_config* config, bc_archive** out) {
    BC_REQUIRE(ds);
    BC_REQUIRE(config);
    BC_REQUIRE(out);
    return guard([&] {
        bc::calibration::Config cfg;
        cfg.kind = kind_of(config->model);
        cfg.sampler.chains = config->chains;
        cfg.sampler.iterations = config->iterations;
        cfg.sampler.seed = config->seed;
        cfg.sampler.threads = config->threads;
        cfg.sampler.min_effective_samples = config->min_effective_samples;
        cfg.sampler.checkpoint_every = 10;
        if (config->jump_scale > 0.0) cfg.sampler.jump_scale = config->jump_scale;
        cfg.likelihood.initial_draws = config->initial_draws;
        cfg.likelihood.max_draws = config->max_draws;
        cfg.likelihood.target_precision = config->target_precision;
        cfg.likelihood.threads = 1;

        bc::mcmc::ChainArchive archive;
        const bool persist = config->archive_path != nullptr && *config->archive_path != '\0';
        std::filesystem::path path;
        if (persist) {
            path = config->archive_path;
            if (std::filesystem::exists(path)) archive = bc::io::read_archive(path);
        }
        const double previous = archive.elapsed_seconds;
        const auto start = std::chrono::steady_clock::now();
        const auto stamp = [&] {
            archive.elapsed_seconds =
                previous + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        };
        bc::mcmc::Checkpoint checkpoint;
        if (persist) {
            checkpoint = [&](const bc::mcmc::ChainArchive&) {
                stamp();
                bc::io::write_archive(archive, path);
            };
        }
        bc::calibration::calibrate(ds->value.records, cfg, archive, checkpoint);
        stamp();
        if (persist) bc::io::write_archive(archive, path);
        *out = new bc_archive{std::move(archive)};
    });
}

bc_status bc_archive_load(const char* path, bc_archive** out) {
    BC_REQUIRE(path);
    BC_REQUIRE(out);
    return guard([&] { *out = new bc_archive{bc::io::read_archive(path)}; });
}

bc_status bc_archive_write(const bc_archive* a, const char* path) {
    BC_REQUIRE(a);
    BC_REQUIRE(path);
    return guard([&] { bc::io::write_archive(a->value, path); });
}

size_t bc_archive_chains(const bc_archive* a) { return a ? a->value.chains() : 0; }
size_t bc_archive_generations(const bc_archive* a) { return a ? a->value.generations() : 0; }
size_t bc_archive_dimension(const bc_archive* a) { return a ? a->value.dimension() : 0; }
double bc_archive_jump_scale(const bc_archive* a) { return a ? a->value.jump_scale : 0.0; }
double bc_archive_elapsed_seconds(const bc_archive* a) { return a ? a->value.elapsed_seconds : 0.0; }
void bc_archive_free(bc_archive* a) { delete a; }

// ---- Diagnostics -------------------------------------------------------------

bc_status bc_diagnose(const bc_archive* a, double threshold, bc_diagnostics** out) {
    BC_REQUIRE(a);
    BC_REQUIRE(out);
    return guard([&] {
        auto report = bc::mcmc::diagnose(a->value, threshold);
        *out = new bc_diagnostics{std::move(report), a->value};
    });
}

bc_status bc_diagnostics_summary_get(const bc_diagnostics* d, bc_diagnostics_summary* out) {
    BC_REQUIRE(d);
    BC_REQUIRE(out);
    const auto& r = d->report;
    *out = {r.burn_in.generations, r.burn_in.converged ? 1 : 0, r.analysis_start, r.effective.thinning_lag,
            r.acceptance, r.final_psrf.multivariate};
    return BC_OK;
}

bc_status bc_diagnostics_effective_samples(const bc_diagnostics* d, double* out, size_t count) {
    BC_REQUIRE(d);
    BC_REQUIRE(out);
    const auto& c = d->report.effective.count;
    if (count != c.size()) return fail(BC_ERR_DOMAIN, "effective sample buffer does not match the dimension");
    std::copy(c.begin(), c.end(), out);
    return BC_OK;
}

bc_status bc_diagnostics_write_json(const bc_diagnostics* d, const char* path) {
    BC_REQUIRE(d);
    BC_REQUIRE(path);
    return guard([&] { bc::io::write_text_atomic(path, bc::io::diagnostics_json(d->report, d->archive)); });
}

void bc_diagnostics_free(bc_diagnostics* d) { delete d; }

// ---- Posterior ---------------------------------------------------------------

bc_status bc_posterior_from_archive(const bc_archive* a, const bc_diagnostics* d, bc_posterior** out) {
    BC_REQUIRE(a);
    BC_REQUIRE(d);
    BC_REQUIRE(out);
    return guard([&] {
        const auto& r = d->report;
        auto thinned = bc::mcmc::thin(a->value, r.analysis_start, r.effective.thinning_lag);
        bc::analysis::PosteriorSamples s;
        s.names = std::move(thinned.names);
        s.draws = std::move(thinned.draws);
        s.log_posterior = std::move(thinned.log_posterior);
        s.kind = bc::io::parse_residual_kind(a->value.residual_model);
        *out = new bc_posterior{std::move(s)};
    });
}

bc_status bc_posterior_load(const char* path, bc_posterior** out) {
    BC_REQUIRE(path);
    BC_REQUIRE(out);
    return guard([&] { *out = new bc_posterior{bc::io::read_posterior(path)}; });
}

bc_status bc_posterior_write(const bc_posterior* p, const char* path) {
    BC_REQUIRE(p);
    BC_REQUIRE(path);
    return guard([&] { bc::io::write_posterior(p->value, path); });
}

size_t bc_posterior_size(const bc_posterior* p) { return p ? p->value.draws.size() : 0; }

bc_residual_model bc_posterior_model(const bc_posterior* p) {
    return p ? model_of(p->value.kind) : BC_RESIDUAL_GAUSSIAN;
}

bc_status bc_posterior_mode(const bc_posterior* p, size_t resamples, uint64_t seed, double* values,
                            double* standard_errors, size_t count) {
    BC_REQUIRE(p);
    BC_REQUIRE(values);
    return guard([&] {
        if (count != p->value.names.size()) throw bc::DomainError("mode buffer does not match the dimension");
        bc::stochastic::RngStream rng(seed, mode_stream);
        const auto m = bc::analysis::mode_estimate(p->value, resamples, rng);
        std::copy(m.values.begin(), m.values.end(), values);
        if (standard_errors) std::copy(m.standard_errors.begin(), m.standard_errors.end(), standard_errors);
    });
}

bc_status bc_posterior_correlation(const bc_posterior* p, size_t first, size_t second, double* out) {
    BC_REQUIRE(p);
    BC_REQUIRE(out);
    return guard([&] {
        const auto d = p->value.names.size();
        if (first >= d || second >= d) throw bc::DomainError("parameter index out of range");
        std::vector<double> a, b;
        for (const auto& row : p->value.draws) {
            a.push_back(row[first]);
            b.push_back(row[second]);
        }
        *out = bc::analysis::correlation(a, b);
    });
}

void bc_posterior_free(bc_posterior* p) { delete p; }

// ---- Goodness of fit ---------------------------------------------------------

bc_status bc_gof_run(const bc_dataset* ds, bc_residual_model model, const double* params, size_t count,
                     uint64_t seed, size_t replications, unsigned threads, bc_gof** out) {
    BC_REQUIRE(ds);
    BC_REQUIRE(params);
    BC_REQUIRE(out);
    return guard([&] {
        const auto kind = kind_of(model);
        auto g = bc::analysis::gof_evaluate(qoi_of(params, count, kind), ds->value.records, kind,
                                            bc::stochastic::RngStream(seed, gof_stream), replications, threads);
        *out = new bc_gof{std::move(g)};
    });
}

bc_status bc_gof_summary_get(const bc_gof* g, bc_component component, size_t resamples, uint64_t seed,
                             bc_gof_summary* out) {
    BC_REQUIRE(g);
    BC_REQUIRE(out);
    return guard([&] {
        const auto comp = component_of(component);
        bc::stochastic::RngStream rng(seed, gof_stream + 1 + static_cast<std::uint64_t>(component));
        const auto s = bc::analysis::summarize(g->value, comp, resamples, rng);
        *out = {s.mean_residual, s.mean_residual_error, s.interval95, s.interval95_error};
    });
}

bc_status bc_gof_residual_correlation(const bc_gof* g, double* out) {
    BC_REQUIRE(g);
    BC_REQUIRE(out);
    return guard([&] { *out = bc::analysis::residual_correlation(g->value); });
}

bc_status bc_gof_write(const bc_gof* g, const char* dir, size_t resamples, uint64_t seed) {
    BC_REQUIRE(g);
    BC_REQUIRE(dir);
    return guard([&] { bc::io::write_gof(g->value, seed, resamples, dir); });
}

void bc_gof_free(bc_gof* g) { delete g; }

// ---- Prediction --------------------------------------------------------------

bc_status bc_prediction_case_load(const char* path, bc_prediction_case** out) {
    BC_REQUIRE(path);
    BC_REQUIRE(out);
    return guard([&] { *out = new bc_prediction_case{bc::io::read_case(path)}; });
}

bc_status bc_prediction_case_set_erosion(bc_prediction_case* c, double gamma_location, double gamma_scale,
                                         double velocity_exponent, double radius_exponent) {
    BC_REQUIRE(c);
    return guard([&] {
        auto copy = c->value;
        copy.erosion = {gamma_location, gamma_scale, velocity_exponent, radius_exponent, std::nullopt, std::nullopt};
        bc::predict::validate(copy);
        c->value = std::move(copy);
    });
}

bc_status bc_prediction_case_use_posterior(bc_prediction_case* c, const bc_posterior* p) {
    BC_REQUIRE(c);
    BC_REQUIRE(p);
    return guard([&] {
        if (p->value.draws.empty()) throw bc::DomainError("posterior has no draws");
        std::vector<bc::inference::QoI> draws;
        for (const auto& row : p->value.draws) draws.push_back(bc::inference::from_vector(row, p->value.kind));
        auto copy = c->value;
        copy.posterior_draws = std::move(draws);
        bc::predict::validate(copy);
        c->value = std::move(copy);
    });
}

void bc_prediction_case_free(bc_prediction_case* c) { delete c; }

bc_status bc_predict(const bc_prediction_case* c, size_t members, uint64_t seed, unsigned threads,
                     bc_ensemble** out) {
    BC_REQUIRE(c);
    BC_REQUIRE(out);
    return guard([&] {
        bc::predict::EnsembleOptions opt;
        opt.threads = threads;
        auto e = bc::predict::predict_ensemble(c->value, members, bc::stochastic::RngStream(seed, predict_stream), opt);
        *out = new bc_ensemble{std::move(e)};
    });
}

bc_status bc_ensemble_summary_get(const bc_ensemble* e, bc_ensemble_summary* out) {
    BC_REQUIRE(e);
    BC_REQUIRE(out);
    const auto& v = e->value;
    bc_ensemble_summary s{v.members.size(), v.failed, v.total_failures, v.partial_failures, 0, 0.0, -1.0};
    for (const auto& m : v.members) {
        if (!m.ok) continue;
        s.wider_than_dam += m.wider_than_dam ? 1 : 0;
        if (m.failure_mode == bc::forward::FailureMode::total) {
            s.max_total_time_to_peak = std::max(s.max_total_time_to_peak, m.time_to_peak);
        } else if (s.min_partial_duration < 0.0 || m.duration < s.min_partial_duration) {
            s.min_partial_duration = m.duration;
        }
    }
    *out = s;
    return BC_OK;
}

bc_status bc_ensemble_member(const bc_ensemble* e, size_t index, bc_member* out) {
    BC_REQUIRE(e);
    BC_REQUIRE(out);
    if (index >= e->value.members.size()) return fail(BC_ERR_DOMAIN, "member index out of range");
    const auto& m = e->value.members[index];
    *out = {m.ok ? 1 : 0, m.failure_mode == bc::forward::FailureMode::total ? 1 : 0, m.wider_than_dam ? 1 : 0,
            m.peak_discharge, m.final_width, m.time_to_peak, m.duration, m.scaling};
    return BC_OK;
}

bc_status bc_ensemble_write(const bc_ensemble* e, const char* dir) {
    BC_REQUIRE(e);
    BC_REQUIRE(dir);
    return guard([&] { bc::io::write_ensemble(e->value, dir); });
}

void bc_ensemble_free(bc_ensemble* e) { delete e; }

// ---- Report ------------------------------------------------------------------

bc_status bc_transport_formula(double gamma_location, double velocity_exponent, double radius_exponent, char* buffer,
                               size_t size, size_t* required) {
    return guard([&] {
        const auto f = bc::predict::transport_formula_report(
            {gamma_location, 0.0, velocity_exponent, radius_exponent, std::nullopt, std::nullopt});
        if (required) *required = f.text.size() + 1;
        if (!buffer || size < f.text.size() + 1) throw bc::DomainError("buffer too small for the formula");
        std::memcpy(buffer, f.text.c_str(), f.text.size() + 1);
    });
}

}  // extern "C"
