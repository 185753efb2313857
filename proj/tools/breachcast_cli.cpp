// Command-line front end. Links only the C interface.

#include <breachcast/breachcast.h>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;

namespace {

/// A failure reported to the user with exit status 1.
struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(bc_status status, const std::string& what) {
    if (status != BC_OK) throw Failure(what + ": " + bc_status_name(status) + ": " + bc_last_error());
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using Hydrograph = std::unique_ptr<bc_hydrograph, Deleter<bc_hydrograph, bc_hydrograph_free>>;
using Dataset = std::unique_ptr<bc_dataset, Deleter<bc_dataset, bc_dataset_free>>;
using Archive = std::unique_ptr<bc_archive, Deleter<bc_archive, bc_archive_free>>;
using Diagnostics = std::unique_ptr<bc_diagnostics, Deleter<bc_diagnostics, bc_diagnostics_free>>;
using Posterior = std::unique_ptr<bc_posterior, Deleter<bc_posterior, bc_posterior_free>>;
using Gof = std::unique_ptr<bc_gof, Deleter<bc_gof, bc_gof_free>>;
using Case = std::unique_ptr<bc_prediction_case, Deleter<bc_prediction_case, bc_prediction_case_free>>;
using Ensemble = std::unique_ptr<bc_ensemble, Deleter<bc_ensemble, bc_ensemble_free>>;

struct Globals {
    std::uint64_t seed = 1;
    std::optional<unsigned> threads;
    std::optional<std::string> residual_model;
    std::optional<std::string> out;

    unsigned worker_count() const {
        if (threads) return std::max(*threads, 1u);
        if (const char* env = std::getenv("BREACHCAST_THREADS"); env && *env) {
            try {
                const long n = std::stol(env);
                if (n >= 1) return static_cast<unsigned>(n);
            } catch (const std::exception&) {
            }
            throw Failure(std::string("BREACHCAST_THREADS must be a positive integer, got '") + env + "'");
        }
        return std::max(std::thread::hardware_concurrency(), 1u);
    }

    std::string out_or(const std::string& fallback) const { return out.value_or(fallback); }
};

bc_residual_model model_from(const std::string& name) {
    if (name == "gaussian") return BC_RESIDUAL_GAUSSIAN;
    if (name == "zero-noise") return BC_RESIDUAL_ZERO_NOISE;
    throw Failure("unknown residual model '" + name + "'");
}

const char* model_name(bc_residual_model m) { return m == BC_RESIDUAL_GAUSSIAN ? "gaussian" : "zero-noise"; }

void make_directory(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Failure("cannot create directory '" + dir + "': " + ec.message());
}

void write_file_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!(f << text) || !f.flush()) throw Failure("cannot write '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Failure("cannot rename onto '" + path.string() + "': " + ec.message());
}

// A posterior together with its mode, which most subcommands need.
struct ModeTable {
    bc_residual_model model;
    std::vector<double> values;
    std::vector<double> errors;
};

ModeTable mode_of(const bc_posterior* p, std::size_t resamples, std::uint64_t seed) {
    ModeTable m{bc_posterior_model(p), {}, {}};
    const std::size_t d = bc_parameter_count(m.model);
    m.values.resize(d);
    m.errors.resize(d);
    check(bc_posterior_mode(p, resamples, seed, m.values.data(), m.errors.data(), d), "posterior mode");
    return m;
}

Posterior load_posterior(const std::string& path, const Globals& g) {
    bc_posterior* raw = nullptr;
    check(bc_posterior_load(path.c_str(), &raw), "loading " + path);
    Posterior p(raw);
    if (g.residual_model && model_from(*g.residual_model) != bc_posterior_model(p.get())) {
        throw Failure("posterior '" + path + "' was produced under the " + model_name(bc_posterior_model(p.get())) +
                      " residual model, not " + *g.residual_model);
    }
    return p;
}

// ---- simulate ----------------------------------------------------------------

struct SimulateArgs {
    bc_case dam{};
    bc_erosion erosion{};
};

void run_simulate(const SimulateArgs& a, const Globals& g) {
    bc_hydrograph* raw = nullptr;
    check(bc_simulate(&a.dam, &a.erosion, &raw), "simulate");
    Hydrograph h(raw);
    const std::string out = g.out_or("hydrograph.csv");
    check(bc_hydrograph_write_csv(h.get(), out.c_str()), "writing " + out);
    bc_hydrograph_summary s{};
    check(bc_hydrograph_summary_get(h.get(), &s), "summary");
    std::printf("peak_discharge %.6g m3/s\nfinal_width %.6g m\ntime_to_peak %.6g s\nfailure %s\nwritten %s\n",
                s.peak_discharge, s.final_width, s.time_to_peak, s.total_failure ? "total" : "partial", out.c_str());
}

// ---- calibrate ---------------------------------------------------------------

struct CalibrateArgs {
    std::string data;
    std::string config;
    std::optional<std::size_t> chains, iterations, initial_draws, max_draws;
    std::optional<double> target_precision, min_effective_samples, jump_scale;
    bool resume = false;
};

void run_calibrate(const CalibrateArgs& a, const Globals& g, bool seed_given) {
    bc_calibration_config cfg;
    bc_calibration_config_default(&cfg);
    cfg.seed = g.seed;
    if (!a.config.empty()) check(bc_calibration_config_load(a.config.c_str(), &cfg), "loading " + a.config);
    if (seed_given) cfg.seed = g.seed;
    if (g.residual_model) cfg.model = model_from(*g.residual_model);
    if (a.chains) cfg.chains = *a.chains;
    if (a.iterations) cfg.iterations = *a.iterations;
    if (a.initial_draws) cfg.initial_draws = *a.initial_draws;
    if (a.max_draws) cfg.max_draws = *a.max_draws;
    if (a.target_precision) cfg.target_precision = *a.target_precision;
    if (a.min_effective_samples) cfg.min_effective_samples = *a.min_effective_samples;
    if (a.jump_scale) cfg.jump_scale = *a.jump_scale;
    cfg.threads = g.worker_count();

    const std::string out = g.out_or("chains.csv");
    if (fs::exists(out) && !a.resume) throw Failure("archive '" + out + "' exists; pass --resume to continue it");
    cfg.archive_path = out.c_str();

    bc_dataset* raw_ds = nullptr;
    check(bc_dataset_load(a.data.c_str(), &raw_ds), "loading " + a.data);
    Dataset ds(raw_ds);
    bc_archive* raw = nullptr;
    check(bc_calibrate(ds.get(), &cfg, &raw), "calibrate");
    Archive archive(raw);
    std::printf("residual_model %s\nchains %zu\ngenerations %zu\nelapsed_seconds %.1f\nwritten %s\n",
                model_name(cfg.model), bc_archive_chains(archive.get()), bc_archive_generations(archive.get()),
                bc_archive_elapsed_seconds(archive.get()), out.c_str());
}

// ---- diagnose ----------------------------------------------------------------

struct DiagnoseArgs {
    std::string archive;
    double threshold = 1.1;
};

void run_diagnose(const DiagnoseArgs& a, const Globals& g) {
    bc_archive* raw = nullptr;
    check(bc_archive_load(a.archive.c_str(), &raw), "loading " + a.archive);
    Archive archive(raw);
    bc_diagnostics* raw_d = nullptr;
    check(bc_diagnose(archive.get(), a.threshold, &raw_d), "diagnose");
    Diagnostics diag(raw_d);
    bc_posterior* raw_p = nullptr;
    check(bc_posterior_from_archive(archive.get(), diag.get(), &raw_p), "thinning");
    Posterior posterior(raw_p);

    const std::string dir = g.out_or("diagnostics");
    make_directory(dir);
    const std::string json = (fs::path(dir) / "diagnostics.json").string();
    const std::string csv = (fs::path(dir) / "posterior.csv").string();
    check(bc_diagnostics_write_json(diag.get(), json.c_str()), "writing " + json);
    check(bc_posterior_write(posterior.get(), csv.c_str()), "writing " + csv);

    bc_diagnostics_summary s{};
    check(bc_diagnostics_summary_get(diag.get(), &s), "summary");
    std::printf("converged %s\nburn_in %zu\nanalysis_start %zu\nthinning_lag %zu\nacceptance_rate %.4f\n"
                "final_psrf %.4f\nposterior_draws %zu\nwritten %s\n",
                s.converged ? "yes" : "no", s.burn_in, s.analysis_start, s.thinning_lag, s.acceptance_rate,
                s.final_multivariate_psrf, bc_posterior_size(posterior.get()), dir.c_str());
}

// ---- gof ---------------------------------------------------------------------

struct GofArgs {
    std::string posterior;
    std::string data;
    std::size_t replications = 2000;
    std::size_t resamples = 1000;
};

void run_gof(const GofArgs& a, const Globals& g) {
    auto posterior = load_posterior(a.posterior, g);
    const auto mode = mode_of(posterior.get(), a.resamples, g.seed);
    bc_dataset* raw_ds = nullptr;
    check(bc_dataset_load(a.data.c_str(), &raw_ds), "loading " + a.data);
    Dataset ds(raw_ds);
    bc_gof* raw = nullptr;
    check(bc_gof_run(ds.get(), mode.model, mode.values.data(), mode.values.size(), g.seed, a.replications,
                     g.worker_count(), &raw),
          "gof");
    Gof gof(raw);
    const std::string dir = g.out_or("gof");
    make_directory(dir);
    check(bc_gof_write(gof.get(), dir.c_str(), a.resamples, g.seed), "writing " + dir);

    const char* labels[] = {"overall", "peak", "width"};
    std::printf("%-8s %12s %10s %12s %10s\n", "", "mean_r", "+-", "I95", "+-");
    for (int c = 0; c < 3; ++c) {
        bc_gof_summary s{};
        check(bc_gof_summary_get(gof.get(), static_cast<bc_component>(c), a.resamples, g.seed, &s), "summary");
        std::printf("%-8s %12.4f %10.4f %12.4f %10.4f\n", labels[c], s.mean_residual, s.mean_residual_error,
                    s.interval95, s.interval95_error);
    }
    double rho = 0.0;
    check(bc_gof_residual_correlation(gof.get(), &rho), "correlation");
    std::printf("residual_correlation %.4f\nwritten %s\n", rho, dir.c_str());
}

// ---- predict -----------------------------------------------------------------

struct PredictArgs {
    std::string case_path;
    std::size_t members = 5000;
    std::string sampler = "lhs";
    std::string posterior;
    bool posterior_draws = false;
    std::size_t resamples = 1000;
};

void run_predict(const PredictArgs& a, const Globals& g) {
    if (a.members == 0) throw Failure("--n must be positive");
    bc_prediction_case* raw_c = nullptr;
    check(bc_prediction_case_load(a.case_path.c_str(), &raw_c), "loading " + a.case_path);
    Case c(raw_c);
    if (!a.posterior.empty()) {
        auto posterior = load_posterior(a.posterior, g);
        if (a.posterior_draws) {
            check(bc_prediction_case_use_posterior(c.get(), posterior.get()), "posterior draws");
        } else {
            const auto m = mode_of(posterior.get(), a.resamples, g.seed);
            check(bc_prediction_case_set_erosion(c.get(), m.values[0], m.values[1], m.values[2], m.values[3]),
                  "posterior mode");
        }
    } else if (a.posterior_draws) {
        throw Failure("--posterior-draws requires --posterior");
    }
    bc_ensemble* raw = nullptr;
    check(bc_predict(c.get(), a.members, g.seed, g.worker_count(), &raw), "predict");
    Ensemble e(raw);
    const std::string dir = g.out_or("ensemble");
    make_directory(dir);
    check(bc_ensemble_write(e.get(), dir.c_str()), "writing " + dir);
    bc_ensemble_summary s{};
    check(bc_ensemble_summary_get(e.get(), &s), "summary");
    std::printf("members %zu\nfailed %zu\ntotal_failures %zu\npartial_failures %zu\nwider_than_dam %zu\n"
                "max_total_time_to_peak %.1f s\n",
                s.members, s.failed, s.total_failures, s.partial_failures, s.wider_than_dam, s.max_total_time_to_peak);
    if (s.min_partial_duration >= 0.0) std::printf("min_partial_duration %.1f s\n", s.min_partial_duration);
    std::printf("written %s\n", dir.c_str());
}

// ---- report ------------------------------------------------------------------

struct ReportArgs {
    std::string posterior;
    std::size_t resamples = 1000;
};

void run_report(const ReportArgs& a, const Globals& g) {
    auto posterior = load_posterior(a.posterior, g);
    const auto m = mode_of(posterior.get(), a.resamples, g.seed);
    std::ostringstream text;
    text << "residual_model " << model_name(m.model) << "\n";
    text << "draws " << bc_posterior_size(posterior.get()) << "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-18s %14s %12s\n", "parameter", "mode", "std_error");
    text << line;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        std::snprintf(line, sizeof line, "%-18s %14.6g %12.3g\n", bc_parameter_name(m.model, i), m.values[i],
                      m.errors[i]);
        text << line;
    }
    double rho = 0.0;
    check(bc_posterior_correlation(posterior.get(), 0, 2, &rho), "correlation");
    std::snprintf(line, sizeof line, "correlation(gamma_location, velocity_exponent) %.4f\n", rho);
    text << line;
    std::size_t need = 0;
    bc_transport_formula(m.values[0], m.values[2], m.values[3], nullptr, 0, &need);
    std::string formula(need, '\0');
    check(bc_transport_formula(m.values[0], m.values[2], m.values[3], formula.data(), formula.size(), &need),
          "formula");
    formula.resize(need - 1);
    text << "transport " << formula << "\n";
    std::cout << text.str();
    if (g.out) write_file_atomic(*g.out, text.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dam breach simulation, calibration and probabilistic prediction"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(bc_version()));

    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--threads", g.threads, "Worker threads (default: BREACHCAST_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--residual-model", g.residual_model, "Residual model")
        ->check(CLI::IsMember({"gaussian", "zero-noise"}));
    app.add_option("--out", g.out, "Output file or directory");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run one forward simulation and write the hydrograph CSV");
    simulate->add_option("--dam-height", sim.dam.dam_height, "Dam height [m]")->required();
    simulate->add_option("--crest-width", sim.dam.crest_width, "Crest width [m]")->required();
    simulate->add_option("--embankment-slope", sim.dam.embankment_slope, "Embankment slope [-]")->required();
    simulate->add_option("--side-angle", sim.dam.side_angle_deg, "Breach side angle [deg]")->required();
    simulate->add_option("--basin-exponent", sim.dam.basin_exponent, "Reservoir basin exponent [-]")->required();
    simulate->add_option("--level-drop", sim.dam.level_drop, "Reservoir level drop [m]")->required();
    simulate->add_option("--released-volume", sim.dam.released_volume, "Released volume [m3]")->required();
    simulate->add_option("--final-height", sim.dam.final_height, "Final breach height [m]")->required();
    simulate->add_option("--initial-depth-ratio", sim.dam.initial_depth_ratio, "Initial breach depth ratio [-]")
        ->required();
    simulate->add_option("--scaling", sim.erosion.scaling, "Transport law scaling [-]")->required();
    simulate->add_option("--velocity-exponent", sim.erosion.velocity_exponent, "Velocity exponent [-]")->required();
    simulate->add_option("--radius-exponent", sim.erosion.radius_exponent, "Hydraulic radius exponent [-]")
        ->required();

    CalibrateArgs cal;
    auto* calibrate = app.add_subcommand("calibrate", "Run DE-MC calibration and write the chain archive");
    calibrate->add_option("--data", cal.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    calibrate->add_option("--config", cal.config, "Run configuration JSON")->check(CLI::ExistingFile);
    calibrate->add_option("--chains", cal.chains, "Number of chains");
    calibrate->add_option("--iters", cal.iterations, "Generations per chain");
    calibrate->add_option("--initial-draws", cal.initial_draws, "Initial Monte Carlo draws per record");
    calibrate->add_option("--max-draws", cal.max_draws, "Cap on Monte Carlo draws per record");
    calibrate->add_option("--target-precision", cal.target_precision, "Relative precision of the likelihood");
    calibrate->add_option("--min-ess", cal.min_effective_samples, "Stop once this effective sample size is reached");
    calibrate->add_option("--jump-scale", cal.jump_scale, "DE-MC jump scale (default 2.38/sqrt(2d))");
    calibrate->add_flag("--resume", cal.resume, "Continue an existing archive");

    DiagnoseArgs dia;
    auto* diagnose = app.add_subcommand("diagnose", "Convergence diagnostics and thinned posterior samples");
    diagnose->add_option("--archive", dia.archive, "Chain archive CSV")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--threshold", dia.threshold, "PSRF convergence threshold");

    GofArgs gofa;
    auto* gof = app.add_subcommand("gof", "Goodness-of-fit statistics at the posterior mode");
    gof->add_option("--posterior", gofa.posterior, "Posterior samples CSV")->required()->check(CLI::ExistingFile);
    gof->add_option("--data", gofa.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    gof->add_option("--replications", gofa.replications, "Replicated residuals per record");
    gof->add_option("--resamples", gofa.resamples, "Bootstrap resamples");

    PredictArgs pre;
    auto* predict = app.add_subcommand("predict", "Probabilistic breach hydrograph ensemble for a new case");
    predict->add_option("--case", pre.case_path, "Case JSON")->required()->check(CLI::ExistingFile);
    predict->add_option("--n", pre.members, "Ensemble members");
    predict->add_option("--sampler", pre.sampler, "Design sampler")->check(CLI::IsMember({"lhs"}));
    predict->add_option("--posterior", pre.posterior, "Posterior samples CSV; its mode sets the transport law")
        ->check(CLI::ExistingFile);
    predict->add_flag("--posterior-draws", pre.posterior_draws, "Draw the transport law from the posterior samples");
    predict->add_option("--resamples", pre.resamples, "Bootstrap resamples for the mode");

    ReportArgs rep;
    auto* report = app.add_subcommand("report", "Posterior mode table and transport formula");
    report->add_option("--posterior", rep.posterior, "Posterior samples CSV")->required()->check(CLI::ExistingFile);
    report->add_option("--resamples", rep.resamples, "Bootstrap resamples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*simulate) run_simulate(sim, g);
        else if (*calibrate) run_calibrate(cal, g, seed_opt->count() > 0);
        else if (*diagnose) run_diagnose(dia, g);
        else if (*gof) run_gof(gofa, g);
        else if (*predict) run_predict(pre, g);
        else if (*report) run_report(rep, g);
        return 0;
    } catch (const Failure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
