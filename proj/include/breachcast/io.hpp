#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "breachcast/analysis.hpp"
#include "breachcast/forward_model.hpp"
#include "breachcast/inference.hpp"
#include "breachcast/mcmc.hpp"
#include "breachcast/predict.hpp"

namespace breachcast::io {

inline constexpr int schema_version = 1;

/// Decimal text with 17 significant digits; parses back to the same double.
std::string format_number(double value);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_text(const std::filesystem::path& path);

// ---- Dataset -------------------------------------------------------------

/// Distribution used when a dataset cell reads `default`.
stochastic::DistSpec default_embankment_slope();
stochastic::DistSpec default_crest_width();
stochastic::DistSpec default_basin_exponent();
stochastic::DistSpec default_side_angle();

struct Dataset {
    /// Released volume in the file times this factor gives m^3.
    double volume_factor = 1.0;
    std::vector<inference::ObservationRecord> records;
};

/// Parses the dataset CSV. `source` names the input in error messages.
Dataset parse_dataset(std::string_view text, std::string_view source = "dataset");
Dataset read_dataset(const std::filesystem::path& path);
/// Inverse of parse_dataset: parsing the output yields identical records.
std::string serialize_dataset(const Dataset& dataset);

// ---- Case and run configuration --------------------------------------------

/// Parses a prediction case from JSON text; distribution fields accept the
/// distribution grammar or plain numbers.
predict::PredictionCase parse_case(std::string_view json_text);
predict::PredictionCase read_case(const std::filesystem::path& path);

struct RunConfig {
    std::optional<std::size_t> chains;
    std::optional<std::size_t> iterations;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> residual_model;
    std::optional<std::size_t> initial_draws;
    std::optional<std::size_t> max_draws;
    std::optional<double> target_precision;
    std::optional<double> min_effective_samples;
    std::optional<double> jump_scale;
};

/// Parses a calibration config; unknown keys and schema mismatches are errors.
RunConfig parse_run_config(std::string_view json_text);

inference::ResidualKind parse_residual_kind(std::string_view text);
std::string_view residual_kind_name(inference::ResidualKind kind);

// ---- Artifacts -------------------------------------------------------------

std::string hydrograph_csv(const forward::Hydrograph& h);

/// Chain archive CSV plus a JSON sidecar at `path` with `.json` appended.
void write_archive(const mcmc::ChainArchive& archive, const std::filesystem::path& path);
mcmc::ChainArchive read_archive(const std::filesystem::path& path);

std::string diagnostics_json(const mcmc::DiagnosticsReport& report, const mcmc::ChainArchive& archive);

void write_posterior(const analysis::PosteriorSamples& samples, const std::filesystem::path& path);
analysis::PosteriorSamples read_posterior(const std::filesystem::path& path);

/// GoF tables and summary into `dir`: samples.csv, percentiles.csv, summary.json.
void write_gof(std::span<const analysis::GofRecord> gof, std::uint64_t seed, std::size_t resamples,
               const std::filesystem::path& dir);

/// Ensemble directory: members.csv, bands.csv, histograms.csv, summary.json.
void write_ensemble(const predict::EnsembleSummary& summary, const std::filesystem::path& dir);

}  // namespace breachcast::io
