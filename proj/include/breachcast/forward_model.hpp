#pragma once

#include <cstddef>
#include <vector>

namespace breachcast::forward {

inline constexpr double gravity = 9.81;
/// Lower clamp applied to every shape exponent.
inline constexpr double min_shape_exponent = 1.0 + 1e-6;
/// Below this exponent the section is treated with rectangular closed forms.
inline constexpr double rectangular_threshold = 1.0 + 1e-4;

enum class Stage { vertical, lateral };
enum class FailureMode { total, partial };

struct DamGeometry {
    double height;            ///< crest height above foundation [m]
    double crest_width;       ///< [m]
    double embankment_slope;  ///< horizontal run per unit rise [-]
    double side_angle_deg;    ///< breach side angle at the top [deg]
};

struct ReservoirSpec {
    double basin_exponent;   ///< volume-level power law exponent [-]
    double level_drop;       ///< reservoir level drop during the failure [m]
    double released_volume;  ///< volume released during the failure [m^3]
};

struct BreachSpec {
    double final_height;         ///< breach height once the foundation is reached [m]
    double initial_depth_ratio;  ///< initial breach depth relative to the level drop [-]
};

struct ErosionParams {
    double scaling;            ///< transport scaling coefficient [-]
    double velocity_exponent;  ///< [-]
    double radius_exponent;    ///< [-], non-positive
};

struct DamCase {
    DamGeometry geometry;
    ReservoirSpec reservoir;
    BreachSpec breach;
};

struct Section {
    double width;  ///< water surface width [m]
    double area;   ///< flow area [m^2]
};

struct CriticalFlow {
    double depth;     ///< [m]
    double velocity;  ///< [m/s]
};

struct InitialConditions {
    double min_bottom_level;  ///< breach bottom level at the foundation [m]
    double bottom_level;      ///< [m]
    double reservoir_level;   ///< [m]
    double full_volume;       ///< reservoir volume at the initial level [m^3]
    double top_width;         ///< [m]
};

/// Exponent of the power-law breach wall; clamped to min_shape_exponent.
double shape_exponent(double breach_height, double top_width, double side_angle_deg);

/// Water surface width and flow area at `depth` above the breach bottom.
Section section_geometry(double depth, double k, double top_width, double breach_height);

/// Arc length of one breach wall between horizontal offsets `from` and `to`
/// measured from the breach centre line.
double side_wall_length(double from, double to, double k, double top_width, double breach_height);

/// Wall slope dS/dw at horizontal offset `offset` from the centre line.
double side_wall_slope(double offset, double k, double top_width, double breach_height);

CriticalFlow critical_flow(double energy_head, double k);

double breach_discharge(double energy_head, double k, double top_width, double breach_height);

/// Discharge of the triangular breach used as reference scale.
double reference_discharge(double energy_head);

double wetted_perimeter(double depth, double k, double top_width, double breach_height);

double hydraulic_radius(double critical_depth, double k, double top_width, double breach_height);

/// Transport rate per unit erodible perimeter [m^2/s].
double sediment_transport(double velocity, double hydraulic_radius, const ErosionParams& erosion);

double erodible_perimeter(double depth, double k, double top_width, double breach_height, Stage stage);

double breach_volume(double k, double top_width, double breach_height, double crest_width,
                     double embankment_slope);

double breach_volume_rate(double k, double breach_height, double crest_width, double embankment_slope,
                          Stage stage);

double reservoir_volume(double level, double basin_exponent, double full_volume, double full_level);

double reservoir_rate(double level, double basin_exponent, double full_volume, double full_level);

InitialConditions initial_conditions(const DamCase& dam_case);

/// Throws DomainError when the case or erosion parameters violate a precondition.
void validate(const DamCase& dam_case);
void validate(const ErosionParams& erosion);

struct SimulationOptions {
    double horizon = 1e6;  ///< [s]
    double peak_tolerance = 1e-3;
    int max_refinements = 20;
    /// Relative change of the fastest state variable allowed per step on the first pass.
    double initial_step_scale = 0.4;
    /// When positive, integrate once at this step scale without refinement.
    double fixed_step_scale = 0.0;
    /// Upper bound on the step scale of a recorded series, so trapezoid
    /// integrals over the samples close the volume balances.
    double output_step_scale = 0.05;
    double stop_head = 1e-3;                   ///< [m]
    double stop_discharge = 1e-3;              ///< [m^3/s]
    double stop_widening_rate = 1e-9;          ///< [m/s]
    double quiescent_discharge_fraction = 1e-3;
    double quiescent_width_fraction = 1e-2;
    bool record_series = true;
};

struct HydrographSample {
    double time;             ///< [s]
    double discharge;        ///< [m^3/s]
    double top_width;        ///< [m]
    double bottom_level;     ///< [m]
    double reservoir_level;  ///< [m]
    double sediment_discharge;  ///< eroded volume rate [m^3/s]
};

struct Hydrograph {
    std::vector<HydrographSample> samples;  ///< empty unless record_series
    double peak_discharge = 0.0;            ///< [m^3/s]
    double final_width = 0.0;               ///< top width over shape exponent at the end [m]
    double time_to_peak = 0.0;              ///< [s]
    double duration = 0.0;                  ///< [s]
    double switch_time = -1.0;              ///< time the foundation was reached, negative if never [s]
    FailureMode failure_mode = FailureMode::partial;
    bool horizon_reached = false;
    double step_scale = 0.0;
    int refinements = 0;
    std::size_t steps = 0;
};

/// Integrates the coupled reservoir and breach-width equations, refining the
/// step scale until the peak discharge is stable to `peak_tolerance`.
Hydrograph simulate(const DamCase& dam_case, const ErosionParams& erosion,
                    const SimulationOptions& options = {});

}  // namespace breachcast::forward
