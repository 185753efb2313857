#pragma once

// Arc length of a breach wall parametrised by relative elevation.
//
// A wall point at relative elevation s (elevation over breach height) sits at
// elevation h_b*s and horizontal offset (W_b/2)*s^(k-1) from the centre line.

namespace breachcast::forward::detail {

/// Arc length of sigma -> (rise*sigma, run*sigma^m) for sigma in [from, to],
/// by tanh-sinh quadrature split at the unit-slope point.
double power_curve_length(double rise, double run, double m, double from, double to);

/// Wall length between relative elevations `from` and `to` by quadrature.
double wall_length_exact(double from, double to, double k, double top_width, double breach_height);

/// Wall length from the centre line up to relative elevation `level`,
/// interpolated from a precomputed table with quadrature outside its range.
double wall_length_fast(double level, double k, double top_width, double breach_height);

/// Same as wall_length_fast with log(level) supplied by the caller.
double wall_length_fast_log(double level, double log_level, double k, double log_half_aspect,
                            double top_width, double breach_height);

/// Relative elevation of a wall point at horizontal offset `offset`.
double level_at_offset(double offset, double k, double top_width);

}  // namespace breachcast::forward::detail
