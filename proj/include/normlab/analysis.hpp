// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Measurement pipeline: loss smoothing, quadratic loss-vs-norm fits in log-log
// space, the fit-variant ensemble, and the log2 scaling regressions.
//
// Fits work in natural log; every reported optimum is also given in log2.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/norms.hpp"

namespace normlab {

struct RunRecord {
    std::string run_id;
    double lr = 0.0;
    std::size_t batch = 0;
    std::uint64_t tokens = 0;
    std::uint64_t seed = 0;
    double loss = 0.0;
    std::map<NormKind, double> norms;
    std::string layer;

    /// Throws Error if the loss is not finite or a norm is not positive.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Smoothing

struct SeriesPoint {
    double x = 0.0;
    double loss = 0.0;
};

struct SmoothedPoint {
    double x = 0.0;
    double mean = 0.0;
    double stderr_ = 0.0;
};

/// 3-point running mean with the sample stderr of each window. Endpoints keep
/// their raw loss and borrow the stderr of the adjacent interior point.
std::vector<SmoothedPoint> smooth_losses(std::span<const SeriesPoint> series);

/// Smoothing applies to runs with batch <= max_batch evaluated at >= min_tokens.
struct SmoothingGate {
    bool enabled = true;
    std::size_t max_batch = 128;
    std::uint64_t min_tokens = std::uint64_t{1} << 33;

    bool applies(std::size_t batch, std::uint64_t tokens) const {
        return enabled && batch <= max_batch && tokens >= min_tokens;
    }
};

// ---------------------------------------------------------------------------
// Loss vs norm

struct NormLossPoint {
    double lr = 0.0;
    double norm = 0.0;
    double loss = 0.0;
    /// Standard error of `loss`; 0 means unknown.
    double stderr_ = 0.0;
};

struct FitResult {
    std::string variant;
    /// log(loss) = a log(norm)^2 + b log(norm) + c. Zero for argmin variants.
    std::array<double, 3> coef{};
    /// Covariance of (a, b, c), scaled by the reduced chi-square when there
    /// are spare degrees of freedom. Row/col 2 is zero when c is pinned.
    std::array<std::array<double, 3>, 3> cov{};
    bool fitted = false;
    bool constrained = false;
    bool has_vertex = false;
    /// Natural-log and log2 location of the optimum norm.
    double log_norm_star = 0.0;
    double log2_norm_star = 0.0;
    double loss_star = 0.0;
    /// Learning rate of the data point closest to the optimum in log norm.
    double lr_star = 0.0;
    std::size_t n_used = 0;
    std::string note;
};

/// Weighted quadratic fit over the `n_points` entries nearest (by index) to
/// the empirical minimum. Points must be in grid order. With `constrain`, c is
/// pinned to log(init_loss). Throws Error on fewer than three points or a
/// non-positive norm or loss; a <= 0 is reported with has_vertex = false.
FitResult fit_loss_vs_norm(std::span<const NormLossPoint> points, double init_loss, std::size_t n_points = 7,
                           bool constrain = true);

/// Lowest-loss point taken as the optimum, no fitting.
FitResult argmin_optimum(std::span<const NormLossPoint> points);

struct EnsemblePoint {
    double lr = 0.0;
    double norm = 0.0;
    double raw_loss = 0.0;
    double smoothed_loss = 0.0;
    double smoothed_stderr = 0.0;
};

struct Spread {
    double min = 0.0;
    double max = 0.0;
    double width() const { return max - min; }
    bool covers(double v) const { return min <= v && v <= max; }
};

struct Ensemble {
    /// fit/raw/free, fit/raw/constrained, fit/smooth/free,
    /// fit/smooth/constrained, argmin/raw, argmin/smooth.
    std::vector<FitResult> variants;
    /// Over variants that produced an optimum.
    Spread log2_norm_star;
    Spread loss_star;
    Spread log2_lr_star;
    std::size_t usable = 0;
};

Ensemble fit_variant_ensemble(std::span<const EnsemblePoint> points, double init_loss, std::size_t n_points = 7);

// ---------------------------------------------------------------------------
// Scaling regressions (log2)

struct Optimum {
    double lr = 0.0;
    double batch = 0.0;
    double tokens = 0.0;
};

struct LinearFit {
    /// Slopes then intercept.
    std::vector<double> coef;
    std::vector<double> stderr_;
    std::vector<double> residuals;
    double rss = 0.0;
};

/// OLS of log2 lr = alpha log2 B + beta log2 D + gamma. Throws Error on fewer
/// than four points, fewer than two distinct B or D, or a collinear design.
LinearFit regress_lr_bs_horizon(std::span<const Optimum> optima);

/// Slopes held at (alpha, beta); only gamma is fit.
LinearFit regress_lr_bs_horizon_fixed(std::span<const Optimum> optima, double alpha = 1.5, double beta = -1.0);

struct PowerLawPoint {
    double x = 0.0;
    double y = 0.0;
};

struct PowerLaw {
    double multiplier = 0.0;
    double exponent = 0.0;
    double multiplier_stderr = 0.0;
    double exponent_stderr = 0.0;
};

/// y = multiplier * x^exponent by OLS on log-log. Throws Error on fewer than
/// three points or non-positive values.
PowerLaw fit_power_law(std::span<const PowerLawPoint> points);

struct ComposedExponent {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// Exponent of lr*(D) after substituting B*(D) ~ D^b into the lr/B/D law:
/// alpha b + beta, with independent first-order error propagation.
ComposedExponent compose_exponent(double alpha, double alpha_se, double beta, double beta_se, double b, double b_se);

// ---------------------------------------------------------------------------
// Norm reach set

struct NormTrajectory {
    std::string run_id;
    double lr = 0.0;
    double batch = 0.0;
    /// (tokens, norm) in increasing token order.
    std::vector<std::pair<double, double>> points;
};

struct ReachEntry {
    std::string run_id;
    double lr = 0.0;
    double batch = 0.0;
    double tokens_first = 0.0;
};

struct ReachExclusion {
    std::string run_id;
    std::string reason;
};

struct ReachSet {
    double band_lo = 6.8;
    double band_hi = 7.2;
    std::vector<ReachEntry> entries;
    std::vector<ReachExclusion> excluded;
    /// log2 lr = alpha log2 B + beta log2 D_first + gamma. Empty when the
    /// entries cannot support the regression.
    std::optional<LinearFit> free_fit;
    std::optional<LinearFit> heuristic_fit;
    std::string fit_note;
};

ReachSet norm_reach_set(std::span<const NormTrajectory> runs, double band_lo = 6.8, double band_hi = 7.2);

}  // namespace normlab
