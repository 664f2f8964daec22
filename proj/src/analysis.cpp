// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0

#include "normlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "normlab/error.hpp"
#include "normlab/linalg.hpp"
#include "normlab/matrix.hpp"

namespace normlab {

void RunRecord::validate() const {
    if (!std::isfinite(loss)) throw NonFiniteError(fmt::format("run {}: loss is not finite", run_id));
    for (const auto& [kind, v] : norms) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw Error(fmt::format("run {}: {} norm must be positive, got {}", run_id, to_string(kind), v));
    }
}

std::vector<SmoothedPoint> smooth_losses(std::span<const SeriesPoint> series) {
    const std::size_t n = series.size();
    if (n < 3) throw Error(fmt::format("smoothing needs at least 3 points, got {}", n));
    std::vector<SmoothedPoint> out(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double a = series[i - 1].loss, b = series[i].loss, c = series[i + 1].loss;
        const double mean = (a + b + c) / 3.0;
        const double var = ((a - mean) * (a - mean) + (b - mean) * (b - mean) + (c - mean) * (c - mean)) / 2.0;
        out[i] = {series[i].x, mean, std::sqrt(var / 3.0)};
    }
    out.front() = {series.front().x, series.front().loss, out[1].stderr_};
    out.back() = {series.back().x, series.back().loss, out[n - 2].stderr_};
    return out;
}

namespace {

void check_points(std::span<const NormLossPoint> points) {
    if (points.size() < 3) throw Error(fmt::format("loss-vs-norm fit needs at least 3 points, got {}", points.size()));
    for (const auto& p : points) {
        if (!(p.norm > 0.0) || !std::isfinite(p.norm)) throw Error(fmt::format("norm must be positive, got {}", p.norm));
        if (!(p.loss > 0.0) || !std::isfinite(p.loss)) throw Error(fmt::format("loss must be positive, got {}", p.loss));
    }
}

std::size_t argmin_index(std::span<const NormLossPoint> points) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i)
        if (points[i].loss < points[best].loss) best = i;
    return best;
}

double nearest_lr(std::span<const NormLossPoint> points, double log_norm) {
    std::size_t best = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double g = std::abs(std::log(points[i].norm) - log_norm);
        if (g < gap) {
            gap = g;
            best = i;
        }
    }
    return points[best].lr;
}

}  // namespace

FitResult argmin_optimum(std::span<const NormLossPoint> points) {
    check_points(points);
    const auto& p = points[argmin_index(points)];
    FitResult r;
    r.variant = "argmin";
    r.has_vertex = true;
    r.log_norm_star = std::log(p.norm);
    r.log2_norm_star = std::log2(p.norm);
    r.loss_star = p.loss;
    r.lr_star = p.lr;
    r.n_used = points.size();
    return r;
}

FitResult fit_loss_vs_norm(std::span<const NormLossPoint> points, double init_loss, std::size_t n_points,
                           bool constrain) {
    check_points(points);
    if (n_points < 3) throw Error("fit window must hold at least 3 points");
    if (constrain && !(init_loss > 0.0)) throw Error(fmt::format("init loss must be positive, got {}", init_loss));

    const std::size_t best = argmin_index(points);
    const std::size_t half = n_points / 2;
    const std::size_t lo = best >= half ? best - half : 0;
    const std::size_t hi = std::min(points.size(), best + (n_points - half));
    const auto window = points.subspan(lo, hi - lo);
    const std::size_t n = window.size();
    const std::size_t p = constrain ? 2 : 3;
    if (n < p) throw Error(fmt::format("fit window has {} points for {} free coefficients", n, p));

    const double c_fixed = constrain ? std::log(init_loss) : 0.0;
    Matrix design(n, p);
    std::vector<double> y(n), w(n);
    bool weighted = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = std::log(window[i].norm);
        design(i, 0) = l * l;
        design(i, 1) = l;
        if (!constrain) design(i, 2) = 1.0;
        y[i] = std::log(window[i].loss) - c_fixed;
        // Delta method: stderr of log(loss).
        const double se = window[i].stderr_ / window[i].loss;
        if (!(se > 0.0) || !std::isfinite(se)) weighted = false;
        w[i] = weighted ? 1.0 / se : 1.0;
    }
    const LeastSquares ls = least_squares(design, y, weighted ? std::span<const double>(w) : std::span<const double>());

    FitResult r;
    r.variant = constrain ? "fit/constrained" : "fit/free";
    r.fitted = true;
    r.constrained = constrain;
    r.n_used = n;
    r.coef = {ls.coef[0], ls.coef[1], constrain ? c_fixed : ls.coef[2]};
    const double scale = n > p ? ls.rss / static_cast<double>(n - p) : 1.0;
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) r.cov[i][j] = ls.cov_unscaled(i, j) * scale;
    if (!weighted) r.note = "unit weights";

    const double a = r.coef[0], b = r.coef[1], c = r.coef[2];
    if (!(a > 0.0)) {
        r.note = fmt::format("no interior optimum: curvature {} <= 0", a);
        return r;
    }
    r.has_vertex = true;
    r.log_norm_star = -b / (2.0 * a);
    r.log2_norm_star = r.log_norm_star / std::log(2.0);
    r.loss_star = std::exp(a * r.log_norm_star * r.log_norm_star + b * r.log_norm_star + c);
    r.lr_star = nearest_lr(points, r.log_norm_star);
    return r;
}

Ensemble fit_variant_ensemble(std::span<const EnsemblePoint> points, double init_loss, std::size_t n_points) {
    std::vector<NormLossPoint> raw, smooth;
    for (const auto& p : points) {
        raw.push_back({p.lr, p.norm, p.raw_loss, 0.0});
        smooth.push_back({p.lr, p.norm, p.smoothed_loss, p.smoothed_stderr});
    }
    Ensemble e;
    for (const auto& [label, set] : {std::pair{"raw", &raw}, std::pair{"smooth", &smooth}}) {
        for (bool constrain : {false, true}) {
            FitResult f = fit_loss_vs_norm(*set, init_loss, n_points, constrain);
            f.variant = fmt::format("fit/{}/{}", label, constrain ? "constrained" : "free");
            e.variants.push_back(std::move(f));
        }
    }
    for (const auto& [label, set] : {std::pair{"raw", &raw}, std::pair{"smooth", &smooth}}) {
        FitResult f = argmin_optimum(*set);
        f.variant = fmt::format("argmin/{}", label);
        e.variants.push_back(std::move(f));
    }

    auto widen = [](Spread& s, double v, bool first) {
        if (first) s = {v, v};
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    };
    for (const auto& f : e.variants) {
        if (!f.has_vertex) continue;
        const bool first = e.usable == 0;
        widen(e.log2_norm_star, f.log2_norm_star, first);
        widen(e.loss_star, f.loss_star, first);
        widen(e.log2_lr_star, std::log2(f.lr_star), first);
        ++e.usable;
    }
    return e;
}

namespace {

void check_optima(std::span<const Optimum> optima, std::size_t min_points) {
    if (optima.size() < min_points)
        throw Error(fmt::format("regression needs at least {} optima, got {}", min_points, optima.size()));
    for (const auto& o : optima) {
        if (!(o.lr > 0.0) || !(o.batch > 0.0) || !(o.tokens > 0.0))
            throw Error(fmt::format("optimum ({}, {}, {}) must be positive", o.lr, o.batch, o.tokens));
    }
}

}  // namespace

LinearFit regress_lr_bs_horizon(std::span<const Optimum> optima) {
    check_optima(optima, 4);
    std::set<double> bs, ds;
    for (const auto& o : optima) {
        bs.insert(o.batch);
        ds.insert(o.tokens);
    }
    if (bs.size() < 2 || ds.size() < 2)
        throw Error(fmt::format("regression needs at least 2 distinct batch sizes and horizons, got {} and {}",
                                bs.size(), ds.size()));

    const std::size_t n = optima.size();
    Matrix design(n, 3);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        design(i, 0) = std::log2(optima[i].batch);
        design(i, 1) = std::log2(optima[i].tokens);
        design(i, 2) = 1.0;
        y[i] = std::log2(optima[i].lr);
    }
    LeastSquares ls;
    try {
        ls = least_squares(design, y);
    } catch (const ShapeError& e) {
        throw Error(fmt::format("collinear batch/horizon design: {}", e.what()));
    }
    LinearFit f;
    f.coef = ls.coef;
    f.rss = ls.rss;
    const double s2 = n > 3 ? ls.rss / static_cast<double>(n - 3) : 0.0;
    for (std::size_t k = 0; k < 3; ++k) f.stderr_.push_back(std::sqrt(s2 * ls.cov_unscaled(k, k)));
    for (std::size_t i = 0; i < n; ++i)
        f.residuals.push_back(y[i] - (f.coef[0] * design(i, 0) + f.coef[1] * design(i, 1) + f.coef[2]));
    return f;
}

LinearFit regress_lr_bs_horizon_fixed(std::span<const Optimum> optima, double alpha, double beta) {
    check_optima(optima, 1);
    const std::size_t n = optima.size();
    std::vector<double> partial(n);
    double gamma = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        partial[i] = std::log2(optima[i].lr) - alpha * std::log2(optima[i].batch) - beta * std::log2(optima[i].tokens);
        gamma += partial[i];
    }
    gamma /= static_cast<double>(n);
    LinearFit f;
    f.coef = {alpha, beta, gamma};
    for (double v : partial) {
        f.residuals.push_back(v - gamma);
        f.rss += (v - gamma) * (v - gamma);
    }
    const double gamma_se = n > 1 ? std::sqrt(f.rss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    f.stderr_ = {0.0, 0.0, gamma_se};
    return f;
}

PowerLaw fit_power_law(std::span<const PowerLawPoint> points) {
    if (points.size() < 3) throw Error(fmt::format("power-law fit needs at least 3 points, got {}", points.size()));
    const std::size_t n = points.size();
    Matrix design(n, 2);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(points[i].x > 0.0) || !(points[i].y > 0.0))
            throw Error(fmt::format("power-law point ({}, {}) must be positive", points[i].x, points[i].y));
        design(i, 0) = std::log(points[i].x);
        design(i, 1) = 1.0;
        y[i] = std::log(points[i].y);
    }
    LeastSquares ls;
    try {
        ls = least_squares(design, y);
    } catch (const ShapeError& e) {
        throw Error(fmt::format("power-law fit needs at least 2 distinct x values: {}", e.what()));
    }
    const double s2 = n > 2 ? ls.rss / static_cast<double>(n - 2) : 0.0;
    PowerLaw p;
    p.exponent = ls.coef[0];
    p.multiplier = std::exp(ls.coef[1]);
    p.exponent_stderr = std::sqrt(s2 * ls.cov_unscaled(0, 0));
    p.multiplier_stderr = p.multiplier * std::sqrt(s2 * ls.cov_unscaled(1, 1));
    return p;
}

ComposedExponent compose_exponent(double alpha, double alpha_se, double beta, double beta_se, double b, double b_se) {
    const double ea = b * alpha_se, eb = alpha * b_se;
    return {alpha * b + beta, std::sqrt(ea * ea + eb * eb + beta_se * beta_se)};
}

ReachSet norm_reach_set(std::span<const NormTrajectory> runs, double band_lo, double band_hi) {
    if (!(band_lo < band_hi)) throw Error(fmt::format("empty norm band [{}, {}]", band_lo, band_hi));
    ReachSet out;
    out.band_lo = band_lo;
    out.band_hi = band_hi;
    for (const auto& run : runs) {
        if (run.points.empty()) {
            out.excluded.push_back({run.run_id, "no norm evaluations"});
            continue;
        }
        std::optional<double> first;
        bool seen_below = false, seen_above = false;
        double peak = -std::numeric_limits<double>::infinity();
        for (const auto& [tokens, norm] : run.points) {
            if (!(norm > 0.0)) throw Error(fmt::format("run {}: norm must be positive, got {}", run.run_id, norm));
            const double l = std::log2(norm);
            peak = std::max(peak, l);
            if (l >= band_lo && l <= band_hi) {
                first = tokens;
                break;
            }
            (l < band_lo ? seen_below : seen_above) = true;
        }
        if (first) {
            out.entries.push_back({run.run_id, run.lr, run.batch, *first});
        } else if (seen_below && seen_above) {
            out.excluded.push_back({run.run_id, "norm crossed the band between evaluations"});
        } else if (seen_above) {
            out.excluded.push_back({run.run_id, fmt::format("norm stays above the band (log2 peak {:.3f})", peak)});
        } else {
            out.excluded.push_back({run.run_id, fmt::format("norm plateaus below the band (log2 peak {:.3f})", peak)});
        }
    }

    std::vector<Optimum> optima;
    for (const auto& e : out.entries) optima.push_back({e.lr, e.batch, e.tokens_first});
    if (!optima.empty()) out.heuristic_fit = regress_lr_bs_horizon_fixed(optima);
    try {
        out.free_fit = regress_lr_bs_horizon(optima);
    } catch (const Error& e) {
        out.fit_note = e.what();
    }
    return out;
}

}  // namespace normlab
