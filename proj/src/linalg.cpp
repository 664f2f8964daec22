// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include "normlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

namespace normlab {

double rms_vector_norm(std::span<const double> x) {
    if (x.empty()) throw ShapeError("rms_vector_norm: empty vector");
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

namespace {

double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

void apply(const Matrix& w, std::span<const double> v, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto row = w.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) s += row[c] * v[c];
        out[r] = s;
    }
}

void apply_transposed(const Matrix& w, std::span<const double> u, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto row = w.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) out[c] += row[c] * u[r];
    }
}

}  // namespace

double spectral_norm(const Matrix& w, PowerIterationOptions opts) {
    if (w.empty()) throw ShapeError("spectral_norm: empty matrix");
    if (std::all_of(w.data().begin(), w.data().end(), [](double x) { return x == 0.0; })) return 0.0;

    const std::size_t n = w.cols();
    std::vector<double> v(n), wv(w.rows()), wtwv(n);

    // Starting vectors: all-ones, then e_0, e_1, ... until one is not in the null space.
    std::size_t start = 0;
    for (;; ++start) {
        if (start == 0) {
            std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(n)));
        } else {
            std::fill(v.begin(), v.end(), 0.0);
            v[start - 1] = 1.0;
        }
        apply(w, v, wv);
        if (norm2(wv) > 0.0) break;
    }

    double estimate = norm2(wv);
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        apply_transposed(w, wv, wtwv);
        const double len = norm2(wtwv);
        for (std::size_t i = 0; i < n; ++i) v[i] = wtwv[i] / len;
        apply(w, v, wv);
        const double next = norm2(wv);
        const bool settled = std::abs(next - estimate) <= opts.tol * next;
        estimate = std::max(estimate, next);
        if (settled) return estimate;
    }
    throw ConvergenceError(
        fmt::format("spectral_norm: no convergence within {} iterations (last estimate {})", opts.max_iter, estimate),
        estimate);
}

double spectral_norm_squaring(const Matrix& w) {
    if (w.empty()) throw ShapeError("spectral_norm_squaring: empty matrix");
    if (!w.all_finite()) throw NonFiniteError("spectral_norm_squaring: non-finite entry");
    const Matrix& base = w.rows() < w.cols() ? w.transposed() : w;
    Matrix a = matmul_tn(base, base);

    auto rayleigh = [&](const Matrix& g) {
        // Column of largest norm approximates the dominant eigenspace.
        std::size_t best = 0;
        double best_len = -1.0;
        for (std::size_t c = 0; c < g.cols(); ++c) {
            const double len = norm2(g.col(c));
            if (len > best_len) best_len = len, best = c;
        }
        if (best_len == 0.0) return 0.0;
        std::vector<double> v = g.col(best), bv(base.rows());
        for (double& x : v) x /= best_len;
        apply(base, v, bv);
        return norm2(bv);
    };

    // Square until the normalized Gram matrix is a fixed point (a projector
    // onto the top eigenspace, up to rounding).
    auto normalize = [](Matrix& g) {
        double peak = 0.0;
        for (double x : g.data()) peak = std::max(peak, std::abs(x));
        if (peak > 0.0) g *= 1.0 / peak;
    };
    normalize(a);
    for (int k = 0; k < 64; ++k) {
        Matrix next = matmul(a, a);
        normalize(next);
        const bool settled = max_abs_diff(next, a) <= 1e-14;
        a = std::move(next);
        if (settled) break;
    }
    const double estimate = rayleigh(a);
    return estimate;
}

namespace {

// One-sided (Hestenes) Jacobi for rows >= cols.
Svd jacobi_tall(const Matrix& w) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    // Column-major working copies: a[j] is column j of W, v[j] column j of V.
    std::vector<std::vector<double>> a(n, std::vector<double>(m));
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) a[j][i] = w(i, j);
        v[j][j] = 1.0;
    }

    constexpr double kEps = 1e-15;
    constexpr int kMaxSweeps = 80;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += a[p][i] * a[p][i];
                    beta += a[q][i] * a[q][i];
                    gamma += a[p][i] * a[q][i];
                }
                if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ap = a[p][i], aq = a[q][i];
                    a[p][i] = c * ap - s * aq;
                    a[q][i] = s * ap + c * aq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v[p][i], vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(a[j]);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    const double cutoff = (sigma.empty() ? 0.0 : sigma[order[0]]) * 1e-13;
    std::vector<bool> filled(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = sigma[j];
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v[j][i];
        if (sigma[j] > cutoff && sigma[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, k) = a[j][i] / sigma[j];
            filled[k] = true;
        } else {
            out.sigma[k] = 0.0;
        }
    }

    // Complete U for null directions with Gram-Schmidt against the basis vectors.
    std::size_t basis = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (filled[k]) continue;
        std::vector<double> cand(m);
        for (; basis < m; ++basis) {
            std::fill(cand.begin(), cand.end(), 0.0);
            cand[basis] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t other = 0; other < n; ++other) {
                    if (!filled[other]) continue;
                    double d = 0.0;
                    for (std::size_t i = 0; i < m; ++i) d += out.u(i, other) * cand[i];
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= d * out.u(i, other);
                }
            }
            const double len = norm2(cand);
            if (len > 0.5) {
                for (std::size_t i = 0; i < m; ++i) out.u(i, k) = cand[i] / len;
                filled[k] = true;
                ++basis;
                break;
            }
        }
    }
    return out;
}

}  // namespace

Svd svd_oracle(const Matrix& w) {
    if (w.empty()) throw ShapeError("svd_oracle: empty matrix");
    if (w.rows() >= w.cols()) return jacobi_tall(w);
    Svd t = jacobi_tall(w.transposed());
    return Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

Matrix reconstruct(const Svd& svd) {
    Matrix us = svd.u;
    for (std::size_t r = 0; r < us.rows(); ++r) {
        for (std::size_t k = 0; k < us.cols(); ++k) us(r, k) *= svd.sigma[k];
    }
    return matmul_nt(us, svd.v);
}

Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

Matrix semi_orthogonal_init(std::size_t d_out, std::size_t d_in, double gain, Rng& rng) {
    if (d_out == 0 || d_in == 0) throw ShapeError("semi_orthogonal_init: zero dimension");
    const Svd svd = svd_oracle(gaussian(d_out, d_in, rng));
    Matrix w = matmul_nt(svd.u, svd.v);
    w *= gain;
    return w;
}

Matrix row_normalized_gaussian_init(std::size_t d_out, std::size_t d_in, double target_row_rms, Rng& rng) {
    if (d_in == 0) throw ShapeError("row_normalized_gaussian_init: d_in must be positive");
    Matrix w = gaussian(d_out, d_in, rng);
    for (std::size_t r = 0; r < d_out; ++r) {
        auto row = w.row(r);
        const double scale = target_row_rms / rms_vector_norm(row);
        for (double& x : row) x *= scale;
    }
    return w;
}

LeastSquares least_squares(const Matrix& a, std::span<const double> y, std::span<const double> row_weights) {
    const std::size_t n = a.rows();
    const std::size_t p = a.cols();
    if (y.size() != n) throw ShapeError(fmt::format("least_squares: {} rows but {} targets", n, y.size()));
    if (!row_weights.empty() && row_weights.size() != n) {
        throw ShapeError(fmt::format("least_squares: {} rows but {} weights", n, row_weights.size()));
    }
    if (n < p) throw ShapeError(fmt::format("least_squares: rank deficient ({} rows < {} unknowns)", n, p));

    Matrix r = a;
    std::vector<double> b(y.begin(), y.end());
    if (!row_weights.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            for (double& x : r.row(i)) x *= row_weights[i];
            b[i] *= row_weights[i];
        }
    }

    double scale = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += r(i, j) * r(i, j);
        scale = std::max(scale, std::sqrt(s));
    }

    // Householder reflections, applied to r and b in place.
    for (std::size_t j = 0; j < p; ++j) {
        double len = 0.0;
        for (std::size_t i = j; i < n; ++i) len += r(i, j) * r(i, j);
        len = std::sqrt(len);
        if (len <= 1e-12 * scale || len == 0.0) {
            throw ShapeError(fmt::format("least_squares: rank deficient design (column {})", j));
        }
        const double alpha = r(j, j) > 0 ? -len : len;
        std::vector<double> v(n - j);
        for (std::size_t i = j; i < n; ++i) v[i - j] = r(i, j);
        v[0] -= alpha;
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 == 0.0) continue;
        for (std::size_t k = j; k < p; ++k) {
            double d = 0.0;
            for (std::size_t i = j; i < n; ++i) d += v[i - j] * r(i, k);
            const double f = 2.0 * d / vnorm2;
            for (std::size_t i = j; i < n; ++i) r(i, k) -= f * v[i - j];
        }
        double d = 0.0;
        for (std::size_t i = j; i < n; ++i) d += v[i - j] * b[i];
        const double f = 2.0 * d / vnorm2;
        for (std::size_t i = j; i < n; ++i) b[i] -= f * v[i - j];
    }
    for (std::size_t j = 0; j < p; ++j) {
        if (std::abs(r(j, j)) <= 1e-10 * scale) {
            throw ShapeError(fmt::format("least_squares: rank deficient design (pivot {})", j));
        }
    }

    LeastSquares out;
    out.n = n;
    out.coef.assign(p, 0.0);
    for (std::size_t jj = p; jj-- > 0;) {
        double s = b[jj];
        for (std::size_t k = jj + 1; k < p; ++k) s -= r(jj, k) * out.coef[k];
        out.coef[jj] = s / r(jj, jj);
    }
    for (std::size_t i = p; i < n; ++i) out.rss += b[i] * b[i];

    // R^{-1} by back substitution, then (R^T R)^{-1} = R^{-1} R^{-T}.
    Matrix rinv(p, p);
    for (std::size_t col = 0; col < p; ++col) {
        for (std::size_t jj = p; jj-- > 0;) {
            double s = (jj == col) ? 1.0 : 0.0;
            for (std::size_t k = jj + 1; k < p; ++k) s -= r(jj, k) * rinv(k, col);
            rinv(jj, col) = s / r(jj, jj);
        }
    }
    out.cov_unscaled = matmul_nt(rinv, rinv);
    return out;
}

}  // namespace normlab
