#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tetris/common.hpp"

namespace tetris {

// Chebyshev interpolation coefficients of f on [-1, 1] (first-kind nodes).
inline std::vector<double> chebyshev_fit(const std::function<long double(long double)>& f,
                                         u32 degree) {
    u32 m = 4 * (degree + 1);
    std::vector<long double> fx(m);
    for (u32 j = 0; j < m; ++j)
        fx[j] = f(std::cos(M_PI * ((long double)j + 0.5L) / (long double)m));
    std::vector<double> c(degree + 1);
    for (u32 k = 0; k <= degree; ++k) {
        long double s = 0;
        for (u32 j = 0; j < m; ++j)
            s += fx[j] * std::cos(M_PI * (long double)k * ((long double)j + 0.5L) / (long double)m);
        c[k] = double(s * (k == 0 ? 1.0L : 2.0L) / (long double)m);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Remez exchange for the best odd polynomial approximation of sign on
// [-U, -gamma] u [gamma, U]. Odd symmetry reduces the problem to
// approximating the constant 1 on [gamma, U] by sum_j c_j T_{2j+1}(x / U),
// with (d+3)/2 equioscillation points on the half-domain.
// ---------------------------------------------------------------------------

struct MinimaxResult {
    u32 degree = 0;
    long double gamma = 0, upper = 1;
    std::vector<long double> odd_coeffs;  // c_j multiplies T_{2j+1}(x / upper)
    long double error = 0;                // certified sup-norm error on the domain
    std::vector<long double> nodes;       // final reference (equioscillation) points
    u32 iterations = 0;

    long double eval(long double x) const {
        long double y = x / upper;
        // Clenshaw over odd Chebyshev indices via full recurrence
        u32 d = degree;
        std::vector<long double> full(d + 1, 0.0L);
        for (std::size_t j = 0; j < odd_coeffs.size(); ++j) full[2 * j + 1] = odd_coeffs[j];
        long double b1 = 0, b2 = 0;
        for (u32 k = d; k >= 1; --k) {
            long double t = 2 * y * b1 - b2 + full[k];
            b2 = b1;
            b1 = t;
        }
        return y * b1 - b2 + full[0];
    }
};

namespace detail {

inline long double cheb_t(u32 k, long double y) {
    // numerically stable for |y| slightly above 1 as well
    if (std::fabs(y) <= 1.0L) return std::cos((long double)k * std::acos(y));
    long double t0 = 1, t1 = y;
    for (u32 i = 2; i <= k; ++i) {
        long double t2 = 2 * y * t1 - t0;
        t0 = t1;
        t1 = t2;
    }
    return k == 0 ? t0 : t1;
}

// Gaussian elimination with partial pivoting, long double.
inline std::vector<long double> solve_dense(std::vector<std::vector<long double>> a,
                                            std::vector<long double> b) {
    std::size_t n = a.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        if (a[col][col] == 0.0L) throw TetrisError("remez", "singular reference system");
        for (std::size_t r = col + 1; r < n; ++r) {
            long double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<long double> x(n);
    for (std::size_t r = n; r-- > 0;) {
        long double s = b[r];
        for (std::size_t c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return x;
}

}  // namespace detail

inline MinimaxResult remez_minimax(long double gamma, long double upper, u32 degree,
                                   u32 max_iters = 64) {
    if (degree % 2 == 0) throw TetrisError("remez", "degree must be odd");
    if (!(gamma > 0) || gamma > upper) throw TetrisError("remez", "need 0 < gamma <= upper");

    MinimaxResult res;
    res.degree = degree;
    res.gamma = gamma;
    res.upper = upper;

    if (upper - gamma < 1e-15L * upper) {
        // Degenerate two-point domain {-gamma, gamma}: p(x) = x / gamma is exact.
        res.odd_coeffs.assign((degree + 1) / 2, 0.0L);
        res.odd_coeffs[0] = upper / gamma;
        res.error = 0;
        res.nodes = {gamma};
        return res;
    }

    u32 m = (degree + 1) / 2;  // free coefficients
    std::vector<long double> ref(m + 1);
    for (u32 i = 0; i <= m; ++i) {
        long double t = 0.5L * (1.0L - std::cos(M_PI * (long double)i / (long double)m));
        ref[i] = gamma + (upper - gamma) * t;
    }

    auto basis = [&](u32 j, long double x) { return detail::cheb_t(2 * j + 1, x / upper); };

    struct Ext {
        long double x, e;
    };
    auto err = [&](long double x) { return res.eval(x) - 1.0L; };

    // Refined local extremum of the signed error inside [lo, hi].
    auto refine = [&](long double lo, long double hi, bool maximize) {
        for (int it = 0; it < 60; ++it) {
            long double x1 = lo + (hi - lo) / 3, x2 = hi - (hi - lo) / 3;
            long double f1 = maximize ? err(x1) : -err(x1);
            long double f2 = maximize ? err(x2) : -err(x2);
            if (f1 < f2) lo = x1;
            else hi = x2;
        }
        return (lo + hi) / 2;
    };

    auto scan_extrema = [&](u32 grid_mult) {
        const u32 grid_n = grid_mult * (m + 1);
        std::vector<long double> xs;
        xs.reserve(grid_n + 512);
        for (u32 i = 0; i <= grid_n; ++i) {
            long double t = 0.5L * (1.0L - std::cos(M_PI * (long double)i / (long double)grid_n));
            xs.push_back(gamma + (upper - gamma) * t);
        }
        for (long double x = gamma; x < std::min(upper, gamma * 4096); x *= 1.02L)
            xs.push_back(x);
        std::sort(xs.begin(), xs.end());
        std::vector<Ext> ext;
        ext.push_back({xs.front(), err(xs.front())});
        for (std::size_t i = 1; i + 1 < xs.size(); ++i) {
            long double e0 = err(xs[i - 1]), e1 = err(xs[i]), e2 = err(xs[i + 1]);
            if ((e1 - e0) * (e2 - e1) <= 0 && (e1 != e0 || e1 != e2)) {
                bool maximize = e1 >= e0 && e1 >= e2;
                long double xm = refine(xs[i - 1], xs[i + 1], maximize);
                ext.push_back({xm, err(xm)});
            }
        }
        ext.push_back({xs.back(), err(xs.back())});
        // collapse same-sign runs keeping the largest magnitude
        std::vector<Ext> alt;
        for (const Ext& e : ext) {
            if (!alt.empty() && (alt.back().e >= 0) == (e.e >= 0)) {
                if (std::fabs(e.e) > std::fabs(alt.back().e)) alt.back() = e;
            } else {
                alt.push_back(e);
            }
        }
        return alt;
    };

    std::vector<long double> coeffs(m, 0.0L);
    for (u32 iter = 0; iter < max_iters; ++iter) {
        res.iterations = iter + 1;
        // solve for coefficients + levelled error on the reference
        std::vector<std::vector<long double>> a(m + 1, std::vector<long double>(m + 1));
        std::vector<long double> rhs(m + 1, 1.0L);
        for (u32 i = 0; i <= m; ++i) {
            for (u32 j = 0; j < m; ++j) a[i][j] = basis(j, ref[i]);
            a[i][m] = (i % 2 == 0) ? 1.0L : -1.0L;
        }
        auto sol = detail::solve_dense(a, rhs);
        coeffs.assign(sol.begin(), sol.begin() + m);
        res.odd_coeffs = coeffs;

        std::vector<Ext> alt;
        for (u32 mult = 4000; mult <= 64000; mult *= 4) {
            alt = scan_extrema(mult);
            if (alt.size() >= m + 1) break;
        }
        if (alt.size() < m + 1) break;  // flat residual: accept the current solution

        // drop the smaller-magnitude end until m+1 alternations remain; the
        // global maximum always survives
        while (alt.size() > m + 1) {
            if (std::fabs(alt.front().e) <= std::fabs(alt.back().e)) alt.erase(alt.begin());
            else alt.pop_back();
        }
        long double emax = 0, emin = HUGE_VALL;
        std::vector<long double> new_ref;
        for (const Ext& e : alt) {
            new_ref.push_back(e.x);
            emax = std::max(emax, std::fabs(e.e));
            emin = std::min(emin, std::fabs(e.e));
        }
        ref = new_ref;
        if (emax - emin < 1e-9L * emax + 1e-21L) break;
    }

    // certify on a dense grid
    long double worst = 0;
    const u32 cert_n = 200000;
    for (u32 i = 0; i <= cert_n; ++i) {
        long double t = 0.5L * (1.0L - std::cos(M_PI * (long double)i / (long double)cert_n));
        long double x = gamma + (upper - gamma) * t;
        worst = std::max(worst, std::fabs(res.eval(x) - 1.0L));
    }
    for (long double x = gamma; x < std::min(upper, gamma * 4096); x *= 1.01L)
        worst = std::max(worst, std::fabs(res.eval(x) - 1.0L));
    res.error = worst;
    res.nodes.assign(ref.begin(), ref.end());
    return res;
}

}  // namespace tetris
