#pragma once
// Steering figure of merit built from conditional quadrature variances.
//
// For rotated quadratures X, P (see correlators.hpp) the inferred variance of
// subsystem a given a measurement on b is
//   Vinf(X^a | X^b) = var(X^a) - covar(X^a, X^b)^2 / var(X^b),
// and the product criterion is
//   E^2 = 4 Vinf(X^a|X^b) Vinf(P^a|P^b) / <commutator>^2,
// where the commutator magnitude is |<S_x^a>| in the default y-z convention.
// E^2 < 1 witnesses steering of a by measurements on b.  The two angles and
// the evolution time are optimised by a deterministic coarse grid followed by
// a Nelder-Mead polish in normalised coordinates (log-time, angle/pi).

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "twinspin/correlators.hpp"
#include "twinspin/model.hpp"

namespace twinspin {

struct GridSpec {
    int n_t{64};      // logarithmically spaced times, endpoints included
    int n_alpha{16};  // alpha values, pi * j / n_alpha for j = 0 .. n_alpha-1
    int n_beta{16};   // beta values likewise
};

struct EprResult {
    double e2{0.0};     // optimal squared steering parameter
    double alpha{0.0};  // optimal a-side rotation angle, reported in [0, pi)
    double beta{0.0};   // optimal b-side rotation angle, reported in [0, pi)
    double t_opt{0.0};  // optimal evolution time
    // Linear-inference coefficients at the optimum: a's quadratures are
    // estimated as r_a X^b + q_a and s_a P^b + p_a.
    double q_a{0.0};
    double r_a{0.0};
    double p_a{0.0};
    double s_a{0.0};
};

namespace detail {

// The commutator expectation is considered degenerate (E^2 undefined) when
// its square drops below this fraction of the ideal (N/2)^2.
inline constexpr double kCommutatorFloor = 1e-12;

inline std::optional<double> e2_from_moments(const RotatedMoments& m, double scale_sq) {
    const double denom = m.commutator * m.commutator;
    if (!(denom >= kCommutatorFloor * scale_sq)) return std::nullopt;
    double vinf_x = m.var_x_a;
    if (m.var_x_b > 0.0) vinf_x -= m.cov_xx * m.cov_xx / m.var_x_b;
    double vinf_p = m.var_p_a;
    if (m.var_p_b > 0.0) vinf_p -= m.cov_pp * m.cov_pp / m.var_p_b;
    if (vinf_x < 0.0) vinf_x = 0.0;  // clamp rounding residue of exact inference
    if (vinf_p < 0.0) vinf_p = 0.0;
    return 4.0 * vinf_x * vinf_p / denom;
}

inline double wrap_angle_half_period(double angle) {
    const double period = kPi;
    double w = std::fmod(angle, period);
    if (w < 0.0) w += period;
    if (w >= period) w -= period;  // fmod residue exactly at the period
    return w;
}

}  // namespace detail

// E^2 at a single (t, alpha, beta); std::nullopt when the commutator
// denominator is degenerate there.
inline std::optional<double> epr_value(const ModelParams& par, double t, double alpha,
                                       double beta,
                                       QuadratureConvention conv = QuadratureConvention::yz) {
    const CorrelatorSet set = correlator_set(par, t);
    const RotatedMoments m = rotated_moments(set, alpha, beta, conv);
    const double half_n = 0.5 * static_cast<double>(par.n_a);
    return detail::e2_from_moments(m, half_n * half_n);
}

// Minimise E^2 over t in [t_range.first, t_range.second] and both angles.
// Deterministic: a fixed coarse grid (scanned t-major, then alpha, then beta,
// keeping the first strict minimum) seeds a Nelder-Mead refinement in
// normalised coordinates u = log(t/t_min)/log(t_max/t_min), a = alpha/pi,
// b = beta/pi, terminated when the simplex diameter falls below 1e-6.
// Returns std::nullopt when no grid point has a defined E^2.
inline std::optional<EprResult> epr_minimize(const ModelParams& par,
                                             std::pair<double, double> t_range,
                                             const GridSpec& grid = GridSpec{},
                                             QuadratureConvention conv = QuadratureConvention::yz) {
    validate(par);
    if (!(t_range.first > 0.0) || !(t_range.second > t_range.first) ||
        !std::isfinite(t_range.second))
        throw std::domain_error("epr_minimize: need 0 < t_min < t_max < inf");
    if (grid.n_t < 8 || grid.n_alpha < 8 || grid.n_beta < 8)
        throw std::domain_error("epr_minimize: need at least 8 grid points per axis");

    const double t_min = t_range.first;
    const double log_ratio = std::log(t_range.second / t_range.first);
    const double half_n = 0.5 * static_cast<double>(par.n_a);
    const double scale_sq = half_n * half_n;
    const auto time_at = [&](double u) { return t_min * std::exp(u * log_ratio); };

    // Objective in normalised coordinates; +inf outside the time window or
    // where E^2 is undefined.
    const auto objective = [&](const std::array<double, 3>& x) {
        if (x[0] < 0.0 || x[0] > 1.0) return std::numeric_limits<double>::infinity();
        const CorrelatorSet set = correlator_set(par, time_at(x[0]));
        const RotatedMoments m =
            rotated_moments(set, x[1] * kPi, x[2] * kPi, conv);
        const std::optional<double> e2 = detail::e2_from_moments(m, scale_sq);
        return e2 ? *e2 : std::numeric_limits<double>::infinity();
    };

    // Coarse grid: one CorrelatorSet per time, reused across all angle pairs;
    // angle trigonometry enters only through rotated_moments (cheap).
    bool found = false;
    std::array<double, 3> best{0.0, 0.0, 0.0};
    double best_e2 = std::numeric_limits<double>::infinity();
    for (int it = 0; it < grid.n_t; ++it) {
        const double u = (grid.n_t == 1)
                             ? 0.0
                             : static_cast<double>(it) / static_cast<double>(grid.n_t - 1);
        const CorrelatorSet set = correlator_set(par, time_at(u));
        for (int ia = 0; ia < grid.n_alpha; ++ia) {
            const double a = static_cast<double>(ia) / static_cast<double>(grid.n_alpha);
            for (int ib = 0; ib < grid.n_beta; ++ib) {
                const double b = static_cast<double>(ib) / static_cast<double>(grid.n_beta);
                const RotatedMoments m = rotated_moments(set, a * kPi, b * kPi, conv);
                const std::optional<double> e2 = detail::e2_from_moments(m, scale_sq);
                if (e2 && *e2 < best_e2) {
                    best_e2 = *e2;
                    best = {u, a, b};
                    found = true;
                }
            }
        }
    }
    if (!found) return std::nullopt;

    // Nelder-Mead polish (reflection 1, expansion 2, contraction 1/2,
    // shrink 1/2) with deterministic tie handling.
    using Point = std::array<double, 3>;
    const auto diameter = [](const std::array<Point, 4>& v) {
        double d = 0.0;
        for (int i = 1; i < 4; ++i)
            for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(v[i][k] - v[0][k]));
        return d;
    };
    std::array<Point, 4> vert;
    std::array<double, 4> fval;
    vert[0] = best;
    const std::array<double, 3> step = {
        0.5 / static_cast<double>(grid.n_t - 1),
        0.5 / static_cast<double>(grid.n_alpha),
        0.5 / static_cast<double>(grid.n_beta)};
    for (int i = 1; i < 4; ++i) {
        vert[i] = best;
        // Step inward when the outward step would leave the time window.
        const double trial = vert[i][i - 1] + step[i - 1];
        vert[i][i - 1] = (i == 1 && trial > 1.0) ? vert[i][i - 1] - step[0] : trial;
    }
    for (int i = 0; i < 4; ++i) fval[i] = objective(vert[i]);

    const auto order = [&]() {
        // Insertion sort keeps equal-value ordering stable (deterministic).
        for (int i = 1; i < 4; ++i) {
            const Point pv = vert[i];
            const double fv = fval[i];
            int j = i - 1;
            while (j >= 0 && fval[j] > fv) {
                vert[j + 1] = vert[j];
                fval[j + 1] = fval[j];
                --j;
            }
            vert[j + 1] = pv;
            fval[j + 1] = fv;
        }
    };
    order();

    for (int iter = 0; iter < 2000 && diameter(vert) > 1e-6; ++iter) {
        Point centroid{0.0, 0.0, 0.0};
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) centroid[k] += vert[i][k] / 3.0;
        const auto affine = [&](double coef) {
            Point p;
            for (int k = 0; k < 3; ++k)
                p[k] = centroid[k] + coef * (centroid[k] - vert[3][k]);
            return p;
        };
        const Point refl = affine(1.0);
        const double f_refl = objective(refl);
        if (f_refl < fval[0]) {
            const Point expa = affine(2.0);
            const double f_expa = objective(expa);
            if (f_expa < f_refl) {
                vert[3] = expa;
                fval[3] = f_expa;
            } else {
                vert[3] = refl;
                fval[3] = f_refl;
            }
        } else if (f_refl < fval[2]) {
            vert[3] = refl;
            fval[3] = f_refl;
        } else {
            const bool outside = f_refl < fval[3];
            const Point contr = affine(outside ? 0.5 : -0.5);
            const double f_contr = objective(contr);
            if (f_contr < (outside ? f_refl : fval[3])) {
                vert[3] = contr;
                fval[3] = f_contr;
            } else {
                for (int i = 1; i < 4; ++i) {
                    for (int k = 0; k < 3; ++k)
                        vert[i][k] = vert[0][k] + 0.5 * (vert[i][k] - vert[0][k]);
                    fval[i] = objective(vert[i]);
                }
            }
        }
        order();
    }

    // The polish never worsens the grid optimum; keep the grid point if the
    // simplex drifted (possible only through rounding in degenerate regions).
    Point opt = vert[0];
    double f_opt = fval[0];
    if (best_e2 < f_opt) {
        opt = best;
        f_opt = best_e2;
    }

    EprResult res;
    res.e2 = f_opt;
    res.alpha = detail::wrap_angle_half_period(opt[1] * kPi);
    res.beta = detail::wrap_angle_half_period(opt[2] * kPi);
    res.t_opt = time_at(opt[0]);
    const CorrelatorSet set = correlator_set(par, res.t_opt);
    const RotatedMoments m = rotated_moments(set, res.alpha, res.beta, conv);
    res.r_a = (m.var_x_b > 0.0) ? m.cov_xx / m.var_x_b : 0.0;
    res.s_a = (m.var_p_b > 0.0) ? m.cov_pp / m.var_p_b : 0.0;
    res.q_a = m.mean_x_a - res.r_a * m.mean_x_b;
    res.p_a = m.mean_p_a - res.s_a * m.mean_p_b;
    return res;
}

}  // namespace twinspin
