#pragma once
// Closed-form collective-spin moments of the dissipative two-ensemble model,
// and their assembly into rotated quadrature variances and covariances.
//
// Every moment reduces to products of scalar decay kernels
// f_{z,r}(t) = L_{z,r}(1, 1, t): one kernel per block detuning, raised to
// powers set by the particle numbers.  Subsystem b mirrors subsystem a under
// the exchange N <-> M (the kernels themselves are shared because chi and
// chi_ab are common to both ensembles).  <S_z^a S_z^b> factorises into
// <S_z^a><S_z^b> because both S_z operators commute with the Hamiltonian and
// the losses are local; the factorisation is cross-checked against the
// brute-force integrator rather than assumed silently.

#include <cmath>
#include <complex>
#include <stdexcept>

#include "twinspin/charfunc.hpp"
#include "twinspin/model.hpp"

namespace twinspin {

// Scalar decay kernel of block (z, r): the affine form at X = Y = 1.
struct DecayKernel {
    double alpha{0.0};  // block detuning actually used (rad/s)
    Complex value{1.0, 0.0};  // f_{z,r}(t); f(0) = 1 and |f| <= 1
};

inline DecayKernel decay_kernel(const ModelParams& par, int z, int r, double t) {
    validate(par);
    if (t < 0.0) throw std::domain_error("decay_kernel: t must be >= 0");
    const double alpha = block_detuning(par, z, r);
    const BlockCoefficients c = detail::side_coefficients(par, alpha, t);
    return DecayKernel{alpha, c.p + c.q + c.s};
}

// First and second spin moments of both subsystems at one time.  All values
// are real; x/y/z refer to collective spin components with spin-up = |1>.
struct CorrelatorSet {
    double t{0.0};
    // subsystem a
    double sx_a{0.0}, sy_a{0.0}, sz_a{0.0};
    double n_of_t{0.0};  // surviving mean particle number of a
    double sx2_a{0.0}, sy2_a{0.0}, sz2_a{0.0};
    double anti_yz_a{0.0};  // <{S_y^a, S_z^a}>
    double anti_xy_a{0.0};  // <{S_x^a, S_y^a}>
    // subsystem b (N <-> M mirror)
    double sx_b{0.0}, sy_b{0.0}, sz_b{0.0};
    double n_of_t_b{0.0};
    double sx2_b{0.0}, sy2_b{0.0}, sz2_b{0.0};
    double anti_yz_b{0.0};
    double anti_xy_b{0.0};
    // cross moments
    double sysy_ab{0.0};  // <S_y^a S_y^b>
    double sysz_ab{0.0};  // <S_y^a S_z^b>
    double szsy_ab{0.0};  // <S_z^a S_y^b>
    double szsz_ab{0.0};  // <S_z^a S_z^b> = <S_z^a><S_z^b>
    double sxsx_ab{0.0};  // <S_x^a S_x^b>
    double sxsy_ab{0.0};  // <S_x^a S_y^b>
    double sysx_ab{0.0};  // <S_y^a S_x^b>
};

namespace detail {

// e^{-B t} - e^{-A t} = 2 (s - q) for the side with the given detuning; the
// bracket entering the mixed y-z moments.
inline Complex side_bracket(const ModelParams& par, double detuning, double t) {
    const BlockCoefficients c = side_coefficients(par, detuning, t);
    return 2.0 * (c.s - c.q);
}

}  // namespace detail

inline CorrelatorSet correlator_set(const ModelParams& par, double t) {
    validate(par);
    if (par.n_a < 1 || par.n_b < 1)
        throw std::domain_error("correlator_set: both particle numbers must be >= 1");
    if (t < 0.0) throw std::domain_error("correlator_set: t must be >= 0");

    const int n = par.n_a;
    const int m = par.n_b;
    const double dn = static_cast<double>(n);
    const double dm = static_cast<double>(m);
    const double e0 = std::exp(-par.gamma0 * t);
    const double e1 = std::exp(-par.gamma1 * t);
    const double eh = std::exp(-0.5 * (par.gamma0 + par.gamma1) * t);
    const double ef = e0 * e1;  // e^{-(G0+G1) t}

    const Complex f10 = decay_kernel(par, 1, 0, t).value;
    const Complex f01 = decay_kernel(par, 0, 1, t).value;
    const Complex f20 = decay_kernel(par, 2, 0, t).value;
    const Complex f02 = decay_kernel(par, 0, 2, t).value;
    const Complex f11 = decay_kernel(par, 1, 1, t).value;
    const Complex f1m1 = decay_kernel(par, 1, -1, t).value;
    const Complex fm11 = decay_kernel(par, -1, 1, t).value;
    const Complex br10 = detail::side_bracket(par, block_detuning(par, 1, 0), t);
    const Complex br01 = detail::side_bracket(par, block_detuning(par, 0, 1), t);

    CorrelatorSet s;
    s.t = t;

    // One side's moments; `na` is its own particle number, `nb` the other's.
    struct Side {
        double sx, sy, sz, n_surv, sx2, sy2, sz2, anti_yz, anti_xy;
    };
    const auto side = [&](int na, int nb) {
        Side out;
        const double a = static_cast<double>(na);
        out.n_surv = 0.5 * a * (e0 + e1);
        out.sz = 0.25 * a * (e1 - e0);
        out.sz2 = a * (a - 1.0) / 16.0 * (e1 - e0) * (e1 - e0) + 0.25 * out.n_surv;
        const Complex splus =
            0.5 * a * eh * complex_pow(f10, na - 1) * complex_pow(f01, nb);
        out.sx = splus.real();
        out.sy = splus.imag();
        if (na >= 2) {
            const Complex coh2 = complex_pow(f20, na - 2) * complex_pow(f02, nb);
            const double pair = 0.5 * a * (a - 1.0) * ef;
            out.sy2 = 0.25 * (out.n_surv + pair * (1.0 - coh2.real()));
            out.sx2 = 0.25 * (out.n_surv + pair * (1.0 + coh2.real()));
            // <{S_x, S_y}> = Im <S_+^2>, <{S_y, S_z}> from the split kernel.
            out.anti_xy = 0.5 * pair * coh2.imag();
            out.anti_yz =
                0.25 * a * (a - 1.0) * eh *
                (complex_pow(f10, na - 2) * complex_pow(f01, nb) * br10).imag();
        } else {
            out.sy2 = 0.25 * out.n_surv;
            out.sx2 = 0.25 * out.n_surv;
            out.anti_xy = 0.0;
            out.anti_yz = 0.0;
        }
        return out;
    };

    const Side a = side(n, m);
    s.sx_a = a.sx;
    s.sy_a = a.sy;
    s.sz_a = a.sz;
    s.n_of_t = a.n_surv;
    s.sx2_a = a.sx2;
    s.sy2_a = a.sy2;
    s.sz2_a = a.sz2;
    s.anti_yz_a = a.anti_yz;
    s.anti_xy_a = a.anti_xy;

    const Side b = side(m, n);
    s.sx_b = b.sx;
    s.sy_b = b.sy;
    s.sz_b = b.sz;
    s.n_of_t_b = b.n_surv;
    s.sx2_b = b.sx2;
    s.sy2_b = b.sy2;
    s.sz2_b = b.sz2;
    s.anti_yz_b = b.anti_yz;
    s.anti_xy_b = b.anti_xy;

    // Raising/raising and raising/lowering cross moments:
    // P = <S_+^a S_+^b>, Q = <S_+^a S_-^b>.
    const Complex P = 0.25 * dn * dm * ef * complex_pow(f11, n + m - 2);
    const Complex Q = 0.25 * dn * dm * ef * complex_pow(f1m1, n - 1) *
                      complex_pow(fm11, m - 1);
    s.sysy_ab = -0.5 * (P - Q).real();
    s.sxsx_ab = 0.5 * (P + Q).real();
    s.sxsy_ab = 0.5 * (P - Q).imag();
    s.sysx_ab = 0.5 * (P + Q).imag();
    s.sysz_ab = 0.125 * dn * dm * eh *
                (complex_pow(f10, n - 1) * complex_pow(f01, m - 1) * br01).imag();
    s.szsy_ab = 0.125 * dn * dm * eh *
                (complex_pow(f10, m - 1) * complex_pow(f01, n - 1) * br01).imag();
    s.szsz_ab = s.sz_a * s.sz_b;
    return s;
}

// ---------------------------------------------------------------------------
// Rotated quadratures
// ---------------------------------------------------------------------------

// Plane in which the quadratures live.  The mean collective spin points along
// +x, so the default quadratures rotate in the y-z plane (commutator
// denominator <S_x^a>^2); the alternative literal x-y convention (denominator
// <S_z^a>^2, which vanishes identically for symmetric losses) is kept for
// comparison.
enum class QuadratureConvention { yz, xy };

struct RotatedMoments {
    double mean_x_a{0.0}, mean_p_a{0.0}, mean_x_b{0.0}, mean_p_b{0.0};
    double var_x_a{0.0}, var_p_a{0.0}, var_x_b{0.0}, var_p_b{0.0};
    double cov_xx{0.0};       // covar(X^a, X^b)
    double cov_pp{0.0};       // covar(P^a, P^b)
    double commutator{0.0};   // |<[X^a, P^a]>| = |<S_x^a>| (yz) or |<S_z^a>| (xy)
};

// Bilinear assembly of the rotated first/second moments from a CorrelatorSet.
// In the y-z convention the b-side roles are exchanged,
//   X^a = cos(alpha) S_y^a + sin(alpha) S_z^a,
//   P^a = -sin(alpha) S_y^a + cos(alpha) S_z^a,
//   X^b = cos(beta) S_z^b + sin(beta) S_y^b,
//   P^b = -sin(beta) S_z^b + cos(beta) S_y^b,
// which pairs the inference partners (S_y^a, S_z^b) and (S_z^a, S_y^b) at
// alpha = beta = 0.  The x-y convention applies the same in-plane rotation to
// (S_x, S_y) on both sides with no role exchange.
inline RotatedMoments rotated_moments(const CorrelatorSet& s, double alpha, double beta,
                                      QuadratureConvention conv = QuadratureConvention::yz) {
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double cb = std::cos(beta), sb = std::sin(beta);
    RotatedMoments out;

    if (conv == QuadratureConvention::yz) {
        const double var_y_a = s.sy2_a - s.sy_a * s.sy_a;
        const double var_z_a = s.sz2_a - s.sz_a * s.sz_a;
        const double cov_yz_a = 0.5 * s.anti_yz_a - s.sy_a * s.sz_a;
        const double var_y_b = s.sy2_b - s.sy_b * s.sy_b;
        const double var_z_b = s.sz2_b - s.sz_b * s.sz_b;
        const double cov_yz_b = 0.5 * s.anti_yz_b - s.sy_b * s.sz_b;
        const double c_ya_zb = s.sysz_ab - s.sy_a * s.sz_b;
        const double c_ya_yb = s.sysy_ab - s.sy_a * s.sy_b;
        const double c_za_zb = s.szsz_ab - s.sz_a * s.sz_b;
        const double c_za_yb = s.szsy_ab - s.sz_a * s.sy_b;

        out.mean_x_a = ca * s.sy_a + sa * s.sz_a;
        out.mean_p_a = -sa * s.sy_a + ca * s.sz_a;
        out.mean_x_b = cb * s.sz_b + sb * s.sy_b;
        out.mean_p_b = -sb * s.sz_b + cb * s.sy_b;
        out.var_x_a = ca * ca * var_y_a + sa * sa * var_z_a + 2.0 * ca * sa * cov_yz_a;
        out.var_p_a = sa * sa * var_y_a + ca * ca * var_z_a - 2.0 * ca * sa * cov_yz_a;
        out.var_x_b = cb * cb * var_z_b + sb * sb * var_y_b + 2.0 * cb * sb * cov_yz_b;
        out.var_p_b = sb * sb * var_z_b + cb * cb * var_y_b - 2.0 * cb * sb * cov_yz_b;
        out.cov_xx = ca * cb * c_ya_zb + ca * sb * c_ya_yb + sa * cb * c_za_zb +
                     sa * sb * c_za_yb;
        out.cov_pp = sa * sb * c_ya_zb - sa * cb * c_ya_yb - ca * sb * c_za_zb +
                     ca * cb * c_za_yb;
        out.commutator = std::abs(s.sx_a);
        return out;
    }

    const double var_x_a = s.sx2_a - s.sx_a * s.sx_a;
    const double var_y_a = s.sy2_a - s.sy_a * s.sy_a;
    const double cov_xy_a = 0.5 * s.anti_xy_a - s.sx_a * s.sy_a;
    const double var_x_b = s.sx2_b - s.sx_b * s.sx_b;
    const double var_y_b = s.sy2_b - s.sy_b * s.sy_b;
    const double cov_xy_b = 0.5 * s.anti_xy_b - s.sx_b * s.sy_b;
    const double c_xa_xb = s.sxsx_ab - s.sx_a * s.sx_b;
    const double c_xa_yb = s.sxsy_ab - s.sx_a * s.sy_b;
    const double c_ya_xb = s.sysx_ab - s.sy_a * s.sx_b;
    const double c_ya_yb = s.sysy_ab - s.sy_a * s.sy_b;

    out.mean_x_a = ca * s.sx_a + sa * s.sy_a;
    out.mean_p_a = -sa * s.sx_a + ca * s.sy_a;
    out.mean_x_b = cb * s.sx_b + sb * s.sy_b;
    out.mean_p_b = -sb * s.sx_b + cb * s.sy_b;
    out.var_x_a = ca * ca * var_x_a + sa * sa * var_y_a + 2.0 * ca * sa * cov_xy_a;
    out.var_p_a = sa * sa * var_x_a + ca * ca * var_y_a - 2.0 * ca * sa * cov_xy_a;
    out.var_x_b = cb * cb * var_x_b + sb * sb * var_y_b + 2.0 * cb * sb * cov_xy_b;
    out.var_p_b = sb * sb * var_x_b + cb * cb * var_y_b - 2.0 * cb * sb * cov_xy_b;
    out.cov_xx = ca * cb * c_xa_xb + ca * sb * c_xa_yb + sa * cb * c_ya_xb +
                 sa * sb * c_ya_yb;
    out.cov_pp = sa * sb * c_xa_xb - sa * cb * c_xa_yb - ca * sb * c_ya_xb +
                 ca * cb * c_ya_yb;
    out.commutator = std::abs(s.sz_a);
    return out;
}

namespace detail {

// Enforce that a nominally real moment has only rounding-level imaginary
// residue; larger residues indicate an internal inconsistency.
inline double require_real(Complex value, const char* what) {
    if (std::abs(value.imag()) > 1e-10 * std::max(1.0, std::abs(value)))
        throw std::logic_error(std::string("non-real moment: ") + what);
    return value.real();
}

}  // namespace detail

}  // namespace twinspin
