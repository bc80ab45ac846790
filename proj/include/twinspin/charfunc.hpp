#pragma once
// Closed-form solution of the dissipative two-ensemble dynamics, organised as
// a family of characteristic functions h^{z,r}(X, Y, U, V, t).  Block (z, r)
// collects every density-matrix element whose bra has z more particles in
// mode a0 (and r more in mode b0) than its ket; the blocks never mix.  Each
// block factorises into powers of one affine form per ensemble,
//
//   h^{z,r} = N! M! / (2^{z+r} (N-z)! (M-r)!) * e^{-(G0+G1)(z+r)t/2}
//             * L_a(X, Y, t)^{N-z} * L_b(U, V, t)^{M-r},
//   L(X, Y, t) = p(t) + q(t) X + s(t) Y,
//
// where the coefficients obey dq/dt = -A q, ds/dt = -B s, dp/dt = G0 q + G1 s
// with A = G0 + i*alpha, B = G1 - i*alpha, and alpha is the block detuning.
// The relative sign between the local and the cross nonlinearity inside
// alpha, and every other convention here, is pinned by exact hand-computed
// elements and by the brute-force Lindblad integrator in the test suite.
//
// Density-matrix elements, the reduced single-ensemble matrix, and the linear
// entropy all follow analytically from the trinomial expansion of L^n; no
// numerical differentiation is used anywhere.  All factorial ratios live in
// log space so particle numbers up to ~1e5 stay finite.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "twinspin/model.hpp"

namespace twinspin {

// Coefficients of one ensemble's affine form at a given block and time.
struct BlockCoefficients {
    Complex A;  // decay-plus-rotation rate of the q coefficient (1/s)
    Complex B;  // decay-minus-rotation rate of the s coefficient (1/s)
    Complex p, q, s;  // L(X, Y, t) = p + q X + s Y
};

// Effective detuning of block (z, r) as seen by ensemble a; the sign of the
// cross term is fixed by the exact solution (oracle-pinned).
inline double block_detuning(const ModelParams& par, int z, int r) {
    return z * par.chi - 0.5 * r * par.chi_ab;
}

namespace detail {

// Coefficient integration valid for any real t (the PDE residual probes
// small negative times when central-differencing at t ~ 0).  The p
// coefficient uses t*phi1(-A t) instead of (1 - e^{-A t})/A, which removes
// the A -> 0 singularity exactly rather than by a threshold branch.
inline BlockCoefficients side_coefficients(const ModelParams& par, double detuning,
                                           double t) {
    BlockCoefficients c;
    c.A = Complex{par.gamma0, detuning};
    c.B = Complex{par.gamma1, -detuning};
    c.q = 0.5 * std::exp(-c.A * t);
    c.s = 0.5 * std::exp(-c.B * t);
    c.p = 0.5 * t * (par.gamma0 * phi1(-c.A * t) + par.gamma1 * phi1(-c.B * t));
    return c;
}

// Accumulates a product of complex factors in (log magnitude, phase) form so
// huge binomial prefactors and tiny decay powers never overflow or underflow.
struct PolarProduct {
    double ln_mag{0.0};
    double phase{0.0};
    bool zero{false};

    void multiply_real_log(double ln_value) { ln_mag += ln_value; }
    void multiply_power(Complex base, long long n) {
        if (n == 0) return;
        if (base == Complex{0.0, 0.0}) {
            zero = true;
            return;
        }
        double lm = std::log(std::abs(base));
        if (lm > 0.0 && lm < 1e-12) lm = 0.0;  // kernels are <= 1 analytically
        ln_mag += static_cast<double>(n) * lm;
        phase += static_cast<double>(n) * std::arg(base);
    }
    Complex value() const {
        if (zero) return Complex{0.0, 0.0};
        return std::polar(std::exp(ln_mag), phase);
    }
};

inline Complex h_impl(const ModelParams& par, const BlockLabel& block, Complex x,
                      Complex y, Complex u, Complex v, double t) {
    const BlockCoefficients ca =
        side_coefficients(par, block_detuning(par, block.z, block.r), t);
    const BlockCoefficients cb =
        side_coefficients(par, block_detuning(par, block.r, block.z), t);
    const double ln_prefactor =
        log_factorial(par.n_a) + log_factorial(par.n_b) -
        (block.z + block.r) * std::log(2.0) - log_factorial(par.n_a - block.z) -
        log_factorial(par.n_b - block.r);
    const double decay =
        -0.5 * (par.gamma0 + par.gamma1) * (block.z + block.r) * t;
    const Complex la = ca.p + ca.q * x + ca.s * y;
    const Complex lb = cb.p + cb.q * u + cb.s * v;
    return std::exp(ln_prefactor + decay) * complex_pow(la, par.n_a - block.z) *
           complex_pow(lb, par.n_b - block.r);
}

}  // namespace detail

// Affine coefficients of ensemble a's factor of block (z, r).  The matching
// factor for ensemble b is block_coefficients with the roles swapped,
// i.e. block {r, z}.
inline BlockCoefficients block_coefficients(const ModelParams& par, const BlockLabel& block,
                                            double t) {
    validate(par);
    if (block.z < 0 || block.r < 0)
        throw std::domain_error(
            "block_coefficients: negative offsets are evaluated via conjugation, "
            "not directly");
    if (t < 0.0) throw std::domain_error("block_coefficients: t must be >= 0");
    return detail::side_coefficients(par, block_detuning(par, block.z, block.r), t);
}

// Characteristic function h^{z,r}(X, Y, U, V, t) for 0 <= z <= N, 0 <= r <= M.
inline Complex h(const ModelParams& par, const BlockLabel& block, Complex x, Complex y,
                 Complex u, Complex v, double t) {
    validate(par);
    if (block.z < 0 || block.r < 0 || block.z > par.n_a || block.r > par.n_b)
        throw std::domain_error("h: block offsets must satisfy 0 <= z <= N, 0 <= r <= M");
    if (t < 0.0) throw std::domain_error("h: t must be >= 0");
    return detail::h_impl(par, block, x, y, u, v, t);
}

// |dh/dt - RHS| of the governing first-order PDE at one point, with every
// derivative taken by central finite differences of the closed form.  The
// transport coefficients are (G0 - A_a X) along X, (G1 - B_a Y) along Y, the
// b-side analogues along U and V, and a sink -(G0+G1)(z+r)/2 * h.
inline double pde_residual(const ModelParams& par, const BlockLabel& block, Complex x,
                           Complex y, Complex u, Complex v, double t, double step) {
    validate(par);
    if (block.z < 0 || block.r < 0 || block.z > par.n_a || block.r > par.n_b)
        throw std::domain_error("pde_residual: block outside direct-evaluation range");
    if (!(step > 0.0) || step > 1e-2)
        throw std::domain_error("pde_residual: step must lie in (0, 1e-2]");

    const auto at = [&](Complex xx, Complex yy, Complex uu, Complex vv, double tt) {
        return detail::h_impl(par, block, xx, yy, uu, vv, tt);
    };
    const double inv2h = 0.5 / step;
    const Complex dt = (at(x, y, u, v, t + step) - at(x, y, u, v, t - step)) * inv2h;
    const Complex dx = (at(x + step, y, u, v, t) - at(x - step, y, u, v, t)) * inv2h;
    const Complex dy = (at(x, y + step, u, v, t) - at(x, y - step, u, v, t)) * inv2h;
    const Complex du = (at(x, y, u + step, v, t) - at(x, y, u - step, v, t)) * inv2h;
    const Complex dv = (at(x, y, u, v + step, t) - at(x, y, u, v - step, t)) * inv2h;

    const double alpha_a = block_detuning(par, block.z, block.r);
    const double alpha_b = block_detuning(par, block.r, block.z);
    const Complex a_a{par.gamma0, alpha_a}, b_a{par.gamma1, -alpha_a};
    const Complex a_b{par.gamma0, alpha_b}, b_b{par.gamma1, -alpha_b};
    const Complex rhs = (par.gamma0 - a_a * x) * dx + (par.gamma1 - b_a * y) * dy +
                        (par.gamma0 - a_b * u) * du + (par.gamma1 - b_b * v) * dv -
                        0.5 * (par.gamma0 + par.gamma1) * (block.z + block.r) *
                            at(x, y, u, v, t);
    return std::abs(dt - rhs);
}

// ---------------------------------------------------------------------------
// Density-matrix elements
// ---------------------------------------------------------------------------

namespace detail {

// ln of the trinomial coefficient n! / (x! y! (n-x-y)!).
inline double ln_trinomial(int n, int x, int y) {
    return log_factorial(n) - log_factorial(x) - log_factorial(y) -
           log_factorial(n - x - y);
}

// Contribution of one ensemble's factor L^n to the element with ladder
// indices (j, k): trinomial * q^j * s^k * p^{n-j-k}, accumulated in polar
// form.  p can be exactly zero (t = 0, or no losses); then only j+k = n
// elements survive.
inline void accumulate_side(PolarProduct& prod, const BlockCoefficients& c, int n, int j,
                            int k) {
    prod.multiply_real_log(ln_trinomial(n, j, k));
    prod.multiply_power(c.q, j);
    prod.multiply_power(c.s, k);
    prod.multiply_power(c.p, n - j - k);
}

}  // namespace detail

// Density-matrix element of block (z, r) at ladder indices (x, y, u, v):
//
//   <x+z+, y+z-, u+r+, v+r-| rho |x+z-, y+z+, u+r-, v+r+>
//
// with z+ = max(z,0), z- = max(-z,0) (same for r), i.e. for z, r >= 0 the bra
// carries the extra mode-0 particles and the ket the extra mode-1 particles.
// Negative offsets are the Hermitian conjugates of their positive partners at
// identical (x, y, u, v).  Requires x+y+|z| <= N and u+v+|r| <= M.
inline Complex density_element(const ModelParams& par, const BlockLabel& block,
                               const ElementIndex& idx, double t) {
    validate(par);
    if (t < 0.0) throw std::domain_error("density_element: t must be >= 0");
    if (block.z < 0)
        return std::conj(
            density_element(par, BlockLabel{-block.z, -block.r}, idx, t));

    const int z = block.z;
    const int r_abs = std::abs(block.r);
    if (idx.x < 0 || idx.y < 0 || idx.u < 0 || idx.v < 0 || z > par.n_a ||
        r_abs > par.n_b || idx.x + idx.y + z > par.n_a ||
        idx.u + idx.v + r_abs > par.n_b)
        throw std::domain_error("density_element: index outside block bounds");

    // Both detunings use the signed offsets: the element's phase follows
    // E_ket - E_bra = (y-x)(z chi - r chi_ab/2) + (v-u)(r chi - z chi_ab/2)
    // for any signs of z and r, so the mixed-sign blocks need no special
    // casing beyond |r| in the combinatorial weights.
    const double alpha_a = block_detuning(par, z, block.r);
    const double alpha_b = block_detuning(par, block.r, z);
    const BlockCoefficients ca = detail::side_coefficients(par, alpha_a, t);
    const BlockCoefficients cb = detail::side_coefficients(par, alpha_b, t);

    detail::PolarProduct prod;
    // Block prefactor N! M! / (2^{z+|r|} (N-z)! (M-|r|)!) and loss decay.
    prod.multiply_real_log(log_factorial(par.n_a) + log_factorial(par.n_b) -
                           (z + r_abs) * std::log(2.0) -
                           log_factorial(par.n_a - z) -
                           log_factorial(par.n_b - r_abs));
    prod.multiply_real_log(-0.5 * (par.gamma0 + par.gamma1) * (z + r_abs) * t);
    // Inverse square-root factorial weight relating h coefficients to rho.
    prod.multiply_real_log(
        -0.5 * (log_factorial(idx.x + z) + log_factorial(idx.y + z) +
                log_factorial(idx.u + r_abs) + log_factorial(idx.v + r_abs) -
                log_factorial(idx.x) - log_factorial(idx.y) -
                log_factorial(idx.u) - log_factorial(idx.v)));
    detail::accumulate_side(prod, ca, par.n_a - z, idx.x, idx.y);
    detail::accumulate_side(prod, cb, par.n_b - r_abs, idx.u, idx.v);
    return prod.value();
}

// ---------------------------------------------------------------------------
// Reduced density matrix of ensemble a and the linear entropy
// ---------------------------------------------------------------------------

// Packed reduced density matrix: elements <x+z, y| sigma |x, y+z> stored for
// z >= 0 over all x, y >= 0 with x+y+z <= N; negative z follows from
// Hermiticity via at().  The matrix is block-diagonal in the surviving
// particle number x+y+z; the largest (lossless) block has dimension N+1.
class ReducedDensityMatrix {
  public:
    ReducedDensityMatrix(int n, std::vector<Complex> packed)
        : n_(n), packed_(std::move(packed)) {
        offsets_.resize(static_cast<std::size_t>(n_) + 2, 0);
        for (int z = 0; z <= n_; ++z)
            offsets_[static_cast<std::size_t>(z) + 1] =
                offsets_[static_cast<std::size_t>(z)] +
                static_cast<std::size_t>((n_ - z + 1) * (n_ - z + 2) / 2);
        if (packed_.size() != offsets_.back())
            throw std::invalid_argument("ReducedDensityMatrix: packed size mismatch");
    }

    int n() const { return n_; }

    // <x+z, y| sigma |x, y+z>; z may be negative (Hermitian partner).
    Complex at(int z, int x, int y) const {
        if (z < 0) {
            if (x + z < 0 || y + z < 0) throw_range();
            return std::conj(at(-z, x + z, y + z));
        }
        if (x < 0 || y < 0 || z > n_ || x + y + z > n_) throw_range();
        return packed_[offsets_[static_cast<std::size_t>(z)] + tri_index(x, y)];
    }

    // Sum over the diagonal (z = 0, x = x, y = y); equals one at every time.
    double trace() const {
        double tr = 0.0;
        for (int x = 0; x <= n_; ++x)
            for (int y = 0; x + y <= n_; ++y)
                tr += packed_[tri_index(x, y)].real();
        return tr;
    }

    // Purity Tr sigma^2 = sum over all elements of |.|^2, counting the +-z
    // Hermitian partners twice.
    double purity() const {
        double sum = 0.0;
        for (int z = 0; z <= n_; ++z) {
            const double weight = (z == 0) ? 1.0 : 2.0;
            const std::size_t off = offsets_[static_cast<std::size_t>(z)];
            for (int x = 0; x + z <= n_; ++x)
                for (int y = 0; x + y + z <= n_; ++y)
                    sum += weight * std::norm(packed_[off + tri_index(x, y)]);
        }
        return sum;
    }

    const std::vector<Complex>& packed() const { return packed_; }

    static std::size_t tri_index(int x, int y) {
        const int d = x + y;
        return static_cast<std::size_t>(d * (d + 1) / 2 + x);
    }

  private:
    [[noreturn]] static void throw_range() {
        throw std::out_of_range("ReducedDensityMatrix::at: index outside matrix");
    }

    int n_;
    std::vector<Complex> packed_;
    std::vector<std::size_t> offsets_;
};

// Reduced density matrix of ensemble a at time t (trace over ensemble b),
// from the closed form of the z-offset blocks at X = Y = 0, U = V = 1.
inline ReducedDensityMatrix reduced_density_matrix(const ModelParams& par, double t) {
    validate(par);
    if (t < 0.0) throw std::domain_error("reduced_density_matrix: t must be >= 0");
    if (par.n_a > 200)
        throw std::length_error("reduced_density_matrix: N > 200 not supported");
    const int n = par.n_a;
    std::size_t total = 0;
    for (int z = 0; z <= n; ++z)
        total += static_cast<std::size_t>((n - z + 1) * (n - z + 2) / 2);
    std::vector<Complex> packed(total);

    std::size_t pos = 0;
    const double gamma_sum = par.gamma0 + par.gamma1;
    for (int z = 0; z <= n; ++z) {
        const BlockCoefficients ca =
            detail::side_coefficients(par, block_detuning(par, z, 0), t);
        const BlockCoefficients cb =
            detail::side_coefficients(par, block_detuning(par, 0, z), t);
        const Complex fb = cb.p + cb.q + cb.s;  // b factor at U = V = 1
        const double ln_block = log_factorial(n) - z * std::log(2.0) -
                                log_factorial(n - z) - 0.5 * gamma_sum * z * t;
        for (int d = 0; d + z <= n; ++d) {
            for (int x = 0; x <= d; ++x) {
                const int y = d - x;
                detail::PolarProduct prod;
                prod.multiply_real_log(ln_block);
                prod.multiply_real_log(
                    -0.5 * (log_factorial(x) + log_factorial(y) +
                            log_factorial(x + z) + log_factorial(y + z)));
                // d^{x+y} L^{n-z} / dX^x dY^y at X=Y=0:
                // (n-z)!/(n-z-x-y)! q^x s^y p^{n-z-x-y}.
                prod.multiply_real_log(log_factorial(n - z) -
                                       log_factorial(n - z - x - y));
                prod.multiply_power(ca.q, x);
                prod.multiply_power(ca.s, y);
                prod.multiply_power(ca.p, n - z - x - y);
                prod.multiply_power(fb, par.n_b);
                packed[pos + ReducedDensityMatrix::tri_index(x, y)] = prod.value();
            }
        }
        pos += static_cast<std::size_t>((n - z + 1) * (n - z + 2) / 2);
    }
    return ReducedDensityMatrix(n, std::move(packed));
}

// Linear entropy S_lin(t) = 1 - Tr sigma_a(t)^2 of ensemble a.
inline double linear_entropy(const ModelParams& par, double t) {
    return 1.0 - reduced_density_matrix(par, t).purity();
}

}  // namespace twinspin
