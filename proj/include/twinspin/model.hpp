#pragma once
// Shared parameter types, index conventions and numerically stable scalar
// helpers for the two-ensemble collective-spin model.
//
// Model: two bosonic ensembles a (N particles) and b (M particles), each with
// internal states |0> and |1>, prepared in the product state
// psi(0) = prod (|0>+|1>)/sqrt(2) and evolving under
//
//     H = chi * (Sz_a^2 + Sz_b^2) - chi_ab * Sz_a * Sz_b,   hbar = 1,
//
// with collective spin Sz = (n1 - n0)/2, plus one-body losses at rate
// gamma_eps from internal state |eps> of either ensemble (Lindblad jump
// operators sqrt(gamma0)*a0, sqrt(gamma1)*a1, sqrt(gamma0)*b0,
// sqrt(gamma1)*b1).  The master equation reads
// drho/dt = i[rho, H] + sum_i (A_i rho A_i^+ - 1/2 {A_i^+ A_i, rho}).
//
// All rates are 1/s and nonlinearities rad/s; SI unit handling lives solely
// in bec.hpp.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>

namespace twinspin {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Full input of every analytic formula in this library.
struct ModelParams {
    int n_a{1};          // particle number N of ensemble a (>= 0)
    int n_b{1};          // particle number M of ensemble b (>= 0)
    double chi{0.0};     // local nonlinearity chi (rad/s)
    double chi_ab{0.0};  // cross nonlinearity chi_ab (rad/s)
    double gamma0{0.0};  // loss rate of internal state |0> (1/s)
    double gamma1{0.0};  // loss rate of internal state |1> (1/s)
};

inline void validate(const ModelParams& p) {
    if (p.n_a < 0 || p.n_b < 0)
        throw std::domain_error("ModelParams: particle numbers must be >= 0");
    if (p.gamma0 < 0.0 || p.gamma1 < 0.0)
        throw std::domain_error("ModelParams: loss rates must be >= 0");
}

// Off-diagonal block label of the density matrix.  Elements with different
// (z, r) never couple under the evolution.  The element addressed by a block
// plus an ElementIndex (x, y, u, v) is
//
//   <x+z, y, u+r, v| rho |x, y+z, u, v+r>        (basis |n0, n1, m0, m1>),
//
// i.e. the ket carries the extra mode-1 particles.  Negative offsets label
// the Hermitian partners (see charfunc.hpp for the conjugation rules).
struct BlockLabel {
    int z{0};  // a-side offset, |z| <= N
    int r{0};  // b-side offset, |r| <= M
};

// Indices within a (z, r) block; all non-negative, x+y+|z| <= N and
// u+v+|r| <= M.
struct ElementIndex {
    int x{0};
    int y{0};
    int u{0};
    int v{0};
};

// ln Gamma(n+1) = ln n!.
inline double log_factorial(int n) {
    if (n < 0) throw std::domain_error("log_factorial: negative argument");
    return std::lgamma(static_cast<double>(n) + 1.0);
}

// ln C(n, k), accurate to <= 1e-12 relative error for n up to 1e6.
//
// A plain lgamma difference loses accuracy when k (or n-k) is small compared
// with n: ln C is then tiny against lgamma(n+1) and the cancellation
// amplifies the ~ulp lgamma errors above 1e-12 relative.  For min(k, n-k) up
// to 1024 the sum ln n + ln(n-1) + ... is used instead (Kahan-compensated),
// which is accurate to a few ulp outright.
inline double log_binomial(int n, int k) {
    if (n < 0 || k < 0 || k > n)
        throw std::domain_error("log_binomial: need 0 <= k <= n");
    const int kk = (k < n - k) ? k : n - k;
    if (kk == 0) return 0.0;
    if (kk <= 1024) {
        double sum = 0.0, comp = 0.0;
        for (int j = 0; j < kk; ++j) {
            const double term = std::log(static_cast<double>(n - j)) - comp;
            const double next = sum + term;
            comp = (next - sum) - term;
            sum = next;
        }
        return sum - log_factorial(kk);
    }
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

// base^exponent for non-negative integer exponents, computed in polar form as
// exp(exponent * log base) so that exponents up to ~1e5 (tens-of-thousands
// collective spins) neither overflow nor lose the phase.  Convention: 0^0 = 1.
// Magnitudes within 1e-12 above unity are treated as exactly one: every
// kernel fed to this routine satisfies |base| <= 1 analytically, but rounding
// can land an ulp above, and the result magnitude must stay <= 1 + 1e-12.
inline Complex complex_pow(Complex base, long long exponent) {
    if (exponent < 0)
        throw std::domain_error("complex_pow: exponent must be >= 0");
    if (exponent == 0) return Complex{1.0, 0.0};
    if (base == Complex{0.0, 0.0}) return Complex{0.0, 0.0};
    double log_mag = std::log(std::abs(base));
    if (log_mag > 0.0 && log_mag < 1e-12) log_mag = 0.0;
    const double n = static_cast<double>(exponent);
    return std::polar(std::exp(n * log_mag), n * std::arg(base));
}

// phi1(w) = (e^w - 1)/w, the entire function with phi1(0) = 1.  Series for
// small |w| (the direct form would cancel), closed form otherwise.
inline Complex phi1(Complex w) {
    if (std::abs(w) < 0.5) {
        // sum_{j>=0} w^j/(j+1)!; 18 terms leave a remainder < 1e-19 at |w|=0.5.
        Complex term{1.0, 0.0};
        Complex sum{1.0, 0.0};
        for (int j = 1; j <= 18; ++j) {
            term *= w / static_cast<double>(j + 1);
            sum += term;
        }
        return sum;
    }
    return (std::exp(w) - 1.0) / w;
}

// Unitary phase factor e^{-i e t} shared by the exact propagators (oracle and
// trajectory code must agree bit-for-bit in the lossless limit).
inline Complex evolution_phase(double energy, double t) {
    return std::polar(1.0, -energy * t);
}

// Diagonal energy of a Fock ket |n0, n1, m0, m1>:
// E = chi (s_a^2 + s_b^2) - chi_ab s_a s_b with s = (n1 - n0)/2.
inline double ket_energy(const ModelParams& p, int n0, int n1, int m0, int m1) {
    const double sa = 0.5 * (n1 - n0);
    const double sb = 0.5 * (m1 - m0);
    return p.chi * (sa * sa + sb * sb) - p.chi_ab * sa * sb;
}

// Total loss rate of a Fock ket (sum over the four jump channels of A^+A).
inline double ket_loss_rate(const ModelParams& p, int n0, int n1, int m0, int m1) {
    return p.gamma0 * (n0 + m0) + p.gamma1 * (n1 + m1);
}

}  // namespace twinspin
