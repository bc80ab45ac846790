#pragma once
// Brute-force reference implementations used by every test suite:
//
//  * a dense Lindblad master-equation integrator on the truncated Fock space
//    (adaptive Dormand-Prince 5(4), per-step tolerance 1e-12 by default),
//  * an independently coded fixed-step RK4 integrator that assembles the
//    right-hand side through explicit matrix algebra -- a structurally
//    different route used to cross-validate the adaptive integrator,
//  * exact elementwise-phase evolution for the lossless case,
//  * the exact photon-number distribution of a single decaying mode,
//    computed two ways (closed form and rate-equation integration).
//
// Everything here favours auditability over speed: operators are built as
// explicit ladder matrices and the only concession to performance is storing
// those (extremely sparse) ladder matrices in compressed form.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "twinspin/model.hpp"

namespace twinspin::oracle {

// ---------------------------------------------------------------------------
// Fock basis
// ---------------------------------------------------------------------------

struct FockKet {
    int n0{0};  // ensemble a, internal state |0>
    int n1{0};  // ensemble a, internal state |1>
    int m0{0};  // ensemble b, internal state |0>
    int m1{0};  // ensemble b, internal state |1>
};

// All kets |n0, n1, m0, m1> with n0+n1 <= capacity_a and m0+m1 <= capacity_b,
// enumerated lexicographically in (n0+n1, n0, m0+m1, m0).  The index of a ket
// factorizes as index = side_index(n0, n1) * side_dim(capacity_b)
//                       + side_index(m0, m1).
class FockBasis {
  public:
    FockBasis(int capacity_a, int capacity_b)
        : cap_a_(capacity_a), cap_b_(capacity_b) {
        if (capacity_a < 0 || capacity_b < 0)
            throw std::domain_error("FockBasis: capacities must be >= 0");
        dim_a_ = side_dim(cap_a_);
        dim_b_ = side_dim(cap_b_);
        kets_.reserve(static_cast<std::size_t>(dim_a_) * dim_b_);
        for (int na = 0; na <= cap_a_; ++na)
            for (int n0 = 0; n0 <= na; ++n0)
                for (int nb = 0; nb <= cap_b_; ++nb)
                    for (int m0 = 0; m0 <= nb; ++m0)
                        kets_.push_back(FockKet{n0, na - n0, m0, nb - m0});
    }

    static int side_dim(int capacity) {
        return (capacity + 1) * (capacity + 2) / 2;
    }
    // Position of (n0, n1) in the single-ensemble enumeration.
    static int side_index(int n0, int n1) {
        const int n = n0 + n1;
        return n * (n + 1) / 2 + n0;
    }

    int size() const { return dim_a_ * dim_b_; }
    int capacity_a() const { return cap_a_; }
    int capacity_b() const { return cap_b_; }
    int side_dim_a() const { return dim_a_; }
    int side_dim_b() const { return dim_b_; }

    int index(int n0, int n1, int m0, int m1) const {
        if (n0 < 0 || n1 < 0 || m0 < 0 || m1 < 0 || n0 + n1 > cap_a_ ||
            m0 + m1 > cap_b_)
            throw std::out_of_range("FockBasis::index: ket outside basis");
        return side_index(n0, n1) * dim_b_ + side_index(m0, m1);
    }

    const FockKet& ket(int i) const { return kets_.at(static_cast<std::size_t>(i)); }

  private:
    int cap_a_, cap_b_, dim_a_, dim_b_;
    std::vector<FockKet> kets_;
};

// Dense state of the full system at one instant.
struct DenseState {
    Eigen::MatrixXcd rho;
    double t{0.0};
};

// ---------------------------------------------------------------------------
// Ladder operators and spin observables
// ---------------------------------------------------------------------------

enum class Mode { a0, a1, b0, b1 };

// Annihilation operator of one internal mode as an explicit sparse matrix
// over the given basis (one entry sqrt(n) per occupied column).
inline Eigen::SparseMatrix<Complex> annihilation(const FockBasis& basis, Mode mode) {
    using Triplet = Eigen::Triplet<Complex>;
    std::vector<Triplet> entries;
    entries.reserve(static_cast<std::size_t>(basis.size()));
    for (int col = 0; col < basis.size(); ++col) {
        FockKet k = basis.ket(col);
        int* occ = nullptr;
        switch (mode) {
            case Mode::a0: occ = &k.n0; break;
            case Mode::a1: occ = &k.n1; break;
            case Mode::b0: occ = &k.m0; break;
            case Mode::b1: occ = &k.m1; break;
        }
        if (*occ == 0) continue;
        const double amp = std::sqrt(static_cast<double>(*occ));
        --*occ;
        entries.emplace_back(basis.index(k.n0, k.n1, k.m0, k.m1), col, Complex{amp, 0.0});
    }
    Eigen::SparseMatrix<Complex> a(basis.size(), basis.size());
    a.setFromTriplets(entries.begin(), entries.end());
    return a;
}

// Collective spin observables assembled from ladder-matrix products
// (S_+ = a1^+ a0, S_z = (n1 - n0)/2, spin-up = internal state |1>).
struct SpinOperators {
    Eigen::MatrixXcd sx_a, sy_a, sz_a, num_a;
    Eigen::MatrixXcd sx_b, sy_b, sz_b, num_b;
};

inline SpinOperators spin_operators(const FockBasis& basis) {
    const Eigen::MatrixXcd a0 = Eigen::MatrixXcd(annihilation(basis, Mode::a0));
    const Eigen::MatrixXcd a1 = Eigen::MatrixXcd(annihilation(basis, Mode::a1));
    const Eigen::MatrixXcd b0 = Eigen::MatrixXcd(annihilation(basis, Mode::b0));
    const Eigen::MatrixXcd b1 = Eigen::MatrixXcd(annihilation(basis, Mode::b1));
    const Complex half{0.5, 0.0};
    const Complex half_over_i{0.0, -0.5};  // 1/(2i)
    SpinOperators ops;
    const Eigen::MatrixXcd sp_a = a1.adjoint() * a0;
    const Eigen::MatrixXcd sp_b = b1.adjoint() * b0;
    ops.sx_a = half * (sp_a + sp_a.adjoint());
    ops.sy_a = half_over_i * (sp_a - sp_a.adjoint());
    ops.sz_a = half * (a1.adjoint() * a1 - a0.adjoint() * a0);
    ops.num_a = a0.adjoint() * a0 + a1.adjoint() * a1;
    ops.sx_b = half * (sp_b + sp_b.adjoint());
    ops.sy_b = half_over_i * (sp_b - sp_b.adjoint());
    ops.sz_b = half * (b1.adjoint() * b1 - b0.adjoint() * b0);
    ops.num_b = b0.adjoint() * b0 + b1.adjoint() * b1;
    return ops;
}

// Tr(rho * op) without forming the matrix product.
inline Complex expectation(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& op) {
    return rho.cwiseProduct(op.transpose()).sum();
}

// ---------------------------------------------------------------------------
// Initial state
// ---------------------------------------------------------------------------

// Single-ensemble state with every spin along +x: amplitudes
// sqrt(C(n, k)) / 2^{n/2} over k = number of particles in |1>.
inline Eigen::VectorXcd coherent_x_amplitudes(int n) {
    Eigen::VectorXcd amps(n + 1);
    for (int k = 0; k <= n; ++k)
        amps(k) = std::exp(0.5 * (log_binomial(n, k) - n * std::log(2.0)));
    return amps;
}

// Product state (|0>+|1>)^N/2^{N/2} (x) (|0>+|1>)^M/2^{M/2} embedded in the
// full basis; support lies entirely in the top particle-number sector.
inline Eigen::VectorXcd initial_state(const FockBasis& basis) {
    const int n = basis.capacity_a();
    const int m = basis.capacity_b();
    const Eigen::VectorXcd amp_a = coherent_x_amplitudes(n);
    const Eigen::VectorXcd amp_b = coherent_x_amplitudes(m);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(basis.size());
    for (int ka = 0; ka <= n; ++ka)
        for (int kb = 0; kb <= m; ++kb)
            psi(basis.index(n - ka, ka, m - kb, kb)) = amp_a(ka) * amp_b(kb);
    return psi;
}

inline Eigen::MatrixXcd initial_density(const FockBasis& basis) {
    const Eigen::VectorXcd psi = initial_state(basis);
    return psi * psi.adjoint();
}

// ---------------------------------------------------------------------------
// Lossless evolution: H is diagonal in the Fock basis, so time evolution is
// elementwise phase multiplication.
// ---------------------------------------------------------------------------

inline Eigen::VectorXcd unitary_evolve(const ModelParams& p, const FockBasis& basis,
                                       const Eigen::VectorXcd& psi0, double t) {
    if (psi0.size() != basis.size())
        throw std::invalid_argument("unitary_evolve: state size does not match basis");
    Eigen::VectorXcd psi(psi0.size());
    for (int i = 0; i < basis.size(); ++i) {
        const FockKet& k = basis.ket(i);
        psi(i) = evolution_phase(ket_energy(p, k.n0, k.n1, k.m0, k.m1), t) * psi0(i);
    }
    return psi;
}

inline Eigen::VectorXcd unitary_evolve(const ModelParams& p, const Eigen::VectorXcd& psi0,
                                       double t) {
    return unitary_evolve(p, FockBasis(p.n_a, p.n_b), psi0, t);
}

// Same evolution applied to a density matrix:
// rho_jk(t) = e^{-i (E_j - E_k) t} rho_jk(0).
inline Eigen::MatrixXcd unitary_evolve_density(const ModelParams& p, const FockBasis& basis,
                                               const Eigen::MatrixXcd& rho0, double t) {
    if (rho0.rows() != basis.size() || rho0.cols() != basis.size())
        throw std::invalid_argument("unitary_evolve_density: shape does not match basis");
    std::vector<double> energy(static_cast<std::size_t>(basis.size()));
    for (int i = 0; i < basis.size(); ++i) {
        const FockKet& k = basis.ket(i);
        energy[static_cast<std::size_t>(i)] = ket_energy(p, k.n0, k.n1, k.m0, k.m1);
    }
    Eigen::MatrixXcd rho(rho0.rows(), rho0.cols());
    for (int col = 0; col < rho0.cols(); ++col)
        for (int row = 0; row < rho0.rows(); ++row)
            rho(row, col) =
                evolution_phase(energy[static_cast<std::size_t>(row)] -
                                    energy[static_cast<std::size_t>(col)],
                                t) *
                rho0(row, col);
    return rho;
}

// ---------------------------------------------------------------------------
// Dense Lindblad integrator
// ---------------------------------------------------------------------------

// Right-hand side of drho/dt = i[rho, H] + sum_i (A_i rho A_i^+
// - 1/2 {A_i^+ A_i, rho}).  H and sum_i A_i^+ A_i are diagonal in the Fock
// basis, so the commutator and anticommutator collapse into one precomputed
// elementwise factor Lambda_jk = i (E_k - E_j) - (R_j + R_k)/2 with R the
// total loss rate of a ket; the feeding terms A_i rho A_i^+ are applied with
// the explicit ladder matrices.  The state is packed as a flat real vector
// (re/im interleaved) so a plain double-precision ODE stepper can drive it.
class LindbladRhs {
  public:
    LindbladRhs(const ModelParams& p, const FockBasis& basis) : dim_(basis.size()) {
        damping_.resize(dim_, dim_);
        std::vector<double> energy(static_cast<std::size_t>(dim_));
        std::vector<double> rate(static_cast<std::size_t>(dim_));
        for (int i = 0; i < dim_; ++i) {
            const FockKet& k = basis.ket(i);
            energy[static_cast<std::size_t>(i)] = ket_energy(p, k.n0, k.n1, k.m0, k.m1);
            rate[static_cast<std::size_t>(i)] = ket_loss_rate(p, k.n0, k.n1, k.m0, k.m1);
        }
        for (int col = 0; col < dim_; ++col)
            for (int row = 0; row < dim_; ++row)
                damping_(row, col) =
                    Complex{-0.5 * (rate[static_cast<std::size_t>(row)] +
                                    rate[static_cast<std::size_t>(col)]),
                            energy[static_cast<std::size_t>(col)] -
                                energy[static_cast<std::size_t>(row)]};
        const std::pair<Mode, double> channels[] = {{Mode::a0, p.gamma0},
                                                    {Mode::a1, p.gamma1},
                                                    {Mode::b0, p.gamma0},
                                                    {Mode::b1, p.gamma1}};
        for (const auto& [mode, rate_i] : channels) {
            if (rate_i == 0.0) continue;
            Eigen::SparseMatrix<Complex> a = annihilation(basis, mode);
            a *= std::sqrt(rate_i);
            jump_dag_.push_back(Eigen::SparseMatrix<Complex>(a.adjoint()));
            jump_.push_back(std::move(a));
        }
        buf1_.resize(dim_, dim_);
        buf2_.resize(dim_, dim_);
    }

    int dim() const { return dim_; }
    std::size_t packed_size() const {
        return 2 * static_cast<std::size_t>(dim_) * static_cast<std::size_t>(dim_);
    }

    void pack(const Eigen::MatrixXcd& rho, std::vector<double>& x) const {
        x.resize(packed_size());
        Eigen::Map<Eigen::MatrixXcd>(reinterpret_cast<Complex*>(x.data()), dim_, dim_) = rho;
    }
    Eigen::MatrixXcd unpack(const std::vector<double>& x) const {
        return Eigen::Map<const Eigen::MatrixXcd>(reinterpret_cast<const Complex*>(x.data()),
                                                  dim_, dim_);
    }

    void operator()(const std::vector<double>& x, std::vector<double>& dxdt, double) const {
        dxdt.resize(packed_size());
        const Eigen::Map<const Eigen::MatrixXcd> rho(
            reinterpret_cast<const Complex*>(x.data()), dim_, dim_);
        Eigen::Map<Eigen::MatrixXcd> out(reinterpret_cast<Complex*>(dxdt.data()), dim_, dim_);
        out = damping_.cwiseProduct(rho);
        for (std::size_t i = 0; i < jump_.size(); ++i) {
            buf1_.noalias() = jump_[i] * rho;
            buf2_.noalias() = buf1_ * jump_dag_[i];
            out += buf2_;
        }
    }

  private:
    int dim_;
    Eigen::MatrixXcd damping_;
    std::vector<Eigen::SparseMatrix<Complex>> jump_;
    std::vector<Eigen::SparseMatrix<Complex>> jump_dag_;
    mutable Eigen::MatrixXcd buf1_, buf2_;
};

// Evolve rho0 to every requested time (strictly increasing, all >= rho0.t).
// Adaptive Dormand-Prince 5(4) with per-step absolute and relative tolerance
// `tol` (default 1e-12); steps never exceed dt_max.  Throws on step-size
// underflow.
inline std::vector<DenseState> lindblad_evolve_times(const ModelParams& p,
                                                     const DenseState& rho0,
                                                     const std::vector<double>& times,
                                                     double dt_max, double tol = 1e-12) {
    validate(p);
    if (dt_max <= 0.0) throw std::domain_error("lindblad_evolve: dt_max must be > 0");
    const FockBasis basis(p.n_a, p.n_b);
    if (rho0.rho.rows() != basis.size() || rho0.rho.cols() != basis.size())
        throw std::invalid_argument("lindblad_evolve: rho0 shape does not match basis");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < rho0.t || (i > 0 && times[i] <= times[i - 1]))
            throw std::invalid_argument(
                "lindblad_evolve: times must be strictly increasing and >= rho0.t");
    }
    std::vector<DenseState> out;
    if (times.empty()) return out;
    out.reserve(times.size());

    const LindbladRhs rhs(p, basis);
    std::vector<double> x;
    rhs.pack(rho0.rho, x);

    namespace ode = boost::numeric::odeint;
    auto stepper =
        ode::make_controlled(tol, tol, ode::runge_kutta_dopri5<std::vector<double>>());

    double t = rho0.t;
    const double span = times.back() - rho0.t;
    double dt = std::min(dt_max, (span > 0.0 ? span * 1e-3 : dt_max));
    for (double target : times) {
        while (t < target) {
            dt = std::min({dt, dt_max, target - t});
            const double floor = 1e-15 * std::max(1.0, std::abs(t));
            if (dt < floor) {
                std::ostringstream msg;
                msg << "lindblad_evolve: step size underflow (t=" << t << ", dt=" << dt
                    << ")";
                throw std::runtime_error(msg.str());
            }
            stepper.try_step(std::ref(rhs), x, t, dt);
        }
        out.push_back(DenseState{rhs.unpack(x), target});
    }
    return out;
}

inline DenseState lindblad_evolve(const ModelParams& p, const DenseState& rho0,
                                  double t_final, double dt_max, double tol = 1e-12) {
    if (t_final <= rho0.t) return DenseState{rho0.rho, rho0.t};
    return lindblad_evolve_times(p, rho0, {t_final}, dt_max, tol).front();
}

// ---------------------------------------------------------------------------
// Independent fixed-step RK4 integrator
// ---------------------------------------------------------------------------

// Cross-validation route for lindblad_evolve.  Deliberately avoids the
// precomputed elementwise damping factor: the Hamiltonian commutator and the
// anticommutator are evaluated through explicit dense matrix products, and
// the ladder matrices are rebuilt here with plain loops rather than via
// annihilation().  Fixed-step classic Runge-Kutta.
inline Eigen::MatrixXcd lindblad_rk4(const ModelParams& p, const Eigen::MatrixXcd& rho0,
                                     double t_final, double dt) {
    validate(p);
    if (dt <= 0.0) throw std::domain_error("lindblad_rk4: dt must be > 0");
    const FockBasis basis(p.n_a, p.n_b);
    const int dim = basis.size();
    if (rho0.rows() != dim || rho0.cols() != dim)
        throw std::invalid_argument("lindblad_rk4: rho0 shape does not match basis");

    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        const FockKet& k = basis.ket(i);
        const double sa = 0.5 * (k.n1 - k.n0);
        const double sb = 0.5 * (k.m1 - k.m0);
        h(i, i) = p.chi * (sa * sa + sb * sb) - p.chi_ab * sa * sb;
    }
    std::vector<Eigen::MatrixXcd> jumps;
    for (int channel = 0; channel < 4; ++channel) {
        const double rate = (channel % 2 == 0) ? p.gamma0 : p.gamma1;
        if (rate == 0.0) continue;
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);
        for (int col = 0; col < dim; ++col) {
            FockKet k = basis.ket(col);
            int& occ = (channel == 0)   ? k.n0
                       : (channel == 1) ? k.n1
                       : (channel == 2) ? k.m0
                                        : k.m1;
            if (occ == 0) continue;
            const double amp = std::sqrt(rate * occ);
            --occ;
            a(basis.index(k.n0, k.n1, k.m0, k.m1), col) = amp;
        }
        jumps.push_back(std::move(a));
    }
    Eigen::MatrixXcd damp = Eigen::MatrixXcd::Zero(dim, dim);  // 1/2 sum_i A_i^+ A_i
    for (const auto& a : jumps) damp += 0.5 * (a.adjoint() * a);

    const Complex iu{0.0, 1.0};
    auto rhs = [&](const Eigen::MatrixXcd& r) {
        Eigen::MatrixXcd d = iu * (r * h - h * r) - (damp * r + r * damp);
        for (const auto& a : jumps) d += a * r * a.adjoint();
        return d;
    };

    const long long steps = std::llround(t_final / dt);
    if (std::abs(steps * dt - t_final) > 1e-9 * std::max(1.0, std::abs(t_final)))
        throw std::invalid_argument("lindblad_rk4: t_final must be a multiple of dt");
    Eigen::MatrixXcd rho = rho0;
    for (long long s = 0; s < steps; ++s) {
        const Eigen::MatrixXcd k1 = rhs(rho);
        const Eigen::MatrixXcd k2 = rhs(rho + 0.5 * dt * k1);
        const Eigen::MatrixXcd k3 = rhs(rho + 0.5 * dt * k2);
        const Eigen::MatrixXcd k4 = rhs(rho + dt * k3);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return rho;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

// Reduced density matrix of ensemble a (trace over b), indexed by
// FockBasis::side_index(n0, n1).
inline Eigen::MatrixXcd reduced_density_a(const FockBasis& basis, const Eigen::MatrixXcd& rho) {
    const int da = basis.side_dim_a();
    const int db = basis.side_dim_b();
    Eigen::MatrixXcd sigma = Eigen::MatrixXcd::Zero(da, da);
    for (int ia = 0; ia < da; ++ia)
        for (int ja = 0; ja < da; ++ja)
            for (int ib = 0; ib < db; ++ib)
                sigma(ia, ja) += rho(ia * db + ib, ja * db + ib);
    return sigma;
}

// Reduced density matrix of ensemble a from a pure joint state, without ever
// forming the joint density matrix (sigma_{ia,ja} = sum_ib psi_{ia,ib}
// conj(psi_{ja,ib})).  Matches reduced_density_a(basis, psi * psi^dagger).
inline Eigen::MatrixXcd reduced_density_a_from_state(const FockBasis& basis,
                                                     const Eigen::VectorXcd& psi) {
    const int da = basis.side_dim_a();
    const int db = basis.side_dim_b();
    if (psi.size() != basis.size())
        throw std::invalid_argument("reduced_density_a_from_state: state size mismatch");
    const Eigen::Map<const Eigen::MatrixXcd> grid(psi.data(), db, da);
    return (grid.transpose() * grid.conjugate()).eval();
}

// Reduced density matrix of ensemble b (trace over a).
inline Eigen::MatrixXcd reduced_density_b(const FockBasis& basis, const Eigen::MatrixXcd& rho) {
    const int da = basis.side_dim_a();
    const int db = basis.side_dim_b();
    Eigen::MatrixXcd sigma = Eigen::MatrixXcd::Zero(db, db);
    for (int ib = 0; ib < db; ++ib)
        for (int jb = 0; jb < db; ++jb)
            for (int ia = 0; ia < da; ++ia)
                sigma(ib, jb) += rho(ia * db + ib, ia * db + jb);
    return sigma;
}

// Block of rho with fixed particle numbers (total_a, total_b) on both sides,
// indexed by k_a * (total_b + 1) + k_b with k = number of particles in |1>.
inline Eigen::MatrixXcd sector_block(const FockBasis& basis, const Eigen::MatrixXcd& rho,
                                     int total_a, int total_b) {
    if (total_a < 0 || total_a > basis.capacity_a() || total_b < 0 ||
        total_b > basis.capacity_b())
        throw std::out_of_range("sector_block: sector outside basis");
    const int dim = (total_a + 1) * (total_b + 1);
    std::vector<int> full(static_cast<std::size_t>(dim));
    for (int ka = 0; ka <= total_a; ++ka)
        for (int kb = 0; kb <= total_b; ++kb)
            full[static_cast<std::size_t>(ka * (total_b + 1) + kb)] =
                basis.index(total_a - ka, ka, total_b - kb, kb);
    Eigen::MatrixXcd block(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            block(i, j) = rho(full[static_cast<std::size_t>(i)],
                              full[static_cast<std::size_t>(j)]);
    return block;
}

// ---------------------------------------------------------------------------
// Single decaying mode
// ---------------------------------------------------------------------------

// Photon-number distribution p_n(t) of one mode with loss rate gamma started
// from the Fock state |n0>.  Computed through the closed-form binomial
// thinning p_n = C(n0, n) e^{-n gamma t} (1 - e^{-gamma t})^{n0 - n} and,
// independently, by integrating the rate equations
// dp_n/dt = gamma [(n+1) p_{n+1} - n p_n]; disagreement beyond 1e-9 throws.
inline std::vector<double> decay_generating_oracle(int n0, double gamma, double t) {
    if (n0 < 0 || n0 > 1000)
        throw std::domain_error("decay_generating_oracle: need 0 <= n0 <= 1000");
    if (gamma < 0.0 || t < 0.0)
        throw std::domain_error("decay_generating_oracle: gamma and t must be >= 0");

    std::vector<double> closed(static_cast<std::size_t>(n0) + 1, 0.0);
    const double q = -std::expm1(-gamma * t);  // 1 - e^{-gamma t}
    if (q == 0.0) {
        closed[static_cast<std::size_t>(n0)] = 1.0;
    } else {
        for (int n = 0; n <= n0; ++n)
            closed[static_cast<std::size_t>(n)] =
                std::exp(log_binomial(n0, n) - n * gamma * t + (n0 - n) * std::log(q));
    }

    std::vector<double> p(static_cast<std::size_t>(n0) + 1, 0.0);
    p[static_cast<std::size_t>(n0)] = 1.0;
    if (t > 0.0 && gamma > 0.0) {
        const long long steps =
            std::max<long long>(1000, std::llround(std::ceil(50.0 * n0 * gamma * t)));
        const double h = t / static_cast<double>(steps);
        const std::size_t dim = p.size();
        auto rhs = [&](const std::vector<double>& v, std::vector<double>& d) {
            for (std::size_t n = 0; n < dim; ++n) {
                d[n] = -gamma * static_cast<double>(n) * v[n];
                if (n + 1 < dim) d[n] += gamma * static_cast<double>(n + 1) * v[n + 1];
            }
        };
        std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
        for (long long s = 0; s < steps; ++s) {
            rhs(p, k1);
            for (std::size_t n = 0; n < dim; ++n) tmp[n] = p[n] + 0.5 * h * k1[n];
            rhs(tmp, k2);
            for (std::size_t n = 0; n < dim; ++n) tmp[n] = p[n] + 0.5 * h * k2[n];
            rhs(tmp, k3);
            for (std::size_t n = 0; n < dim; ++n) tmp[n] = p[n] + h * k3[n];
            rhs(tmp, k4);
            for (std::size_t n = 0; n < dim; ++n)
                p[n] += (h / 6.0) * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        }
    }

    double max_diff = 0.0;
    for (std::size_t n = 0; n < closed.size(); ++n)
        max_diff = std::max(max_diff, std::abs(closed[n] - p[n]));
    if (max_diff > 1e-9) {
        std::ostringstream msg;
        msg << "decay_generating_oracle: closed form and rate equations disagree by "
            << max_diff;
        throw std::logic_error(msg.str());
    }
    return closed;
}

}  // namespace twinspin::oracle
