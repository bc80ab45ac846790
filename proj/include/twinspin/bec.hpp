#pragma once
// Trap-level parameter layer for a two-component condensate in the
// Thomas-Fermi regime of a spherical harmonic trap.
//
// The s-wave interaction energies of the flat-top density profile reduce to
// the two-ensemble spin model of model.hpp with nonlinearities
//   chi    = (1/5) (15 a / 2l)^{2/5} (1 + (a/(a+a01))^{3/5}) omega N^{-3/5},
//   chi_ab = (2/5) (15 a01 / 2l)^{2/5} (a/(a+a01))^{3/5}  omega N^{-3/5},
// where l = sqrt(hbar / (m omega)) is the oscillator length, a (a01) the
// intra- (inter-) component scattering length, and N the total atom number.
// Averaging two- and three-body collisional losses over the same profile
// gives per-atom event rates
//   gamma2 = (1/14pi)    (15/2)^{2/5} (K2 / l^3) N^{-3/5} (l/a)^{3/5},
//   gamma3 = (1/126pi^2) (15/2)^{4/5} (K3 / l^6) N^{-6/5} (l/a)^{6/5},
// which combine with the background one-body rate K1 into a single effective
// one-body rate per internal state,
//   gamma_eff = K1 + (3/2) N gamma2 + (3/4) N^2 gamma3.
// All collision channels are assigned the same rate (the pessimistic choice;
// the 0-0 channel is closed in the physical system, so this over- rather than
// under-estimates the losses).  chi, chi_ab, and gamma_eff are evaluated at
// the initial atom number and held fixed during a scan: the slow drift they
// acquire as atoms are lost is neglected.
//
// plan_sweep turns a trap configuration into the minimum-steering-vs-N
// experiment curve: for each N it freezes (chi, chi_ab, gamma_eff), runs the
// steering optimiser of epr.hpp with both internal states decaying at the
// selected model's rate, and records the optimum (or a gap where the steering
// parameter is undefined on the whole search window).

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "twinspin/epr.hpp"
#include "twinspin/model.hpp"

namespace twinspin {

// Physical constants, CODATA values to 10 significant digits.
inline constexpr double kHbar = 1.054571817e-34;           // J s
inline constexpr double kBohrRadius = 5.291772109e-11;     // m
inline constexpr double kAtomicMassUnit = 1.660539067e-27; // kg

// Trap and collision parameters, all in SI units.
struct BecConfig {
    double omega{0.0};  // trap angular frequency (rad/s)
    double a{0.0};      // intra-component scattering length (m)
    double a01{0.0};    // inter-component scattering length (m)
    double mass{0.0};   // atomic mass (kg)
    double k1{0.0};     // one-body loss rate constant (1/s)
    double k2{0.0};     // two-body loss rate constant (m^3/s)
    double k3{0.0};     // three-body loss rate constant (m^6/s)
};

inline void validate(const BecConfig& c) {
    if (!(c.omega > 0.0)) throw std::domain_error("BecConfig: omega must be > 0");
    if (!(c.a > 0.0)) throw std::domain_error("BecConfig: a must be > 0");
    if (!(c.a01 > 0.0)) throw std::domain_error("BecConfig: a01 must be > 0");
    if (!(c.mass > 0.0)) throw std::domain_error("BecConfig: mass must be > 0");
    if (!(c.k1 >= 0.0) || !(c.k2 >= 0.0) || !(c.k3 >= 0.0))
        throw std::domain_error("BecConfig: loss constants must be >= 0");
}

// Builds a config from laboratory units: trap frequency in Hz
// (omega = 2 pi f), scattering lengths in Bohr radii, mass in atomic mass
// units.  The loss constants are SI already (1/s, m^3/s, m^6/s).
inline BecConfig bec_config_from_lab_units(double frequency_hz, double a_bohr,
                                           double a01_bohr, double mass_amu,
                                           double k1, double k2, double k3) {
    BecConfig c;
    c.omega = 2.0 * kPi * frequency_hz;
    c.a = a_bohr * kBohrRadius;
    c.a01 = a01_bohr * kBohrRadius;
    c.mass = mass_amu * kAtomicMassUnit;
    c.k1 = k1;
    c.k2 = k2;
    c.k3 = k3;
    validate(c);
    return c;
}

inline double oscillator_length(const BecConfig& c) {
    return std::sqrt(kHbar / (c.mass * c.omega));
}

// Everything the spin model needs from the trap, at one atom number.
struct DerivedRates {
    double chi{0.0};        // local nonlinearity (rad/s)
    double chi_ab{0.0};     // cross nonlinearity (rad/s)
    double gamma2{0.0};     // per-atom two-body event rate (1/s)
    double gamma3{0.0};     // per-atom three-body event rate (1/s)
    double gamma_eff{0.0};  // effective one-body rate per internal state (1/s)
};

// Thomas-Fermi nonlinearities at total atom number n_atoms.  The flat-top
// profile underlying the formulas is accurate for n_atoms >~ 10; smaller
// values are accepted but the caller owns that approximation.
inline std::pair<double, double> tf_nonlinearities(const BecConfig& c, double n_atoms) {
    validate(c);
    if (!(n_atoms > 0.0))
        throw std::domain_error("tf_nonlinearities: atom number must be > 0");
    const double l = oscillator_length(c);
    const double frac = std::pow(c.a / (c.a + c.a01), 0.6);
    const double n_pow = std::pow(n_atoms, -0.6);
    const double chi =
        0.2 * std::pow(15.0 * c.a / (2.0 * l), 0.4) * (1.0 + frac) * c.omega * n_pow;
    const double chi_ab =
        0.4 * std::pow(15.0 * c.a01 / (2.0 * l), 0.4) * frac * c.omega * n_pow;
    return {chi, chi_ab};
}

// Nonlinearities plus collisional loss rates at total atom number n_atoms.
inline DerivedRates loss_rates(const BecConfig& c, double n_atoms) {
    DerivedRates r;
    const auto nonlin = tf_nonlinearities(c, n_atoms);
    r.chi = nonlin.first;
    r.chi_ab = nonlin.second;
    const double l = oscillator_length(c);
    r.gamma2 = (1.0 / (14.0 * kPi)) * std::pow(7.5, 0.4) * (c.k2 / (l * l * l)) *
               std::pow(n_atoms, -0.6) * std::pow(l / c.a, 0.6);
    const double l3 = l * l * l;
    r.gamma3 = (1.0 / (126.0 * kPi * kPi)) * std::pow(7.5, 0.8) * (c.k3 / (l3 * l3)) *
               std::pow(n_atoms, -1.2) * std::pow(l / c.a, 1.2);
    r.gamma_eff = c.k1 + 1.5 * n_atoms * r.gamma2 + 0.75 * n_atoms * n_atoms * r.gamma3;
    return r;
}

// Which decay rate the steering scan applies to both internal states.
enum class LossModel {
    none,      // idealised lossless evolution
    one_body,  // background one-body rate K1 only
    full,      // gamma_eff: one-, two-, and three-body combined
};

inline double loss_rate_for_model(const BecConfig& c, const DerivedRates& r, LossModel m) {
    switch (m) {
        case LossModel::none: return 0.0;
        case LossModel::one_body: return c.k1;
        case LossModel::full: return r.gamma_eff;
    }
    throw std::domain_error("loss_rate_for_model: unknown loss model");
}

// Search window for the steering-time optimisation at one atom number.  The
// optimum sits near tau = 1 / (chi_ab N^{2/3}); the window spans three
// decades either side of tau, capped above by one full cross-phase period
// 2 pi / chi_ab (beyond which the dynamics repeats up to decay).
inline std::pair<double, double> sweep_time_window(double chi_ab, double n_atoms) {
    if (!(chi_ab > 0.0) || !(n_atoms > 0.0))
        throw std::domain_error("sweep_time_window: need chi_ab > 0 and atoms > 0");
    const double tau = 1.0 / (chi_ab * std::pow(n_atoms, 2.0 / 3.0));
    const double upper = std::min(2.0 * kPi / chi_ab, 1e3 * tau);
    return {1e-3 * tau, upper};
}

// One atom-number point of the sweep.  `result` is empty when the steering
// parameter is undefined on the whole window (gap, not an error).
struct SweepPoint {
    long long n_atoms{0};
    DerivedRates rates;
    double gamma_applied{0.0};  // the rate the scan actually used
    std::optional<EprResult> result;
};

// Minimum steering parameter as a function of atom number.  n_grid must be
// strictly ascending; both ensembles hold n_atoms and decay at the model's
// rate.  Points are independent pure computations; the output is bit-exactly
// reproducible for any thread count.
inline std::vector<SweepPoint> plan_sweep(const BecConfig& config,
                                          const std::vector<long long>& n_grid,
                                          LossModel model = LossModel::full,
                                          const GridSpec& grid = GridSpec{},
                                          int n_threads = 1) {
    validate(config);
    if (n_grid.empty()) throw std::domain_error("plan_sweep: empty atom-number grid");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        if (n_grid[i] < 1)
            throw std::domain_error("plan_sweep: atom numbers must be >= 1");
        if (n_grid[i] > std::numeric_limits<int>::max())
            throw std::domain_error("plan_sweep: atom number exceeds supported range");
        if (i > 0 && n_grid[i] <= n_grid[i - 1])
            throw std::domain_error("plan_sweep: atom-number grid must be strictly ascending");
    }
    if (n_threads < 1) throw std::domain_error("plan_sweep: need n_threads >= 1");

    std::vector<SweepPoint> points(n_grid.size());
    const auto compute_point = [&](std::size_t i) {
        SweepPoint& pt = points[i];
        pt.n_atoms = n_grid[i];
        const double n = static_cast<double>(pt.n_atoms);
        pt.rates = loss_rates(config, n);
        pt.gamma_applied = loss_rate_for_model(config, pt.rates, model);
        ModelParams par;
        par.n_a = static_cast<int>(pt.n_atoms);
        par.n_b = static_cast<int>(pt.n_atoms);
        par.chi = pt.rates.chi;
        par.chi_ab = pt.rates.chi_ab;
        par.gamma0 = pt.gamma_applied;
        par.gamma1 = pt.gamma_applied;
        pt.result = epr_minimize(par, sweep_time_window(pt.rates.chi_ab, n), grid);
    };

    if (n_threads == 1 || points.size() == 1) {
        for (std::size_t i = 0; i < points.size(); ++i) compute_point(i);
        return points;
    }
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1))
            compute_point(i);
    };
    std::vector<std::thread> pool;
    const int active = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(n_threads), points.size()));
    pool.reserve(static_cast<std::size_t>(active));
    for (int w = 0; w < active; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return points;
}

}  // namespace twinspin
