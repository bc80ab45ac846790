#pragma once
// Quantum-jump unraveling of the lossy two-ensemble dynamics, the analytic
// one-loss density block, and Husimi-Q phase-space cuts over phase states.
//
// The Hamiltonian and every A_i^+ A_i are diagonal in the Fock basis, so a
// pure state with definite particle numbers (n_a, n_b) stays inside its
// symmetric sector between jumps, and the no-jump propagator
// exp[(-iH - sum_i A_i^+ A_i / 2) dt] acts as an exact elementwise
// decay-plus-phase factor (no time-stepping error).  A jump moves the state
// one sector down.  Jump times are sampled exactly by inverting the survival
// norm S(tau) = <psi| e^{-sum A^+A tau} |psi> (waiting-time algorithm) rather
// than by first-order Bernoulli steps in dt.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "model.hpp"

namespace twinspin {

// Loss channels: internal state |0> or |1> of ensemble a or b.
enum class JumpChannel { a0, a1, b0, b1 };

struct JumpRecord {
    JumpChannel channel{JumpChannel::a0};
    double t_jump{0.0};
};

// Pure state with definite particle numbers, stored over the symmetric
// sector.  Index layout: k_a * (n_b + 1) + k_b with k = number of particles
// in internal state |1> (matching the sector extraction of the dense
// reference integrator).  `weight` carries the squared-norm bookkeeping of
// unnormalized states (probability mass of the branch that produced them).
struct SectorState {
    int n_a{0};
    int n_b{0};
    std::vector<Complex> amplitudes;
    double weight{1.0};

    int dim() const { return (n_a + 1) * (n_b + 1); }
    int index(int k_a, int k_b) const { return k_a * (n_b + 1) + k_b; }
};

inline void validate_sector_state(const SectorState& s) {
    if (s.n_a < 0 || s.n_b < 0)
        throw std::domain_error("SectorState: particle numbers must be >= 0");
    if (static_cast<int>(s.amplitudes.size()) != s.dim())
        throw std::invalid_argument("SectorState: amplitude vector has wrong length");
}

inline double norm_sq(const SectorState& s) {
    double out = 0.0;
    for (const Complex& c : s.amplitudes) out += std::norm(c);
    return out;
}

// <lhs|rhs>; both states must live in the same sector.
inline Complex inner_product(const SectorState& lhs, const SectorState& rhs) {
    if (lhs.n_a != rhs.n_a || lhs.n_b != rhs.n_b)
        throw std::invalid_argument("inner_product: states live in different sectors");
    Complex out{0.0, 0.0};
    for (std::size_t i = 0; i < lhs.amplitudes.size(); ++i)
        out += std::conj(lhs.amplitudes[i]) * rhs.amplitudes[i];
    return out;
}

inline SectorState normalized_copy(const SectorState& s) {
    const double w = norm_sq(s);
    if (w <= 0.0) throw std::domain_error("normalized_copy: state has zero norm");
    SectorState out = s;
    const double inv = 1.0 / std::sqrt(w);
    for (Complex& c : out.amplitudes) c *= inv;
    out.weight = 1.0;
    return out;
}

// Product phase state |phi_a, phi_b>: every particle in
// (e^{-i phi/2}|0> + e^{i phi/2}|1>)/sqrt(2), i.e. sector amplitudes
// sqrt(C(n,k)/2^n) e^{i (k - n/2) phi} per ensemble.
inline std::vector<Complex> phase_state_amplitudes(int n, double phi) {
    if (n < 0) throw std::domain_error("phase_state_amplitudes: n must be >= 0");
    std::vector<Complex> amps(static_cast<std::size_t>(n) + 1);
    const double ln2 = std::log(2.0);
    for (int k = 0; k <= n; ++k) {
        const double mag = std::exp(0.5 * (log_binomial(n, k) - n * ln2));
        amps[static_cast<std::size_t>(k)] =
            std::polar(mag, (static_cast<double>(k) - 0.5 * n) * phi);
    }
    return amps;
}

inline SectorState phase_product_state(int n_a, int n_b, double phi_a, double phi_b) {
    SectorState s;
    s.n_a = n_a;
    s.n_b = n_b;
    const std::vector<Complex> amp_a = phase_state_amplitudes(n_a, phi_a);
    const std::vector<Complex> amp_b = phase_state_amplitudes(n_b, phi_b);
    s.amplitudes.resize(static_cast<std::size_t>(s.dim()));
    for (int ka = 0; ka <= n_a; ++ka)
        for (int kb = 0; kb <= n_b; ++kb)
            s.amplitudes[static_cast<std::size_t>(s.index(ka, kb))] =
                amp_a[static_cast<std::size_t>(ka)] * amp_b[static_cast<std::size_t>(kb)];
    return s;
}

// Initial product state with every spin along +x: the phi = 0 phase state.
inline SectorState initial_sector_state(int n_a, int n_b) {
    return phase_product_state(n_a, n_b, 0.0, 0.0);
}

// Exact no-jump propagator exp[(-iH - sum_i A_i^+ A_i / 2) dt]: elementwise
// phase e^{-iE dt} times decay e^{-R dt / 2} with E, R the diagonal energy
// and total loss rate of each ket.  In the lossless case the factor reduces
// bit-for-bit to the shared unitary evolution phase.
inline SectorState no_jump_evolve(const ModelParams& p, const SectorState& s, double dt) {
    validate_sector_state(s);
    if (dt < 0.0) throw std::domain_error("no_jump_evolve: dt must be >= 0");
    SectorState out = s;
    for (int ka = 0; ka <= s.n_a; ++ka) {
        for (int kb = 0; kb <= s.n_b; ++kb) {
            const int n0 = s.n_a - ka, n1 = ka, m0 = s.n_b - kb, m1 = kb;
            const double energy = ket_energy(p, n0, n1, m0, m1);
            const double rate = ket_loss_rate(p, n0, n1, m0, m1);
            const Complex factor =
                evolution_phase(energy, dt) * std::exp(-0.5 * rate * dt);
            out.amplitudes[static_cast<std::size_t>(s.index(ka, kb))] *= factor;
        }
    }
    return out;
}

inline double channel_rate(const ModelParams& p, JumpChannel ch) {
    return (ch == JumpChannel::a0 || ch == JumpChannel::b0) ? p.gamma0 : p.gamma1;
}

// Applies the full jump operator A = sqrt(rate) * (annihilation of the
// channel's mode); the result lives one sector down and is unnormalized.
inline SectorState apply_jump_operator(const ModelParams& p, const SectorState& s,
                                       JumpChannel ch) {
    validate_sector_state(s);
    const bool side_a = (ch == JumpChannel::a0 || ch == JumpChannel::a1);
    const bool mode1 = (ch == JumpChannel::a1 || ch == JumpChannel::b1);
    if ((side_a ? s.n_a : s.n_b) < 1)
        throw std::domain_error("apply_jump_operator: ensemble is already empty");
    const double rate = channel_rate(p, ch);

    SectorState out;
    out.n_a = s.n_a - (side_a ? 1 : 0);
    out.n_b = s.n_b - (side_a ? 0 : 1);
    out.amplitudes.assign(static_cast<std::size_t>(out.dim()), Complex{0.0, 0.0});
    for (int ka = 0; ka <= out.n_a; ++ka) {
        for (int kb = 0; kb <= out.n_b; ++kb) {
            // Occupation removed by the annihilation, read off the source ket.
            int src_ka = ka, src_kb = kb, occ = 0;
            if (side_a && !mode1) occ = s.n_a - ka;           // a0: n0 = N - k
            if (side_a && mode1) { occ = ka + 1; src_ka = ka + 1; }
            if (!side_a && !mode1) occ = s.n_b - kb;          // b0
            if (!side_a && mode1) { occ = kb + 1; src_kb = kb + 1; }
            out.amplitudes[static_cast<std::size_t>(out.index(ka, kb))] =
                std::sqrt(rate * static_cast<double>(occ)) *
                s.amplitudes[static_cast<std::size_t>(s.index(src_ka, src_kb))];
        }
    }
    out.weight = norm_sq(out);
    return out;
}

// ---------------------------------------------------------------------------
// Collective-spin moments of a sector state
// ---------------------------------------------------------------------------

namespace detail {

// Applies S_x, S_y, or S_z of one ensemble to the state (S_+ = a1^+ a0 raises
// k by one with matrix element sqrt((k+1)(n-k))).
inline std::vector<Complex> apply_collective_spin(const SectorState& s, bool side_a,
                                                  char axis) {
    std::vector<Complex> out(s.amplitudes.size(), Complex{0.0, 0.0});
    const int n = side_a ? s.n_a : s.n_b;
    const Complex up = (axis == 'x') ? Complex{0.5, 0.0} : Complex{0.0, -0.5};
    const Complex down = (axis == 'x') ? Complex{0.5, 0.0} : Complex{0.0, 0.5};
    for (int ka = 0; ka <= s.n_a; ++ka) {
        for (int kb = 0; kb <= s.n_b; ++kb) {
            const std::size_t i = static_cast<std::size_t>(s.index(ka, kb));
            const Complex c = s.amplitudes[i];
            if (c == Complex{0.0, 0.0}) continue;
            const int k = side_a ? ka : kb;
            if (axis == 'z') {
                out[i] += (static_cast<double>(k) - 0.5 * n) * c;
                continue;
            }
            if (k < n) {  // S_+ component
                const double amp = std::sqrt(static_cast<double>(k + 1) *
                                             static_cast<double>(n - k));
                const int j = side_a ? s.index(ka + 1, kb) : s.index(ka, kb + 1);
                out[static_cast<std::size_t>(j)] += up * amp * c;
            }
            if (k > 0) {  // S_- component
                const double amp = std::sqrt(static_cast<double>(k) *
                                             static_cast<double>(n - k + 1));
                const int j = side_a ? s.index(ka - 1, kb) : s.index(ka, kb - 1);
                out[static_cast<std::size_t>(j)] += down * amp * c;
            }
        }
    }
    return out;
}

inline Complex vector_inner(const std::vector<Complex>& x, const std::vector<Complex>& y) {
    Complex out{0.0, 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) out += std::conj(x[i]) * y[i];
    return out;
}

}  // namespace detail

// Number of scalar moments reported per trajectory (the CorrelatorSet fields
// in declaration order, t excluded).
inline constexpr int kTrajectoryMomentCount = 25;

// Moments of a (possibly unnormalized) sector state, ordered exactly like the
// CorrelatorSet fields: sx, sy, sz, n, sx2, sy2, sz2, <{Sy,Sz}>, <{Sx,Sy}>
// for a, the same nine for b, then the seven cross moments
// sysy, sysz, szsy, szsz, sxsx, sxsy, sysx.
inline std::array<double, kTrajectoryMomentCount> sector_moments(const SectorState& s) {
    validate_sector_state(s);
    const double w = norm_sq(s);
    std::array<double, kTrajectoryMomentCount> out{};
    if (w <= 0.0) return out;
    const double inv = 1.0 / w;

    const std::vector<Complex> xa = detail::apply_collective_spin(s, true, 'x');
    const std::vector<Complex> ya = detail::apply_collective_spin(s, true, 'y');
    const std::vector<Complex> za = detail::apply_collective_spin(s, true, 'z');
    const std::vector<Complex> xb = detail::apply_collective_spin(s, false, 'x');
    const std::vector<Complex> yb = detail::apply_collective_spin(s, false, 'y');
    const std::vector<Complex> zb = detail::apply_collective_spin(s, false, 'z');
    const std::vector<Complex>& psi = s.amplitudes;

    out[0] = detail::vector_inner(psi, xa).real() * inv;
    out[1] = detail::vector_inner(psi, ya).real() * inv;
    out[2] = detail::vector_inner(psi, za).real() * inv;
    out[3] = static_cast<double>(s.n_a);
    out[4] = detail::vector_inner(xa, xa).real() * inv;
    out[5] = detail::vector_inner(ya, ya).real() * inv;
    out[6] = detail::vector_inner(za, za).real() * inv;
    out[7] = 2.0 * detail::vector_inner(ya, za).real() * inv;
    out[8] = 2.0 * detail::vector_inner(xa, ya).real() * inv;

    out[9] = detail::vector_inner(psi, xb).real() * inv;
    out[10] = detail::vector_inner(psi, yb).real() * inv;
    out[11] = detail::vector_inner(psi, zb).real() * inv;
    out[12] = static_cast<double>(s.n_b);
    out[13] = detail::vector_inner(xb, xb).real() * inv;
    out[14] = detail::vector_inner(yb, yb).real() * inv;
    out[15] = detail::vector_inner(zb, zb).real() * inv;
    out[16] = 2.0 * detail::vector_inner(yb, zb).real() * inv;
    out[17] = 2.0 * detail::vector_inner(xb, yb).real() * inv;

    out[18] = detail::vector_inner(ya, yb).real() * inv;
    out[19] = detail::vector_inner(ya, zb).real() * inv;
    out[20] = detail::vector_inner(za, yb).real() * inv;
    out[21] = detail::vector_inner(za, zb).real() * inv;
    out[22] = detail::vector_inner(xa, xb).real() * inv;
    out[23] = detail::vector_inner(xa, yb).real() * inv;
    out[24] = detail::vector_inner(ya, xb).real() * inv;
    return out;
}

// ---------------------------------------------------------------------------
// Stochastic trajectories
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64_finalize(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Uniform double in [0, 1) from the top 53 bits of one generator draw.
inline double next_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

// Seed of trajectory `index` in the stream rooted at `seed` (the index-th
// output of a SplitMix64 sequence), so every trajectory is reproducible in
// isolation and independent of how work is distributed over threads.
inline std::uint64_t per_trajectory_seed(std::uint64_t seed, std::uint64_t index) {
    return detail::splitmix64_finalize(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

struct TrajectoryResult {
    SectorState state;               // final state; unnormalized (weight = norm^2)
    std::vector<JumpRecord> jumps;   // in time order
};

// One stochastic realization from the +x product state to t_final.  Between
// jumps the state follows the exact no-jump propagator; the time of the next
// jump is sampled by solving S(tau) = u S(0) for the survival norm
// S(tau) = sum_j |c_j|^2 e^{-R_j tau} (monotone, solved by safeguarded
// Newton), and the channel is drawn proportionally to <psi|A_i^+ A_i|psi>.
// Consumes exactly one uniform per no-jump tail and two per jump.  The final
// segment is left unnormalized so the lossless case reproduces the unitary
// propagator bit-for-bit; moments divide by the norm.
inline TrajectoryResult run_trajectory(const ModelParams& p, double t_final,
                                       std::mt19937_64& rng) {
    validate(p);
    if (t_final < 0.0) throw std::domain_error("run_trajectory: t_final must be >= 0");

    TrajectoryResult result;
    result.state = initial_sector_state(p.n_a, p.n_b);
    double t_now = 0.0;

    while (t_now < t_final) {
        SectorState& s = result.state;
        const int dim = s.dim();
        std::vector<double> prob(static_cast<std::size_t>(dim));
        std::vector<double> rate(static_cast<std::size_t>(dim));
        double s0 = 0.0, s_inf = 0.0;
        for (int ka = 0; ka <= s.n_a; ++ka) {
            for (int kb = 0; kb <= s.n_b; ++kb) {
                const std::size_t i = static_cast<std::size_t>(s.index(ka, kb));
                prob[i] = std::norm(s.amplitudes[i]);
                rate[i] = ket_loss_rate(p, s.n_a - ka, ka, s.n_b - kb, kb);
                s0 += prob[i];
                if (rate[i] == 0.0) s_inf += prob[i];
            }
        }
        if (s0 <= 0.0) break;  // numerically dead branch; keep state as is

        const double t_rem = t_final - t_now;
        const double u = detail::next_uniform(rng);
        const double target = u * s0;

        const auto survival = [&](double tau) {
            double acc = 0.0;
            for (std::size_t i = 0; i < prob.size(); ++i)
                acc += prob[i] * std::exp(-rate[i] * tau);
            return acc;
        };

        if (target <= s_inf || survival(t_rem) >= target) {
            result.state = no_jump_evolve(p, s, t_rem);
            t_now = t_final;
            break;
        }

        // Solve S(tau) = target on (0, t_rem): Newton with bisection bracket.
        double lo = 0.0, hi = t_rem, tau = 0.5 * t_rem;
        for (int iter = 0; iter < 200; ++iter) {
            double f = -target, fp = 0.0;
            for (std::size_t i = 0; i < prob.size(); ++i) {
                const double e = prob[i] * std::exp(-rate[i] * tau);
                f += e;
                fp -= rate[i] * e;
            }
            if (f > 0.0)
                lo = tau;
            else
                hi = tau;
            if (f == 0.0 || hi - lo <= 1e-15 * std::max(1.0, hi)) break;
            double next = tau - f / fp;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            tau = next;
        }

        result.state = no_jump_evolve(p, s, tau);
        t_now += tau;

        // Channel weights <psi|A_i^+ A_i|psi> on the evolved state.
        std::array<double, 4> channel_weight{0.0, 0.0, 0.0, 0.0};
        for (int ka = 0; ka <= result.state.n_a; ++ka) {
            for (int kb = 0; kb <= result.state.n_b; ++kb) {
                const std::size_t i =
                    static_cast<std::size_t>(result.state.index(ka, kb));
                const double pr = std::norm(result.state.amplitudes[i]);
                channel_weight[0] += p.gamma0 * (result.state.n_a - ka) * pr;
                channel_weight[1] += p.gamma1 * ka * pr;
                channel_weight[2] += p.gamma0 * (result.state.n_b - kb) * pr;
                channel_weight[3] += p.gamma1 * kb * pr;
            }
        }
        const double total_weight = channel_weight[0] + channel_weight[1] +
                                    channel_weight[2] + channel_weight[3];
        if (total_weight <= 0.0) {
            // Rounding corner: the sampled jump has no channel to fire.  Treat
            // the rest of the window as jump-free.
            result.state = no_jump_evolve(p, result.state, t_final - t_now);
            t_now = t_final;
            break;
        }
        const double v = detail::next_uniform(rng) * total_weight;
        int channel = 3;
        double cumulative = 0.0;
        for (int c = 0; c < 4; ++c) {
            cumulative += channel_weight[static_cast<std::size_t>(c)];
            if (v < cumulative) {
                channel = c;
                break;
            }
        }
        result.state = normalized_copy(
            apply_jump_operator(p, result.state, static_cast<JumpChannel>(channel)));
        result.jumps.push_back(JumpRecord{static_cast<JumpChannel>(channel), t_now});
    }

    result.state.weight = norm_sq(result.state);
    return result;
}

// ---------------------------------------------------------------------------
// Monte-Carlo ensemble estimators
// ---------------------------------------------------------------------------

struct McMoment {
    double mean{0.0};
    double std_error{0.0};
};

// Trajectory-ensemble estimates of the CorrelatorSet moments, plus the
// probability of exactly one loss event by time t.
struct McEstimators {
    double t{0.0};
    long long n_trajectories{0};
    McMoment sx_a, sy_a, sz_a, n_of_t, sx2_a, sy2_a, sz2_a, anti_yz_a, anti_xy_a;
    McMoment sx_b, sy_b, sz_b, n_of_t_b, sx2_b, sy2_b, sz2_b, anti_yz_b, anti_xy_b;
    McMoment sysy_ab, sysz_ab, szsy_ab, szsz_ab, sxsx_ab, sxsy_ab, sysx_ab;
    McMoment prob_one_loss;
};

namespace detail {

inline std::array<McMoment McEstimators::*, 26> mc_field_table() {
    return {&McEstimators::sx_a,      &McEstimators::sy_a,    &McEstimators::sz_a,
            &McEstimators::n_of_t,    &McEstimators::sx2_a,   &McEstimators::sy2_a,
            &McEstimators::sz2_a,     &McEstimators::anti_yz_a, &McEstimators::anti_xy_a,
            &McEstimators::sx_b,      &McEstimators::sy_b,    &McEstimators::sz_b,
            &McEstimators::n_of_t_b,  &McEstimators::sx2_b,   &McEstimators::sy2_b,
            &McEstimators::sz2_b,     &McEstimators::anti_yz_b, &McEstimators::anti_xy_b,
            &McEstimators::sysy_ab,   &McEstimators::sysz_ab, &McEstimators::szsy_ab,
            &McEstimators::szsz_ab,   &McEstimators::sxsx_ab, &McEstimators::sxsy_ab,
            &McEstimators::sysx_ab,   &McEstimators::prob_one_loss};
}

}  // namespace detail

// Runs n_trajectories independent realizations and averages their moments.
// Every trajectory is seeded from (seed, index) alone and written to its own
// result slot, then the slots are reduced in index order regardless of the
// number of worker threads, so a fixed seed gives bit-identical results for
// any thread count.  Standard errors are two-pass sample errors of the mean.
inline McEstimators mc_evolve(const ModelParams& p, double t_final,
                              long long n_trajectories, std::uint64_t seed,
                              int n_threads = 1) {
    validate(p);
    if (t_final < 0.0) throw std::domain_error("mc_evolve: t_final must be >= 0");
    if (n_trajectories < 1)
        throw std::domain_error("mc_evolve: need at least one trajectory");
    n_threads = std::max(1, n_threads);

    constexpr int n_fields = 26;  // 25 moments + one-loss indicator
    std::vector<std::array<double, n_fields>> slots(
        static_cast<std::size_t>(n_trajectories));

    const auto work = [&](long long begin, long long end) {
        for (long long idx = begin; idx < end; ++idx) {
            std::mt19937_64 rng(
                per_trajectory_seed(seed, static_cast<std::uint64_t>(idx)));
            const TrajectoryResult run = run_trajectory(p, t_final, rng);
            const std::array<double, kTrajectoryMomentCount> m =
                sector_moments(run.state);
            auto& slot = slots[static_cast<std::size_t>(idx)];
            std::copy(m.begin(), m.end(), slot.begin());
            slot[n_fields - 1] = (run.jumps.size() == 1) ? 1.0 : 0.0;
        }
    };

    if (n_threads == 1 || n_trajectories < 2 * n_threads) {
        work(0, n_trajectories);
    } else {
        std::vector<std::thread> pool;
        const long long chunk = (n_trajectories + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const long long begin = w * chunk;
            const long long end = std::min<long long>(n_trajectories, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(work, begin, end);
        }
        for (std::thread& th : pool) th.join();
    }

    McEstimators out;
    out.t = t_final;
    out.n_trajectories = n_trajectories;
    const auto fields = detail::mc_field_table();
    const double n = static_cast<double>(n_trajectories);
    for (int f = 0; f < n_fields; ++f) {
        double sum = 0.0;
        for (long long i = 0; i < n_trajectories; ++i)
            sum += slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
        const double mean = sum / n;
        double sq = 0.0;
        for (long long i = 0; i < n_trajectories; ++i) {
            const double d =
                slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] - mean;
            sq += d * d;
        }
        McMoment& moment = out.*(fields[static_cast<std::size_t>(f)]);
        moment.mean = mean;
        moment.std_error =
            (n_trajectories > 1) ? std::sqrt(sq / (n * (n - 1.0))) : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analytic one-loss reconstruction
// ---------------------------------------------------------------------------

// Unnormalized branch state at time t given that exactly one loss fired
// in `channel` at time t1: no-jump to t1, jump, no-jump for the rest.
inline SectorState trajectory_given_loss_time(const ModelParams& p, JumpChannel ch,
                                              double t, double t1) {
    validate(p);
    if (t < 0.0 || t1 < 0.0 || t1 > t)
        throw std::domain_error("trajectory_given_loss_time: need 0 <= t1 <= t");
    const SectorState before =
        no_jump_evolve(p, initial_sector_state(p.n_a, p.n_b), t1);
    SectorState after = no_jump_evolve(p, apply_jump_operator(p, before, ch), t - t1);
    after.weight = norm_sq(after);
    return after;
}

// The same branch state computed through the commutation identity: pushing
// the jump operator through the diagonal no-jump propagator yields
//
//   |psi(t | ch, t1)> = exp[(t1 - t) Dg] A_ch |psi_nj(t)>,
//
// where Dg is the diagonal shift of the no-jump generator under the removed
// particle.  For a loss from mode |eps> of ensemble a,
// Dg = (+-) i (chi S_z^a - chi_ab/2 S_z^b) - i chi/4 - Gamma_eps/2 evaluated
// on the post-jump ket (+ for eps = 0, - for eps = 1); for ensemble b the
// roles of S_z^a and S_z^b swap.  The rotation angle grows linearly with the
// loss time t1 - the phase-noise mechanism that destroys coherence once t1
// is averaged over.
inline SectorState trajectory_via_phase_prefactor(const ModelParams& p, JumpChannel ch,
                                                  double t, double t1) {
    validate(p);
    if (t < 0.0 || t1 < 0.0 || t1 > t)
        throw std::domain_error("trajectory_via_phase_prefactor: need 0 <= t1 <= t");
    const SectorState evolved =
        no_jump_evolve(p, initial_sector_state(p.n_a, p.n_b), t);
    SectorState out = apply_jump_operator(p, evolved, ch);

    const bool side_a = (ch == JumpChannel::a0 || ch == JumpChannel::a1);
    const bool mode1 = (ch == JumpChannel::a1 || ch == JumpChannel::b1);
    const double sign = mode1 ? -1.0 : 1.0;
    const double rate = channel_rate(p, ch);
    for (int ka = 0; ka <= out.n_a; ++ka) {
        for (int kb = 0; kb <= out.n_b; ++kb) {
            const double sa = static_cast<double>(ka) - 0.5 * out.n_a;
            const double sb = static_cast<double>(kb) - 0.5 * out.n_b;
            const double own = side_a ? sa : sb;
            const double other = side_a ? sb : sa;
            const Complex shift{-0.5 * rate,
                                sign * (p.chi * own - 0.5 * p.chi_ab * other) -
                                    0.25 * p.chi};
            out.amplitudes[static_cast<std::size_t>(out.index(ka, kb))] *=
                std::exp((t1 - t) * shift);
        }
    }
    out.weight = norm_sq(out);
    return out;
}

// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]
// (Newton iteration on the Legendre recurrence).
inline void gauss_legendre_rule(int n, std::vector<double>& nodes,
                                std::vector<double>& weights) {
    if (n < 1) throw std::domain_error("gauss_legendre_rule: n must be >= 1");
    nodes.assign(static_cast<std::size_t>(n), 0.0);
    weights.assign(static_cast<std::size_t>(n), 0.0);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(kPi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - static_cast<double>(j) * p2) /
                     (static_cast<double>(j) + 1.0);
            }
            dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[static_cast<std::size_t>(i)] = -x;
        nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[static_cast<std::size_t>(i)] = w;
        weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
}

// Density-matrix block of the branch with exactly one loss through `channel`:
// rho'(t) = integral_0^t |psi(t|ch,t1)><psi(t|ch,t1)| dt1, evaluated with
// Gauss-Legendre quadrature whose node count doubles from `quadrature_nodes`
// until the Frobenius norm of the change drops below 1e-9.  The block lives
// in the sector one particle down from (n_a, n_b), indexed like SectorState,
// and is deliberately subnormalized: its trace is the one-loss probability
// mass routed through the channel.
inline Eigen::MatrixXcd single_loss_block(const ModelParams& p, JumpChannel ch,
                                          double t, int quadrature_nodes = 8) {
    validate(p);
    if (t < 0.0) throw std::domain_error("single_loss_block: t must be >= 0");
    if (quadrature_nodes < 8)
        throw std::domain_error("single_loss_block: need at least 8 quadrature nodes");
    const bool side_a = (ch == JumpChannel::a0 || ch == JumpChannel::a1);
    if ((side_a ? p.n_a : p.n_b) < 1)
        throw std::domain_error("single_loss_block: ensemble is already empty");
    const int dim = (p.n_a - (side_a ? 1 : 0) + 1) * (p.n_b - (side_a ? 0 : 1) + 1);

    const auto integrate = [&](int count) {
        std::vector<double> xi, w;
        gauss_legendre_rule(count, xi, w);
        Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
        Eigen::VectorXcd v(dim);
        for (int q = 0; q < count; ++q) {
            const double t1 = 0.5 * t * (xi[static_cast<std::size_t>(q)] + 1.0);
            const SectorState branch = trajectory_given_loss_time(p, ch, t, t1);
            for (int i = 0; i < dim; ++i)
                v(i) = branch.amplitudes[static_cast<std::size_t>(i)];
            rho.noalias() +=
                (0.5 * t * w[static_cast<std::size_t>(q)]) * (v * v.adjoint());
        }
        return rho;
    };

    Eigen::MatrixXcd prev = integrate(quadrature_nodes);
    for (int count = 2 * quadrature_nodes; count <= 16384; count *= 2) {
        Eigen::MatrixXcd cur = integrate(count);
        if ((cur - prev).norm() < 1e-9) return cur;
        prev = std::move(cur);
    }
    throw std::runtime_error(
        "single_loss_block: quadrature did not converge within 16384 nodes");
}

// ---------------------------------------------------------------------------
// Husimi-Q cuts over phase states
// ---------------------------------------------------------------------------

// Q sampled on a rectangular grid of phase-state angles; value(i, j) refers
// to (phi_a[i], phi_b[j]), stored row-major.
struct HusimiGrid {
    std::vector<double> phi_a;
    std::vector<double> phi_b;
    std::vector<double> values;

    int rows() const { return static_cast<int>(phi_a.size()); }
    int cols() const { return static_cast<int>(phi_b.size()); }
    double value(int i, int j) const {
        return values[static_cast<std::size_t>(i) * phi_b.size() +
                      static_cast<std::size_t>(j)];
    }
};

// Evenly spaced angles over [-pi, pi).
inline std::vector<double> husimi_axis(int resolution) {
    std::vector<double> phi(static_cast<std::size_t>(resolution));
    for (int j = 0; j < resolution; ++j)
        phi[static_cast<std::size_t>(j)] =
            -kPi + 2.0 * kPi * static_cast<double>(j) / resolution;
    return phi;
}

namespace detail {

inline void require_husimi_resolution(int res_a, int res_b) {
    if (res_a < 16 || res_b < 16)
        throw std::domain_error("husimi_q: grid resolution must be at least 16x16");
}

}  // namespace detail

// Q(phi_a, phi_b) = |<phi_a, phi_b|psi>|^2 of a pure sector state (the state
// and the phase states are normalized defensively, so values lie in [0, 1]).
inline HusimiGrid husimi_q(const SectorState& s, int res_a, int res_b) {
    validate_sector_state(s);
    detail::require_husimi_resolution(res_a, res_b);
    const double state_norm = norm_sq(s);
    if (state_norm <= 0.0) throw std::domain_error("husimi_q: state has zero norm");

    HusimiGrid grid;
    grid.phi_a = husimi_axis(res_a);
    grid.phi_b = husimi_axis(res_b);
    grid.values.assign(static_cast<std::size_t>(res_a) * res_b, 0.0);

    // Contract the b index for every phi_b first: partial(j, ka).
    std::vector<Complex> partial(static_cast<std::size_t>(res_b) * (s.n_a + 1));
    std::vector<double> phase_norm_b(static_cast<std::size_t>(res_b));
    for (int j = 0; j < res_b; ++j) {
        const std::vector<Complex> vb =
            phase_state_amplitudes(s.n_b, grid.phi_b[static_cast<std::size_t>(j)]);
        double nb = 0.0;
        for (const Complex& c : vb) nb += std::norm(c);
        phase_norm_b[static_cast<std::size_t>(j)] = nb;
        for (int ka = 0; ka <= s.n_a; ++ka) {
            Complex acc{0.0, 0.0};
            for (int kb = 0; kb <= s.n_b; ++kb)
                acc += std::conj(vb[static_cast<std::size_t>(kb)]) *
                       s.amplitudes[static_cast<std::size_t>(s.index(ka, kb))];
            partial[static_cast<std::size_t>(j) * (s.n_a + 1) +
                    static_cast<std::size_t>(ka)] = acc;
        }
    }
    for (int i = 0; i < res_a; ++i) {
        const std::vector<Complex> va =
            phase_state_amplitudes(s.n_a, grid.phi_a[static_cast<std::size_t>(i)]);
        double na = 0.0;
        for (const Complex& c : va) na += std::norm(c);
        for (int j = 0; j < res_b; ++j) {
            Complex overlap{0.0, 0.0};
            for (int ka = 0; ka <= s.n_a; ++ka)
                overlap += std::conj(va[static_cast<std::size_t>(ka)]) *
                           partial[static_cast<std::size_t>(j) * (s.n_a + 1) +
                                   static_cast<std::size_t>(ka)];
            grid.values[static_cast<std::size_t>(i) * res_b +
                        static_cast<std::size_t>(j)] =
                std::norm(overlap) /
                (na * phase_norm_b[static_cast<std::size_t>(j)] * state_norm);
        }
    }
    return grid;
}

// Q(phi_a, phi_b) = <phi_a, phi_b| rho |phi_a, phi_b> of a sector density
// block (indexed like SectorState over the (n_a, n_b) sector).  The phase
// states are normalized defensively; the block is used as given, so a
// subnormalized one-loss block yields correspondingly scaled values.  Tiny
// negative rounding residues are clamped to zero.
inline HusimiGrid husimi_q(const Eigen::MatrixXcd& block, int n_a, int n_b, int res_a,
                           int res_b) {
    detail::require_husimi_resolution(res_a, res_b);
    const int dim = (n_a + 1) * (n_b + 1);
    if (block.rows() != dim || block.cols() != dim)
        throw std::invalid_argument("husimi_q: block shape does not match sector");

    HusimiGrid grid;
    grid.phi_a = husimi_axis(res_a);
    grid.phi_b = husimi_axis(res_b);
    grid.values.assign(static_cast<std::size_t>(res_a) * res_b, 0.0);

    Eigen::VectorXcd v(dim);
    for (int i = 0; i < res_a; ++i) {
        const std::vector<Complex> va =
            phase_state_amplitudes(n_a, grid.phi_a[static_cast<std::size_t>(i)]);
        for (int j = 0; j < res_b; ++j) {
            const std::vector<Complex> vb =
                phase_state_amplitudes(n_b, grid.phi_b[static_cast<std::size_t>(j)]);
            for (int ka = 0; ka <= n_a; ++ka)
                for (int kb = 0; kb <= n_b; ++kb)
                    v(ka * (n_b + 1) + kb) = va[static_cast<std::size_t>(ka)] *
                                             vb[static_cast<std::size_t>(kb)];
            const double phase_norm = v.squaredNorm();
            const double q = (v.adjoint() * block * v).value().real() / phase_norm;
            grid.values[static_cast<std::size_t>(i) * res_b +
                        static_cast<std::size_t>(j)] = std::max(0.0, q);
        }
    }
    return grid;
}

// Grid cells strictly greater than all eight periodic neighbors.
struct GridPeak {
    int i{0};
    int j{0};
    double value{0.0};
};

inline std::vector<GridPeak> periodic_local_maxima(const HusimiGrid& grid) {
    std::vector<GridPeak> peaks;
    const int rows = grid.rows(), cols = grid.cols();
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const double center = grid.value(i, j);
            bool is_peak = true;
            for (int di = -1; di <= 1 && is_peak; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const int ni = (i + di + rows) % rows;
                    const int nj = (j + dj + cols) % cols;
                    if (grid.value(ni, nj) >= center) {
                        is_peak = false;
                        break;
                    }
                }
            }
            if (is_peak) peaks.push_back(GridPeak{i, j, center});
        }
    }
    return peaks;
}

}  // namespace twinspin
