#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "twinspin/correlators.hpp"
#include "twinspin/model.hpp"
#include "twinspin/oracle.hpp"
#include "twinspin/trajectories.hpp"

namespace {

using twinspin::Complex;
using twinspin::CorrelatorSet;
using twinspin::HusimiGrid;
using twinspin::JumpChannel;
using twinspin::McEstimators;
using twinspin::ModelParams;
using twinspin::SectorState;
using twinspin::TrajectoryResult;
namespace orc = twinspin::oracle;

ModelParams make_params(int n, int m, double chi, double chi_ab, double g0, double g1) {
    ModelParams p;
    p.n_a = n;
    p.n_b = m;
    p.chi = chi;
    p.chi_ab = chi_ab;
    p.gamma0 = g0;
    p.gamma1 = g1;
    return p;
}

// Places a sector state into the full truncated Fock basis (all other
// sectors zero).
Eigen::VectorXcd embed(const SectorState& s, const orc::FockBasis& basis) {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(basis.size());
    for (int ka = 0; ka <= s.n_a; ++ka)
        for (int kb = 0; kb <= s.n_b; ++kb)
            psi(basis.index(s.n_a - ka, ka, s.n_b - kb, kb)) =
                s.amplitudes[static_cast<std::size_t>(s.index(ka, kb))];
    return psi;
}

double grid_integral(const HusimiGrid& grid) {
    // integral over [-pi,pi)^2 of Q dphi_a dphi_b / (2 pi)^2; the rectangle
    // rule is the trapezoid rule on the periodic grid.
    double sum = 0.0;
    for (double v : grid.values) sum += v;
    return sum / (static_cast<double>(grid.rows()) * grid.cols());
}

double grid_max(const HusimiGrid& grid) {
    double m = 0.0;
    for (double v : grid.values) m = std::max(m, v);
    return m;
}

TEST(GaussLegendre, RuleIsExactForPolynomials) {
    std::vector<double> x, w;
    twinspin::gauss_legendre_rule(5, x, w);
    double weight_sum = 0.0, x8 = 0.0, x9 = 0.0;
    for (int q = 0; q < 5; ++q) {
        weight_sum += w[q];
        x8 += w[q] * std::pow(x[q], 8);
        x9 += w[q] * std::pow(x[q], 9);
        EXPECT_NEAR(x[q], -x[4 - q], 1e-15);  // symmetric nodes
    }
    EXPECT_NEAR(weight_sum, 2.0, 1e-14);
    EXPECT_NEAR(x8, 2.0 / 9.0, 1e-14);  // 5-point rule is exact to degree 9
    EXPECT_NEAR(x9, 0.0, 1e-14);
    EXPECT_THROW(twinspin::gauss_legendre_rule(0, x, w), std::domain_error);
}

TEST(SectorState, InitialStateIsNormalizedPlusX) {
    const SectorState s = twinspin::initial_sector_state(5, 3);
    EXPECT_EQ(s.dim(), 24);
    EXPECT_NEAR(twinspin::norm_sq(s), 1.0, 1e-14);
    // All amplitudes real positive with binomial weights.
    for (int ka = 0; ka <= 5; ++ka) {
        for (int kb = 0; kb <= 3; ++kb) {
            const Complex c = s.amplitudes[static_cast<std::size_t>(s.index(ka, kb))];
            EXPECT_EQ(c.imag(), 0.0);
            EXPECT_GT(c.real(), 0.0);
        }
    }
    const double expect_00 = std::sqrt(1.0 / (32.0 * 8.0));
    EXPECT_NEAR(s.amplitudes[0].real(), expect_00, 1e-15);
}

TEST(NoJump, LosslessEvolutionMatchesUnitaryPropagatorBitForBit) {
    const ModelParams par = make_params(6, 6, 0.9, 1.1, 0.0, 0.0);
    const double t = 1.7;
    const orc::FockBasis basis(6, 6);

    const SectorState start = twinspin::initial_sector_state(6, 6);
    const Eigen::VectorXcd reference =
        orc::unitary_evolve(par, basis, embed(start, basis), t);

    std::mt19937_64 rng(twinspin::per_trajectory_seed(12345, 0));
    const TrajectoryResult run = twinspin::run_trajectory(par, t, rng);
    EXPECT_TRUE(run.jumps.empty());

    const Eigen::VectorXcd got = embed(run.state, basis);
    for (int i = 0; i < basis.size(); ++i) {
        EXPECT_EQ(got(i).real(), reference(i).real()) << "index " << i;
        EXPECT_EQ(got(i).imag(), reference(i).imag()) << "index " << i;
    }
}

TEST(NoJump, PropagatorSquaredReproducesDecayOnEveryBasisKet) {
    const ModelParams par = make_params(4, 4, 0.7, 0.4, 0.08, 0.03);
    for (double t : {0.3, 1.1, 2.9}) {
        for (int ka = 0; ka <= 4; ++ka) {
            for (int kb = 0; kb <= 4; ++kb) {
                SectorState delta;
                delta.n_a = 4;
                delta.n_b = 4;
                delta.amplitudes.assign(static_cast<std::size_t>(delta.dim()),
                                        Complex{0.0, 0.0});
                delta.amplitudes[static_cast<std::size_t>(delta.index(ka, kb))] = 1.0;
                const SectorState evolved = twinspin::no_jump_evolve(par, delta, t);
                const double got = twinspin::norm_sq(evolved);
                const double rate =
                    twinspin::ket_loss_rate(par, 4 - ka, ka, 4 - kb, kb);
                EXPECT_NEAR(got, std::exp(-rate * t), 1e-12);
            }
        }
    }
}

TEST(Jump, OperatorMatchesDenseAnnihilation) {
    const ModelParams par = make_params(3, 3, 0.9, 0.6, 0.05, 0.02);
    const orc::FockBasis basis(3, 3);
    const SectorState state =
        twinspin::no_jump_evolve(par, twinspin::initial_sector_state(3, 3), 0.3);
    const Eigen::VectorXcd psi = embed(state, basis);

    const std::pair<JumpChannel, orc::Mode> channels[] = {
        {JumpChannel::a0, orc::Mode::a0},
        {JumpChannel::a1, orc::Mode::a1},
        {JumpChannel::b0, orc::Mode::b0},
        {JumpChannel::b1, orc::Mode::b1}};
    for (const auto& [ch, mode] : channels) {
        const SectorState jumped = twinspin::apply_jump_operator(par, state, ch);
        const Eigen::VectorXcd direct =
            std::sqrt(twinspin::channel_rate(par, ch)) *
            (Eigen::MatrixXcd(orc::annihilation(basis, mode)) * psi);
        const Eigen::VectorXcd mine = embed(jumped, basis);
        EXPECT_LT((mine - direct).norm(), 1e-14);
    }
}

TEST(Jump, PhasePrefactorIdentityMatchesDirectComposition) {
    // Pushing the jump operator through the diagonal no-jump propagator must
    // reproduce the directly composed branch state at any loss time.
    const ModelParams par = make_params(4, 3, 0.8, 0.8, 0.05, 0.03);
    const double t = 1.1;
    for (JumpChannel ch : {JumpChannel::a0, JumpChannel::a1, JumpChannel::b0,
                           JumpChannel::b1}) {
        for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const double t1 = frac * t;
            const SectorState direct =
                twinspin::trajectory_given_loss_time(par, ch, t, t1);
            const SectorState shortcut =
                twinspin::trajectory_via_phase_prefactor(par, ch, t, t1);
            ASSERT_EQ(direct.amplitudes.size(), shortcut.amplitudes.size());
            for (std::size_t i = 0; i < direct.amplitudes.size(); ++i) {
                EXPECT_NEAR(direct.amplitudes[i].real(), shortcut.amplitudes[i].real(),
                            1e-10);
                EXPECT_NEAR(direct.amplitudes[i].imag(), shortcut.amplitudes[i].imag(),
                            1e-10);
            }
        }
    }
}

TEST(SingleLossBlock, MatchesLindbladOneLossSectors) {
    const ModelParams par = make_params(3, 3, 1.0, 1.0, 0.05, 0.05);
    const double t = 1.0;
    const orc::FockBasis basis(3, 3);
    const orc::DenseState rho = orc::lindblad_evolve(
        par, orc::DenseState{orc::initial_density(basis), 0.0}, t, 0.05, 1e-12);

    const Eigen::MatrixXcd lost_a = orc::sector_block(basis, rho.rho, 2, 3);
    const Eigen::MatrixXcd lost_b = orc::sector_block(basis, rho.rho, 3, 2);

    const Eigen::MatrixXcd mine_a =
        twinspin::single_loss_block(par, JumpChannel::a0, t) +
        twinspin::single_loss_block(par, JumpChannel::a1, t);
    const Eigen::MatrixXcd mine_b =
        twinspin::single_loss_block(par, JumpChannel::b0, t) +
        twinspin::single_loss_block(par, JumpChannel::b1, t);

    EXPECT_LT((mine_a - lost_a).norm(), 1e-6);
    EXPECT_LT((mine_b - lost_b).norm(), 1e-6);
}

TEST(SingleLossBlock, WeakLossMassIsLinearInRate) {
    // To first order the one-loss mass through a0 is rate * N/2 * t.
    const double t = 0.7;
    const ModelParams weak = make_params(3, 2, 0.9, 0.5, 1e-6, 0.0);
    const double mass =
        twinspin::single_loss_block(weak, JumpChannel::a0, t).trace().real();
    EXPECT_NEAR(mass, 1e-6 * 1.5 * t, 0.01 * 1e-6 * 1.5 * t);

    const ModelParams twice = make_params(3, 2, 0.9, 0.5, 2e-6, 0.0);
    const double mass2 =
        twinspin::single_loss_block(twice, JumpChannel::a0, t).trace().real();
    EXPECT_NEAR(mass2 / mass, 2.0, 1e-3);
}

TEST(SingleLossBlock, InputValidation) {
    const ModelParams par = make_params(3, 3, 1.0, 1.0, 0.05, 0.05);
    EXPECT_THROW(twinspin::single_loss_block(par, JumpChannel::a0, -0.1),
                 std::domain_error);
    EXPECT_THROW(twinspin::single_loss_block(par, JumpChannel::a0, 1.0, 4),
                 std::domain_error);
    const ModelParams empty_b = make_params(3, 0, 1.0, 1.0, 0.05, 0.05);
    EXPECT_THROW(twinspin::single_loss_block(empty_b, JumpChannel::b0, 1.0),
                 std::domain_error);
    EXPECT_THROW(
        twinspin::apply_jump_operator(empty_b, twinspin::initial_sector_state(3, 0),
                                      JumpChannel::b1),
        std::domain_error);
}

TEST(Husimi, InitialStateIsASinglePeakAtZero) {
    const SectorState s = twinspin::initial_sector_state(6, 6);
    const HusimiGrid grid = twinspin::husimi_q(s, 32, 32);
    // phi = 0 sits at index 16.
    EXPECT_NEAR(grid.value(16, 16), 1.0, 1e-12);
    const std::vector<twinspin::GridPeak> peaks = twinspin::periodic_local_maxima(grid);
    ASSERT_EQ(peaks.size(), 1u);
    EXPECT_EQ(peaks[0].i, 16);
    EXPECT_EQ(peaks[0].j, 16);
    for (double v : grid.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-12);
    }
}

TEST(Husimi, LosslessCatStateHasFourEqualPeaks) {
    // With chi = 0 the cross coupling alone turns the +x product state into
    // an equal four-component superposition of phase states at
    // chi_ab t = pi, with a relative minus sign on the (pi, pi) component.
    const ModelParams par = make_params(10, 10, 0.0, 1.0, 0.0, 0.0);
    const SectorState evolved = twinspin::no_jump_evolve(
        par, twinspin::initial_sector_state(10, 10), twinspin::kPi);

    SectorState cat = twinspin::phase_product_state(10, 10, 0.0, 0.0);
    const SectorState c0p = twinspin::phase_product_state(10, 10, 0.0, twinspin::kPi);
    const SectorState cp0 = twinspin::phase_product_state(10, 10, twinspin::kPi, 0.0);
    const SectorState cpp =
        twinspin::phase_product_state(10, 10, twinspin::kPi, twinspin::kPi);
    for (std::size_t i = 0; i < cat.amplitudes.size(); ++i)
        cat.amplitudes[i] = 0.5 * (cat.amplitudes[i] + c0p.amplitudes[i] +
                                   cp0.amplitudes[i] - cpp.amplitudes[i]);

    const Complex overlap = twinspin::inner_product(cat, evolved);
    const double fidelity = std::norm(overlap) / (twinspin::norm_sq(cat) *
                                                  twinspin::norm_sq(evolved));
    EXPECT_GE(fidelity, 1.0 - 1e-10);

    const HusimiGrid grid = twinspin::husimi_q(evolved, 64, 64);
    const std::vector<twinspin::GridPeak> peaks = twinspin::periodic_local_maxima(grid);
    ASSERT_EQ(peaks.size(), 4u);
    // Peaks at phi in {0, pi} x {0, pi}: grid indices 32 and 0.
    for (const twinspin::GridPeak& peak : peaks) {
        EXPECT_TRUE(peak.i == 0 || peak.i == 32) << "i = " << peak.i;
        EXPECT_TRUE(peak.j == 0 || peak.j == 32) << "j = " << peak.j;
        EXPECT_NEAR(peak.value, peaks[0].value, 1e-9);
    }
}

TEST(Husimi, NormalizationConstantAcrossReachableStates) {
    // Every state reachable in this model keeps the binomial magnitude
    // profile (diagonal phases, uniform symmetric-loss decay, or a jump,
    // which maps binomial to binomial one sector down), and for that family
    // the grid integral of Q is a state-independent constant.
    const ModelParams lossless = make_params(5, 4, 0.7, 0.9, 0.0, 0.0);
    const ModelParams symmetric = make_params(5, 4, 0.7, 0.9, 0.04, 0.04);

    std::vector<SectorState> family;
    family.push_back(twinspin::initial_sector_state(5, 4));
    family.push_back(twinspin::no_jump_evolve(
        lossless, twinspin::initial_sector_state(5, 4), 0.37));
    family.push_back(twinspin::normalized_copy(twinspin::no_jump_evolve(
        symmetric, twinspin::initial_sector_state(5, 4), 0.8)));
    family.push_back(twinspin::phase_product_state(5, 4, 1.1, -2.3));

    const double reference = grid_integral(twinspin::husimi_q(family[0], 256, 256));
    for (std::size_t i = 1; i < family.size(); ++i) {
        const double integral = grid_integral(twinspin::husimi_q(family[i], 256, 256));
        EXPECT_NEAR(integral, reference, 0.005 * reference) << "state " << i;
    }

    // One loss keeps the family property in the smaller sector: same
    // constant evaluated for (4, 4).
    const SectorState branch = twinspin::normalized_copy(
        twinspin::trajectory_given_loss_time(symmetric, JumpChannel::a0, 0.9, 0.4));
    const SectorState smaller = twinspin::initial_sector_state(4, 4);
    EXPECT_NEAR(grid_integral(twinspin::husimi_q(branch, 256, 256)),
                grid_integral(twinspin::husimi_q(smaller, 256, 256)),
                0.005 * grid_integral(twinspin::husimi_q(smaller, 256, 256)));
}

TEST(Husimi, OneLossBlockIsSmearedRelativeToCat) {
    // A single loss at an unknown time smears the four cat peaks: the
    // normalized one-loss block has a strictly lower Husimi maximum and a
    // broader half-maximum footprint than the lossless cat state.
    const ModelParams par = make_params(10, 10, 1.0, 1.0, 0.01, 0.01);
    const double t = twinspin::kPi;

    const ModelParams lossless = make_params(10, 10, 1.0, 1.0, 0.0, 0.0);
    const SectorState cat = twinspin::no_jump_evolve(
        lossless, twinspin::initial_sector_state(10, 10), t);
    const HusimiGrid cat_grid = twinspin::husimi_q(cat, 64, 64);

    Eigen::MatrixXcd block = twinspin::single_loss_block(par, JumpChannel::a0, t);
    block /= block.trace().real();
    const HusimiGrid lossy_grid = twinspin::husimi_q(block, 9, 10, 64, 64);

    const double cat_max = grid_max(cat_grid);
    const double lossy_max = grid_max(lossy_grid);
    EXPECT_LT(lossy_max, 0.8 * cat_max);

    const auto half_max_cells = [](const HusimiGrid& grid, double peak) {
        int count = 0;
        for (double v : grid.values)
            if (v > 0.5 * peak) ++count;
        return count;
    };
    EXPECT_GT(half_max_cells(lossy_grid, lossy_max),
              half_max_cells(cat_grid, cat_max));
}

TEST(Husimi, InputValidation) {
    const SectorState s = twinspin::initial_sector_state(3, 3);
    EXPECT_THROW(twinspin::husimi_q(s, 8, 32), std::domain_error);
    EXPECT_THROW(twinspin::husimi_q(s, 32, 8), std::domain_error);
    const Eigen::MatrixXcd wrong = Eigen::MatrixXcd::Zero(5, 5);
    EXPECT_THROW(twinspin::husimi_q(wrong, 3, 3, 32, 32), std::invalid_argument);
    SectorState dead;
    dead.n_a = 1;
    dead.n_b = 0;
    dead.amplitudes.assign(2, Complex{0.0, 0.0});
    EXPECT_THROW(twinspin::husimi_q(dead, 32, 32), std::domain_error);
}

TEST(MonteCarlo, SingleAtomWaitingTimeIsExponential) {
    // One atom in (|0>+|1>)/sqrt(2) with equal rates: the loss probability
    // by time t is 1 - e^{-gamma t}.
    const double gamma = 0.8, t = 1.3;
    const ModelParams par = make_params(1, 0, 0.5, 0.0, gamma, gamma);
    const long long n = 20000;
    long long lost = 0;
    for (long long i = 0; i < n; ++i) {
        std::mt19937_64 rng(
            twinspin::per_trajectory_seed(77, static_cast<std::uint64_t>(i)));
        const TrajectoryResult run = twinspin::run_trajectory(par, t, rng);
        for (const twinspin::JumpRecord& jump : run.jumps) {
            EXPECT_GE(jump.t_jump, 0.0);
            EXPECT_LE(jump.t_jump, t);
        }
        if (!run.jumps.empty()) {
            ++lost;
            EXPECT_EQ(run.jumps.size(), 1u);
            EXPECT_EQ(run.state.n_a, 0);
        }
    }
    const double expect_p = 1.0 - std::exp(-gamma * t);
    const double got_p = static_cast<double>(lost) / n;
    const double se = std::sqrt(expect_p * (1.0 - expect_p) / n);
    EXPECT_NEAR(got_p, expect_p, 3.0 * se);
}

TEST(MonteCarlo, MomentsMatchClosedFormsWithinErrorBars) {
    const ModelParams par = make_params(6, 6, 1.0, 1.0, 0.01, 0.01);
    const double t = 0.9;
    const McEstimators est = twinspin::mc_evolve(par, t, 10000, 20240815);
    const CorrelatorSet exact = twinspin::correlator_set(par, t);

    const auto check = [](const char* name, const twinspin::McMoment& got,
                          double want, double n_sigma) {
        EXPECT_GT(got.std_error, 0.0) << name;
        EXPECT_NEAR(got.mean, want, n_sigma * got.std_error + 1e-12) << name;
    };
    // Headline trio at three standard errors.
    check("sx_a", est.sx_a, exact.sx_a, 3.0);
    check("sy2_a", est.sy2_a, exact.sy2_a, 3.0);
    check("sysy_ab", est.sysy_ab, exact.sysy_ab, 3.0);
    // Sanity envelope for the remaining moments.
    check("sy_a", est.sy_a, exact.sy_a, 5.0);
    check("sz_a", est.sz_a, exact.sz_a, 5.0);
    check("sx2_a", est.sx2_a, exact.sx2_a, 5.0);
    check("sz2_a", est.sz2_a, exact.sz2_a, 5.0);
    check("anti_yz_a", est.anti_yz_a, exact.anti_yz_a, 5.0);
    check("anti_xy_a", est.anti_xy_a, exact.anti_xy_a, 5.0);
    check("sx_b", est.sx_b, exact.sx_b, 5.0);
    check("sy2_b", est.sy2_b, exact.sy2_b, 5.0);
    check("sysz_ab", est.sysz_ab, exact.sysz_ab, 5.0);
    check("szsy_ab", est.szsy_ab, exact.szsy_ab, 5.0);
    check("szsz_ab", est.szsz_ab, exact.szsz_ab, 5.0);
    check("sxsx_ab", est.sxsx_ab, exact.sxsx_ab, 5.0);
    check("sxsy_ab", est.sxsy_ab, exact.sxsy_ab, 5.0);
    check("sysx_ab", est.sysx_ab, exact.sysx_ab, 5.0);
    // Mean surviving particle number has no per-trajectory spread in the
    // moments themselves but fluctuates over jump counts.
    EXPECT_NEAR(est.n_of_t.mean, exact.n_of_t, 5.0 * est.n_of_t.std_error + 1e-12);
}

TEST(MonteCarlo, FixedSeedIsBitIdenticalAcrossRerunsAndThreadCounts) {
    const ModelParams par = make_params(4, 4, 0.9, 0.7, 0.05, 0.02);
    const McEstimators a = twinspin::mc_evolve(par, 0.8, 600, 99, 1);
    const McEstimators b = twinspin::mc_evolve(par, 0.8, 600, 99, 1);
    const McEstimators c = twinspin::mc_evolve(par, 0.8, 600, 99, 3);
    const auto fields = twinspin::detail::mc_field_table();
    for (const auto& field : fields) {
        EXPECT_EQ((a.*field).mean, (b.*field).mean);
        EXPECT_EQ((a.*field).std_error, (b.*field).std_error);
        EXPECT_EQ((a.*field).mean, (c.*field).mean);
        EXPECT_EQ((a.*field).std_error, (c.*field).std_error);
    }
}

TEST(MonteCarlo, OneLossProbabilityMatchesSectorTraces) {
    const ModelParams par = make_params(3, 3, 1.0, 0.6, 0.05, 0.02);
    const double t = 0.8;
    const orc::FockBasis basis(3, 3);
    const orc::DenseState rho = orc::lindblad_evolve(
        par, orc::DenseState{orc::initial_density(basis), 0.0}, t, 0.05, 1e-12);
    const double want =
        orc::sector_block(basis, rho.rho, 2, 3).trace().real() +
        orc::sector_block(basis, rho.rho, 3, 2).trace().real();

    const McEstimators est = twinspin::mc_evolve(par, t, 8000, 4242);
    EXPECT_NEAR(est.prob_one_loss.mean, want, 3.0 * est.prob_one_loss.std_error);
}

TEST(MonteCarlo, ProjectorAverageReconstructsLindbladSectors) {
    // Averaging normalized trajectory projectors reproduces the density
    // matrix sector by sector within Monte-Carlo error bars.
    const ModelParams par = make_params(3, 3, 1.0, 0.6, 0.05, 0.02);
    const double t = 0.8;
    const long long n = 4000;

    struct Accumulator {
        Eigen::MatrixXcd sum;
        Eigen::MatrixXd sum_sq_re, sum_sq_im;
        explicit Accumulator(int dim)
            : sum(Eigen::MatrixXcd::Zero(dim, dim)),
              sum_sq_re(Eigen::MatrixXd::Zero(dim, dim)),
              sum_sq_im(Eigen::MatrixXd::Zero(dim, dim)) {}
    };
    Accumulator top(16), lost_a(12), lost_b(12);

    for (long long i = 0; i < n; ++i) {
        std::mt19937_64 rng(
            twinspin::per_trajectory_seed(1717, static_cast<std::uint64_t>(i)));
        const TrajectoryResult run = twinspin::run_trajectory(par, t, rng);
        const SectorState psi = twinspin::normalized_copy(run.state);
        Accumulator* acc = nullptr;
        if (psi.n_a == 3 && psi.n_b == 3) acc = &top;
        if (psi.n_a == 2 && psi.n_b == 3) acc = &lost_a;
        if (psi.n_a == 3 && psi.n_b == 2) acc = &lost_b;
        if (acc == nullptr) continue;  // two or more losses: not compared here
        const int dim = psi.dim();
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < dim; ++c) {
                const Complex v =
                    psi.amplitudes[static_cast<std::size_t>(r)] *
                    std::conj(psi.amplitudes[static_cast<std::size_t>(c)]);
                acc->sum(r, c) += v;
                acc->sum_sq_re(r, c) += v.real() * v.real();
                acc->sum_sq_im(r, c) += v.imag() * v.imag();
            }
        }
    }

    const orc::FockBasis basis(3, 3);
    const orc::DenseState rho = orc::lindblad_evolve(
        par, orc::DenseState{orc::initial_density(basis), 0.0}, t, 0.05, 1e-12);
    const struct {
        Accumulator* acc;
        int sector_a, sector_b;
    } cases[] = {{&top, 3, 3}, {&lost_a, 2, 3}, {&lost_b, 3, 2}};

    for (const auto& item : cases) {
        const Eigen::MatrixXcd want =
            orc::sector_block(basis, rho.rho, item.sector_a, item.sector_b);
        const Eigen::MatrixXcd mean = item.acc->sum / static_cast<double>(n);
        for (int r = 0; r < mean.rows(); ++r) {
            for (int c = 0; c < mean.cols(); ++c) {
                const auto se = [&](const Eigen::MatrixXd& sq, double m) {
                    const double var =
                        std::max(0.0, sq(r, c) / n - m * m) / (n - 1.0);
                    return std::sqrt(var);
                };
                const double se_re = se(item.acc->sum_sq_re, mean(r, c).real());
                const double se_im = se(item.acc->sum_sq_im, mean(r, c).imag());
                EXPECT_NEAR(mean(r, c).real(), want(r, c).real(),
                            3.0 * se_re + 2e-3);
                EXPECT_NEAR(mean(r, c).imag(), want(r, c).imag(),
                            3.0 * se_im + 2e-3);
            }
        }
    }
}

TEST(MonteCarlo, FullDepletionTerminatesCleanly) {
    // Strong losses drain a small system completely; trajectories must end
    // in the vacuum with all moments zero and every jump inside the window.
    const ModelParams par = make_params(1, 1, 0.5, 0.3, 50.0, 50.0);
    const double t = 2.0;
    for (std::uint64_t i = 0; i < 50; ++i) {
        std::mt19937_64 rng(twinspin::per_trajectory_seed(5, i));
        const TrajectoryResult run = twinspin::run_trajectory(par, t, rng);
        EXPECT_EQ(run.state.n_a, 0);
        EXPECT_EQ(run.state.n_b, 0);
        EXPECT_EQ(run.jumps.size(), 2u);
        EXPECT_LE(run.jumps[0].t_jump, run.jumps[1].t_jump);
        const std::array<double, twinspin::kTrajectoryMomentCount> m =
            twinspin::sector_moments(run.state);
        for (int f = 0; f < twinspin::kTrajectoryMomentCount; ++f) {
            if (f == 3 || f == 12) continue;  // particle numbers, exactly zero too
            EXPECT_EQ(m[static_cast<std::size_t>(f)], 0.0);
        }
        EXPECT_EQ(m[3], 0.0);
        EXPECT_EQ(m[12], 0.0);
    }
    const McEstimators est = twinspin::mc_evolve(par, t, 200, 5);
    EXPECT_NEAR(est.n_of_t.mean, 0.0, 1e-12);
}

TEST(MonteCarlo, InputValidation) {
    const ModelParams par = make_params(2, 2, 1.0, 0.5, 0.1, 0.1);
    EXPECT_THROW(twinspin::mc_evolve(par, -1.0, 10, 1), std::domain_error);
    EXPECT_THROW(twinspin::mc_evolve(par, 1.0, 0, 1), std::domain_error);
    std::mt19937_64 rng(1);
    EXPECT_THROW(twinspin::run_trajectory(par, -0.5, rng), std::domain_error);
    EXPECT_THROW(
        twinspin::trajectory_given_loss_time(par, JumpChannel::a0, 1.0, 1.5),
        std::domain_error);
    EXPECT_THROW(
        twinspin::trajectory_via_phase_prefactor(par, JumpChannel::a0, 1.0, -0.1),
        std::domain_error);
}

}  // namespace
