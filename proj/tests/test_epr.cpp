#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "twinspin/correlators.hpp"
#include "twinspin/epr.hpp"
#include "twinspin/model.hpp"
#include "twinspin/oracle.hpp"

namespace {

using twinspin::Complex;
using twinspin::EprResult;
using twinspin::GridSpec;
using twinspin::ModelParams;
using twinspin::QuadratureConvention;
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

TEST(EprValue, ExactlyOneAtTimeZero) {
    std::mt19937_64 rng(321);
    std::uniform_int_distribution<int> ndist(1, 400);
    std::uniform_real_distribution<double> cdist(0.0, 3.0);
    std::uniform_real_distribution<double> gdist(0.0, 0.4);
    std::uniform_real_distribution<double> ang(0.0, twinspin::kPi);
    for (int i = 0; i < 200; ++i) {
        const ModelParams par = make_params(ndist(rng), ndist(rng), cdist(rng),
                                            cdist(rng), gdist(rng), gdist(rng));
        const std::optional<double> at_origin = twinspin::epr_value(par, 0.0, 0.0, 0.0);
        ASSERT_TRUE(at_origin.has_value());
        EXPECT_EQ(*at_origin, 1.0);  // bit-exact at zero angles
        const std::optional<double> rotated =
            twinspin::epr_value(par, 0.0, ang(rng), ang(rng));
        ASSERT_TRUE(rotated.has_value());
        EXPECT_NEAR(*rotated, 1.0, 1e-12);
    }
}

TEST(EprValue, UndefinedWhenMeanSpinVanishes) {
    // With chi = 0 the a-coherence is (N/2) f_{0,1}(t)^M; at chi_ab t = pi the
    // lossless kernel cos(chi_ab t / 2) crosses zero, so the commutator
    // denominator collapses and E^2 is reported as undefined.
    const ModelParams par = make_params(4, 3, 0.0, 1.0, 0.0, 0.0);
    EXPECT_FALSE(twinspin::epr_value(par, twinspin::kPi, 0.3, 0.7).has_value());
    EXPECT_TRUE(twinspin::epr_value(par, 0.4, 0.3, 0.7).has_value());
    // The literal x-y convention divides by <S_z^a>^2 = 0 at t = 0.
    EXPECT_FALSE(
        twinspin::epr_value(par, 0.0, 0.0, 0.0, QuadratureConvention::xy).has_value());
}

TEST(EprValue, MatchesOperatorOracle) {
    const ModelParams par = make_params(4, 4, 1.0, 0.6, 0.07, 0.02);
    const orc::FockBasis basis(4, 4);
    const orc::SpinOperators ops = orc::spin_operators(basis);
    const std::vector<double> times = {0.3, 0.9};
    const std::vector<orc::DenseState> states = orc::lindblad_evolve_times(
        par, orc::DenseState{orc::initial_density(basis), 0.0}, times, 0.05, 1e-12);

    const auto expect_real = [&](const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& op) {
        return orc::expectation(rho, op).real();
    };
    for (std::size_t i = 0; i < times.size(); ++i) {
        const Eigen::MatrixXcd& rho = states[i].rho;
        for (const auto& [alpha, beta] : std::vector<std::pair<double, double>>{
                 {0.0, 0.0}, {0.4, 1.1}, {2.8, 0.7}}) {
            const double ca = std::cos(alpha), sa = std::sin(alpha);
            const double cb = std::cos(beta), sb = std::sin(beta);
            const Eigen::MatrixXcd xa = ca * ops.sy_a + sa * ops.sz_a;
            const Eigen::MatrixXcd pa = -sa * ops.sy_a + ca * ops.sz_a;
            const Eigen::MatrixXcd xb = cb * ops.sz_b + sb * ops.sy_b;
            const Eigen::MatrixXcd pb = -sb * ops.sz_b + cb * ops.sy_b;
            const auto var = [&](const Eigen::MatrixXcd& op) {
                const double m1 = expect_real(rho, op);
                return expect_real(rho, op * op) - m1 * m1;
            };
            const auto cov = [&](const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
                return expect_real(rho, a * b) - expect_real(rho, a) * expect_real(rho, b);
            };
            const double vinf_x = var(xa) - cov(xa, xb) * cov(xa, xb) / var(xb);
            const double vinf_p = var(pa) - cov(pa, pb) * cov(pa, pb) / var(pb);
            const double sx = expect_real(rho, ops.sx_a);
            const double want = 4.0 * vinf_x * vinf_p / (sx * sx);
            const std::optional<double> got =
                twinspin::epr_value(par, times[i], alpha, beta);
            ASSERT_TRUE(got.has_value());
            EXPECT_NEAR(*got, want, 1e-8)
                << "t=" << times[i] << " alpha=" << alpha << " beta=" << beta;
        }
    }
}

TEST(EprMinimize, FindsSteeringBelowShotNoise) {
    const ModelParams par = make_params(40, 40, 0.0, 1.0, 0.0, 0.0);
    const std::optional<EprResult> res =
        twinspin::epr_minimize(par, {1e-3, 1.0});
    ASSERT_TRUE(res.has_value());
    EXPECT_GT(res->e2, 0.0);
    EXPECT_LT(res->e2, 0.5);  // well below the shot-noise value 1
    EXPECT_GE(res->t_opt, 1e-3);
    EXPECT_LE(res->t_opt, 1.0);
    EXPECT_GE(res->alpha, 0.0);
    EXPECT_LT(res->alpha, twinspin::kPi);
    EXPECT_GE(res->beta, 0.0);
    EXPECT_LT(res->beta, twinspin::kPi);
    // The reported value reproduces a direct evaluation at the optimum.
    const std::optional<double> direct =
        twinspin::epr_value(par, res->t_opt, res->alpha, res->beta);
    ASSERT_TRUE(direct.has_value());
    EXPECT_NEAR(*direct, res->e2, 1e-12 * std::max(1.0, res->e2));
    // Inference coefficients are consistent with the rotated moments there.
    const twinspin::RotatedMoments m = twinspin::rotated_moments(
        twinspin::correlator_set(par, res->t_opt), res->alpha, res->beta);
    EXPECT_DOUBLE_EQ(res->r_a, m.cov_xx / m.var_x_b);
    EXPECT_DOUBLE_EQ(res->s_a, m.cov_pp / m.var_p_b);
    EXPECT_DOUBLE_EQ(res->q_a, m.mean_x_a - res->r_a * m.mean_x_b);
    EXPECT_DOUBLE_EQ(res->p_a, m.mean_p_a - res->s_a * m.mean_p_b);
}

TEST(EprMinimize, RefinementNotWorseThanFinerGrid) {
    const ModelParams par = make_params(12, 12, 0.0, 1.0, 0.02, 0.02);
    const std::pair<double, double> window{5e-3, 2.0};
    const std::optional<EprResult> res = twinspin::epr_minimize(par, window);
    ASSERT_TRUE(res.has_value());

    double fine_best = std::numeric_limits<double>::infinity();
    const int nt = 320, na = 80, nb = 80;
    for (int it = 0; it < nt; ++it) {
        const double t = window.first *
                         std::pow(window.second / window.first,
                                  static_cast<double>(it) / (nt - 1));
        const twinspin::CorrelatorSet set = twinspin::correlator_set(par, t);
        const double half_n = 0.5 * par.n_a;
        for (int ia = 0; ia < na; ++ia) {
            for (int ib = 0; ib < nb; ++ib) {
                const twinspin::RotatedMoments m = twinspin::rotated_moments(
                    set, twinspin::kPi * ia / na, twinspin::kPi * ib / nb);
                const double denom = m.commutator * m.commutator;
                if (denom < 1e-12 * half_n * half_n) continue;
                double vx = m.var_x_a;
                if (m.var_x_b > 0.0) vx -= m.cov_xx * m.cov_xx / m.var_x_b;
                double vp = m.var_p_a;
                if (m.var_p_b > 0.0) vp -= m.cov_pp * m.cov_pp / m.var_p_b;
                fine_best =
                    std::min(fine_best, 4.0 * std::max(vx, 0.0) * std::max(vp, 0.0) / denom);
            }
        }
    }
    EXPECT_LE(res->e2, fine_best + 1e-9);
}

TEST(EprMinimize, DeterministicReruns) {
    const ModelParams par = make_params(25, 18, 0.3, 0.9, 0.01, 0.03);
    const std::optional<EprResult> a = twinspin::epr_minimize(par, {1e-3, 3.0});
    const std::optional<EprResult> b = twinspin::epr_minimize(par, {1e-3, 3.0});
    ASSERT_TRUE(a.has_value());
    ASSERT_TRUE(b.has_value());
    EXPECT_EQ(a->e2, b->e2);
    EXPECT_EQ(a->alpha, b->alpha);
    EXPECT_EQ(a->beta, b->beta);
    EXPECT_EQ(a->t_opt, b->t_opt);
    EXPECT_EQ(a->q_a, b->q_a);
    EXPECT_EQ(a->r_a, b->r_a);
    EXPECT_EQ(a->p_a, b->p_a);
    EXPECT_EQ(a->s_a, b->s_a);
}

TEST(EprMinimize, FlatLandscapeTieBreaksToSmallestCoordinates) {
    // With no dynamics at all, E^2 = 1 up to rounding (cos^2 + sin^2 wrinkles
    // of a couple of ulp) at every (t, alpha, beta).  The scan keeps the
    // first grid point among ties, so the result must sit at the earliest
    // time and zero angles up to the polish's own tolerance.
    const ModelParams par = make_params(10, 10, 0.0, 0.0, 0.0, 0.0);
    const std::optional<EprResult> res = twinspin::epr_minimize(par, {0.01, 1.0});
    ASSERT_TRUE(res.has_value());
    EXPECT_NEAR(res->e2, 1.0, 1e-12);
    EXPECT_GE(res->t_opt, 0.01);
    EXPECT_LE(res->t_opt, 0.01 * 1.05);
    const double alpha_dist =
        std::min(res->alpha, twinspin::kPi - res->alpha);  // circular distance to 0
    const double beta_dist = std::min(res->beta, twinspin::kPi - res->beta);
    EXPECT_LT(alpha_dist, 0.05);
    EXPECT_LT(beta_dist, 0.05);
}

TEST(EprMinimize, InputValidation) {
    const ModelParams par = make_params(8, 8, 0.0, 1.0, 0.0, 0.0);
    EXPECT_THROW(twinspin::epr_minimize(par, {0.0, 1.0}), std::domain_error);
    EXPECT_THROW(twinspin::epr_minimize(par, {0.5, 0.5}), std::domain_error);
    EXPECT_THROW(twinspin::epr_minimize(par, {0.5, std::numeric_limits<double>::infinity()}),
                 std::domain_error);
    GridSpec thin;
    thin.n_alpha = 4;
    EXPECT_THROW(twinspin::epr_minimize(par, {0.01, 1.0}, thin), std::domain_error);
}

TEST(EprValue, LossesDegradeSteeringAtShortTimes) {
    // In the short-time squeezing regime, switching on symmetric losses can
    // only raise the steering product at fixed (t, alpha, beta).
    const double t = 0.03;
    std::optional<double> prev;
    for (const double g : {0.0, 0.2, 0.5, 1.0}) {
        const ModelParams par = make_params(100, 100, 0.0, 1.0, g, g);
        const std::optional<double> e2 = twinspin::epr_value(par, t, 0.0, 0.0);
        ASSERT_TRUE(e2.has_value());
        if (prev) EXPECT_GE(*e2, *prev - 1e-10) << "gamma=" << g;
        prev = e2;
    }
}

TEST(EprValue, DipDeepensAndShiftsEarlierWithSize) {
    // Fixed zero angles, symmetric losses equal to the cross coupling: the
    // best steering value over time improves and arrives earlier as the
    // ensembles grow, and removing the losses improves it further.
    const auto scan = [](const ModelParams& par) {
        double best = std::numeric_limits<double>::infinity();
        double t_best = 0.0;
        for (int i = 0; i < 400; ++i) {
            const double t = 1e-4 * std::pow(2.0 / 1e-4, i / 399.0);
            const std::optional<double> e2 = twinspin::epr_value(par, t, 0.0, 0.0);
            if (e2 && *e2 < best) {
                best = *e2;
                t_best = t;
            }
        }
        return std::pair<double, double>{best, t_best};
    };
    const auto [dip100, t100] = scan(make_params(100, 100, 0.0, 1.0, 1.0, 1.0));
    const auto [dip1000, t1000] = scan(make_params(1000, 1000, 0.0, 1.0, 1.0, 1.0));
    const auto [free1000, tfree] = scan(make_params(1000, 1000, 0.0, 1.0, 0.0, 0.0));
    EXPECT_LT(dip100, 1.0);
    EXPECT_LT(dip1000, dip100);
    EXPECT_LT(t1000, t100);
    EXPECT_LT(free1000, dip1000);
}

}  // namespace
