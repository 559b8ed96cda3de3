#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "ctbcd/estimator.hpp"

using namespace ctbcd;

namespace {

Eigen::VectorXd white_noise(std::mt19937_64& rng, int N) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd u(N);
    for (int k = 0; k < N; ++k) u(k) = g(rng);
    return u;
}

ParameterVector pv(std::initializer_list<double> values, ModelStructure s) {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) theta(i++) = v;
    return ParameterVector{theta, s};
}

const TransferFunction g1_true{Polynomial::constant(2.0), Polynomial{1.0, 0.25, 0.25}};
const TransferFunction g2_true{Polynomial::constant(1.0), Polynomial{1.0, 0.01, 0.025}};
const TransferFunction g1_bar_a{Polynomial::constant(2.2), Polynomial{1.0, 0.2, 0.2}};

}  // namespace

TEST_CASE("truth is a fixed point of both inner steps on clean data") {
    std::mt19937_64 rng(101u);
    const double h = 0.02;
    Eigen::VectorXd u = white_noise(rng, 3000);
    Eigen::VectorXd y = filter_signal(g1_true, u, h);
    ParameterVector star = g1_true.parameters();
    EstimatorConfig config;

    RegressionBundle bundle = build_bundle(star, y, u, h);
    CHECK((gn_step(star, bundle, config).theta - star.theta).norm() < 1e-9);
    CHECK((srivc_step(star, bundle, config).theta - star.theta).norm() < 1e-9);

    for (InnerMethod method : {InnerMethod::GaussNewton, InnerMethod::Srivc}) {
        config.inner_method = method;
        InnerResult res = inner_solve(star, y, u, h, Intersample::Zoh, config);
        CHECK(res.converged);
        CHECK(res.iterations <= 2);
        CHECK(res.stationarity_norm < 1e-10);
        CHECK((res.theta.theta - star.theta).norm() < 1e-8);
    }
}

TEST_CASE("gauss-newton and the instrumental-variable step share fixed points") {
    std::mt19937_64 rng(102u);
    const double h = 0.02;
    for (int trial = 0; trial < 3; ++trial) {
        Eigen::VectorXd u = white_noise(rng, 4000);
        DataRecord rec = simulate_outputs({g1_true}, {u}, h, NoiseSpec{0.1, 1000u + trial});
        ParameterVector init = pv({0.2, 0.2, 2.2}, ModelStructure{2, 0});

        EstimatorConfig config;
        config.inner_rel_tol = 1e-13;
        config.inner_max_iters = 300;
        config.inner_method = InnerMethod::GaussNewton;
        InnerResult gn = inner_solve(init, rec.output, u, h, Intersample::Zoh, config);
        config.inner_method = InnerMethod::Srivc;
        InnerResult iv = inner_solve(init, rec.output, u, h, Intersample::Zoh, config);

        CAPTURE(trial);
        CHECK(gn.converged);
        CHECK(iv.converged);
        CHECK((gn.theta.theta - iv.theta.theta).norm() < 1e-6);
        CHECK(gn.stationarity_norm < 1e-6);
        CHECK(iv.stationarity_norm < 1e-6);
        // both ended away from the start and near the truth
        CHECK((gn.theta.theta - g1_true.parameters().theta).norm() < 0.2);
    }
}

TEST_CASE("inner solve respects caps and flags without throwing") {
    std::mt19937_64 rng(103u);
    const double h = 0.02;
    Eigen::VectorXd u = white_noise(rng, 2000);
    DataRecord rec = simulate_outputs({g1_true}, {u}, h, NoiseSpec{0.25, 5u});
    ParameterVector init = pv({0.2, 0.2, 2.2}, ModelStructure{2, 0});
    EstimatorConfig config;
    config.inner_max_iters = 1;
    config.inner_rel_tol = 1e-15;
    InnerResult res = inner_solve(init, rec.output, u, h, Intersample::Zoh, config);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 1);

    // zero tolerance runs the whole schedule
    config.inner_max_iters = 7;
    config.inner_rel_tol = 0.0;
    InnerResult fixed = inner_solve(init, rec.output, u, h, Intersample::Zoh, config);
    CHECK(fixed.iterations == 7);
    CHECK(fixed.converged);
}

TEST_CASE("unexcited data raises a singularity error") {
    const double h = 0.02;
    Eigen::VectorXd u = Eigen::VectorXd::Ones(3000);
    ParameterVector init = pv({1.0, 1.0, 0.5}, ModelStructure{1, 1});
    Eigen::VectorXd y = filter_signal(init.to_transfer_function(), u, h);
    EstimatorConfig config;
    // skip the start-up transient: it is the only part of a constant input
    // that excites the derivative directions at all
    config.warmup_skip = 1500;
    CHECK_THROWS_AS(inner_solve(init, y, u, h, Intersample::Zoh, config), SingularityError);
}

TEST_CASE("root reflection restores stability with unit constant coefficient") {
    Polynomial unstable{1.0, -1.2, 0.4};  // roots 1.5 +/- i 0.5
    Polynomial fixed = reflect_unstable_roots(unstable);
    CHECK(is_stable(fixed));
    CHECK(fixed.coeff(0) == doctest::Approx(1.0));
    auto roots = fixed.roots();
    for (const auto& r : roots) {
        CHECK(r.real() == doctest::Approx(-1.5).epsilon(1e-9));
        CHECK(std::abs(r.imag()) == doctest::Approx(0.5).epsilon(1e-9));
    }
    Polynomial stable{1.0, 0.25, 0.25};
    CHECK(reflect_unstable_roots(stable) == stable);

    // reject policy surfaces the instability instead
    std::mt19937_64 rng(104u);
    Eigen::VectorXd u = white_noise(rng, 500);
    ParameterVector bad = pv({-1.2, 0.4, 1.0}, ModelStructure{2, 0});
    EstimatorConfig config;
    config.stability_policy = StabilityPolicy::Reject;
    CHECK_THROWS_AS(inner_solve(bad, u, u, 0.02, Intersample::Zoh, config), InstabilityError);
    // reflect policy repairs the start and proceeds
    config.stability_policy = StabilityPolicy::Reflect;
    Eigen::VectorXd y = filter_signal(g1_true, u, 0.02);
    InnerResult res = inner_solve(bad, y, u, 0.02, Intersample::Zoh, config);
    CHECK(res.events.size() >= 1);
    CHECK(is_stable(res.theta.denominator()));
}

TEST_CASE("block coordinate descent recovers the truth on clean two-channel data") {
    std::mt19937_64 rng(105u);
    const double h = 0.02;
    const int N = 4000;
    std::vector<Eigen::VectorXd> inputs{white_noise(rng, N), white_noise(rng, N)};
    DataRecord rec = simulate_outputs({g1_true, g2_true}, inputs, h, NoiseSpec{0.0, 0u});

    ModelSetup setup{ModelKind::Miso, {ModelStructure{2, 0}, ModelStructure{2, 0}}};
    std::vector<ParameterVector> init{g1_bar_a.parameters(),
                                      pv({0.013, 0.03, 1.4}, ModelStructure{2, 0})};
    EstimatorConfig config;
    config.inner_rel_tol = 1e-12;
    config.inner_max_iters = 200;
    EstimationReport report = bcd_identify(rec, setup, init, config);

    CHECK(report.converged);
    CHECK(report.cost_trajectory.back() < 1e-12);
    CHECK((report.final_beta()[0].theta - g1_true.parameters().theta).norm() < 1e-6);
    CHECK((report.final_beta()[1].theta - g2_true.parameters().theta).norm() < 1e-6);
    for (double v : report.stationarity_norms.back()) CHECK(v < 1e-6);

    // trajectory bookkeeping: entry zero is the initial guess
    CHECK((report.beta_trajectory.front()[0].theta - init[0].theta).norm() == 0.0);
    CHECK(report.cost_trajectory.size() == report.beta_trajectory.size());

    std::vector<double> norms = stationarity_check(report.final_beta(), rec, setup, config);
    REQUIRE(norms.size() == 2);
    for (double v : norms) CHECK(v < 1e-6);
    // a perturbed point is measurably less stationary
    std::vector<ParameterVector> off = report.final_beta();
    off[1].theta(2) *= 1.05;
    std::vector<double> worse = stationarity_check(off, rec, setup, config);
    CHECK(worse[1] > 10.0 * norms[1]);
}

TEST_CASE("descent safeguard keeps the cost trajectory non-increasing") {
    std::mt19937_64 rng(106u);
    const double h = 0.02;
    const int N = 3000;
    std::vector<Eigen::VectorXd> inputs{white_noise(rng, N), white_noise(rng, N)};
    DataRecord rec = simulate_outputs({g1_true, g2_true}, inputs, h, NoiseSpec{0.25, 31u});
    ModelSetup setup{ModelKind::Miso, {ModelStructure{2, 0}, ModelStructure{2, 0}}};
    std::vector<ParameterVector> init{pv({0.1, 0.27, 1.7}, ModelStructure{2, 0}),
                                      pv({0.02, 0.04, 0.6}, ModelStructure{2, 0})};
    EstimatorConfig config;
    config.inner_max_iters = 10;
    config.inner_rel_tol = 0.0;  // fixed schedule stresses the safeguard
    config.outer_max_iters = 8;
    EstimationReport report = bcd_identify(rec, setup, init, config);
    for (std::size_t k = 1; k < report.cost_trajectory.size(); ++k)
        CHECK(report.cost_trajectory[k] <= report.cost_trajectory[k - 1] * (1.0 + 1e-12));
}

TEST_CASE("single submodel descent equals the plain inner solver") {
    std::mt19937_64 rng(107u);
    const double h = 0.02;
    Eigen::VectorXd u = white_noise(rng, 2500);
    DataRecord rec = simulate_outputs({g1_true}, {u}, h, NoiseSpec{0.25, 77u});
    ModelSetup setup{ModelKind::Miso, {ModelStructure{2, 0}}};
    ParameterVector init = g1_bar_a.parameters();
    EstimatorConfig config;
    config.inner_rel_tol = 1e-12;
    config.inner_max_iters = 200;

    EstimationReport report = bcd_identify(rec, setup, {init}, config);
    InnerResult direct = inner_solve(init, rec.output, u, h, rec.intersample, config);
    CHECK((report.final_beta()[0].theta - direct.theta.theta).norm() < 1e-9);
}

TEST_CASE("sinusoidal excitation: rank-deficient joint matrix, settled second submodel") {
    const double h = 0.02;
    const int N = 9000;
    const double omega = 1.3;
    Eigen::VectorXd u(N);
    for (int k = 0; k < N; ++k) u(k) = std::sin(omega * k * h);

    TransferFunction s1 = TransferFunction::unchecked(Polynomial::constant(2.0), Polynomial{1.0, 1.0});
    TransferFunction s2 =
        TransferFunction::unchecked(Polynomial::constant(1.0), Polynomial{1.0, 0.5});
    DataRecord rec = simulate_outputs({s1, s2}, {u, u}, h, NoiseSpec{0.0, 0u});
    rec.inputs = {u};  // one shared channel
    ModelSetup setup{ModelKind::AdditiveSiso, {ModelStructure{1, 0}, ModelStructure{1, 0}}};

    // the joint excitation matrix collapses even at the true denominators
    PhiDiagnostics diag = phi_matrix(rec, setup, {Polynomial{1.0, 1.0}, Polynomial{1.0, 0.5}},
                                     {Polynomial{1.0, 1.0}, Polynomial{1.0, 0.5}}, 2500);
    REQUIRE(diag.singular_values.size() == 4);
    CHECK(diag.singular_values(3) < 1e-6 * diag.singular_values(0));

    // yet coordinate descent settles: the second submodel stops moving after
    // its first refit even though the joint problem is unidentifiable
    std::vector<ParameterVector> init{pv({0.8, 1.5}, ModelStructure{1, 0}),
                                      pv({0.4, 0.7}, ModelStructure{1, 0})};
    EstimatorConfig config;
    config.inner_rel_tol = 1e-12;
    config.inner_max_iters = 200;
    config.warmup_skip = 2500;
    EstimationReport report = bcd_identify(rec, setup, init, config);
    const auto& traj = report.beta_trajectory;
    REQUIRE(traj.size() >= 3);
    const std::size_t a = std::min<std::size_t>(2, traj.size() - 2);
    CHECK((traj[a + 1][1].theta - traj[a][1].theta).norm() < 1e-6);
    // and the converged model is not the truth: the data cannot distinguish them
    CHECK(report.cost_trajectory.back() < 1e-10);
}

TEST_CASE("joint excitation matrix is healthy for white-noise inputs") {
    std::mt19937_64 rng(108u);
    const double h = 0.02;
    const int N = 8000;
    std::vector<Eigen::VectorXd> inputs{white_noise(rng, N), white_noise(rng, N)};
    DataRecord rec = simulate_outputs({g1_true, g2_true}, inputs, h, NoiseSpec{0.0, 0u});
    ModelSetup setup{ModelKind::Miso, {ModelStructure{2, 0}, ModelStructure{2, 0}}};
    PhiDiagnostics diag =
        phi_matrix(rec, setup, {Polynomial{1.0, 0.2, 0.2}, Polynomial{1.0, 0.013, 0.03}},
                   {Polynomial{1.0, 0.25, 0.25}, Polynomial{1.0, 0.01, 0.025}}, 2500);
    CHECK(diag.rank == 6);
    CHECK(diag.condition < 1e9);
    CHECK(std::isfinite(diag.condition));
}

TEST_CASE("persistence-of-excitation rank test") {
    std::mt19937_64 rng(109u);
    Eigen::VectorXd noise = white_noise(rng, 20000);
    ExcitationDiagnostics white = excitation_order_check(noise, 8);
    CHECK(white.sufficient);
    CHECK(white.estimated_rank == 8);

    // sample the sinusoids with omega*h of order one; at heavy oversampling the
    // adjacent-lag covariances coincide and no finite tolerance can see the
    // second direction of a single tone
    Eigen::VectorXd sine(20000);
    for (int k = 0; k < 20000; ++k) sine(k) = std::sin(1.3 * k);
    ExcitationDiagnostics single = excitation_order_check(sine, 4);
    CHECK_FALSE(single.sufficient);
    CHECK(single.estimated_rank == 2);  // one sinusoid excites exactly two directions

    Eigen::VectorXd three(20000);
    for (int k = 0; k < 20000; ++k) {
        const double t = static_cast<double>(k);
        three(k) = std::sin(0.7 * t) + std::sin(2.9 * t + 0.4) + std::sin(1.9 * t + 1.1);
    }
    ExcitationDiagnostics triple = excitation_order_check(three, 6);
    CHECK(triple.sufficient);
    CHECK(triple.estimated_rank == 6);
    CHECK_FALSE(excitation_order_check(three, 8).sufficient);

    CHECK_THROWS_AS(excitation_order_check(noise, 0), ValidationError);
}

TEST_CASE("least-squares warm start lands near the truth on clean data") {
    std::mt19937_64 rng(110u);
    const double h = 0.02;
    Eigen::VectorXd u = white_noise(rng, 6000);
    Eigen::VectorXd y = filter_signal(g1_true, u, h);
    ParameterVector init = svf_initialize(y, u, h, ModelStructure{2, 0}, 1.0 / (10.0 * h));
    CHECK((init.theta - g1_true.parameters().theta).norm() < 0.2);

    EstimatorConfig config;
    config.inner_rel_tol = 1e-12;
    config.inner_max_iters = 200;
    InnerResult refined = inner_solve(init, y, u, h, Intersample::Zoh, config);
    CHECK((refined.theta.theta - g1_true.parameters().theta).norm() < 1e-7);
}

TEST_CASE("setup and config validation") {
    ModelSetup miso{ModelKind::Miso, {ModelStructure{2, 0}, ModelStructure{2, 0}}};
    CHECK_THROWS_AS(miso.validate(1), ValidationError);
    miso.validate(2);

    ModelSetup additive{ModelKind::AdditiveSiso, {ModelStructure{1, 1}, ModelStructure{2, 2}}};
    CHECK_THROWS_AS(additive.validate(1), ValidationError);  // two biproper submodels
    additive.structures[1] = ModelStructure{2, 1};
    additive.validate(1);
    CHECK_THROWS_AS(additive.validate(2), ValidationError);

    EstimatorConfig config;
    config.outer_rel_tol = 0.0;
    CHECK_THROWS_AS(config.validate(), ValidationError);
    config = EstimatorConfig{};
    config.condition_limit = 0.5;
    CHECK_THROWS_AS(config.validate(), ValidationError);
}
