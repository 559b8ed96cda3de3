#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "ctbcd/ltisim.hpp"

using namespace ctbcd;
using cplx = std::complex<double>;

namespace {

// Fixed-step RK4 integration of the realization with the input held constant
// over each sampling interval; the independent reference for ZOH filtering.
Eigen::VectorXd rk4_zoh_reference(const StateSpace& ss, const Eigen::VectorXd& u, double h,
                                  int oversample) {
    const int N = static_cast<int>(u.size());
    Eigen::VectorXd y(N);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(ss.dim());
    const double dt = h / oversample;
    for (int k = 0; k < N; ++k) {
        y(k) = (ss.dim() > 0 ? (ss.C_vec * x).value() : 0.0) + ss.D * u(k);
        if (k + 1 == N) break;
        for (int s = 0; s < oversample; ++s) {
            auto f = [&](const Eigen::VectorXd& xs) -> Eigen::VectorXd {
                return ss.A_mat * xs + ss.B_vec * u(k);
            };
            Eigen::VectorXd k1 = f(x);
            Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
            Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
            Eigen::VectorXd k4 = f(x + dt * k3);
            x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    return y;
}

TransferFunction random_stable_tf(std::mt19937_64& rng, int n, int m) {
    std::uniform_real_distribution<double> re(-3.0, -0.3);
    std::uniform_real_distribution<double> im(0.3, 3.0);
    std::uniform_real_distribution<double> bc(-2.0, 2.0);
    std::bernoulli_distribution realroot(0.5);
    std::vector<cplx> roots;
    while (static_cast<int>(roots.size()) < n) {
        if (n - static_cast<int>(roots.size()) >= 2 && !realroot(rng)) {
            cplx r{re(rng), im(rng)};
            roots.push_back(r);
            roots.push_back(std::conj(r));
        } else {
            roots.emplace_back(re(rng), 0.0);
        }
    }
    Polynomial den = Polynomial::from_roots_constant_term(roots, 1.0);
    std::vector<double> num(m + 1);
    for (auto& c : num) c = bc(rng);
    if (std::abs(num.back()) < 0.2) num.back() += num.back() < 0 ? -0.5 : 0.5;
    return TransferFunction::unchecked(Polynomial{num}, den);
}

Eigen::VectorXd white_noise(std::mt19937_64& rng, int N) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd u(N);
    for (int k = 0; k < N; ++k) u(k) = g(rng);
    return u;
}

const TransferFunction g1_true{Polynomial::constant(2.0), Polynomial{1.0, 0.25, 0.25}};
const TransferFunction g2_true{Polynomial::constant(1.0), Polynomial{1.0, 0.01, 0.025}};
const TransferFunction g1_bar_a{Polynomial::constant(2.2), Polynomial{1.0, 0.2, 0.2}};
const TransferFunction g1_bar_b{Polynomial::constant(1.7), Polynomial{1.0, 0.27, 0.1}};

}  // namespace

TEST_CASE("controllable canonical realization reproduces the transfer function") {
    std::mt19937_64 rng(81u);
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<int> nd(1, 4);
        const int n = nd(rng);
        std::uniform_int_distribution<int> md(0, n);
        TransferFunction G = random_stable_tf(rng, n, md(rng));
        StateSpace ss = controllable_canonical(G);
        REQUIRE(ss.dim() == n);
        // C (sI - A)^balanced... compare frequency response at a few points
        for (double w : {0.1, 1.0, 5.0}) {
            const cplx s{0.0, w};
            Eigen::MatrixXcd M = s * Eigen::MatrixXcd::Identity(n, n) - ss.A_mat.cast<cplx>();
            const cplx from_ss =
                (ss.C_vec.cast<cplx>() * M.lu().solve(ss.B_vec.cast<cplx>())).value() + ss.D;
            CAPTURE(trial);
            CHECK(std::abs(from_ss - G(s)) < 1e-9 * (1.0 + std::abs(G(s))));
        }
    }
    // static gain has no state
    TransferFunction gain = TransferFunction::unchecked(Polynomial::constant(3.5),
                                                        Polynomial::constant(1.0));
    CHECK(controllable_canonical(gain).dim() == 0);
    CHECK(controllable_canonical(gain).D == 3.5);
}

TEST_CASE("zoh discretization on known cases") {
    // integrator: exp of a nilpotent block
    StateSpace integ;
    integ.A_mat = Eigen::MatrixXd::Zero(1, 1);
    integ.B_vec = Eigen::VectorXd::Ones(1);
    integ.C_vec = Eigen::RowVectorXd::Ones(1);
    integ.D = 0.0;
    StateSpace d = zoh_discretize(integ, 0.02);
    CHECK(d.A_mat(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(d.B_vec(0) == doctest::Approx(0.02).epsilon(1e-14));

    // second-order pair: discrete poles are the exponentials of the continuous ones
    StateSpace g1 = zoh_discretize(controllable_canonical(g1_true), 0.02);
    Eigen::VectorXcd ev = g1.A_mat.eigenvalues();
    const cplx expected = std::exp(0.02 * cplx(-0.5, std::sqrt(4.0 - 0.25)));
    const double err0 = std::abs(ev(0) - expected);
    const double err1 = std::abs(ev(1) - expected);
    CHECK(std::min(err0, err1) < 1e-12);
    CHECK(std::abs(ev(0) * ev(1) - std::norm(expected)) < 1e-12);

    // h -> 0 limit
    StateSpace tiny = zoh_discretize(controllable_canonical(g2_true), 1e-9);
    CHECK((tiny.A_mat - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-6);
    CHECK(tiny.B_vec.norm() < 1e-6);

    CHECK_THROWS_AS(zoh_discretize(integ, 0.0), ValidationError);
}

TEST_CASE("filter_signal matches oversampled integration on random stable systems") {
    std::mt19937_64 rng(82u);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> nd(1, 3);
        const int n = nd(rng);
        std::uniform_int_distribution<int> md(0, n);
        TransferFunction G = random_stable_tf(rng, n, md(rng));
        Eigen::VectorXd u = white_noise(rng, 200);
        Eigen::VectorXd fast = filter_signal(G, u, 0.05);
        Eigen::VectorXd slow = rk4_zoh_reference(controllable_canonical(G), u, 0.05, 100);
        const double scale = slow.cwiseAbs().maxCoeff();
        CAPTURE(trial);
        REQUIRE(scale > 0.0);
        CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-6 * scale);
    }
}

TEST_CASE("filter_signal knowns") {
    const double h = 0.02;
    const int N = 2500;
    Eigen::VectorXd step = Eigen::VectorXd::Ones(N);

    // unity filter passes through
    TransferFunction unity = TransferFunction::unchecked(Polynomial::constant(1.0),
                                                         Polynomial::constant(1.0));
    CHECK((filter_signal(unity, step, h) - step).norm() == 0.0);

    // underdamped step response in closed form: 0.25 p^2 + 0.25 p + 1 has
    // poles -0.5 +/- i sqrt(3.75)
    Eigen::VectorXd y = filter_signal(g1_true, step, h);
    const double sigma = 0.5, wd = std::sqrt(3.75);
    for (int k = 0; k < N; ++k) {
        const double t = k * h;
        const double expected =
            2.0 * (1.0 - std::exp(-sigma * t) * (std::cos(wd * t) + sigma / wd * std::sin(wd * t)));
        CHECK(y(k) == doctest::Approx(expected).epsilon(1e-9).scale(2.0));
    }
    CHECK(y(N - 1) == doctest::Approx(2.0).epsilon(1e-4));  // steady state

    // strictly proper filter of the zero signal is zero
    CHECK(filter_signal(g2_true, Eigen::VectorXd::Zero(50), h).norm() == 0.0);
}

TEST_CASE("filter_signal is linear") {
    std::mt19937_64 rng(83u);
    Eigen::VectorXd u1 = white_noise(rng, 300), u2 = white_noise(rng, 300);
    const double a = 1.7, b = -0.6;
    Eigen::VectorXd combined = filter_signal(g2_true, a * u1 + b * u2, 0.02);
    Eigen::VectorXd split = a * filter_signal(g2_true, u1, 0.02) + b * filter_signal(g2_true, u2, 0.02);
    CHECK((combined - split).cwiseAbs().maxCoeff() < 1e-12 * combined.cwiseAbs().maxCoeff());
}

TEST_CASE("triangle hold is exact for piecewise-linear inputs") {
    const double h = 0.05;
    const int N = 400;
    Eigen::VectorXd ramp(N);
    for (int k = 0; k < N; ++k) ramp(k) = k * h;
    TransferFunction lag = TransferFunction::unchecked(Polynomial::constant(1.0),
                                                       Polynomial{1.0, 1.0});
    // 1/(p+1) driven by u(t) = t gives y(t) = t - 1 + e^{-t}
    Eigen::VectorXd foh = filter_signal(lag, ramp, h, Intersample::Foh);
    double max_err_foh = 0.0;
    for (int k = 0; k < N; ++k) {
        const double t = k * h;
        max_err_foh = std::max(max_err_foh, std::abs(foh(k) - (t - 1.0 + std::exp(-t))));
    }
    CHECK(max_err_foh < 1e-12);
    // the staircase assumption is measurably wrong for the same data
    Eigen::VectorXd zoh = filter_signal(lag, ramp, h, Intersample::Zoh);
    double max_err_zoh = 0.0;
    for (int k = 0; k < N; ++k) {
        const double t = k * h;
        max_err_zoh = std::max(max_err_zoh, std::abs(zoh(k) - (t - 1.0 + std::exp(-t))));
    }
    CHECK(max_err_zoh > 1e-3);
}

TEST_CASE("derivative filter bank columns and polynomial identity") {
    const double h = 0.02;
    const int N = 600;
    Eigen::VectorXd step = Eigen::VectorXd::Ones(N);

    // first-order closed forms
    Eigen::MatrixXd bank = derivative_filter_bank(Polynomial{1.0, 1.0}, 1, step, h);
    REQUIRE(bank.cols() == 2);
    for (int k = 0; k < N; ++k) {
        const double t = k * h;
        CHECK(bank(k, 0) == doctest::Approx(1.0 - std::exp(-t)).epsilon(1e-10).scale(1.0));
        CHECK(bank(k, 1) == doctest::Approx(std::exp(-t)).epsilon(1e-10).scale(1.0));
    }

    // order 0 consistency with filter_signal
    std::mt19937_64 rng(84u);
    Eigen::VectorXd u = white_noise(rng, 500);
    Polynomial A2{1.0, 0.01, 0.025};
    Eigen::MatrixXd b2 = derivative_filter_bank(A2, 2, u, h);
    TransferFunction inv_a = TransferFunction::unchecked(Polynomial::constant(1.0), A2);
    CHECK((b2.col(0) - filter_signal(inv_a, u, h)).cwiseAbs().maxCoeff() < 1e-12);
    // each interior column equals the directly filtered derivative
    TransferFunction p_over_a = TransferFunction::unchecked(Polynomial{0.0, 1.0}, A2);
    CHECK((b2.col(1) - filter_signal(p_over_a, u, h)).cwiseAbs().maxCoeff() < 1e-10);

    // A-weighted column sum reproduces the input
    Eigen::VectorXd recombined = 1.0 * b2.col(0) + 0.01 * b2.col(1) + 0.025 * b2.col(2);
    CHECK((recombined - u).cwiseAbs().maxCoeff() < 1e-8);

    CHECK_THROWS_AS(derivative_filter_bank(Polynomial{1.0, 1.0}, 2, u, h), ValidationError);
}

TEST_CASE("simulated records sum channel responses plus seeded noise") {
    std::mt19937_64 rng(85u);
    const double h = 0.02;
    std::vector<Eigen::VectorXd> inputs{white_noise(rng, 1000), white_noise(rng, 1000)};
    std::vector<TransferFunction> truths{g1_true, g2_true};

    DataRecord clean = simulate_outputs(truths, inputs, h, NoiseSpec{0.0, 7u});
    Eigen::VectorXd direct =
        filter_signal(g1_true, inputs[0], h) + filter_signal(g2_true, inputs[1], h);
    CHECK((clean.output - direct).cwiseAbs().maxCoeff() < 1e-12);

    DataRecord noisy = simulate_outputs(truths, inputs, h, NoiseSpec{0.25, 7u});
    DataRecord noisy2 = simulate_outputs(truths, inputs, h, NoiseSpec{0.25, 7u});
    CHECK((noisy.output - noisy2.output).norm() == 0.0);  // same seed, same record
    Eigen::VectorXd v = noisy.output - clean.output;
    const double var = v.squaredNorm() / v.size();
    CHECK(var == doctest::Approx(0.25).epsilon(0.1));

    TransferFunction unstable = TransferFunction::unchecked(Polynomial::constant(1.0),
                                                            Polynomial{1.0, -1.0});
    CHECK_THROWS_AS(simulate_outputs({unstable}, {inputs[0]}, h, NoiseSpec{}), InstabilityError);
    CHECK_THROWS_AS(simulate_outputs(truths, {inputs[0]}, h, NoiseSpec{}), ValidationError);
}

TEST_CASE("h2 norm against closed forms and quadrature") {
    // 1/(p+a) has H2 norm 1/sqrt(2a)
    for (double a : {0.5, 1.0, 3.0}) {
        TransferFunction G = TransferFunction::unchecked(Polynomial::constant(1.0),
                                                         Polynomial{1.0, 1.0 / a});
        // den = (p/a + 1) => num/den = a/(p+a), so scale the expectation
        CHECK(h2_norm(G) == doctest::Approx(a / std::sqrt(2.0 * a)).epsilon(1e-10));
    }

    // numerical quadrature of |G(iw)|^2 over a dense log-linear grid
    auto quad = [](const TransferFunction& G) {
        double acc = 0.0;
        double prev_w = 0.0, prev_f = std::norm(G(cplx(0.0, 0.0)));
        for (int i = 1; i <= 400000; ++i) {
            const double w = 1e-3 * std::pow(1e8 / 1e-3, i / 400000.0);
            const double f = std::norm(G(cplx(0.0, w)));
            acc += 0.5 * (f + prev_f) * (w - prev_w);
            prev_w = w;
            prev_f = f;
        }
        return std::sqrt(acc / M_PI);
    };
    TransferFunction diff_a = g1_bar_a - g1_true;
    TransferFunction diff_b = g1_bar_b - g1_true;
    CHECK(h2_norm(diff_a) == doctest::Approx(quad(diff_a)).epsilon(1e-4));
    CHECK(h2_norm(diff_b) == doctest::Approx(quad(diff_b)).epsilon(1e-4));

    // initial-model distances reported for the example systems
    CHECK(h2_norm(diff_a) == doctest::Approx(1.25).epsilon(0.01));
    CHECK(h2_norm(diff_b) == doctest::Approx(2.11).epsilon(0.01));

    CHECK(h2_norm(g1_true - g1_true) == 0.0);
    CHECK_THROWS_AS(h2_norm(TransferFunction::unchecked(Polynomial{1.0, 1.0}, Polynomial{1.0, 1.0})),
                    ValidationError);
    CHECK_THROWS_AS(h2_norm(TransferFunction::unchecked(Polynomial::constant(1.0),
                                                        Polynomial{1.0, -2.0, 1.0})),
                    InstabilityError);
}
