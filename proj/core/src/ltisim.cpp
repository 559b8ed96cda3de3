#include "ctbcd/ltisim.hpp"

#include <cmath>
#include <random>
#include <utility>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace ctbcd {

namespace {

void require_finite(const Eigen::MatrixXd& M, const char* where) {
    if (!M.allFinite()) throw ValidationError(std::string(where) + ": non-finite matrix entries");
}

// One-interval propagators for a sampled input through dx/dt = Ax + Bu.
// ZOH:  x+ = Phi x + Gamma0 u_k
// FOH:  x+ = Phi x + Gamma0 u_k + (Gamma1/h) (u_{k+1} - u_k)
struct Propagator {
    Eigen::MatrixXd Phi;
    Eigen::VectorXd Gamma0;
    Eigen::VectorXd Gamma1;  // only used for Foh
};

Propagator make_propagator(const Eigen::MatrixXd& A, const Eigen::VectorXd& B, double h,
                           Intersample intersample) {
    const int n = static_cast<int>(A.rows());
    if (intersample == Intersample::Zoh) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 1, n + 1);
        M.topLeftCorner(n, n) = A;
        M.topRightCorner(n, 1) = B;
        const Eigen::MatrixXd E = (M * h).exp();
        require_finite(E, "zoh_discretize");
        return Propagator{E.topLeftCorner(n, n), E.topRightCorner(n, 1), Eigen::VectorXd()};
    }
    // triangle hold: exp of [[A, B, 0], [0, 0, 1], [0, 0, 0]] h gives
    // [Phi, int e^{A(h-s)}B ds, int e^{A(h-s)}B s ds] in the top block row
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 2, n + 2);
    M.topLeftCorner(n, n) = A;
    M.block(0, n, n, 1) = B;
    M(n, n + 1) = 1.0;
    const Eigen::MatrixXd E = (M * h).exp();
    require_finite(E, "foh discretization");
    return Propagator{E.topLeftCorner(n, n), E.block(0, n, n, 1), E.block(0, n + 1, n, 1)};
}

// State trajectory under the sampled input; row k is x(t_k), x(t_0) = 0.
Eigen::MatrixXd propagate_states(const Eigen::MatrixXd& A, const Eigen::VectorXd& B,
                                 const Eigen::VectorXd& u, double h, Intersample intersample) {
    const int n = static_cast<int>(A.rows());
    const int N = static_cast<int>(u.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(N, n);
    if (n == 0 || N == 0) return X;
    const Propagator P = make_propagator(A, B, h, intersample);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int k = 0; k + 1 < N; ++k) {
        Eigen::VectorXd next = P.Phi * x + P.Gamma0 * u(k);
        if (intersample == Intersample::Foh) next += P.Gamma1 * ((u(k + 1) - u(k)) / h);
        x = std::move(next);
        X.row(k + 1) = x.transpose();
    }
    return X;
}

}  // namespace

StateSpace controllable_canonical(const TransferFunction& G) {
    const int n = G.n();
    const Polynomial& A = G.den();
    const Polynomial& B = G.num();
    StateSpace ss;
    if (n == 0) {
        ss.A_mat = Eigen::MatrixXd(0, 0);
        ss.B_vec = Eigen::VectorXd(0);
        ss.C_vec = Eigen::RowVectorXd(0);
        ss.D = B.coeff(0);
        return ss;
    }
    const double an = A.coeff(n);
    if (std::abs(an) <= 1e-12 * A.max_abs_coeff())
        throw DegeneracyError("controllable_canonical: leading denominator coefficient collapsed");
    // monic form p^n + alpha_{n-1} p^{n-1} + ... + alpha_0
    Eigen::VectorXd alpha(n);
    for (int k = 0; k < n; ++k) alpha(k) = A.coeff(k) / an;
    ss.D = (B.degree() == n) ? B.coeff(n) / an : 0.0;
    ss.A_mat = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) ss.A_mat(i, i + 1) = 1.0;
    ss.A_mat.row(n - 1) = -alpha.transpose();
    ss.B_vec = Eigen::VectorXd::Zero(n);
    ss.B_vec(n - 1) = 1.0;
    // y = (B/an - D*A/an)/monic(A) u + D u; remainder has degree < n
    ss.C_vec = Eigen::RowVectorXd::Zero(n);
    for (int k = 0; k < n; ++k) ss.C_vec(k) = B.coeff(k) / an - ss.D * alpha(k);
    return ss;
}

StateSpace zoh_discretize(const StateSpace& ss, double h) {
    if (h <= 0.0) throw ValidationError("zoh_discretize: sampling period must be positive");
    if (ss.dim() == 0) return ss;
    const Propagator P = make_propagator(ss.A_mat, ss.B_vec, h, Intersample::Zoh);
    StateSpace d;
    d.A_mat = P.Phi;
    d.B_vec = P.Gamma0;
    d.C_vec = ss.C_vec;
    d.D = ss.D;
    return d;
}

Eigen::VectorXd filter_signal(const TransferFunction& G, const Eigen::VectorXd& u, double h,
                              Intersample intersample) {
    if (h <= 0.0) throw ValidationError("filter_signal: sampling period must be positive");
    const StateSpace ss = controllable_canonical(G);
    const Eigen::MatrixXd X = propagate_states(ss.A_mat, ss.B_vec, u, h, intersample);
    Eigen::VectorXd y = ss.D * u;
    if (ss.dim() > 0) y += X * ss.C_vec.transpose();
    return y;
}

Eigen::MatrixXd derivative_filter_bank(const Polynomial& A, int max_order,
                                       const Eigen::VectorXd& u, double h,
                                       Intersample intersample) {
    if (h <= 0.0) throw ValidationError("derivative_filter_bank: sampling period must be positive");
    const int n = A.degree();
    if (max_order < 0 || max_order > n)
        throw ValidationError("derivative_filter_bank: order above deg A gives an improper filter");
    const int N = static_cast<int>(u.size());
    Eigen::MatrixXd bank(N, max_order + 1);
    if (n == 0) {
        const double c = A.coeff(0);
        if (c == 0.0) throw ValidationError("derivative_filter_bank: zero denominator");
        bank.col(0) = u / c;
        return bank;
    }
    const double an = A.leading_coeff();
    if (std::abs(an) <= 1e-12 * A.max_abs_coeff())
        throw DegeneracyError("derivative_filter_bank: leading denominator coefficient collapsed");
    // states of 1/monic(A) give p^k/monic(A) u directly; scale back by a_n
    Eigen::MatrixXd Am = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) Am(i, i + 1) = 1.0;
    Eigen::VectorXd alpha(n);
    for (int k = 0; k < n; ++k) alpha(k) = A.coeff(k) / an;
    Am.row(n - 1) = -alpha.transpose();
    Eigen::VectorXd B = Eigen::VectorXd::Zero(n);
    B(n - 1) = 1.0;
    const Eigen::MatrixXd X = propagate_states(Am, B, u, h, intersample);
    for (int k = 0; k <= max_order && k < n; ++k) bank.col(k) = X.col(k) / an;
    if (max_order == n) {
        // p^n/monic(A) u = u - sum_k alpha_k p^k/monic(A) u
        bank.col(n) = (u - X * alpha) / an;
    }
    return bank;
}

void DataRecord::validate() const {
    if (h <= 0.0) throw ValidationError("DataRecord: sampling period must be positive");
    if (output.size() < 1) throw ValidationError("DataRecord: empty output");
    for (const auto& u : inputs)
        if (u.size() != output.size())
            throw ValidationError("DataRecord: input/output lengths differ");
}

DataRecord simulate_outputs(const std::vector<TransferFunction>& truths,
                            const std::vector<Eigen::VectorXd>& inputs, double h,
                            const NoiseSpec& noise, Intersample intersample) {
    if (truths.size() != inputs.size())
        throw ValidationError("simulate_outputs: one input signal per system required");
    if (truths.empty()) throw ValidationError("simulate_outputs: no systems given");
    if (!std::isfinite(noise.variance) || noise.variance < 0.0)
        throw ValidationError("simulate_outputs: noise variance must be finite and >= 0");
    for (const auto& G : truths)
        if (!G.stable()) throw InstabilityError("simulate_outputs: refusing to simulate an unstable system");

    DataRecord rec;
    rec.h = h;
    rec.inputs = inputs;
    rec.intersample = intersample;
    rec.output = Eigen::VectorXd::Zero(inputs.front().size());
    for (std::size_t i = 0; i < truths.size(); ++i)
        rec.output += filter_signal(truths[i], inputs[i], h, intersample);
    if (noise.variance > 0.0) {
        std::mt19937_64 rng(noise.seed);
        std::normal_distribution<double> v(0.0, std::sqrt(noise.variance));
        for (Eigen::Index k = 0; k < rec.output.size(); ++k) rec.output(k) += v(rng);
    }
    rec.validate();
    return rec;
}

double h2_norm(const TransferFunction& G) {
    if (G.num().is_zero()) return 0.0;
    if (G.num().degree() >= G.n())
        throw ValidationError("h2_norm: transfer function must be strictly proper");
    if (!G.stable()) throw InstabilityError("h2_norm: transfer function must be stable");
    const StateSpace ss = controllable_canonical(G);
    const int n = ss.dim();
    // controllability Gramian: A P + P A^T + B B^T = 0, solved by vectorization
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd K = Eigen::kroneckerProduct(I, ss.A_mat) + Eigen::kroneckerProduct(ss.A_mat, I);
    Eigen::MatrixXd BBt = ss.B_vec * ss.B_vec.transpose();
    Eigen::VectorXd vecQ(Eigen::Map<Eigen::VectorXd>(BBt.data(), n * n));
    Eigen::VectorXd vecP = K.colPivHouseholderQr().solve(-vecQ);
    Eigen::MatrixXd P = Eigen::Map<Eigen::MatrixXd>(vecP.data(), n, n);
    const double sq = (ss.C_vec * P * ss.C_vec.transpose())(0, 0);
    return std::sqrt(std::max(sq, 0.0));
}

}  // namespace ctbcd
