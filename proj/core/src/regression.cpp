#include "ctbcd/regression.hpp"

#include <cmath>

#include "ctbcd/errors.hpp"

namespace ctbcd {

namespace {

void require_admissible(const Polynomial& A, const Polynomial& B) {
    if (!is_stable(A))
        throw InstabilityError("regression: model denominator is not stable");
    if (!B.is_zero() && !is_coprime(A, B))
        throw ValidationError("regression: numerator and denominator share a root");
}

// (B(p)/D(p)) u assembled from the columns of a 1/D bank: the convolution of
// the numerator coefficients with the derivative columns.
Eigen::VectorXd apply_numerator(const Polynomial& B, const Eigen::MatrixXd& bank, int shift = 0) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(bank.rows());
    for (int r = 0; r <= B.degree(); ++r) out += B.coeff(r) * bank.col(r + shift);
    return out;
}

}  // namespace

Eigen::VectorXd residual_output(const DataRecord& record,
                                const std::vector<TransferFunction>& fixed_models, int i) {
    record.validate();
    const int K = static_cast<int>(fixed_models.size());
    if (i < 0 || i >= K) throw ValidationError("residual_output: submodel index out of range");
    if (record.input_count() != 1 && record.input_count() != K)
        throw ValidationError("residual_output: need one shared input or one channel per submodel");
    Eigen::VectorXd y_tilde = record.output;
    for (int j = 0; j < K; ++j) {
        if (j == i) continue;
        if (!fixed_models[j].stable())
            throw InstabilityError("residual_output: fixed submodel is not stable");
        const Eigen::VectorXd& u_j =
            record.inputs[record.input_count() == 1 ? 0 : static_cast<std::size_t>(j)];
        y_tilde -= filter_signal(fixed_models[j], u_j, record.h, record.intersample);
    }
    return y_tilde;
}

Eigen::MatrixXd build_instrument(const ParameterVector& theta, const Eigen::VectorXd& u, double h,
                                 Intersample intersample) {
    const Polynomial A = theta.denominator();
    const Polynomial B = theta.numerator();
    require_admissible(A, B);
    const int n = theta.structure.n;
    const int m = theta.structure.m;
    const Eigen::MatrixXd bank_a2 = derivative_filter_bank(A * A, n + m, u, h, intersample);
    const Eigen::MatrixXd bank_a = derivative_filter_bank(A, m, u, h, intersample);
    Eigen::MatrixXd phi_hat(u.size(), n + m + 1);
    for (int j = 1; j <= n; ++j) phi_hat.col(j - 1) = -apply_numerator(B, bank_a2, j);
    for (int j = 0; j <= m; ++j) phi_hat.col(n + j) = bank_a.col(j);
    return phi_hat;
}

Eigen::MatrixXd build_regressor(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                                const Eigen::VectorXd& u, double h, Intersample intersample,
                                Intersample output_intersample) {
    if (y_tilde.size() != u.size())
        throw ValidationError("build_regressor: signal lengths differ");
    const Polynomial A = theta.denominator();
    require_admissible(A, theta.numerator());
    const int n = theta.structure.n;
    const int m = theta.structure.m;
    const Eigen::MatrixXd bank_y = derivative_filter_bank(A, n, y_tilde, h, output_intersample);
    const Eigen::MatrixXd bank_u = derivative_filter_bank(A, m, u, h, intersample);
    Eigen::MatrixXd phi(u.size(), n + m + 1);
    for (int j = 1; j <= n; ++j) phi.col(j - 1) = -bank_y.col(j);
    for (int j = 0; j <= m; ++j) phi.col(n + j) = bank_u.col(j);
    return phi;
}

Eigen::VectorXd filtered_output(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                                double h, Intersample intersample) {
    const Polynomial A = theta.denominator();
    if (!is_stable(A)) throw InstabilityError("filtered_output: model denominator is not stable");
    return derivative_filter_bank(A, 0, y_tilde, h, intersample).col(0);
}

Eigen::VectorXd residual(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                         const Eigen::VectorXd& u, double h, Intersample intersample) {
    if (y_tilde.size() != u.size()) throw ValidationError("residual: signal lengths differ");
    const Polynomial A = theta.denominator();
    const Polynomial B = theta.numerator();
    require_admissible(A, B);
    const Eigen::MatrixXd bank_u = derivative_filter_bank(A, theta.structure.m, u, h, intersample);
    return y_tilde - apply_numerator(B, bank_u);
}

RegressionBundle build_bundle(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                              const Eigen::VectorXd& u, double h, Intersample intersample,
                              Intersample output_intersample) {
    if (y_tilde.size() != u.size()) throw ValidationError("build_bundle: signal lengths differ");
    const Polynomial A = theta.denominator();
    const Polynomial B = theta.numerator();
    require_admissible(A, B);
    const int n = theta.structure.n;
    const int m = theta.structure.m;
    const Eigen::MatrixXd bank_a2 = derivative_filter_bank(A * A, n + m, u, h, intersample);
    const Eigen::MatrixXd bank_u = derivative_filter_bank(A, m, u, h, intersample);
    const Eigen::MatrixXd bank_y = derivative_filter_bank(A, n, y_tilde, h, output_intersample);

    RegressionBundle out;
    out.residual_output = y_tilde;
    out.instrument.resize(u.size(), n + m + 1);
    for (int j = 1; j <= n; ++j) out.instrument.col(j - 1) = -apply_numerator(B, bank_a2, j);
    for (int j = 0; j <= m; ++j) out.instrument.col(n + j) = bank_u.col(j);
    out.regressor.resize(u.size(), n + m + 1);
    for (int j = 1; j <= n; ++j) out.regressor.col(j - 1) = -bank_y.col(j);
    out.regressor.rightCols(m + 1) = out.instrument.rightCols(m + 1);
    out.filtered_output = bank_y.col(0);
    out.residual = y_tilde - apply_numerator(B, bank_u);
    out.refiltered_model_output = apply_numerator(B, bank_a2);
    return out;
}

double gradient_identity_gap(const RegressionBundle& bundle, const ParameterVector& theta) {
    if (bundle.instrument.cols() != theta.theta.size())
        throw ValidationError("gradient_identity_gap: bundle/parameter size mismatch");
    return (bundle.instrument * theta.theta - bundle.refiltered_model_output)
        .cwiseAbs()
        .maxCoeff();
}

}  // namespace ctbcd
