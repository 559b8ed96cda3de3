#include "ctbcd/poly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Eigenvalues>

namespace ctbcd {

namespace {

constexpr double kTrimRelTol = 1e-14;
constexpr double kDegeneracyRelTol = 1e-12;

std::vector<double> trimmed(std::vector<double> c) {
    if (c.empty()) return {0.0};
    double max_abs = 0.0;
    for (double x : c) max_abs = std::max(max_abs, std::abs(x));
    if (max_abs == 0.0) return {0.0};
    while (c.size() > 1 && std::abs(c.back()) <= kTrimRelTol * max_abs) c.pop_back();
    return c;
}

}  // namespace

Polynomial::Polynomial() : coeffs_{0.0} {}

Polynomial::Polynomial(std::vector<double> ascending) : coeffs_(trimmed(std::move(ascending))) {}

Polynomial::Polynomial(std::initializer_list<double> ascending)
    : Polynomial(std::vector<double>(ascending)) {}

Polynomial Polynomial::constant(double c) { return Polynomial{std::vector<double>{c}}; }

Polynomial Polynomial::from_descending(const std::vector<double>& descending) {
    std::vector<double> asc(descending.rbegin(), descending.rend());
    return Polynomial{std::move(asc)};
}

Polynomial Polynomial::from_roots_constant_term(const std::vector<std::complex<double>>& roots,
                                                double constant) {
    std::vector<std::complex<double>> c{1.0};
    for (const auto& r : roots) {
        // multiply by (p - r)
        c.push_back(0.0);
        for (auto k = c.size() - 1; k >= 1; --k) c[k] = c[k - 1] - r * c[k];
        c[0] = -r * c[0];
    }
    if (std::abs(c[0]) < 1e-300)
        throw ValidationError("from_roots_constant_term: root at the origin");
    std::vector<double> real(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) real[k] = (c[k] / c[0]).real() * constant;
    return Polynomial{std::move(real)};
}

bool Polynomial::is_zero() const { return coeffs_.size() == 1 && coeffs_[0] == 0.0; }

double Polynomial::coeff(int k) const {
    if (k < 0 || k >= static_cast<int>(coeffs_.size())) return 0.0;
    return coeffs_[static_cast<std::size_t>(k)];
}

double Polynomial::max_abs_coeff() const {
    double m = 0.0;
    for (double x : coeffs_) m = std::max(m, std::abs(x));
    return m;
}

double Polynomial::operator()(double x) const {
    double acc = 0.0;
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
    return acc;
}

std::complex<double> Polynomial::operator()(const std::complex<double>& x) const {
    std::complex<double> acc = 0.0;
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
    return acc;
}

Polynomial Polynomial::operator+(const Polynomial& rhs) const {
    std::vector<double> c(std::max(coeffs_.size(), rhs.coeffs_.size()), 0.0);
    for (std::size_t k = 0; k < c.size(); ++k)
        c[k] = coeff(static_cast<int>(k)) + rhs.coeff(static_cast<int>(k));
    return Polynomial{std::move(c)};
}

Polynomial Polynomial::operator-(const Polynomial& rhs) const { return *this + (-rhs); }

Polynomial Polynomial::operator*(const Polynomial& rhs) const {
    if (is_zero() || rhs.is_zero()) return Polynomial{};
    std::vector<double> c(coeffs_.size() + rhs.coeffs_.size() - 1, 0.0);
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
        for (std::size_t j = 0; j < rhs.coeffs_.size(); ++j) c[i + j] += coeffs_[i] * rhs.coeffs_[j];
    return Polynomial{std::move(c)};
}

Polynomial Polynomial::operator*(double scale) const {
    std::vector<double> c = coeffs_;
    for (double& x : c) x *= scale;
    return Polynomial{std::move(c)};
}

Polynomial Polynomial::operator-() const { return *this * -1.0; }

Polynomial Polynomial::shifted(int k) const {
    if (is_zero()) return Polynomial{};
    std::vector<double> c(static_cast<std::size_t>(k), 0.0);
    c.insert(c.end(), coeffs_.begin(), coeffs_.end());
    return Polynomial{std::move(c)};
}

std::vector<std::complex<double>> Polynomial::roots() const {
    const int n = degree();
    if (n < 1 || is_zero()) throw ValidationError("roots: polynomial has no roots to find");
    if (std::abs(leading_coeff()) <= kDegeneracyRelTol * max_abs_coeff())
        throw DegeneracyError("roots: leading coefficient numerically zero");
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) companion(i, n - 1) = -coeffs_[static_cast<std::size_t>(i)] / leading_coeff();
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, /*computeEigenvectors=*/false);
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return out;
}

Eigen::MatrixXd sylvester(const Polynomial& F, const Polynomial& G) {
    if (F.is_zero() && G.is_zero()) throw ValidationError("sylvester: both polynomials are zero");
    const int f = F.degree();
    const int g = G.degree();
    const int size = f + g + 1;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(size, size);
    auto fill_row = [&](int row, const Polynomial& P, int shift) {
        // coefficients of p^shift * P over descending powers p^(size-1) .. p^0
        for (int k = 0; k <= P.degree(); ++k) {
            const int power = k + shift;
            S(row, size - 1 - power) = P.coeff(k);
        }
    };
    for (int j = 1; j <= g; ++j) fill_row(j - 1, F, j);
    for (int r = 0; r <= f; ++r) fill_row(g + r, G, r);
    return S;
}

bool is_coprime(const Polynomial& A, const Polynomial& B, double tol) {
    if (tol <= 0.0) throw ValidationError("is_coprime: tolerance must be positive");
    const Eigen::MatrixXd S = sylvester(A, B);
    double scale = 1.0;
    for (Eigen::Index i = 0; i < S.rows(); ++i) scale *= S.row(i).norm();
    if (scale == 0.0) return false;  // a zero polynomial shares every root
    return std::abs(S.determinant()) > tol * scale;
}

bool is_stable(const Polynomial& A) {
    if (A.degree() < 1) throw ValidationError("is_stable: denominator must have degree >= 1");
    if (std::abs(A.leading_coeff()) <= kDegeneracyRelTol * A.max_abs_coeff())
        throw DegeneracyError("is_stable: leading denominator coefficient numerically zero");
    for (const auto& r : A.roots())
        if (r.real() >= 0.0) return false;
    return true;
}

ParameterVector::ParameterVector(Eigen::VectorXd t, ModelStructure s)
    : theta(std::move(t)), structure(s) {
    if (structure.n < 1 || structure.m < 0 || structure.m > structure.n)
        throw ValidationError("ParameterVector: invalid structure (need n >= 1, 0 <= m <= n)");
    if (theta.size() != structure.param_count())
        throw ValidationError("ParameterVector: length does not match structure");
}

Polynomial ParameterVector::denominator() const {
    const int n = structure.n;
    double max_abs = 1.0;  // the fixed constant coefficient
    for (int k = 0; k < n; ++k) max_abs = std::max(max_abs, std::abs(theta(k)));
    if (std::abs(theta(n - 1)) <= kDegeneracyRelTol * max_abs)
        throw DegeneracyError("denominator: a_n collapsed to zero; model lost its declared order");
    std::vector<double> c(static_cast<std::size_t>(n) + 1);
    c[0] = 1.0;
    for (int k = 1; k <= n; ++k) c[static_cast<std::size_t>(k)] = theta(k - 1);
    return Polynomial{std::move(c)};
}

Polynomial ParameterVector::numerator() const {
    std::vector<double> c(static_cast<std::size_t>(structure.m) + 1);
    for (int r = 0; r <= structure.m; ++r) c[static_cast<std::size_t>(r)] = theta(structure.n + r);
    return Polynomial{std::move(c)};
}

TransferFunction ParameterVector::to_transfer_function() const {
    return TransferFunction::from_parameters(*this);
}

TransferFunction::TransferFunction(Polynomial num, Polynomial den, ModelStructure s)
    : num_(std::move(num)), den_(std::move(den)), structure_(s) {
    if (structure_.n < 0 || structure_.m > structure_.n)
        throw ValidationError("TransferFunction: improper model (need m <= n)");
    if (den_.coeff(0) != 1.0)
        throw ValidationError("TransferFunction: denominator constant coefficient must be 1");
    if (num_.degree() > structure_.m || den_.degree() != structure_.n)
        throw ValidationError("TransferFunction: polynomial degrees exceed declared structure");
}

TransferFunction::TransferFunction(Polynomial num, Polynomial den)
    : TransferFunction(num, den, ModelStructure{den.degree(), num.degree()}) {
    if (structure_.n >= 1 && !is_coprime(num_, den_))
        throw ValidationError("TransferFunction: numerator and denominator share a root");
}

TransferFunction TransferFunction::unchecked(Polynomial num, Polynomial den) {
    ModelStructure s{den.degree(), num.degree()};
    return TransferFunction{std::move(num), std::move(den), s};
}

TransferFunction TransferFunction::normalized(const Polynomial& num, const Polynomial& den) {
    const double c0 = den.coeff(0);
    if (c0 == 0.0) throw ValidationError("TransferFunction: denominator constant coefficient is zero");
    auto divide = [c0](const Polynomial& P) {
        std::vector<double> c = P.coeffs();
        for (double& x : c) x /= c0;  // c0/c0 == 1.0 exactly, unlike multiplying by 1/c0
        return Polynomial{std::move(c)};
    };
    return TransferFunction{divide(num), divide(den)};
}

TransferFunction TransferFunction::from_parameters(const ParameterVector& p) {
    return TransferFunction{p.numerator(), p.denominator(), p.structure};
}

ParameterVector TransferFunction::parameters() const {
    Eigen::VectorXd theta(structure_.param_count());
    for (int k = 1; k <= structure_.n; ++k) theta(k - 1) = den_.coeff(k);
    for (int r = 0; r <= structure_.m; ++r) theta(structure_.n + r) = num_.coeff(r);
    return ParameterVector{std::move(theta), structure_};
}

std::complex<double> TransferFunction::operator()(const std::complex<double>& s) const {
    return num_(s) / den_(s);
}

bool TransferFunction::stable() const {
    if (structure_.n == 0) return true;
    return is_stable(den_);
}

TransferFunction TransferFunction::operator-(const TransferFunction& rhs) const {
    return unchecked(num_ * rhs.den_ - rhs.num_ * den_, den_ * rhs.den_);
}

TransferFunction TransferFunction::operator+(const TransferFunction& rhs) const {
    return unchecked(num_ * rhs.den_ + rhs.num_ * den_, den_ * rhs.den_);
}

BiasVector bias_vector(const TransferFunction& true_tf, const TransferFunction& model_tf) {
    if (!(true_tf.structure() == model_tf.structure()))
        throw ValidationError("bias_vector: model structures do not match");
    const int n = true_tf.n();
    const int m = true_tf.m();
    const Polynomial diff = true_tf.den() * model_tf.num() - model_tf.den() * true_tf.num();
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n + m + 1);
    for (int i = 0; i < n + m + 1; ++i) eta(i) = diff.coeff(n + m - i);  // descending
    return BiasVector{std::move(eta)};
}

ParameterVector embed_parameters(const TransferFunction& g, const ModelStructure& target) {
    if (g.den().degree() != target.n || g.num().degree() > target.m)
        throw ValidationError("model of orders (" + std::to_string(g.n()) + ", " +
                              std::to_string(g.m()) + ") does not fit declared orders (" +
                              std::to_string(target.n) + ", " + std::to_string(target.m) + ")");
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(target.param_count());
    for (int k = 1; k <= target.n; ++k) theta(k - 1) = g.den().coeff(k);
    for (int k = 0; k <= target.m; ++k) theta(target.n + k) = g.num().coeff(k);
    return ParameterVector(std::move(theta), target);
}

}  // namespace ctbcd
