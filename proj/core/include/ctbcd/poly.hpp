#ifndef CTBCD_POLY_HPP
#define CTBCD_POLY_HPP

#include <complex>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

#include "ctbcd/errors.hpp"

namespace ctbcd {

/// Real polynomial in the differential operator p, stored as ascending
/// coefficients: coeffs()[k] multiplies p^k. The representation is kept
/// trimmed, so the leading coefficient is nonzero unless the polynomial is
/// identically zero (which is stored as the single coefficient 0).
class Polynomial {
  public:
    /// Zero polynomial.
    Polynomial();
    /// From ascending coefficients; trailing near-zero leading terms are
    /// trimmed relative to the largest coefficient magnitude.
    explicit Polynomial(std::vector<double> ascending);
    Polynomial(std::initializer_list<double> ascending);

    static Polynomial constant(double c);
    /// From descending coefficients (highest power first), as polynomials are
    /// usually written.
    static Polynomial from_descending(const std::vector<double>& descending);
    /// Real polynomial with the given roots (complex roots must appear in
    /// conjugate pairs) scaled so that the constant coefficient is `constant`.
    /// Throws ValidationError if any root is at the origin.
    static Polynomial from_roots_constant_term(
        const std::vector<std::complex<double>>& roots, double constant = 1.0);

    int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
    bool is_zero() const;
    const std::vector<double>& coeffs() const { return coeffs_; }
    double coeff(int k) const;          // 0 outside the stored range
    double leading_coeff() const { return coeffs_.back(); }
    double max_abs_coeff() const;

    double operator()(double x) const;
    std::complex<double> operator()(const std::complex<double>& x) const;

    Polynomial operator+(const Polynomial& rhs) const;
    Polynomial operator-(const Polynomial& rhs) const;
    Polynomial operator*(const Polynomial& rhs) const;
    Polynomial operator*(double scale) const;
    Polynomial operator-() const;
    bool operator==(const Polynomial& rhs) const = default;

    /// p^k * this.
    Polynomial shifted(int k) const;

    /// Roots as eigenvalues of the companion matrix of the monic rescaling.
    /// Throws DegeneracyError when the leading coefficient is numerically zero
    /// relative to the other coefficients, and ValidationError on the zero or
    /// constant polynomial.
    std::vector<std::complex<double>> roots() const;

  private:
    std::vector<double> coeffs_;  // ascending, trimmed
};

/// Sylvester-type matrix S(F, G) of size (deg F + deg G + 1). With
/// f = deg F and g = deg G, the first g rows hold the descending-power
/// coefficients of p^j * F for j = 1..g and the remaining f+1 rows those of
/// p^r * G for r = 0..f; column c corresponds to the power p^(f+g-c).
///
/// S(F, G) is singular exactly when p*F and G share a root, i.e. when F and
/// G have a common root or G(0) = 0. Estimation code always passes a
/// denominator with constant coefficient 1 as G, for which singularity is
/// equivalent to non-coprimeness.
Eigen::MatrixXd sylvester(const Polynomial& F, const Polynomial& G);

/// Coprimeness via the Sylvester determinant, with the scale-relative test
/// |det S(A, B)| > tol * prod(row norms of S). The tolerance is a pragmatic
/// choice; the underlying theory assumes exact coprimeness.
bool is_coprime(const Polynomial& A, const Polynomial& B, double tol = 1e-10);

/// True when every root of A has strictly negative real part. Requires
/// deg A >= 1; the intended callers pass constant-term-normalized
/// denominators.
bool is_stable(const Polynomial& A);

/// Declared model orders: n for the denominator, m <= n for the numerator.
struct ModelStructure {
    int n = 1;
    int m = 0;
    bool operator==(const ModelStructure&) const = default;
    int param_count() const { return n + m + 1; }
};

class TransferFunction;

/// Parameter vector [a_1, ..., a_n, b_0, ..., b_m] of a transfer function
/// B(p)/A(p) with A(p) = a_n p^n + ... + a_1 p + 1. Bijective with
/// TransferFunction of the same structure as long as a_n stays nonzero.
struct ParameterVector {
    Eigen::VectorXd theta;
    ModelStructure structure;

    ParameterVector() = default;
    ParameterVector(Eigen::VectorXd t, ModelStructure s);

    /// Denominator a_n p^n + ... + a_1 p + 1. Throws DegeneracyError if a_n
    /// is numerically zero.
    Polynomial denominator() const;
    Polynomial numerator() const;
    TransferFunction to_transfer_function() const;
};

/// Proper rational model B(p)/A(p) with the denominator normalized so that
/// A(0) = 1 exactly. Checked construction also requires B and A coprime;
/// `unchecked` skips only the coprimeness test and exists for intermediate
/// arithmetic results such as differences of transfer functions.
class TransferFunction {
  public:
    TransferFunction(Polynomial num, Polynomial den);
    static TransferFunction unchecked(Polynomial num, Polynomial den);
    /// Divides both polynomials by den(0) first, then checks.
    static TransferFunction normalized(const Polynomial& num, const Polynomial& den);
    static TransferFunction from_parameters(const ParameterVector& p);

    const Polynomial& num() const { return num_; }
    const Polynomial& den() const { return den_; }
    const ModelStructure& structure() const { return structure_; }
    int n() const { return structure_.n; }
    int m() const { return structure_.m; }
    bool strictly_proper() const { return structure_.m < structure_.n || num_.is_zero(); }

    ParameterVector parameters() const;
    std::complex<double> operator()(const std::complex<double>& s) const;
    /// Poles strictly in the open left half plane; a static gain (n = 0) has
    /// no poles and counts as stable.
    bool stable() const;

    /// Difference with a common-denominator expansion; the result is not
    /// reduced, so coprimeness is not checked.
    TransferFunction operator-(const TransferFunction& rhs) const;
    TransferFunction operator+(const TransferFunction& rhs) const;

  private:
    TransferFunction(Polynomial num, Polynomial den, ModelStructure s);

    Polynomial num_;
    Polynomial den_;
    ModelStructure structure_;
};

/// Coefficients of true_den * model_num - model_den * true_num in descending
/// order of degree, padded to length n + m + 1. Zero exactly when the two
/// transfer functions coincide (both pairs being coprime).
struct BiasVector {
    Eigen::VectorXd eta;  // descending degree
};

BiasVector bias_vector(const TransferFunction& true_tf, const TransferFunction& model_tf);

/// Parameter vector of g inside a possibly wider declared structure: the
/// denominator order must match exactly, missing high numerator coefficients
/// are zero. Throws ValidationError when g does not fit.
ParameterVector embed_parameters(const TransferFunction& g, const ModelStructure& target);

}  // namespace ctbcd

#endif  // CTBCD_POLY_HPP
