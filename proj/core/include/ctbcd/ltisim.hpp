#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ctbcd/errors.hpp"
#include "ctbcd/poly.hpp"

namespace ctbcd {

// Intersample behavior of a sampled signal when it passes through a
// continuous-time filter: held constant over each interval, or interpolated
// linearly (triangle hold).
enum class Intersample { Zoh, Foh };

// Controllable-canonical realization dx/dt = A x + B u, y = C x + D u.
struct StateSpace {
    Eigen::MatrixXd A_mat;
    Eigen::VectorXd B_vec;
    Eigen::RowVectorXd C_vec;
    double D = 0.0;

    int dim() const { return static_cast<int>(A_mat.rows()); }
};

StateSpace controllable_canonical(const TransferFunction& G);

// Discrete-time equivalent for piecewise-constant inputs, built from the
// matrix exponential of the augmented [[A, B], [0, 0]] block scaled by h.
StateSpace zoh_discretize(const StateSpace& ss, double h);

// G(p) applied to the sampled signal u, evaluated at the sample instants with
// zero initial conditions. Exact under the stated intersample assumption.
Eigen::VectorXd filter_signal(const TransferFunction& G, const Eigen::VectorXd& u, double h,
                              Intersample intersample = Intersample::Zoh);

// Columns k = 0..max_order of (p^k / A(p)) u at the samples, computed from one
// shared state trajectory of 1/A rather than max_order independent filters.
// Requires max_order <= deg A so every column is proper.
Eigen::MatrixXd derivative_filter_bank(const Polynomial& A, int max_order,
                                       const Eigen::VectorXd& u, double h,
                                       Intersample intersample = Intersample::Zoh);

struct NoiseSpec {
    double variance = 0.0;
    std::uint64_t seed = 0;
};

// One sampled identification data set: K input channels and the noisy output.
struct DataRecord {
    double h = 0.0;
    std::vector<Eigen::VectorXd> inputs;
    Eigen::VectorXd output;
    Intersample intersample = Intersample::Zoh;

    int sample_count() const { return static_cast<int>(output.size()); }
    int input_count() const { return static_cast<int>(inputs.size()); }
    void validate() const;  // throws ValidationError on inconsistent shapes
};

// y(t_k) = sum_i G_i(p) u_i(t_k) + v(t_k) with i.i.d. zero-mean Gaussian v.
DataRecord simulate_outputs(const std::vector<TransferFunction>& truths,
                            const std::vector<Eigen::VectorXd>& inputs, double h,
                            const NoiseSpec& noise,
                            Intersample intersample = Intersample::Zoh);

// H2 norm of a strictly proper stable transfer function via the
// controllability Gramian of its realization.
double h2_norm(const TransferFunction& G);

}  // namespace ctbcd
