#pragma once

#include <vector>

#include <Eigen/Core>

#include "ctbcd/ltisim.hpp"
#include "ctbcd/poly.hpp"

namespace ctbcd {

// Snapshot of every filtered signal the inner iterations need, all built from
// the same parameter point so the row identity
//   filtered_output(t_k) - regressor_row(t_k) . theta = residual(t_k)
// holds exactly (up to discretization roundoff).
struct RegressionBundle {
    Eigen::MatrixXd instrument;              // rows: adaptively prefiltered, noise-free surrogate
    Eigen::MatrixXd regressor;               // rows: pseudolinear regression vector
    Eigen::VectorXd filtered_output;         // (1/A) y_tilde
    Eigen::VectorXd residual;                // y_tilde - (B/A) u
    Eigen::VectorXd residual_output;         // y_tilde as supplied
    Eigen::VectorXd refiltered_model_output; // (B/A^2) u, the instrument-weighted model output
};

// y_tilde for submodel i: the measured output minus every other submodel's
// simulated contribution. If the record carries a single input channel all
// submodels share it; otherwise channel j drives submodel j.
Eigen::VectorXd residual_output(const DataRecord& record,
                                const std::vector<TransferFunction>& fixed_models, int i);

// Rows: first n entries (-p^j B/A^2) u for j = 1..n, then (p^j/A) u for j = 0..m.
Eigen::MatrixXd build_instrument(const ParameterVector& theta, const Eigen::VectorXd& u, double h,
                                 Intersample intersample = Intersample::Zoh);

// Rows: first n entries (-p^j/A) y_tilde for j = 1..n, then (p^j/A) u for j = 0..m.
Eigen::MatrixXd build_regressor(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                                const Eigen::VectorXd& u, double h,
                                Intersample intersample = Intersample::Zoh,
                                Intersample output_intersample = Intersample::Zoh);

Eigen::VectorXd filtered_output(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                                double h, Intersample intersample = Intersample::Zoh);

// y_tilde - (B/A) u at the samples.
Eigen::VectorXd residual(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                         const Eigen::VectorXd& u, double h,
                         Intersample intersample = Intersample::Zoh);

// All of the above from shared filter banks (one 1/A bank per signal plus one
// 1/A^2 bank for the instrument).
RegressionBundle build_bundle(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                              const Eigen::VectorXd& u, double h,
                              Intersample intersample = Intersample::Zoh,
                              Intersample output_intersample = Intersample::Zoh);

// Diagnostic: max |instrument_row . theta - (B/A^2) u| over the samples. Zero
// in exact arithmetic; the inner steps rely on this identity only indirectly.
double gradient_identity_gap(const RegressionBundle& bundle, const ParameterVector& theta);

}  // namespace ctbcd
