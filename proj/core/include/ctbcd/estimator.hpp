#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctbcd/ltisim.hpp"
#include "ctbcd/poly.hpp"
#include "ctbcd/regression.hpp"

namespace ctbcd {

// Miso: K submodels, one independent input channel each.
// AdditiveSiso: K submodels summing their responses to one shared input.
enum class ModelKind { Miso, AdditiveSiso };

struct ModelSetup {
    ModelKind kind = ModelKind::Miso;
    std::vector<ModelStructure> structures;

    int submodel_count() const { return static_cast<int>(structures.size()); }
    // Throws ValidationError on inconsistent channel counts or, for the
    // additive case, more than one biproper submodel.
    void validate(int input_count) const;
};

enum class InnerMethod { GaussNewton, Srivc };
enum class StabilityPolicy { Reflect, Reject };

struct EstimatorConfig {
    InnerMethod inner_method = InnerMethod::Srivc;
    int inner_max_iters = 100;
    // Relative parameter-change threshold for the inner loop; zero means "run
    // the full iteration budget", the fixed-schedule replication mode.
    double inner_rel_tol = 1e-8;
    int outer_max_iters = 30;
    double outer_rel_tol = 1e-10;
    StabilityPolicy stability_policy = StabilityPolicy::Reflect;
    double condition_limit = 1e12;
    int warmup_skip = 0;       // samples excluded from every regression sum
    Intersample output_intersample = Intersample::Zoh;
    bool descent_safeguard = true;  // revert a coordinate update that raises the cost

    void validate() const;
};

struct SafeguardEvent {
    int outer_iteration = 0;
    int submodel = 0;
    std::string action;
};

struct EstimationReport {
    // Entry 0 is the initial guess; one further entry per outer iteration.
    std::vector<std::vector<ParameterVector>> beta_trajectory;
    // Per outer iteration, per submodel: |(1/N) sum instrument_row * residual|.
    std::vector<std::vector<double>> stationarity_norms;
    // Cost of entry 0, then of each outer iterate.
    std::vector<double> cost_trajectory;
    bool converged = false;
    int outer_iterations = 0;
    std::vector<SafeguardEvent> safeguard_events;

    const std::vector<ParameterVector>& final_beta() const { return beta_trajectory.back(); }
};

struct InnerResult {
    ParameterVector theta;
    int iterations = 0;
    double stationarity_norm = 0.0;
    bool converged = false;
    std::vector<std::string> events;
};

// One Gauss-Newton update evaluated at the bundle's parameter point.
ParameterVector gn_step(const ParameterVector& theta, const RegressionBundle& bundle,
                        const EstimatorConfig& config);

// One instrumental-variable update (instrument-regressor cross moments).
ParameterVector srivc_step(const ParameterVector& theta, const RegressionBundle& bundle,
                           const EstimatorConfig& config);

// Iterate the configured step on one submodel's data until the relative
// parameter change drops below tolerance or the budget runs out.
InnerResult inner_solve(const ParameterVector& theta0, const Eigen::VectorXd& y_tilde,
                        const Eigen::VectorXd& u, double h, Intersample input_hold,
                        const EstimatorConfig& config);

// Block coordinate descent: cycle the submodels, refitting each against the
// residual output formed from the freshest estimates of the others.
EstimationReport bcd_identify(const DataRecord& record, const ModelSetup& setup,
                              const std::vector<ParameterVector>& init,
                              const EstimatorConfig& config);

// Sample cost (mean squared output error over the non-warmup samples).
double bcd_cost(const DataRecord& record, const ModelSetup& setup,
                const std::vector<ParameterVector>& beta, int warmup_skip = 0);

// Per-submodel norm of the sample instrument-residual correlation at beta.
std::vector<double> stationarity_check(const std::vector<ParameterVector>& beta,
                                       const DataRecord& record, const ModelSetup& setup,
                                       const EstimatorConfig& config = {});

struct PhiDiagnostics {
    Eigen::MatrixXd phi;
    Eigen::VectorXd singular_values;
    int rank = 0;
    double condition = 0.0;
};

// Empirical joint-excitation matrix: block (i, j) correlates the 1/model_den_i^2
// derivative stack of u_i with the 1/(true_den_j * model_den_j) stack of u_j.
// Singular blocks flag non-identifiable joint directions. Always returns.
PhiDiagnostics phi_matrix(const DataRecord& record, const ModelSetup& setup,
                          const std::vector<Polynomial>& model_dens,
                          const std::vector<Polynomial>& true_dens, int warmup_skip = 0);

struct ExcitationDiagnostics {
    bool sufficient = false;
    int required = 0;
    int estimated_rank = 0;
    Eigen::VectorXd singular_values;
};

// Rank of the size-`required` Toeplitz autocovariance matrix of u; full rank
// means u is persistently exciting of at least that order.
ExcitationDiagnostics excitation_order_check(const Eigen::VectorXd& u, int required,
                                             double rel_tol = 1e-3);

// Mirror every closed-right-half-plane root across the imaginary axis and
// renormalize the constant coefficient to one. Identity for stable input.
Polynomial reflect_unstable_roots(const Polynomial& A);

// Least-squares warm start: both signals pass through 1/(p/lambda + 1)^n and
// the model equation is solved linearly for the parameters.
ParameterVector svf_initialize(const Eigen::VectorXd& y_tilde, const Eigen::VectorXd& u, double h,
                               const ModelStructure& structure, double lambda,
                               Intersample intersample = Intersample::Zoh);

}  // namespace ctbcd
