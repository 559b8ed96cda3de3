#include "ctbcd/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "ctbcd/errors.hpp"

namespace ctbcd {

namespace {

const Eigen::VectorXd& input_for(const DataRecord& record, int j) {
    return record.inputs[record.input_count() == 1 ? 0 : static_cast<std::size_t>(j)];
}

std::vector<TransferFunction> models_from(const std::vector<ParameterVector>& beta) {
    std::vector<TransferFunction> models;
    models.reserve(beta.size());
    for (const auto& b : beta) models.push_back(b.to_transfer_function());
    return models;
}

int summed_rows(int total, int warmup_skip, int needed) {
    const int rows = total - warmup_skip;
    if (rows < needed)
        throw ValidationError("estimator: fewer usable samples than parameters after warm-up skip");
    return rows;
}

// (1/N) sums of the bundle moments over the non-warmup rows.
struct Moments {
    Eigen::MatrixXd normal;   // instrument x (instrument or regressor)
    Eigen::VectorXd rhs;
    double condition = 0.0;
};

Moments build_moments(const RegressionBundle& bundle, const EstimatorConfig& config,
                      bool gauss_newton) {
    const int N = static_cast<int>(bundle.instrument.rows());
    const int dim = static_cast<int>(bundle.instrument.cols());
    const int rows = summed_rows(N, config.warmup_skip, dim);
    const auto inst = bundle.instrument.bottomRows(rows);
    Moments m;
    if (gauss_newton) {
        m.normal = inst.transpose() * inst / rows;
        m.rhs = inst.transpose() *
                (bundle.residual + bundle.refiltered_model_output).tail(rows) / rows;
    } else {
        m.normal = inst.transpose() * bundle.regressor.bottomRows(rows) / rows;
        m.rhs = inst.transpose() * bundle.filtered_output.tail(rows) / rows;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.normal);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    m.condition = smin > 0.0 ? svd.singularValues()(0) / smin
                             : std::numeric_limits<double>::infinity();
    return m;
}

ParameterVector solve_step(const ParameterVector& theta, const RegressionBundle& bundle,
                           const EstimatorConfig& config, bool gauss_newton) {
    const Moments m = build_moments(bundle, config, gauss_newton);
    if (!(m.condition < config.condition_limit))
        throw SingularityError(
            "estimator: normal matrix numerically singular; the data does not excite every "
            "parameter direction of the declared model orders");
    Eigen::VectorXd next = m.normal.colPivHouseholderQr().solve(m.rhs);
    return ParameterVector{std::move(next), theta.structure};
}

// Stability enforcement on a fresh iterate. Returns true if roots moved.
bool apply_stability_policy(ParameterVector& theta, const EstimatorConfig& config,
                            std::vector<std::string>* events) {
    const Polynomial A = theta.denominator();
    if (is_stable(A)) return false;
    if (config.stability_policy == StabilityPolicy::Reject)
        throw InstabilityError("estimator: iterate left the stable region under the reject policy");
    const Polynomial fixed = reflect_unstable_roots(A);
    for (int k = 1; k <= theta.structure.n; ++k) theta.theta(k - 1) = fixed.coeff(k);
    if (events) events->push_back("reflected unstable denominator roots");
    return true;
}

double stationarity_norm_at(const ParameterVector& theta, const Eigen::VectorXd& y_tilde,
                            const Eigen::VectorXd& u, double h, Intersample input_hold,
                            const EstimatorConfig& config) {
    const RegressionBundle bundle =
        build_bundle(theta, y_tilde, u, h, input_hold, config.output_intersample);
    const int rows =
        summed_rows(static_cast<int>(u.size()), config.warmup_skip, theta.structure.param_count());
    return (bundle.instrument.bottomRows(rows).transpose() * bundle.residual.tail(rows) / rows)
        .norm();
}

}  // namespace

void ModelSetup::validate(int input_count) const {
    if (structures.empty()) throw ValidationError("ModelSetup: no submodels declared");
    for (const auto& s : structures)
        if (s.n < 1 || s.m < 0 || s.m > s.n)
            throw ValidationError("ModelSetup: invalid submodel orders (need n >= 1, 0 <= m <= n)");
    if (kind == ModelKind::Miso) {
        if (input_count != submodel_count())
            throw ValidationError("ModelSetup: a distinct input channel per submodel is required");
    } else {
        if (input_count != 1)
            throw ValidationError("ModelSetup: additive submodels share exactly one input channel");
        int biproper = 0;
        for (const auto& s : structures) biproper += (s.m == s.n) ? 1 : 0;
        if (biproper > 1)
            throw ValidationError(
                "ModelSetup: at most one additive submodel may be biproper, otherwise the "
                "feedthroughs are indistinguishable");
    }
}

void EstimatorConfig::validate() const {
    if (inner_max_iters < 1 || outer_max_iters < 1)
        throw ValidationError("EstimatorConfig: iteration caps must be at least 1");
    if (inner_rel_tol < 0.0 || outer_rel_tol <= 0.0)
        throw ValidationError("EstimatorConfig: tolerances must be positive (inner may be zero "
                              "for a fixed iteration schedule)");
    if (condition_limit <= 1.0)
        throw ValidationError("EstimatorConfig: condition limit must exceed 1");
    if (warmup_skip < 0) throw ValidationError("EstimatorConfig: warm-up skip must be >= 0");
}

ParameterVector gn_step(const ParameterVector& theta, const RegressionBundle& bundle,
                        const EstimatorConfig& config) {
    return solve_step(theta, bundle, config, /*gauss_newton=*/true);
}

ParameterVector srivc_step(const ParameterVector& theta, const RegressionBundle& bundle,
                           const EstimatorConfig& config) {
    return solve_step(theta, bundle, config, /*gauss_newton=*/false);
}

Polynomial reflect_unstable_roots(const Polynomial& A) {
    if (A.degree() < 1) throw ValidationError("reflect_unstable_roots: degree must be >= 1");
    auto roots = A.roots();
    bool moved = false;
    for (auto& r : roots) {
        if (r.real() >= 0.0) {
            const double floor = 1e-8 * std::max(1.0, std::abs(r));
            r = std::complex<double>(-std::max(r.real(), floor), r.imag());
            moved = true;
        }
    }
    if (!moved) return A;
    return Polynomial::from_roots_constant_term(roots, A.coeff(0) == 0.0 ? 1.0 : A.coeff(0));
}

InnerResult inner_solve(const ParameterVector& theta0, const Eigen::VectorXd& y_tilde,
                        const Eigen::VectorXd& u, double h, Intersample input_hold,
                        const EstimatorConfig& config) {
    config.validate();
    if (y_tilde.size() != u.size()) throw ValidationError("inner_solve: signal lengths differ");
    InnerResult result;
    result.theta = theta0;
    apply_stability_policy(result.theta, config, &result.events);

    const bool gauss_newton = config.inner_method == InnerMethod::GaussNewton;
    for (int s = 0; s < config.inner_max_iters; ++s) {
        const RegressionBundle bundle = build_bundle(result.theta, y_tilde, u, h, input_hold,
                                                     config.output_intersample);
        ParameterVector next = solve_step(result.theta, bundle, config, gauss_newton);
        apply_stability_policy(next, config, &result.events);
        const double change = (next.theta - result.theta.theta).norm();
        const double scale = std::max(result.theta.theta.norm(), 1e-300);
        result.theta = std::move(next);
        ++result.iterations;
        if (config.inner_rel_tol > 0.0 && change < config.inner_rel_tol * scale) {
            result.converged = true;
            break;
        }
    }
    if (config.inner_rel_tol == 0.0) result.converged = true;  // completed the fixed schedule
    result.stationarity_norm =
        stationarity_norm_at(result.theta, y_tilde, u, h, input_hold, config);
    return result;
}

double bcd_cost(const DataRecord& record, const ModelSetup& setup,
                const std::vector<ParameterVector>& beta, int warmup_skip) {
    const int K = setup.submodel_count();
    Eigen::VectorXd sim = Eigen::VectorXd::Zero(record.output.size());
    for (int j = 0; j < K; ++j)
        sim += filter_signal(beta[static_cast<std::size_t>(j)].to_transfer_function(),
                             input_for(record, j), record.h, record.intersample);
    const int rows = summed_rows(record.sample_count(), warmup_skip, 1);
    return (record.output - sim).tail(rows).squaredNorm() / rows;
}

EstimationReport bcd_identify(const DataRecord& record, const ModelSetup& setup,
                              const std::vector<ParameterVector>& init,
                              const EstimatorConfig& config) {
    record.validate();
    config.validate();
    setup.validate(record.input_count());
    const int K = setup.submodel_count();
    if (static_cast<int>(init.size()) != K)
        throw ValidationError("bcd_identify: one initial parameter vector per submodel required");
    for (int i = 0; i < K; ++i)
        if (!(init[static_cast<std::size_t>(i)].structure == setup.structures[static_cast<std::size_t>(i)]))
            throw ValidationError("bcd_identify: initial model orders disagree with the setup");

    EstimationReport report;
    std::vector<ParameterVector> beta = init;
    for (int i = 0; i < K; ++i) {
        std::vector<std::string> events;
        if (apply_stability_policy(beta[static_cast<std::size_t>(i)], config, &events))
            report.safeguard_events.push_back({0, i, events.back()});
    }
    report.beta_trajectory.push_back(beta);
    double cost_current = bcd_cost(record, setup, beta, config.warmup_skip);
    report.cost_trajectory.push_back(cost_current);

    for (int outer = 1; outer <= config.outer_max_iters; ++outer) {
        const std::vector<ParameterVector> beta_prev = beta;
        std::vector<double> norms(static_cast<std::size_t>(K), 0.0);
        for (int i = 0; i < K; ++i) {
            const Eigen::VectorXd y_tilde = residual_output(record, models_from(beta), i);
            const Eigen::VectorXd& u_i = input_for(record, i);
            InnerResult inner;
            const std::string context = "bcd_identify: outer iteration " + std::to_string(outer) +
                                        ", submodel " + std::to_string(i + 1) + ": ";
            try {
                inner = inner_solve(beta[static_cast<std::size_t>(i)], y_tilde, u_i, record.h,
                                    record.intersample, config);
            } catch (const SingularityError& err) {
                throw SingularityError(context + err.what());
            } catch (const InstabilityError& err) {
                throw InstabilityError(context + err.what());
            } catch (const DegeneracyError& err) {
                throw DegeneracyError(context + err.what());
            } catch (const ValidationError& err) {
                throw ValidationError(context + err.what());
            }
            for (const auto& e : inner.events) report.safeguard_events.push_back({outer, i, e});

            bool accepted = true;
            if (config.descent_safeguard) {
                std::vector<ParameterVector> candidate = beta;
                candidate[static_cast<std::size_t>(i)] = inner.theta;
                const double cost_candidate =
                    bcd_cost(record, setup, candidate, config.warmup_skip);
                if (cost_candidate > cost_current) {
                    accepted = false;
                    report.safeguard_events.push_back(
                        {outer, i, "reverted coordinate update that raised the cost"});
                } else {
                    cost_current = cost_candidate;
                }
            }
            if (accepted) {
                beta[static_cast<std::size_t>(i)] = inner.theta;
                norms[static_cast<std::size_t>(i)] = inner.stationarity_norm;
            } else {
                norms[static_cast<std::size_t>(i)] = stationarity_norm_at(
                    beta[static_cast<std::size_t>(i)], y_tilde, u_i, record.h, record.intersample,
                    config);
            }
        }
        if (!config.descent_safeguard)
            cost_current = bcd_cost(record, setup, beta, config.warmup_skip);
        report.beta_trajectory.push_back(beta);
        report.stationarity_norms.push_back(std::move(norms));
        report.cost_trajectory.push_back(cost_current);
        report.outer_iterations = outer;

        Eigen::VectorXd joint(0), joint_prev(0);
        for (int i = 0; i < K; ++i) {
            const auto& now = beta[static_cast<std::size_t>(i)].theta;
            const auto& was = beta_prev[static_cast<std::size_t>(i)].theta;
            joint.conservativeResize(joint.size() + now.size());
            joint.tail(now.size()) = now;
            joint_prev.conservativeResize(joint_prev.size() + was.size());
            joint_prev.tail(was.size()) = was;
        }
        const double change = (joint - joint_prev).norm();
        if (change < config.outer_rel_tol * std::max(joint_prev.norm(), 1e-300)) {
            report.converged = true;
            break;
        }
    }
    return report;
}

std::vector<double> stationarity_check(const std::vector<ParameterVector>& beta,
                                       const DataRecord& record, const ModelSetup& setup,
                                       const EstimatorConfig& config) {
    record.validate();
    setup.validate(record.input_count());
    if (static_cast<int>(beta.size()) != setup.submodel_count())
        throw ValidationError("stationarity_check: one parameter vector per submodel required");
    std::vector<double> norms;
    norms.reserve(beta.size());
    for (int i = 0; i < setup.submodel_count(); ++i) {
        const Eigen::VectorXd y_tilde = residual_output(record, models_from(beta), i);
        norms.push_back(stationarity_norm_at(beta[static_cast<std::size_t>(i)], y_tilde,
                                             input_for(record, i), record.h, record.intersample,
                                             config));
    }
    return norms;
}

PhiDiagnostics phi_matrix(const DataRecord& record, const ModelSetup& setup,
                          const std::vector<Polynomial>& model_dens,
                          const std::vector<Polynomial>& true_dens, int warmup_skip) {
    record.validate();
    setup.validate(record.input_count());
    const int K = setup.submodel_count();
    if (static_cast<int>(model_dens.size()) != K || static_cast<int>(true_dens.size()) != K)
        throw ValidationError("phi_matrix: one model and one reference denominator per submodel");

    std::vector<int> sizes(static_cast<std::size_t>(K));
    int total = 0;
    for (int j = 0; j < K; ++j) {
        sizes[static_cast<std::size_t>(j)] =
            setup.structures[static_cast<std::size_t>(j)].param_count();
        total += sizes[static_cast<std::size_t>(j)];
    }

    // Left stacks filter u_i through 1/model_den^2, right stacks through
    // 1/(true_den * model_den); both in descending derivative order.
    std::vector<Eigen::MatrixXd> left(static_cast<std::size_t>(K)),
        right(static_cast<std::size_t>(K));
    const int rows = summed_rows(record.sample_count(), warmup_skip, 1);
    for (int j = 0; j < K; ++j) {
        const auto& s = setup.structures[static_cast<std::size_t>(j)];
        const int order = s.n + s.m;
        const auto& mden = model_dens[static_cast<std::size_t>(j)];
        const auto& tden = true_dens[static_cast<std::size_t>(j)];
        if (!is_stable(mden) || !is_stable(tden))
            throw InstabilityError("phi_matrix: denominators must be stable");
        const Eigen::VectorXd& u = input_for(record, j);
        Eigen::MatrixXd bl =
            derivative_filter_bank(mden * mden, order, u, record.h, record.intersample);
        Eigen::MatrixXd br =
            derivative_filter_bank(tden * mden, order, u, record.h, record.intersample);
        Eigen::MatrixXd& L = left[static_cast<std::size_t>(j)];
        Eigen::MatrixXd& R = right[static_cast<std::size_t>(j)];
        L.resize(rows, order + 1);
        R.resize(rows, order + 1);
        for (int c = 0; c <= order; ++c) {
            L.col(c) = bl.col(order - c).tail(rows);
            R.col(c) = br.col(order - c).tail(rows);
        }
    }

    PhiDiagnostics diag;
    diag.phi.resize(total, total);
    int row0 = 0;
    for (int i = 0; i < K; ++i) {
        int col0 = 0;
        for (int j = 0; j < K; ++j) {
            diag.phi.block(row0, col0, sizes[static_cast<std::size_t>(i)],
                           sizes[static_cast<std::size_t>(j)]) =
                left[static_cast<std::size_t>(i)].transpose() *
                right[static_cast<std::size_t>(j)] / rows;
            col0 += sizes[static_cast<std::size_t>(j)];
        }
        row0 += sizes[static_cast<std::size_t>(i)];
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(diag.phi);
    diag.singular_values = svd.singularValues();
    const double smax = diag.singular_values(0);
    const double cutoff = smax * total * 1e-14;
    diag.rank = 0;
    for (Eigen::Index k = 0; k < diag.singular_values.size(); ++k)
        if (diag.singular_values(k) > cutoff) ++diag.rank;
    const double smin = diag.singular_values(diag.singular_values.size() - 1);
    diag.condition =
        smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    return diag;
}

ExcitationDiagnostics excitation_order_check(const Eigen::VectorXd& u, int required,
                                             double rel_tol) {
    if (required < 1) throw ValidationError("excitation_order_check: required order must be >= 1");
    if (rel_tol <= 0.0) throw ValidationError("excitation_order_check: tolerance must be positive");
    const int N = static_cast<int>(u.size());
    if (N < 2 * required)
        throw ValidationError("excitation_order_check: signal too short for the requested order");
    Eigen::VectorXd acov = Eigen::VectorXd::Zero(required);
    for (int tau = 0; tau < required; ++tau) {
        double acc = 0.0;
        for (int k = 0; k + tau < N; ++k) acc += u(k) * u(k + tau);
        acov(tau) = acc / N;
    }
    Eigen::MatrixXd R(required, required);
    for (int i = 0; i < required; ++i)
        for (int j = 0; j < required; ++j) R(i, j) = acov(std::abs(i - j));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    ExcitationDiagnostics diag;
    diag.required = required;
    diag.singular_values = svd.singularValues();
    const double smax = diag.singular_values(0);
    diag.estimated_rank = 0;
    for (Eigen::Index k = 0; k < diag.singular_values.size(); ++k)
        if (diag.singular_values(k) > rel_tol * smax) ++diag.estimated_rank;
    diag.sufficient = diag.estimated_rank == required && smax > 0.0;
    return diag;
}

ParameterVector svf_initialize(const Eigen::VectorXd& y_tilde, const Eigen::VectorXd& u, double h,
                               const ModelStructure& structure, double lambda,
                               Intersample intersample) {
    if (lambda <= 0.0) throw ValidationError("svf_initialize: filter bandwidth must be positive");
    if (y_tilde.size() != u.size()) throw ValidationError("svf_initialize: signal lengths differ");
    const int n = structure.n;
    const int m = structure.m;
    if (n < 1 || m < 0 || m > n) throw ValidationError("svf_initialize: invalid model orders");
    Polynomial svf{1.0 / lambda, 1.0};  // p/lambda + 1
    Polynomial C = Polynomial::constant(1.0);
    for (int k = 0; k < n; ++k) C = C * svf;
    const Eigen::MatrixXd bank_y = derivative_filter_bank(C, n, y_tilde, h, intersample);
    const Eigen::MatrixXd bank_u = derivative_filter_bank(C, m, u, h, intersample);
    Eigen::MatrixXd design(u.size(), n + m + 1);
    for (int j = 1; j <= n; ++j) design.col(j - 1) = -bank_y.col(j);
    for (int r = 0; r <= m; ++r) design.col(n + r) = bank_u.col(r);
    Eigen::VectorXd theta = design.colPivHouseholderQr().solve(bank_y.col(0));
    return ParameterVector{std::move(theta), structure};
}

}  // namespace ctbcd
