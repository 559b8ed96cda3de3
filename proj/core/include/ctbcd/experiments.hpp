#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctbcd/estimator.hpp"

namespace ctbcd {

// OneDescent: submodel 1 stays at its initial model, submodel 2 is refit once
// to convergence. FullBcd: the complete coordinate descent on all submodels.
enum class Protocol { OneDescent, FullBcd };

struct ExperimentSpec {
    std::string name;
    int mc_runs = 50;
    std::vector<int> sample_sizes;
    std::uint64_t base_seed = 1;
    ModelSetup setup;
    std::vector<TransferFunction> truths;
    std::vector<TransferFunction> init_models;
    EstimatorConfig estimator_config;
    Protocol protocol = Protocol::OneDescent;
    double noise_variance = 0.25;
    double h = 0.02;
    int jobs = 1;

    void validate() const;
};

struct RunOutcome {
    int size_index = 0;
    int run = 0;
    std::vector<ParameterVector> beta;  // empty when the run failed outright
    bool converged = false;
    int safeguard_count = 0;
    bool relabeled = false;  // additive submodels swapped to match the truths
    std::string error;
};

struct AggregateRow {
    int sample_size = 0;
    std::string param_name;
    double mean = 0.0;
    double std_dev = 0.0;
    double truth = 0.0;
    int count = 0;  // converged runs entering this row
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::vector<RunOutcome> runs;        // ordered by (size index, run index)
    std::vector<AggregateRow> aggregates;

    double convergence_fraction(int size_index) const;
};

struct PaperSystems {
    TransferFunction g1_true;
    TransferFunction g2_true;
    TransferFunction g1_initial_a;
    TransferFunction g1_initial_b;
};

// The two example systems and the two deliberately wrong first-channel models
// used throughout the study experiments.
PaperSystems paper_systems();

// count sample sizes spaced logarithmically from lo to hi inclusive.
std::vector<int> log_spaced_sizes(int lo, int hi, int count);

// Monte Carlo study of the single-coordinate refit bias (protocol OneDescent).
ExperimentResult run_bias_experiment(const ExperimentSpec& spec);

// Monte Carlo study of full coordinate descent (protocol FullBcd).
ExperimentResult run_consistency_experiment(const ExperimentSpec& spec);

// 10 log10(sample variance of the noise-free output / noise variance).
double snr_db(const Eigen::VectorXd& noise_free_output, double noise_variance);

// Writes summary.csv, aggregate.csv, manifest.json and a plot script into
// out_dir (created if missing). Identical results produce identical bytes.
void emit_artifacts(const ExperimentResult& result, const std::filesystem::path& out_dir);

}  // namespace ctbcd
