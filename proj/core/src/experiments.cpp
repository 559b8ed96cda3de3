#include "ctbcd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include "json.hpp"

#include "ctbcd/errors.hpp"
#include "ctbcd/ltisim.hpp"
#include "ctbcd/regression.hpp"

namespace ctbcd {

namespace {

std::vector<std::string> parameter_names(const ModelSetup& setup) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < setup.structures.size(); ++i) {
        const ModelStructure& s = setup.structures[i];
        const std::string prefix = "s" + std::to_string(i + 1) + ".";
        for (int k = 1; k <= s.n; ++k) names.push_back(prefix + "a" + std::to_string(k));
        for (int k = 0; k <= s.m; ++k) names.push_back(prefix + "b" + std::to_string(k));
    }
    return names;
}

Eigen::VectorXd draw_gaussian(std::mt19937_64& rng, int count, double stddev) {
    std::normal_distribution<double> gauss(0.0, stddev);
    Eigen::VectorXd x(count);
    for (int k = 0; k < count; ++k) x(k) = gauss(rng);
    return x;
}

DataRecord make_record(const ExperimentSpec& spec, int size_index, int run) {
    const int n_samples = spec.sample_sizes[static_cast<std::size_t>(size_index)];
    const int channels = spec.setup.kind == ModelKind::Miso
                             ? static_cast<int>(spec.setup.structures.size())
                             : 1;
    // One generator per run, seeded from (base seed, size index, run index), so
    // every run's data is reproducible independently of execution order.
    std::seed_seq seq{static_cast<std::uint32_t>(spec.base_seed >> 32),
                      static_cast<std::uint32_t>(spec.base_seed),
                      static_cast<std::uint32_t>(size_index),
                      static_cast<std::uint32_t>(run)};
    std::mt19937_64 rng(seq);

    DataRecord record;
    record.h = spec.h;
    record.intersample = Intersample::Zoh;
    for (int j = 0; j < channels; ++j)
        record.inputs.push_back(draw_gaussian(rng, n_samples, 1.0));

    record.output = Eigen::VectorXd::Zero(n_samples);
    for (std::size_t i = 0; i < spec.truths.size(); ++i) {
        const Eigen::VectorXd& u =
            spec.setup.kind == ModelKind::Miso ? record.inputs[i] : record.inputs[0];
        record.output += filter_signal(spec.truths[i], u, spec.h, record.intersample);
    }
    if (spec.noise_variance > 0.0)
        record.output += draw_gaussian(rng, n_samples, std::sqrt(spec.noise_variance));
    return record;
}

// With identical submodel structures on a shared input the two estimated
// submodels are exchangeable; report them so that each index is the submodel
// closest to its own truth.
void relabel_to_match_truths(const ExperimentSpec& spec, RunOutcome& outcome) {
    if (spec.setup.kind != ModelKind::AdditiveSiso) return;
    if (outcome.beta.size() != 2 || spec.truths.size() != 2) return;
    const ModelStructure& s0 = spec.setup.structures[0];
    const ModelStructure& s1 = spec.setup.structures[1];
    if (s0.n != s1.n || s0.m != s1.m) return;

    const Eigen::VectorXd t0 = embed_parameters(spec.truths[0], s0).theta;
    const Eigen::VectorXd t1 = embed_parameters(spec.truths[1], s1).theta;
    const Eigen::VectorXd& e0 = outcome.beta[0].theta;
    const Eigen::VectorXd& e1 = outcome.beta[1].theta;
    const double keep = (e0 - t0).norm() + (e1 - t1).norm();
    const double swap = (e0 - t1).norm() + (e1 - t0).norm();
    if (swap < keep) {
        std::swap(outcome.beta[0], outcome.beta[1]);
        outcome.relabeled = true;
    }
}

RunOutcome execute_run(const ExperimentSpec& spec, int size_index, int run) {
    RunOutcome outcome;
    outcome.size_index = size_index;
    outcome.run = run;
    try {
        const DataRecord record = make_record(spec, size_index, run);
        if (spec.protocol == Protocol::OneDescent) {
            const Eigen::VectorXd y_tilde = residual_output(record, spec.init_models, 1);
            const Eigen::VectorXd& u = spec.setup.kind == ModelKind::Miso
                                           ? record.inputs[1]
                                           : record.inputs[0];
            const InnerResult inner =
                inner_solve(embed_parameters(spec.init_models[1], spec.setup.structures[1]),
                            y_tilde, u, record.h, record.intersample, spec.estimator_config);
            outcome.beta = {embed_parameters(spec.init_models[0], spec.setup.structures[0]),
                            inner.theta};
            outcome.converged = inner.converged;
            outcome.safeguard_count = static_cast<int>(inner.events.size());
        } else {
            std::vector<ParameterVector> init;
            for (std::size_t i = 0; i < spec.init_models.size(); ++i)
                init.push_back(embed_parameters(spec.init_models[i], spec.setup.structures[i]));
            const EstimationReport report =
                bcd_identify(record, spec.setup, init, spec.estimator_config);
            outcome.beta = report.final_beta();
            outcome.converged = report.converged;
            outcome.safeguard_count = static_cast<int>(report.safeguard_events.size());
            relabel_to_match_truths(spec, outcome);
        }
    } catch (const std::exception& ex) {
        outcome.beta.clear();
        outcome.converged = false;
        outcome.error = ex.what();
    }
    return outcome;
}

std::vector<AggregateRow> aggregate(const ExperimentSpec& spec,
                                    const std::vector<RunOutcome>& runs) {
    const std::vector<std::string> names = parameter_names(spec.setup);
    Eigen::VectorXd truth(names.size());
    int offset = 0;
    for (std::size_t i = 0; i < spec.truths.size(); ++i) {
        const Eigen::VectorXd t = embed_parameters(spec.truths[i], spec.setup.structures[i]).theta;
        truth.segment(offset, t.size()) = t;
        offset += static_cast<int>(t.size());
    }

    std::vector<AggregateRow> rows;
    for (std::size_t si = 0; si < spec.sample_sizes.size(); ++si) {
        std::vector<Eigen::VectorXd> kept;
        for (const RunOutcome& r : runs) {
            if (r.size_index != static_cast<int>(si) || !r.converged || !r.error.empty())
                continue;
            Eigen::VectorXd stacked(truth.size());
            int pos = 0;
            for (const ParameterVector& p : r.beta) {
                stacked.segment(pos, p.theta.size()) = p.theta;
                pos += static_cast<int>(p.theta.size());
            }
            kept.push_back(std::move(stacked));
        }
        for (std::size_t k = 0; k < names.size(); ++k) {
            AggregateRow row;
            row.sample_size = spec.sample_sizes[si];
            row.param_name = names[k];
            row.truth = truth(static_cast<Eigen::Index>(k));
            row.count = static_cast<int>(kept.size());
            if (!kept.empty()) {
                double sum = 0.0;
                for (const Eigen::VectorXd& v : kept) sum += v(static_cast<Eigen::Index>(k));
                row.mean = sum / static_cast<double>(kept.size());
                if (kept.size() > 1) {
                    double ss = 0.0;
                    for (const Eigen::VectorXd& v : kept) {
                        const double d = v(static_cast<Eigen::Index>(k)) - row.mean;
                        ss += d * d;
                    }
                    row.std_dev = std::sqrt(ss / static_cast<double>(kept.size() - 1));
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const int total = static_cast<int>(spec.sample_sizes.size()) * spec.mc_runs;
    ExperimentResult result;
    result.spec = spec;
    result.runs.resize(static_cast<std::size_t>(total));

    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int t = next.fetch_add(1);
            if (t >= total) return;
            const int size_index = t / spec.mc_runs;
            const int run = t % spec.mc_runs;
            result.runs[static_cast<std::size_t>(t)] = execute_run(spec, size_index, run);
        }
    };

    const int threads = std::clamp(spec.jobs, 1, total);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    result.aggregates = aggregate(spec, result.runs);
    return result;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json transfer_function_json(const TransferFunction& g) {
    nlohmann::json j;
    j["num_coeffs_low_to_high"] = g.num().coeffs();
    j["den_coeffs_low_to_high"] = g.den().coeffs();
    return j;
}

constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Plot parameter means against sample size from aggregate.csv."""
import csv
import math
import os
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = defaultdict(list)
with open(os.path.join(here, "aggregate.csv"), newline="") as f:
    for rec in csv.DictReader(f):
        rows[rec["param_name"]].append(
            (int(rec["N"]), float(rec["mean"]), float(rec["std"]), float(rec["truth"]))
        )

names = sorted(rows)
if not names:
    raise SystemExit("aggregate.csv holds no rows")
cols = 3
grid_rows = math.ceil(len(names) / cols)
fig, axes = plt.subplots(grid_rows, cols, figsize=(4 * cols, 3 * grid_rows), squeeze=False)
for k, name in enumerate(names):
    ax = axes[k // cols][k % cols]
    data = sorted(rows[name])
    n = [d[0] for d in data]
    mean = [d[1] for d in data]
    std = [d[2] for d in data]
    ax.errorbar(n, mean, yerr=std, fmt="o-", capsize=3, label="estimate")
    ax.axhline(data[0][3], color="k", linestyle="--", linewidth=1, label="truth")
    ax.set_xscale("log")
    ax.set_title(name)
    ax.set_xlabel("N")
for k in range(len(names), grid_rows * cols):
    axes[k // cols][k % cols].axis("off")
axes[0][0].legend()
fig.tight_layout()
out = os.path.join(here, "parameters.png")
fig.savefig(out, dpi=150)
print(out)
)PY";

}  // namespace

void ExperimentSpec::validate() const {
    if (mc_runs < 1) throw ValidationError("experiment needs at least one run");
    if (sample_sizes.empty()) throw ValidationError("experiment needs at least one sample size");
    for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
        if (sample_sizes[i] < 2)
            throw ValidationError("sample sizes must be at least 2");
        if (i > 0 && sample_sizes[i] <= sample_sizes[i - 1])
            throw ValidationError("sample sizes must be strictly increasing");
    }
    if (h <= 0.0) throw ValidationError("sampling period must be positive");
    if (noise_variance < 0.0) throw ValidationError("noise variance must be non-negative");
    if (jobs < 1) throw ValidationError("jobs must be at least 1");
    const std::size_t count = setup.structures.size();
    if (truths.size() != count || init_models.size() != count)
        throw ValidationError("truths and initial models must match the submodel count");
    for (std::size_t i = 0; i < count; ++i) {
        const auto matches = [&](const TransferFunction& g) {
            return g.den().degree() == setup.structures[i].n &&
                   g.num().degree() <= setup.structures[i].m;
        };
        if (!matches(truths[i]))
            throw ValidationError("truth model " + std::to_string(i + 1) +
                                  " does not fit the declared orders");
        if (!matches(init_models[i]))
            throw ValidationError("initial model " + std::to_string(i + 1) +
                                  " does not fit the declared orders");
    }
    setup.validate(setup.kind == ModelKind::Miso ? static_cast<int>(count) : 1);
    estimator_config.validate();
}

double ExperimentResult::convergence_fraction(int size_index) const {
    int good = 0;
    int seen = 0;
    for (const RunOutcome& r : runs) {
        if (r.size_index != size_index) continue;
        ++seen;
        if (r.converged && r.error.empty()) ++good;
    }
    if (seen == 0) throw ValidationError("no runs recorded for that sample size");
    return static_cast<double>(good) / static_cast<double>(seen);
}

PaperSystems paper_systems() {
    return PaperSystems{
        TransferFunction(Polynomial({2.0}), Polynomial({1.0, 0.25, 0.25})),
        TransferFunction(Polynomial({1.0}), Polynomial({1.0, 0.01, 0.025})),
        TransferFunction(Polynomial({2.2}), Polynomial({1.0, 0.2, 0.2})),
        TransferFunction(Polynomial({1.7}), Polynomial({1.0, 0.27, 0.1})),
    };
}

std::vector<int> log_spaced_sizes(int lo, int hi, int count) {
    if (lo < 2 || hi <= lo || count < 2)
        throw ValidationError("log spacing needs 2 <= lo < hi and count >= 2");
    std::vector<int> sizes;
    const double ratio = static_cast<double>(hi) / static_cast<double>(lo);
    for (int i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        const int n = static_cast<int>(std::lround(lo * std::pow(ratio, t)));
        if (sizes.empty() || n > sizes.back()) sizes.push_back(n);
    }
    return sizes;
}

ExperimentResult run_bias_experiment(const ExperimentSpec& spec) {
    if (spec.protocol != Protocol::OneDescent)
        throw ValidationError("run_bias_experiment expects the one-descent protocol");
    return run_experiment(spec);
}

ExperimentResult run_consistency_experiment(const ExperimentSpec& spec) {
    if (spec.protocol != Protocol::FullBcd)
        throw ValidationError("run_consistency_experiment expects the full descent protocol");
    return run_experiment(spec);
}

double snr_db(const Eigen::VectorXd& noise_free_output, double noise_variance) {
    if (noise_free_output.size() < 2)
        throw ValidationError("signal-to-noise ratio needs at least two samples");
    if (noise_variance <= 0.0)
        throw ValidationError("signal-to-noise ratio needs a positive noise variance");
    const double mean = noise_free_output.mean();
    const double var =
        (noise_free_output.array() - mean).square().sum() /
        static_cast<double>(noise_free_output.size());
    return 10.0 * std::log10(var / noise_variance);
}

void emit_artifacts(const ExperimentResult& result, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + out_dir.string());

    const auto open = [&](const char* name) {
        std::ofstream out(out_dir / name, std::ios::binary);
        if (!out) throw ValidationError(std::string("cannot write ") + name + " in " +
                                        out_dir.string());
        return out;
    };

    const ExperimentSpec& spec = result.spec;
    const std::vector<std::string> names = parameter_names(spec.setup);
    std::vector<int> widths;  // parameters per submodel, to split flat name lists
    for (const ModelStructure& s : spec.setup.structures) widths.push_back(s.param_count());

    {
        std::ofstream out = open("summary.csv");
        out << "N,run,submodel,param_name,estimate,converged\n";
        for (const RunOutcome& r : result.runs) {
            const int n_samples = spec.sample_sizes[static_cast<std::size_t>(r.size_index)];
            std::size_t name_index = 0;
            for (std::size_t i = 0; i < spec.setup.structures.size(); ++i) {
                for (int k = 0; k < widths[i]; ++k, ++name_index) {
                    const double value =
                        r.beta.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : r.beta[i].theta(k);
                    out << n_samples << ',' << r.run << ',' << (i + 1) << ','
                        << names[name_index] << ',' << format_double(value) << ','
                        << (r.converged ? 1 : 0) << '\n';
                }
            }
        }
    }

    {
        std::ofstream out = open("aggregate.csv");
        out << "N,param_name,mean,std,truth\n";
        for (const AggregateRow& row : result.aggregates)
            out << row.sample_size << ',' << row.param_name << ','
                << format_double(row.mean) << ',' << format_double(row.std_dev) << ','
                << format_double(row.truth) << '\n';
    }

    {
        nlohmann::json manifest;
        manifest["name"] = spec.name;
        manifest["version"] = "0.1.0";
        manifest["base_seed"] = spec.base_seed;
        manifest["mc_runs"] = spec.mc_runs;
        manifest["sample_sizes"] = spec.sample_sizes;
        manifest["sampling_period"] = spec.h;
        manifest["noise_variance"] = spec.noise_variance;
        manifest["protocol"] =
            spec.protocol == Protocol::OneDescent ? "one_descent" : "full_bcd";
        manifest["model_kind"] =
            spec.setup.kind == ModelKind::Miso ? "miso" : "additive_siso";
        nlohmann::json structures = nlohmann::json::array();
        for (const ModelStructure& s : spec.setup.structures)
            structures.push_back({{"n", s.n}, {"m", s.m}});
        manifest["structures"] = structures;
        nlohmann::json truths = nlohmann::json::array();
        for (const TransferFunction& g : spec.truths)
            truths.push_back(transfer_function_json(g));
        manifest["truths"] = truths;
        nlohmann::json inits = nlohmann::json::array();
        for (const TransferFunction& g : spec.init_models)
            inits.push_back(transfer_function_json(g));
        manifest["initial_models"] = inits;
        const EstimatorConfig& cfg = spec.estimator_config;
        manifest["estimator"] = {
            {"inner_method", cfg.inner_method == InnerMethod::Srivc ? "srivc" : "gauss_newton"},
            {"inner_max_iters", cfg.inner_max_iters},
            {"inner_rel_tol", cfg.inner_rel_tol},
            {"outer_max_iters", cfg.outer_max_iters},
            {"outer_rel_tol", cfg.outer_rel_tol},
            {"stability_policy",
             cfg.stability_policy == StabilityPolicy::Reflect ? "reflect" : "reject"},
            {"condition_limit", cfg.condition_limit},
            {"warmup_skip", cfg.warmup_skip},
            {"descent_safeguard", cfg.descent_safeguard},
        };
        nlohmann::json counts = nlohmann::json::array();
        for (std::size_t si = 0; si < spec.sample_sizes.size(); ++si) {
            int good = 0;
            for (const RunOutcome& r : result.runs)
                if (r.size_index == static_cast<int>(si) && r.converged && r.error.empty())
                    ++good;
            counts.push_back({{"N", spec.sample_sizes[si]}, {"converged_runs", good}});
        }
        manifest["converged_counts"] = counts;

        std::ofstream out = open("manifest.json");
        out << manifest.dump(2) << '\n';
    }

    {
        std::ofstream out = open("plot_results.py");
        out << kPlotScript;
    }
}

}  // namespace ctbcd
