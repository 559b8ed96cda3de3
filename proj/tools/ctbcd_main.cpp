#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctbcd/errors.hpp"
#include "ctbcd/estimator.hpp"
#include "ctbcd/experiments.hpp"
#include "ctbcd/io.hpp"
#include "ctbcd/ltisim.hpp"

namespace fs = std::filesystem;
using namespace ctbcd;

namespace {

struct GlobalOptions {
    std::string config;
    std::uint64_t seed = 1;
    int jobs = 1;
    std::string scale = "desk";
    std::string out;
};

fs::path default_out_dir() {
    if (const char* env = std::getenv("CTBCD_OUT_DIR")) return fs::path(env);
    return fs::path("ctbcd_out");
}

fs::path resolve_out_file(const GlobalOptions& opt, const char* fallback_name) {
    if (!opt.out.empty()) {
        const fs::path path(opt.out);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        return path;
    }
    const fs::path dir = default_out_dir();
    fs::create_directories(dir);
    return dir / fallback_name;
}

nlohmann::json transfer_function_json(const TransferFunction& g) {
    return nlohmann::json{{"num", g.num().coeffs()}, {"den", g.den().coeffs()}};
}

std::string coeff_list(const Polynomial& poly) {
    std::string text = "[";
    for (int k = 0; k <= poly.degree(); ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", poly.coeff(k));
        text += buf;
        if (k < poly.degree()) text += ", ";
    }
    return text + "]";
}

int run_simulate(const GlobalOptions& opt) {
    if (opt.config.empty()) throw ValidationError("simulate requires --config");
    const SimulateRequest request = parse_simulate_config(opt.config);

    const int channels = request.kind == ModelKind::Miso
                             ? static_cast<int>(request.systems.size())
                             : 1;
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss;

    DataRecord record;
    record.h = request.h;
    record.intersample = request.intersample;
    for (int j = 0; j < channels; ++j) {
        Eigen::VectorXd u(request.samples);
        for (int k = 0; k < request.samples; ++k) u(k) = gauss(rng);
        record.inputs.push_back(std::move(u));
    }
    Eigen::VectorXd clean = Eigen::VectorXd::Zero(request.samples);
    for (std::size_t i = 0; i < request.systems.size(); ++i) {
        const Eigen::VectorXd& u = request.kind == ModelKind::Miso ? record.inputs[i]
                                                                   : record.inputs[0];
        clean += filter_signal(request.systems[i], u, request.h, request.intersample);
    }
    record.output = clean;
    if (request.noise_variance > 0.0) {
        const double sd = std::sqrt(request.noise_variance);
        for (int k = 0; k < request.samples; ++k) record.output(k) += sd * gauss(rng);
    }

    const fs::path csv_path = resolve_out_file(opt, "simulated.csv");
    write_record_csv(record, csv_path);

    nlohmann::json meta;
    meta["command"] = "simulate";
    meta["seed"] = opt.seed;
    meta["h"] = request.h;
    meta["samples"] = request.samples;
    meta["kind"] = request.kind == ModelKind::Miso ? "miso" : "additive_siso";
    meta["noise_variance"] = request.noise_variance;
    meta["intersample"] = request.intersample == Intersample::Zoh ? "zoh" : "foh";
    nlohmann::json systems = nlohmann::json::array();
    for (const TransferFunction& g : request.systems)
        systems.push_back(transfer_function_json(g));
    meta["systems"] = systems;
    fs::path meta_path = csv_path;
    meta_path += ".meta.json";
    std::ofstream meta_file(meta_path, std::ios::binary);
    if (!meta_file) throw ValidationError("cannot write " + meta_path.string());
    meta_file << meta.dump(2) << '\n';

    std::cout << "wrote " << request.samples << " samples, " << channels
              << " input channel(s) to " << csv_path.string() << "\n";
    if (request.noise_variance > 0.0)
        std::printf("signal-to-noise ratio: %.2f dB\n",
                    snr_db(clean, request.noise_variance));
    return 0;
}

int run_identify(const GlobalOptions& opt, const std::string& data_path) {
    if (opt.config.empty()) throw ValidationError("identify requires --config");
    const IdentifyRequest request = parse_identify_config(opt.config);
    DataRecord record = read_record_csv(data_path);
    record.intersample = request.intersample;
    request.setup.validate(record.input_count());

    std::vector<ParameterVector> init;
    if (!request.init_models.empty()) {
        for (std::size_t i = 0; i < request.init_models.size(); ++i)
            init.push_back(
                embed_parameters(request.init_models[i], request.setup.structures[i]));
    } else {
        for (std::size_t i = 0; i < request.setup.structures.size(); ++i) {
            const Eigen::VectorXd& u = request.setup.kind == ModelKind::Miso
                                           ? record.inputs[i]
                                           : record.inputs[0];
            init.push_back(svf_initialize(record.output, u, record.h,
                                          request.setup.structures[i], request.svf_lambda,
                                          record.intersample));
        }
    }

    const EstimationReport report = bcd_identify(record, request.setup, init, request.estimator);

    std::printf("%5s  %16s  %16s\n", "iter", "cost", "stationarity");
    std::printf("%5d  %16.8e  %16s\n", 0, report.cost_trajectory[0], "-");
    for (std::size_t k = 1; k < report.cost_trajectory.size(); ++k) {
        double worst = 0.0;
        if (k - 1 < report.stationarity_norms.size())
            for (double s : report.stationarity_norms[k - 1]) worst = std::max(worst, s);
        std::printf("%5zu  %16.8e  %16.8e\n", k, report.cost_trajectory[k], worst);
    }

    const std::vector<ParameterVector>& final_beta = report.final_beta();
    for (std::size_t i = 0; i < final_beta.size(); ++i)
        std::cout << "s" << (i + 1) << ": num " << coeff_list(final_beta[i].numerator())
                  << ", den " << coeff_list(final_beta[i].denominator())
                  << " (coefficients by ascending power)\n";
    std::cout << (report.converged ? "converged" : "stopped at the iteration cap") << " after "
              << report.outer_iterations << " outer iteration(s)";
    if (!report.safeguard_events.empty())
        std::cout << ", " << report.safeguard_events.size() << " safeguard event(s)";
    std::cout << "\n";

    const fs::path report_path = resolve_out_file(opt, "report.json");
    write_report_json(report, request.setup, report_path);
    std::cout << "report written to " << report_path.string() << "\n";
    return 0;
}

int run_diagnose(const GlobalOptions& opt, const std::string& data_path) {
    if (opt.config.empty()) throw ValidationError("diagnose requires --config");
    const IdentifyRequest request = parse_identify_config(opt.config);
    const DataRecord record = read_record_csv(data_path);
    request.setup.validate(record.input_count());

    int additive_required = 0;
    for (const ModelStructure& s : request.setup.structures) additive_required += 2 * s.n;

    bool all_sufficient = true;
    nlohmann::json channels = nlohmann::json::array();
    for (int j = 0; j < record.input_count(); ++j) {
        const int required = request.setup.kind == ModelKind::Miso
                                 ? 2 * request.setup.structures[static_cast<std::size_t>(j)].n
                                 : additive_required;
        const ExcitationDiagnostics diag = excitation_order_check(record.inputs[j], required);
        all_sufficient = all_sufficient && diag.sufficient;
        std::printf("u_%d: requires excitation order %d, estimated order %d -> %s\n", j + 1,
                    diag.required, diag.estimated_rank,
                    diag.sufficient ? "sufficient" : "insufficient");
        channels.push_back({{"channel", j + 1},
                            {"required_order", diag.required},
                            {"estimated_order", diag.estimated_rank},
                            {"sufficient", diag.sufficient},
                            {"singular_values",
                             std::vector<double>(diag.singular_values.begin(),
                                                 diag.singular_values.end())}});
    }
    std::cout << (all_sufficient
                      ? "input excitation supports the declared model orders\n"
                      : "input excitation is insufficient for the declared model orders\n");

    if (!opt.out.empty()) {
        const fs::path path = resolve_out_file(opt, "diagnosis.json");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + path.string());
        out << nlohmann::json{{"channels", channels}, {"sufficient", all_sufficient}}.dump(2)
            << '\n';
        std::cout << "diagnosis written to " << path.string() << "\n";
    }
    return 0;
}

struct ExperimentOverrides {
    std::optional<int> mc_runs;
    std::optional<std::vector<int>> sample_sizes;
    std::optional<double> noise_variance;
    std::optional<double> h;
};

ExperimentOverrides parse_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        if (!j.is_object())
            throw ValidationError("experiment config must be a JSON object");
        for (const auto& item : j.items())
            if (item.key() != "mc_runs" && item.key() != "sample_sizes" &&
                item.key() != "noise_variance" && item.key() != "h")
                throw ValidationError("unknown key '" + item.key() + "' in experiment config");
        ExperimentOverrides overrides;
        if (j.contains("mc_runs")) overrides.mc_runs = j["mc_runs"].get<int>();
        if (j.contains("sample_sizes"))
            overrides.sample_sizes = j["sample_sizes"].get<std::vector<int>>();
        if (j.contains("noise_variance"))
            overrides.noise_variance = j["noise_variance"].get<double>();
        if (j.contains("h")) overrides.h = j["h"].get<double>();
        return overrides;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(path.string() + ": " + ex.what());
    }
}

int run_experiment(const GlobalOptions& opt, const std::string& mode) {
    const PaperSystems sys = paper_systems();

    ExperimentSpec base;
    base.base_seed = opt.seed;
    base.jobs = opt.jobs;
    if (opt.scale == "desk") {
        base.mc_runs = 50;
        base.sample_sizes = log_spaced_sizes(2000, 50000, 8);
    } else {
        base.mc_runs = 300;
        base.sample_sizes = log_spaced_sizes(2000, 50000, 30);
    }
    if (!opt.config.empty()) {
        const ExperimentOverrides overrides = parse_experiment_config(opt.config);
        if (overrides.mc_runs) base.mc_runs = *overrides.mc_runs;
        if (overrides.sample_sizes) base.sample_sizes = *overrides.sample_sizes;
        if (overrides.noise_variance) base.noise_variance = *overrides.noise_variance;
        if (overrides.h) base.h = *overrides.h;
    }
    base.truths = {sys.g1_true, sys.g2_true};
    base.setup.structures = {{2, 0}, {2, 0}};

    struct Plan {
        std::string name;
        ExperimentSpec spec;
    };
    std::vector<Plan> plans;
    if (mode == "bias") {
        base.protocol = Protocol::OneDescent;
        base.estimator_config.inner_method = InnerMethod::Srivc;
        base.estimator_config.inner_max_iters = 100;
        base.estimator_config.inner_rel_tol = 1e-10;
        for (const auto& [kind, kind_name] :
             {std::pair{ModelKind::Miso, "miso"}, std::pair{ModelKind::AdditiveSiso, "additive"}})
            for (const auto& [fixed, fixed_name] :
                 {std::pair{sys.g1_initial_a, "fixed_a"}, std::pair{sys.g1_initial_b, "fixed_b"}}) {
                Plan plan{std::string(kind_name) + "_" + fixed_name, base};
                plan.spec.name = mode + "_" + plan.name;
                plan.spec.setup.kind = kind;
                plan.spec.init_models = {fixed, sys.g2_true};
                plans.push_back(std::move(plan));
            }
    } else {
        base.protocol = Protocol::FullBcd;
        base.estimator_config.inner_method = InnerMethod::Srivc;
        base.estimator_config.inner_max_iters = 10;
        base.estimator_config.inner_rel_tol = 0.0;  // a fixed ten-step inner schedule
        base.estimator_config.outer_max_iters = 30;
        base.estimator_config.outer_rel_tol = 1e-10;
        base.init_models = {sys.g1_initial_b, sys.g1_initial_b};
        for (const auto& [kind, kind_name] :
             {std::pair{ModelKind::Miso, "miso"}, std::pair{ModelKind::AdditiveSiso, "additive"}}) {
            Plan plan{kind_name, base};
            plan.spec.name = mode + "_" + plan.name;
            plan.spec.setup.kind = kind;
            plans.push_back(std::move(plan));
        }
    }

    const fs::path base_dir = opt.out.empty() ? default_out_dir() : fs::path(opt.out);
    std::cout << "seed " << opt.seed << ", scale " << opt.scale << ", "
              << base.mc_runs << " runs x " << base.sample_sizes.size()
              << " sample sizes per configuration\n";

    for (const Plan& plan : plans) {
        const ExperimentResult result = plan.spec.protocol == Protocol::OneDescent
                                            ? run_bias_experiment(plan.spec)
                                            : run_consistency_experiment(plan.spec);
        const fs::path dir = base_dir / plan.name;
        emit_artifacts(result, dir);

        int good = 0;
        for (const RunOutcome& r : result.runs)
            if (r.converged && r.error.empty()) ++good;
        std::cout << plan.name << ": " << good << "/" << result.runs.size()
                  << " runs converged, artifacts in " << dir.string() << "\n";
        for (std::size_t si = 0; si < plan.spec.sample_sizes.size(); ++si) {
            const double fraction = result.convergence_fraction(static_cast<int>(si));
            if (fraction < 0.9)
                std::printf("warning: only %.0f%% of runs converged at N=%d\n", 100.0 * fraction,
                            plan.spec.sample_sizes[si]);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    GlobalOptions opt;
    CLI::App app{"continuous-time transfer-function identification by coordinate descent"};
    app.require_subcommand(1);
    app.add_option("--config", opt.config, "JSON configuration file");
    app.add_option("--seed", opt.seed, "random seed, recorded in the outputs")
        ->capture_default_str();
    app.add_option("--jobs", opt.jobs, "worker threads for experiment runs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--scale", opt.scale, "experiment size")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    app.add_option("--out", opt.out,
                   "output file or directory; default honors CTBCD_OUT_DIR");

    CLI::App* sim = app.add_subcommand("simulate",
                                       "generate a noisy data record from given models");
    sim->fallthrough();

    std::string identify_data;
    CLI::App* ident = app.add_subcommand("identify",
                                         "fit the declared submodels to a data record");
    ident->fallthrough();
    ident->add_option("data", identify_data, "input CSV with columns t,u_1,...,u_K,y")
        ->required()
        ->check(CLI::ExistingFile);

    std::string diagnose_data;
    CLI::App* diag = app.add_subcommand(
        "diagnose", "check input excitation against the declared model orders");
    diag->fallthrough();
    diag->add_option("data", diagnose_data, "input CSV with columns t,u_1,...,u_K,y")
        ->required()
        ->check(CLI::ExistingFile);

    std::string experiment_mode;
    CLI::App* experiment = app.add_subcommand(
        "experiment", "run a Monte Carlo study and write its artifacts");
    experiment->fallthrough();
    experiment->add_option("mode", experiment_mode, "bias or consistency")
        ->required()
        ->check(CLI::IsMember({"bias", "consistency"}));

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(sim)) return run_simulate(opt);
        if (app.got_subcommand(ident)) return run_identify(opt, identify_data);
        if (app.got_subcommand(diag)) return run_diagnose(opt, diagnose_data);
        return run_experiment(opt, experiment_mode);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const SingularityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const DegeneracyError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const InstabilityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 1;
    }
}
