#include "ctbcd/io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "json.hpp"

#include "ctbcd/errors.hpp"

namespace ctbcd {

namespace {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_number(const std::string& text, int line_number) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ValidationError("line " + std::to_string(line_number) +
                              ": cannot parse '" + text + "' as a number");
    }
    while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
    if (used != text.size())
        throw ValidationError("line " + std::to_string(line_number) +
                              ": trailing characters in '" + text + "'");
    return value;
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& ex) {
        throw ValidationError(path.string() + ": " + ex.what());
    }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw ValidationError("unknown key '" + item.key() + "' in " + context);
    }
}

const json& need(const json& obj, const char* key, const std::string& context) {
    const auto it = obj.find(key);
    if (it == obj.end())
        throw ValidationError("missing key '" + std::string(key) + "' in " + context);
    return *it;
}

TransferFunction parse_transfer_function(const json& j, const std::string& context) {
    if (!j.is_object()) throw ValidationError(context + " must be an object");
    check_keys(j, {"num", "den"}, context);
    const std::vector<double> num = need(j, "num", context).get<std::vector<double>>();
    const std::vector<double> den = need(j, "den", context).get<std::vector<double>>();
    if (den.empty()) throw ValidationError(context + ": empty denominator");
    return TransferFunction::normalized(Polynomial(num), Polynomial(den));
}

ModelKind parse_kind(const json& j, const std::string& context) {
    const std::string text = j.get<std::string>();
    if (text == "miso") return ModelKind::Miso;
    if (text == "additive" || text == "additive_siso") return ModelKind::AdditiveSiso;
    throw ValidationError(context + ": kind must be 'miso' or 'additive', got '" + text + "'");
}

Intersample parse_hold(const json& j, const std::string& context) {
    const std::string text = j.get<std::string>();
    if (text == "zoh") return Intersample::Zoh;
    if (text == "foh") return Intersample::Foh;
    throw ValidationError(context + ": intersample must be 'zoh' or 'foh', got '" + text + "'");
}

EstimatorConfig parse_estimator(const json& j) {
    const std::string context = "estimator";
    check_keys(j,
               {"inner_method", "inner_max_iters", "inner_rel_tol", "outer_max_iters",
                "outer_rel_tol", "stability_policy", "condition_limit", "warmup_skip",
                "output_intersample", "descent_safeguard"},
               context);
    EstimatorConfig cfg;
    if (j.contains("inner_method")) {
        const std::string text = j["inner_method"].get<std::string>();
        if (text == "srivc")
            cfg.inner_method = InnerMethod::Srivc;
        else if (text == "gauss_newton" || text == "gn")
            cfg.inner_method = InnerMethod::GaussNewton;
        else
            throw ValidationError("estimator: inner_method must be 'srivc' or 'gauss_newton'");
    }
    if (j.contains("inner_max_iters")) cfg.inner_max_iters = j["inner_max_iters"].get<int>();
    if (j.contains("inner_rel_tol")) cfg.inner_rel_tol = j["inner_rel_tol"].get<double>();
    if (j.contains("outer_max_iters")) cfg.outer_max_iters = j["outer_max_iters"].get<int>();
    if (j.contains("outer_rel_tol")) cfg.outer_rel_tol = j["outer_rel_tol"].get<double>();
    if (j.contains("stability_policy")) {
        const std::string text = j["stability_policy"].get<std::string>();
        if (text == "reflect")
            cfg.stability_policy = StabilityPolicy::Reflect;
        else if (text == "reject")
            cfg.stability_policy = StabilityPolicy::Reject;
        else
            throw ValidationError("estimator: stability_policy must be 'reflect' or 'reject'");
    }
    if (j.contains("condition_limit")) cfg.condition_limit = j["condition_limit"].get<double>();
    if (j.contains("warmup_skip")) cfg.warmup_skip = j["warmup_skip"].get<int>();
    if (j.contains("output_intersample"))
        cfg.output_intersample = parse_hold(j["output_intersample"], context);
    if (j.contains("descent_safeguard"))
        cfg.descent_safeguard = j["descent_safeguard"].get<bool>();
    cfg.validate();
    return cfg;
}

json transfer_function_json(const TransferFunction& g) {
    return json{{"num", g.num().coeffs()}, {"den", g.den().coeffs()}};
}

}  // namespace

void write_record_csv(const DataRecord& record, const std::filesystem::path& path) {
    record.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << 't';
    for (int j = 0; j < record.input_count(); ++j) out << ",u_" << (j + 1);
    out << ",y\n";
    for (int k = 0; k < record.sample_count(); ++k) {
        out << format_double(static_cast<double>(k) * record.h);
        for (const Eigen::VectorXd& u : record.inputs) out << ',' << format_double(u(k));
        out << ',' << format_double(record.output(k)) << '\n';
    }
}

DataRecord read_record_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_line(line);
    if (header.size() < 3 || header.front() != "t" || header.back() != "y")
        throw ValidationError(path.string() + ": header must be t,u_1,...,u_K,y");
    const int channels = static_cast<int>(header.size()) - 2;
    for (int j = 0; j < channels; ++j)
        if (header[static_cast<std::size_t>(j) + 1] != "u_" + std::to_string(j + 1))
            throw ValidationError(path.string() + ": header must be t,u_1,...,u_K,y");

    std::vector<double> times;
    std::vector<std::vector<double>> inputs(static_cast<std::size_t>(channels));
    std::vector<double> output;
    int line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size())
            throw ValidationError("line " + std::to_string(line_number) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
        times.push_back(parse_number(fields[0], line_number));
        for (int j = 0; j < channels; ++j)
            inputs[static_cast<std::size_t>(j)].push_back(
                parse_number(fields[static_cast<std::size_t>(j) + 1], line_number));
        output.push_back(parse_number(fields.back(), line_number));
    }
    if (times.size() < 2)
        throw ValidationError(path.string() + ": need at least two data rows");

    const double h = times[1] - times[0];
    if (!(h > 0.0)) throw ValidationError(path.string() + ": time column must increase");
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double dt = times[k] - times[k - 1];
        if (std::abs(dt - h) > 1e-6 * h)
            throw ValidationError(path.string() + ": time column is not uniformly spaced (row " +
                                  std::to_string(k + 1) + ")");
    }

    DataRecord record;
    record.h = h;
    for (std::vector<double>& u : inputs)
        record.inputs.push_back(Eigen::Map<Eigen::VectorXd>(u.data(),
                                                            static_cast<Eigen::Index>(u.size())));
    record.output = Eigen::Map<Eigen::VectorXd>(output.data(),
                                                static_cast<Eigen::Index>(output.size()));
    record.validate();
    return record;
}

SimulateRequest parse_simulate_config(const std::filesystem::path& path) {
    const json j = load_json(path);
    const std::string context = "simulate config";
    if (!j.is_object()) throw ValidationError(context + " must be a JSON object");
    try {
        check_keys(j, {"kind", "systems", "h", "samples", "noise_variance", "intersample"},
                   context);
        SimulateRequest request;
        request.kind = parse_kind(need(j, "kind", context), context);
        const json& systems = need(j, "systems", context);
        if (!systems.is_array() || systems.empty())
            throw ValidationError(context + ": systems must be a non-empty array");
        for (std::size_t i = 0; i < systems.size(); ++i)
            request.systems.push_back(parse_transfer_function(
                systems[i], "systems[" + std::to_string(i) + "]"));
        request.h = need(j, "h", context).get<double>();
        request.samples = need(j, "samples", context).get<int>();
        if (j.contains("noise_variance"))
            request.noise_variance = j["noise_variance"].get<double>();
        if (j.contains("intersample"))
            request.intersample = parse_hold(j["intersample"], context);
        if (request.h <= 0.0) throw ValidationError(context + ": h must be positive");
        if (request.samples < 2) throw ValidationError(context + ": samples must be at least 2");
        if (request.noise_variance < 0.0)
            throw ValidationError(context + ": noise_variance must be non-negative");
        return request;
    } catch (const json::exception& ex) {
        throw ValidationError(path.string() + ": " + ex.what());
    }
}

IdentifyRequest parse_identify_config(const std::filesystem::path& path) {
    const json j = load_json(path);
    const std::string context = "identify config";
    if (!j.is_object()) throw ValidationError(context + " must be a JSON object");
    try {
        check_keys(j,
                   {"kind", "structures", "initial_models", "svf_lambda", "intersample",
                    "estimator"},
                   context);
        IdentifyRequest request;
        request.setup.kind = parse_kind(need(j, "kind", context), context);
        const json& structures = need(j, "structures", context);
        if (!structures.is_array() || structures.empty())
            throw ValidationError(context + ": structures must be a non-empty array");
        for (std::size_t i = 0; i < structures.size(); ++i) {
            const std::string entry = "structures[" + std::to_string(i) + "]";
            check_keys(structures[i], {"n", "m"}, entry);
            ModelStructure s;
            s.n = need(structures[i], "n", entry).get<int>();
            s.m = need(structures[i], "m", entry).get<int>();
            if (s.n < 1 || s.m < 0 || s.m > s.n)
                throw ValidationError(entry + ": need n >= 1 and 0 <= m <= n");
            request.setup.structures.push_back(s);
        }
        if (j.contains("initial_models")) {
            const json& inits = j["initial_models"];
            if (!inits.is_array() || inits.size() != structures.size())
                throw ValidationError(
                    context + ": initial_models must list one model per submodel");
            for (std::size_t i = 0; i < inits.size(); ++i)
                request.init_models.push_back(parse_transfer_function(
                    inits[i], "initial_models[" + std::to_string(i) + "]"));
        }
        if (j.contains("svf_lambda")) {
            request.svf_lambda = j["svf_lambda"].get<double>();
            if (request.svf_lambda <= 0.0)
                throw ValidationError(context + ": svf_lambda must be positive");
        }
        if (j.contains("intersample"))
            request.intersample = parse_hold(j["intersample"], context);
        if (j.contains("estimator")) request.estimator = parse_estimator(j["estimator"]);
        return request;
    } catch (const json::exception& ex) {
        throw ValidationError(path.string() + ": " + ex.what());
    }
}

void write_report_json(const EstimationReport& report, const ModelSetup& setup,
                       const std::filesystem::path& path) {
    json out;
    out["converged"] = report.converged;
    out["outer_iterations"] = report.outer_iterations;
    out["model_kind"] = setup.kind == ModelKind::Miso ? "miso" : "additive_siso";

    json finals = json::array();
    // `unchecked` keeps report writing alive even if a final iterate has a
    // numerically shared numerator/denominator root.
    for (const ParameterVector& p : report.final_beta())
        finals.push_back(
            transfer_function_json(TransferFunction::unchecked(p.numerator(), p.denominator())));
    out["final_models"] = finals;

    json trajectory = json::array();
    for (const std::vector<ParameterVector>& beta : report.beta_trajectory) {
        json entry = json::array();
        for (const ParameterVector& p : beta)
            entry.push_back(std::vector<double>(p.theta.begin(), p.theta.end()));
        trajectory.push_back(entry);
    }
    out["beta_trajectory"] = trajectory;
    out["cost_trajectory"] = report.cost_trajectory;
    out["stationarity_norms"] = report.stationarity_norms;

    json events = json::array();
    for (const SafeguardEvent& e : report.safeguard_events)
        events.push_back({{"outer_iteration", e.outer_iteration},
                          {"submodel", e.submodel},
                          {"action", e.action}});
    out["safeguard_events"] = events;

    std::ofstream file(path, std::ios::binary);
    if (!file) throw ValidationError("cannot write " + path.string());
    file << out.dump(2) << '\n';
}

}  // namespace ctbcd
