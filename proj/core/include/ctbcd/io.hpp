#pragma once

#include <filesystem>
#include <vector>

#include "ctbcd/estimator.hpp"
#include "ctbcd/ltisim.hpp"

namespace ctbcd {

// Column layout: t,u_1,...,u_K,y with one header row, comma separators and
// '.' as the decimal mark. The time column must be uniformly spaced; reading
// recovers the sampling period from it.
void write_record_csv(const DataRecord& record, const std::filesystem::path& path);
DataRecord read_record_csv(const std::filesystem::path& path);

struct SimulateRequest {
    ModelKind kind = ModelKind::Miso;
    std::vector<TransferFunction> systems;
    double h = 0.02;
    int samples = 0;
    double noise_variance = 0.0;
    Intersample intersample = Intersample::Zoh;
};

struct IdentifyRequest {
    ModelSetup setup;
    std::vector<TransferFunction> init_models;  // empty: state-variable-filter start
    double svf_lambda = 1.0;
    Intersample intersample = Intersample::Zoh;
    EstimatorConfig estimator;
};

// Strict parsers: an unrecognized key anywhere in the file raises a
// ValidationError naming that key.
SimulateRequest parse_simulate_config(const std::filesystem::path& path);
IdentifyRequest parse_identify_config(const std::filesystem::path& path);

void write_report_json(const EstimationReport& report, const ModelSetup& setup,
                       const std::filesystem::path& path);

}  // namespace ctbcd
