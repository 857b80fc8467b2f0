#pragma once

#include "bnn/net.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bnn {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key = value sections: [model], [train], [data], [out].
struct ExperimentConfig {
    // [model]
    Decomposition decomp = Decomposition::None;
    ScaleMode scale = ScaleMode::AnalyticPerFilter;
    int64_t svd_rank = 0;  // 0 = full

    // [train]
    int64_t epochs = 5;
    int64_t batch = 50;
    std::optional<uint64_t> seed;  // mandatory before running
    OptimKind optimizer = OptimKind::Adam;
    double lr = 0.01;
    std::vector<std::pair<int64_t, double>> lr_drops;  // "3:0.1,4:0.1"
    double weight_decay = 1e-7;
    bool augment_flip = false;
    int64_t augment_shift = 0;  // max |dx|,|dy| crop jitter, 0 = off

    // [data]
    bool synthetic = true;
    int64_t synth_train = 2048;
    int64_t synth_test = 1024;
    std::string format = "idx";  // idx | csv
    std::string train_images, train_labels, test_images, test_labels;
    std::string train_csv, test_csv;

    // [out]
    std::string out_dir = "out";
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Canonical round-trippable rendering; basis of the config hash.
std::string config_to_text(const ExperimentConfig& cfg);
uint64_t config_hash(const ExperimentConfig& cfg);

const char* to_string(Decomposition d);
const char* to_string(ScaleMode m);
const char* to_string(OptimKind k);

}  // namespace bnn
