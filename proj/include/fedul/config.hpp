#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedul/dataset.hpp"
#include "fedul/fed.hpp"
#include "fedul/partition.hpp"
#include "fedul/unlearn.hpp"

namespace fedul {

// Everything a run needs, parsed from one JSON document. Unknown keys are
// rejected so typos cannot silently fall back to defaults.
struct DataConfig {
    std::string source = "synth-images"; // synth-blobs | synth-images | idx
    int clients = 10;
    std::string counts_csv;      // partition matrix; empty -> dirichlet split
    int total_samples = 0;       // rescale the matrix; 0 keeps it as-is
    double dirichlet_alpha = 0.5;

    // idx source
    std::string train_images, train_labels, test_images, test_labels;

    // synth-blobs source
    int blob_classes = 10;
    int blob_features = 32;
    int blob_per_class_train = 100;
    int blob_per_class_test = 50;

    // synth-images source
    SynthImageConfig image;
    int image_classes = 10;
    int image_per_class_train = 1000;
    int image_per_class_test = 200;
};

struct ModelConfig {
    std::string arch = "mlp-2-hidden";
    std::vector<int> hidden; // empty -> architecture default
};

struct BackdoorConfig {
    int count = 0; // 0 disables poisoning
    int client = 0;
    int target = 0;
    PatchSpec patch;
};

struct RunConfig {
    std::uint64_t seed = 1; // master seed; train.seed is derived from it
    DataConfig data;
    ModelConfig model;
    FedConfig train;
    BackdoorConfig backdoor;
    UnlearnConfig unlearn; // forgetClients defaults to {0} when absent
    Method method = Method::Conda;

    void validate() const; // structural checks; throws ConfigError
};

// Parse from JSON text / file. Malformed JSON, unknown keys and wrong types
// raise ConfigError naming the offending key; a missing file raises IoError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

// Canonical single-line JSON with every field spelled out and keys sorted;
// equal configs share one canonical form regardless of input formatting.
std::string canonical_json(const RunConfig& cfg);

// FNV-1a 64 over the canonical form, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

} // namespace fedul
