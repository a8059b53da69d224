#pragma once

#include <string>
#include <vector>

#include "fedul/config.hpp"
#include "fedul/eval.hpp"
#include "fedul/unlearn.hpp"

namespace fedul {

// A fully materialized run instance: data, client split, model shape.
// Everything here is a pure function of the config, so a later process can
// rebuild the exact same instance from the stored config alone.
struct Problem {
    Dataset train;
    Dataset test;
    std::vector<ClientPartition> partitions;
    ModelSpec spec;
    bool poisoned = false;
};

Problem materialize(const RunConfig& cfg);

// File layout inside a run directory.
struct ArtifactPaths {
    std::string model;   // trained global model
    std::string initial; // parameters before round 0
    std::string ledger;  // per-client contribution sums
    std::string store;   // per-round updates (only when train.storeRounds)
    std::string meta;    // canonical config, hashes, timings
    std::string rounds;  // one JSON line per round
};
ArtifactPaths artifact_paths(const std::string& out_dir);

// Hash over the training-relevant config sections (unlearning settings
// excluded), used to pair unlearning runs with the artifacts they need.
std::string train_fingerprint(const RunConfig& cfg);

// Trains per the config and writes the artifact set. The directory is
// created if needed.
FedResult train_to_dir(const RunConfig& cfg, const Problem& problem,
                       const std::string& out_dir);

// Loads what run_unlearn_method needs back from a run directory; the store
// stays empty unless present on disk. Verifies the training fingerprint.
struct LoadedRun {
    ParamVector params;
    ParamVector initial;
    ContributionLedger ledger;
    RoundStore store;
};
LoadedRun load_run(const RunConfig& cfg, const std::string& dir);

struct UnlearnOutcome {
    ParamVector params;
    double seconds = 0.0;      // method call only, not evaluation
    DampeningReport dampening; // dim stays 0 for the baselines
};

UnlearnOutcome run_unlearn_method(const RunConfig& cfg, const Problem& problem,
                                  const FedResult& fed, Method method);

// R-Set/U-Set/test accuracy, attack success when the problem is poisoned,
// and the loss-threshold membership attack with the forget clients' clean
// samples as members (poisoned samples are excluded so the attack measures
// memorization of ordinary data, not of the trigger). MIA is skipped when
// either side has fewer than 20 samples.
EvalReport evaluate_model(const RunConfig& cfg, const Problem& problem,
                          const ParamVector& params);

} // namespace fedul
