#pragma once

#include <cstdint>
#include <vector>

#include "fedul/dataset.hpp"
#include "fedul/model.hpp"
#include "fedul/partition.hpp"

namespace fedul {

struct FedConfig {
    int rounds = 10;
    int local_epochs = 2;
    double lr = 0.01;
    int batch_size = 32;
    double participation = 1.0;
    bool weighted_average = false; // size-weighted FedAvg instead of the plain mean
    bool store_rounds = false;     // keep per-round client updates (needed by federaser)
    int loss_sample_cap = 2048;    // per-round global loss is estimated on a fixed subset
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

// Per-client running sums of parameter updates. average(n) recovers the
// client's mean per-round contribution.
struct ContributionLedger {
    std::size_t dim = 0;
    std::vector<int> client_ids;
    std::vector<ParamVector> running_sum;
    std::vector<int> rounds_participated;

    void init(const std::vector<int>& ids, std::size_t dim);
    int index_of(int client_id) const; // throws ContractError on unknown id
    ParamVector client_average(int client_id) const;
    int clients() const { return static_cast<int>(client_ids.size()); }
};

void record_contribution(ContributionLedger& ledger, int client_id,
                         const ParamVector& client_params, const ParamVector& global,
                         int round);

// One line per round in the audit stream.
struct RoundRecord {
    int round = 0;
    std::vector<int> participants;
    double global_loss = 0.0;
    std::vector<double> update_norms;
};

// Optional per-round update storage for replay-style baselines.
struct StoredRound {
    int round = 0;
    std::vector<int> participants;
    std::vector<ParamVector> updates; // aligned with participants
};

struct RoundStore {
    std::size_t dim = 0;
    std::vector<StoredRound> rounds;
};

struct FedResult {
    ParamVector initial;
    ParamVector params;
    ContributionLedger ledger;
    std::vector<RoundRecord> records;
    RoundStore store;
};

// Mini-batch SGD over the client's samples; the global model is copied, not
// mutated. Deterministic per seed.
ParamVector local_train(const ParamVector& global, const ModelSpec& spec,
                        const ClientPartition& partition, const Dataset& dataset,
                        int local_epochs, double lr, int batch_size,
                        std::uint64_t seed);

// Uniform elementwise mean.
ParamVector aggregate(const std::vector<ParamVector>& client_params);
// Mean weighted by the given nonnegative weights.
ParamVector aggregate_weighted(const std::vector<ParamVector>& client_params,
                               const std::vector<double>& weights);

// The full loop: E rounds of participant selection, local training,
// contribution recording and aggregation. Client RNG streams are derived
// from (seed, client_id, round), so the processing order and the worker
// count cannot change the result. Pass `initial` to continue from an
// existing model instead of a fresh init.
FedResult run_federated(const FedConfig& cfg, const ModelSpec& spec,
                        const std::vector<ClientPartition>& partitions,
                        const Dataset& dataset, const ParamVector* initial = nullptr);

} // namespace fedul
