#include "fedul/fed.hpp"

#include <algorithm>
#include <cmath>

#include "fedul/kernels.hpp"
#include "fedul/rng.hpp"

namespace fedul {

void FedConfig::validate() const {
    if (rounds < 1) throw ConfigError("fed: rounds must be >= 1");
    if (local_epochs < 1) throw ConfigError("fed: localEpochs must be >= 1");
    if (batch_size < 1) throw ConfigError("fed: batchSize must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("fed: lr must be finite and >= 0");
    if (!(participation > 0.0) || participation > 1.0)
        throw ConfigError("fed: participation must be in (0,1]");
    if (loss_sample_cap < 1) throw ConfigError("fed: lossSampleCap must be >= 1");
}

void ContributionLedger::init(const std::vector<int>& ids, std::size_t d) {
    dim = d;
    client_ids = ids;
    running_sum.assign(ids.size(), ParamVector(d, 0.0));
    rounds_participated.assign(ids.size(), 0);
}

int ContributionLedger::index_of(int client_id) const {
    for (std::size_t i = 0; i < client_ids.size(); ++i)
        if (client_ids[i] == client_id) return static_cast<int>(i);
    throw ContractError("ledger: unknown client id " + std::to_string(client_id));
}

ParamVector ContributionLedger::client_average(int client_id) const {
    const int i = index_of(client_id);
    if (rounds_participated[i] == 0)
        throw DataError("ledger: client " + std::to_string(client_id) +
                        " never participated");
    ParamVector avg = running_sum[i];
    const double inv = 1.0 / rounds_participated[i];
    for (double& v : avg) v *= inv;
    return avg;
}

void record_contribution(ContributionLedger& ledger, int client_id,
                         const ParamVector& client_params, const ParamVector& global,
                         int /*round*/) {
    if (client_params.size() != ledger.dim || global.size() != ledger.dim)
        throw ContractError("ledger: dimension mismatch");
    const int i = ledger.index_of(client_id);
    ParamVector& sum = ledger.running_sum[i];
    for (std::size_t p = 0; p < ledger.dim; ++p)
        sum[p] += client_params[p] - global[p];
    ++ledger.rounds_participated[i];
}

ParamVector local_train(const ParamVector& global, const ModelSpec& spec,
                        const ClientPartition& partition, const Dataset& dataset,
                        int local_epochs, double lr, int batch_size,
                        std::uint64_t seed) {
    if (partition.indices.empty())
        throw ContractError("local_train: empty partition for client " +
                            std::to_string(partition.client_id));
    ParamVector params = global;
    Rng rng(seed);
    std::vector<int> order = partition.indices;
    const int n = static_cast<int>(order.size());
    for (int epoch = 0; epoch < local_epochs; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < n; start += batch_size) {
            const int end = std::min(n, start + batch_size);
            const std::vector<int> slice(order.begin() + start, order.begin() + end);
            const Batch batch = gather(dataset, slice);
            const ParamVector grad = backward(params, spec, batch);
            sgd_step_inplace(params, grad, lr);
        }
    }
    return params;
}

namespace {

// Elementwise mean with a fixed accumulation order (client index ascending),
// parallel over elements only, so any thread count gives identical bits.
ParamVector mean_over(const std::vector<ParamVector>& vecs,
                      const std::vector<double>& weights) {
    const std::size_t dim = vecs[0].size();
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (!(wsum > 0.0)) throw ContractError("aggregate: weights sum to zero");
    const double inv = 1.0 / wsum;
    ParamVector out(dim);
    const long long sdim = static_cast<long long>(dim);
#pragma omp parallel for schedule(static) if (sdim > 4096)
    for (long long p = 0; p < sdim; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < vecs.size(); ++i) acc += weights[i] * vecs[i][p];
        out[p] = acc * inv;
    }
    return out;
}

} // namespace

ParamVector aggregate(const std::vector<ParamVector>& client_params) {
    if (client_params.empty()) throw ContractError("aggregate: empty client list");
    for (const auto& v : client_params)
        if (v.size() != client_params[0].size())
            throw ContractError("aggregate: dimension mismatch");
    return mean_over(client_params, std::vector<double>(client_params.size(), 1.0));
}

ParamVector aggregate_weighted(const std::vector<ParamVector>& client_params,
                               const std::vector<double>& weights) {
    if (client_params.empty()) throw ContractError("aggregate: empty client list");
    if (weights.size() != client_params.size())
        throw ContractError("aggregate: weight count mismatch");
    for (double w : weights)
        if (w < 0.0 || !std::isfinite(w))
            throw ContractError("aggregate: weights must be finite and nonnegative");
    return mean_over(client_params, weights);
}

FedResult run_federated(const FedConfig& cfg, const ModelSpec& spec,
                        const std::vector<ClientPartition>& partitions,
                        const Dataset& dataset, const ParamVector* initial) {
    cfg.validate();
    spec.validate();
    dataset.validate();
    if (partitions.empty()) throw ConfigError("fed: no clients");
    bool any_data = false;
    for (const auto& p : partitions) any_data |= !p.indices.empty();
    if (!any_data) throw ConfigError("fed: every client partition is empty");
    if (dataset.features() != spec.feature_count())
        throw ConfigError("fed: dataset shape does not match the model input");

    FedResult result;
    result.initial = initial ? *initial : init_model(spec);
    if (result.initial.size() != param_count(spec))
        throw ContractError("fed: initial parameter dimension mismatch");
    result.params = result.initial;

    std::vector<int> ids(partitions.size());
    for (std::size_t i = 0; i < partitions.size(); ++i) ids[i] = partitions[i].client_id;
    {
        std::vector<int> sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ConfigError("fed: duplicate client ids");
    }
    result.ledger.init(ids, result.params.size());
    result.store.dim = cfg.store_rounds ? result.params.size() : 0;

    // Fixed evaluation subset for the per-round loss estimate.
    std::vector<int> loss_idx;
    {
        const int cap = std::min(dataset.n, cfg.loss_sample_cap);
        std::vector<int> all(dataset.n);
        for (int i = 0; i < dataset.n; ++i) all[i] = i;
        Rng rng(mix_seed(cfg.seed, seed_tag::eval, 0x105eULL));
        rng.shuffle(all);
        loss_idx.assign(all.begin(), all.begin() + cap);
        std::sort(loss_idx.begin(), loss_idx.end());
    }
    const Batch loss_batch = gather(dataset, loss_idx);

    const int n_clients = static_cast<int>(partitions.size());
    for (int round = 0; round < cfg.rounds; ++round) {
        // Participant selection, by client id's position, seeded per round.
        std::vector<int> position(n_clients);
        for (int i = 0; i < n_clients; ++i) position[i] = i;
        if (cfg.participation < 1.0) {
            Rng rng(mix_seed(cfg.seed, seed_tag::fed, static_cast<std::uint64_t>(round)));
            rng.shuffle(position);
            const int k = std::clamp(
                static_cast<int>(std::lround(cfg.participation * n_clients)), 1, n_clients);
            position.resize(k);
            std::sort(position.begin(), position.end());
        }
        std::vector<int> active;
        for (int i : position)
            if (!partitions[i].indices.empty()) active.push_back(i);
        if (active.empty()) continue;
        // Canonical processing order: ascending client id. Aggregation then
        // accumulates in the same order however the caller arranged the
        // partitions, keeping results bit-identical under permutation.
        std::sort(active.begin(), active.end(), [&](int a, int b) {
            return partitions[a].client_id < partitions[b].client_id;
        });

        const int m = static_cast<int>(active.size());
        std::vector<ParamVector> client_params(m);
#pragma omp parallel for schedule(dynamic, 1) if (m > 1)
        for (int j = 0; j < m; ++j) {
            const ClientPartition& part = partitions[active[j]];
            client_params[j] = local_train(
                result.params, spec, part, dataset, cfg.local_epochs, cfg.lr,
                cfg.batch_size,
                mix_seed(cfg.seed, seed_tag::local,
                         static_cast<std::uint64_t>(part.client_id),
                         static_cast<std::uint64_t>(round)));
        }

        RoundRecord rec;
        rec.round = round;
        StoredRound stored;
        stored.round = round;
        for (int j = 0; j < m; ++j) {
            const int cid = partitions[active[j]].client_id;
            rec.participants.push_back(cid);
            record_contribution(result.ledger, cid, client_params[j], result.params, round);
            double norm2 = 0.0;
            for (std::size_t p = 0; p < result.params.size(); ++p) {
                const double u = client_params[j][p] - result.params[p];
                norm2 += u * u;
            }
            rec.update_norms.push_back(std::sqrt(norm2));
            if (cfg.store_rounds) {
                stored.participants.push_back(cid);
                ParamVector update(result.params.size());
                for (std::size_t p = 0; p < update.size(); ++p)
                    update[p] = client_params[j][p] - result.params[p];
                stored.updates.push_back(std::move(update));
            }
        }

        if (cfg.weighted_average) {
            std::vector<double> weights(m);
            for (int j = 0; j < m; ++j)
                weights[j] = static_cast<double>(partitions[active[j]].indices.size());
            result.params = aggregate_weighted(client_params, weights);
        } else {
            result.params = aggregate(client_params);
        }
        check_finite(result.params, "fed: global model");

        rec.global_loss = forward_loss(result.params, spec, loss_batch).loss;
        result.records.push_back(std::move(rec));
        if (cfg.store_rounds) result.store.rounds.push_back(std::move(stored));
    }
    return result;
}

} // namespace fedul
