#include "fedul/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fedul/kernels.hpp"
#include "fedul/rng.hpp"

namespace fedul {

SelectionRule selection_rule_from_string(const std::string& s) {
    if (s == "ratio-cutoff") return SelectionRule::RatioCutoff;
    if (s == "beta-cutoff") return SelectionRule::BetaCutoff;
    throw ConfigError("unlearn: unknown selection rule '" + s + "' (ratio-cutoff|beta-cutoff)");
}

std::string selection_rule_to_string(SelectionRule r) {
    return r == SelectionRule::RatioCutoff ? "ratio-cutoff" : "beta-cutoff";
}

Method method_from_string(const std::string& s) {
    if (s == "conda") return Method::Conda;
    if (s == "retrain") return Method::Retrain;
    if (s == "neggrad") return Method::NegGrad;
    if (s == "pga") return Method::Pga;
    if (s == "federaser") return Method::FedEraser;
    throw ConfigError("unknown unlearning method '" + s +
                      "' (conda|retrain|neggrad|pga|federaser)");
}

std::string method_to_string(Method m) {
    switch (m) {
        case Method::Conda: return "conda";
        case Method::Retrain: return "retrain";
        case Method::NegGrad: return "neggrad";
        case Method::Pga: return "pga";
        case Method::FedEraser: return "federaser";
    }
    throw ContractError("method_to_string: bad enum value");
}

void UnlearnConfig::validate(const std::vector<int>& all_client_ids) const {
    if (forget_clients.empty())
        throw ConfigError("unlearn: forgetClients must not be empty");
    const std::set<int> all(all_client_ids.begin(), all_client_ids.end());
    std::set<int> forget;
    for (int id : forget_clients) {
        if (!all.count(id))
            throw ConfigError("unlearn: forget client " + std::to_string(id) +
                              " is not a known client");
        if (!forget.insert(id).second)
            throw ConfigError("unlearn: duplicate forget client " + std::to_string(id));
    }
    if (forget.size() >= all.size())
        throw ConfigError("unlearn: cannot forget every client");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("unlearn: lambda must be finite and >= 0");
    if (!(alpha >= 0.0))
        throw ConfigError("unlearn: alpha must be >= 0");
    if (!(upper_bound > 0.0) || !std::isfinite(upper_bound))
        throw ConfigError("unlearn: upperBound must be finite and > 0");
    if (!(epsilon > 0.0))
        throw ConfigError("unlearn: epsilon must be > 0");
    if (neggrad_steps < 0 || pga_steps < 0 || pga_finetune_rounds < 0)
        throw ConfigError("unlearn: step counts must be >= 0");
    if (!(pga_radius > 0.0))
        throw ConfigError("unlearn: pga radius must be > 0");
    if (federaser_calibration_epochs < 1)
        throw ConfigError("unlearn: calibration epochs must be >= 1");
}

const std::vector<double>& DampeningReport::ratio_edges() {
    static const std::vector<double> edges = {1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0};
    return edges;
}

ParamVector mean_contributions(const ContributionLedger& ledger,
                               const std::vector<int>& client_ids) {
    if (client_ids.empty()) throw ContractError("mean_contributions: empty client set");
    ParamVector mean(ledger.dim, 0.0);
    for (int id : client_ids) {
        const ParamVector avg = ledger.client_average(id); // validates participation
        for (std::size_t p = 0; p < ledger.dim; ++p) mean[p] += avg[p];
    }
    const double inv = 1.0 / client_ids.size();
    for (double& v : mean) v *= inv;
    return mean;
}

std::pair<ParamVector, DampeningReport> conda_unlearn(const ParamVector& global,
                                                      const ContributionLedger& ledger,
                                                      const UnlearnConfig& cfg) {
    cfg.validate(ledger.client_ids);
    if (global.size() != ledger.dim)
        throw ContractError("conda: model dimension does not match the ledger");

    const ParamVector phi_all = mean_contributions(ledger, ledger.client_ids);
    const ParamVector phi_forget = mean_contributions(ledger, cfg.forget_clients);
    check_finite(phi_all, "conda: ledger mean");
    check_finite(phi_forget, "conda: forget mean");

    const std::size_t dim = global.size();
    ParamVector out(dim);
    std::vector<double> beta(dim);
    std::vector<unsigned char> selected(dim);
    kernels::dampen(dim, global.data(), phi_all.data(), phi_forget.data(), cfg.lambda,
                    cfg.alpha, cfg.upper_bound, cfg.epsilon,
                    cfg.rule == SelectionRule::BetaCutoff, out.data(), beta.data(),
                    selected.data());

    DampeningReport report;
    report.dim = dim;
    const auto& edges = DampeningReport::ratio_edges();
    report.ratio_hist.assign(edges.size() + 1, 0);
    double beta_sum = 0.0;
    for (std::size_t p = 0; p < dim; ++p) {
        if (selected[p]) {
            ++report.selected_count;
            beta_sum += beta[p];
        }
        const double ratio = (std::fabs(phi_all[p]) + cfg.epsilon) /
                             (std::fabs(phi_forget[p]) + cfg.epsilon);
        std::size_t bin = 0;
        while (bin < edges.size() && ratio >= edges[bin]) ++bin;
        ++report.ratio_hist[bin];
    }
    report.mean_beta =
        report.selected_count ? beta_sum / report.selected_count : 0.0;
    return {std::move(out), report};
}

namespace {

std::vector<ClientPartition> retained_partitions(
    const std::vector<ClientPartition>& partitions, const std::vector<int>& forget) {
    const std::set<int> drop(forget.begin(), forget.end());
    std::vector<ClientPartition> kept;
    for (const auto& p : partitions)
        if (!drop.count(p.client_id)) kept.push_back(p);
    if (kept.empty()) throw ConfigError("unlearn: no clients left after forgetting");
    return kept;
}

std::vector<int> all_ids(const std::vector<ClientPartition>& partitions) {
    std::vector<int> ids;
    for (const auto& p : partitions) ids.push_back(p.client_id);
    return ids;
}

} // namespace

ParamVector retrain_baseline(const FedConfig& cfg, const ModelSpec& spec,
                             const std::vector<ClientPartition>& partitions,
                             const Dataset& dataset,
                             const std::vector<int>& forget_clients) {
    UnlearnConfig probe;
    probe.forget_clients = forget_clients;
    probe.validate(all_ids(partitions));

    const auto kept = retained_partitions(partitions, forget_clients);
    ModelSpec fresh = spec;
    fresh.init_seed = mix_seed(spec.init_seed, seed_tag::retrain);
    FedConfig run = cfg;
    run.seed = mix_seed(cfg.seed, seed_tag::retrain);
    run.store_rounds = false;
    return run_federated(run, fresh, kept, dataset).params;
}

ParamVector neggrad_baseline(const ParamVector& global, const FedConfig& cfg,
                             const ModelSpec& spec,
                             const std::vector<ClientPartition>& partitions,
                             const Dataset& dataset,
                             const std::vector<int>& forget_clients, int steps,
                             double lr) {
    UnlearnConfig probe;
    probe.forget_clients = forget_clients;
    probe.validate(all_ids(partitions));
    if (steps == 0) return global;

    const std::set<int> forget(forget_clients.begin(), forget_clients.end());
    ParamVector params = global;
    std::vector<const ClientPartition*> active;
    for (const auto& p : partitions)
        if (!p.indices.empty()) active.push_back(&p);

    for (int round = 0; round < steps; ++round) {
        std::vector<ParamVector> client_params(active.size());
        for (std::size_t j = 0; j < active.size(); ++j) {
            const ClientPartition& part = *active[j];
            const double rate = forget.count(part.client_id) ? -lr : lr;
            client_params[j] = local_train(
                params, spec, part, dataset, cfg.local_epochs, rate, cfg.batch_size,
                mix_seed(cfg.seed, seed_tag::neggrad,
                         static_cast<std::uint64_t>(part.client_id),
                         static_cast<std::uint64_t>(round)));
        }
        params = aggregate(client_params);
        check_finite(params, "neggrad: global model");
    }
    return params;
}

ParamVector pga_baseline(const ParamVector& global, const ParamVector& reference,
                         const FedConfig& cfg, const ModelSpec& spec,
                         const std::vector<ClientPartition>& partitions,
                         const Dataset& dataset, const std::vector<int>& forget_clients,
                         double radius, int steps, double lr, int finetune_rounds) {
    UnlearnConfig probe;
    probe.forget_clients = forget_clients;
    probe.validate(all_ids(partitions));
    if (!(radius > 0.0)) throw ConfigError("pga: radius must be > 0");
    if (reference.size() != global.size())
        throw ContractError("pga: reference dimension mismatch");

    // Pool the forget clients' samples for the ascent phase.
    std::vector<int> forget_idx;
    const std::set<int> forget(forget_clients.begin(), forget_clients.end());
    for (const auto& p : partitions)
        if (forget.count(p.client_id))
            forget_idx.insert(forget_idx.end(), p.indices.begin(), p.indices.end());
    if (forget_idx.empty()) throw ConfigError("pga: forget clients hold no samples");
    std::sort(forget_idx.begin(), forget_idx.end());
    const Batch forget_batch = gather(dataset, forget_idx);

    ParamVector params = global;
    for (int step = 0; step < steps; ++step) {
        const ParamVector grad = backward(params, spec, forget_batch);
        sgd_step_inplace(params, grad, -lr); // ascent
        double norm2 = 0.0;
        for (std::size_t p = 0; p < params.size(); ++p) {
            const double off = params[p] - reference[p];
            norm2 += off * off;
        }
        const double norm = std::sqrt(norm2);
        if (norm > radius) {
            const double scale = radius / norm;
            for (std::size_t p = 0; p < params.size(); ++p)
                params[p] = reference[p] + scale * (params[p] - reference[p]);
        }
        check_finite(params, "pga: ascent model");
    }

    if (finetune_rounds > 0) {
        FedConfig ft = cfg;
        ft.rounds = finetune_rounds;
        ft.seed = mix_seed(cfg.seed, seed_tag::pga);
        ft.store_rounds = false;
        const auto kept = retained_partitions(partitions, forget_clients);
        params = run_federated(ft, spec, kept, dataset, &params).params;
    }
    return params;
}

ParamVector federaser_baseline(const ParamVector& initial, const RoundStore& store,
                               const FedConfig& cfg, const ModelSpec& spec,
                               const std::vector<ClientPartition>& partitions,
                               const Dataset& dataset,
                               const std::vector<int>& forget_clients,
                               int calibration_epochs) {
    UnlearnConfig probe;
    probe.forget_clients = forget_clients;
    probe.validate(all_ids(partitions));
    if (store.rounds.empty())
        throw ConfigError("federaser: no per-round update store; rerun training "
                          "with storeRounds enabled");
    if (store.dim != initial.size())
        throw ContractError("federaser: store dimension mismatch");
    if (calibration_epochs < 1)
        throw ConfigError("federaser: calibration epochs must be >= 1");

    const std::set<int> forget(forget_clients.begin(), forget_clients.end());
    int max_id = 0;
    for (const auto& p : partitions) max_id = std::max(max_id, p.client_id);
    std::vector<const ClientPartition*> by_id(max_id + 1, nullptr);
    for (const auto& p : partitions) by_id[p.client_id] = &p;

    // Keep the original per-(client, round) seed streams so that full-length
    // calibration reproduces an exact retained-client retrain.
    const bool exact = calibration_epochs >= cfg.local_epochs;
    const int epochs = std::min(calibration_epochs, cfg.local_epochs);

    ParamVector params = initial;
    for (const StoredRound& sr : store.rounds) {
        std::vector<ParamVector> updates;
        for (std::size_t j = 0; j < sr.participants.size(); ++j) {
            const int cid = sr.participants[j];
            if (forget.count(cid)) continue;
            if (cid > max_id || by_id[cid] == nullptr)
                throw ContractError("federaser: stored round references unknown client " +
                                    std::to_string(cid));
            const ClientPartition& part = *by_id[cid];
            const ParamVector calibrated = local_train(
                params, spec, part, dataset, epochs, cfg.lr, cfg.batch_size,
                mix_seed(cfg.seed, seed_tag::local, static_cast<std::uint64_t>(cid),
                         static_cast<std::uint64_t>(sr.round)));
            ParamVector update(params.size());
            if (exact) {
                for (std::size_t p = 0; p < update.size(); ++p)
                    update[p] = calibrated[p] - params[p];
            } else {
                // ||calibrated step|| in the stored direction.
                const ParamVector& stored = sr.updates[j];
                double cal2 = 0.0, sto2 = 0.0;
                for (std::size_t p = 0; p < update.size(); ++p) {
                    const double c = calibrated[p] - params[p];
                    cal2 += c * c;
                    sto2 += stored[p] * stored[p];
                }
                const double sto = std::sqrt(sto2);
                const double scale = sto > 0.0 ? std::sqrt(cal2) / sto : 0.0;
                for (std::size_t p = 0; p < update.size(); ++p)
                    update[p] = scale * stored[p];
            }
            updates.push_back(std::move(update));
        }
        if (updates.empty()) continue;
        for (std::size_t p = 0; p < params.size(); ++p) {
            double acc = 0.0;
            for (const auto& u : updates) acc += u[p];
            params[p] += acc / updates.size();
        }
        check_finite(params, "federaser: global model");
    }
    return params;
}

} // namespace fedul
