#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedul/fed.hpp"

namespace fedul {

enum class SelectionRule {
    RatioCutoff, // dampen where ratio < alpha
    BetaCutoff,  // dampen where min(lambda*ratio, upper) < alpha*ratio
};

SelectionRule selection_rule_from_string(const std::string& s); // "ratio-cutoff" | "beta-cutoff"
std::string selection_rule_to_string(SelectionRule r);

enum class Method { Conda, Retrain, NegGrad, Pga, FedEraser };

// "conda" | "retrain" | "neggrad" | "pga" | "federaser"
Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

struct UnlearnConfig {
    double lambda = 1.0;       // dampening constant
    double alpha = 0.4;        // cutoff ratio
    double upper_bound = 1.0;  // cap on the dampening factor
    double epsilon = 1e-12;    // guard added to both sides of the ratio
    std::vector<int> forget_clients;
    SelectionRule rule = SelectionRule::RatioCutoff;

    // Baseline knobs.
    int neggrad_steps = 5;
    double neggrad_lr = 1e-3;
    double pga_radius = 3.0;
    int pga_steps = 10;
    double pga_lr = 1e-2;
    int pga_finetune_rounds = 2;
    int federaser_calibration_epochs = 1;

    // Throws ConfigError unless forget_clients is a nonempty proper subset
    // of the given ids and the numeric fields are sane.
    void validate(const std::vector<int>& all_client_ids) const;
};

struct DampeningReport {
    std::size_t dim = 0;
    std::size_t selected_count = 0;
    double mean_beta = 0.0; // over selected parameters; 0 when none selected
    // Histogram of the dampening ratio over fixed edges (see ratio_edges()).
    std::vector<std::size_t> ratio_hist;

    static const std::vector<double>& ratio_edges();
};

// Elementwise mean over the given clients of their ledger averages.
ParamVector mean_contributions(const ContributionLedger& ledger,
                               const std::vector<int>& client_ids);

// Contribution dampening: compares the all-client mean contribution against
// the forget-client mean, scales parameters where the forget share
// dominates. Pure function of (params, ledger, cfg); never touches data.
std::pair<ParamVector, DampeningReport> conda_unlearn(const ParamVector& global,
                                                      const ContributionLedger& ledger,
                                                      const UnlearnConfig& cfg);

// Gold standard: fresh model trained on the retained clients only, with a
// seed stream disjoint from the original run.
ParamVector retrain_baseline(const FedConfig& cfg, const ModelSpec& spec,
                             const std::vector<ClientPartition>& partitions,
                             const Dataset& dataset,
                             const std::vector<int>& forget_clients);

// Federated rounds where retained clients descend and forget clients ascend.
ParamVector neggrad_baseline(const ParamVector& global, const FedConfig& cfg,
                             const ModelSpec& spec,
                             const std::vector<ClientPartition>& partitions,
                             const Dataset& dataset,
                             const std::vector<int>& forget_clients, int steps,
                             double lr);

// Gradient ascent on the forget data, projected to an L2 ball around the
// reference model, then a few rounds of federated fine-tuning on the
// retained clients.
ParamVector pga_baseline(const ParamVector& global, const ParamVector& reference,
                         const FedConfig& cfg, const ModelSpec& spec,
                         const std::vector<ClientPartition>& partitions,
                         const Dataset& dataset, const std::vector<int>& forget_clients,
                         double radius, int steps, double lr, int finetune_rounds);

// Round-by-round replay over retained clients: a short calibration step
// supplies the update norm, the stored update supplies the direction. With
// calibration_epochs >= the original local epoch count the calibrated update
// is used as-is, which makes the replay an exact retained-client retrain
// from the original initialization.
ParamVector federaser_baseline(const ParamVector& initial, const RoundStore& store,
                               const FedConfig& cfg, const ModelSpec& spec,
                               const std::vector<ClientPartition>& partitions,
                               const Dataset& dataset,
                               const std::vector<int>& forget_clients,
                               int calibration_epochs);

} // namespace fedul
