#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedul/fed.hpp"
#include "fedul/partition.hpp"

namespace fedul {

// Metrics for one model. Zero totals mean the metric was not evaluated;
// miaAccuracy stays negative until computed.
struct EvalReport {
    std::size_t rset_correct = 0;
    std::size_t rset_total = 0;
    std::size_t uset_correct = 0;
    std::size_t uset_total = 0;
    std::size_t test_correct = 0;
    std::size_t test_total = 0;
    std::size_t asr_hits = 0;
    std::size_t asr_total = 0;
    double mia_accuracy = -1.0;
    double runtime_seconds = 0.0;

    double acc_rset() const { return rset_total ? double(rset_correct) / rset_total : 0.0; }
    double acc_uset() const { return uset_total ? double(uset_correct) / uset_total : 0.0; }
    double acc_test() const { return test_total ? double(test_correct) / test_total : 0.0; }
    double asr() const { return asr_total ? double(asr_hits) / asr_total : 0.0; }
};

// Plain top-1 accuracy on a batch.
double accuracy(const ParamVector& params, const ModelSpec& spec, const Batch& batch);

// R-Set / U-Set accuracy over a partitioned training set. The U-Set is the
// union of the forget clients' samples, the R-Set everything the retained
// clients hold. Both sides must be non-empty.
EvalReport accuracy_rset_uset(const ParamVector& params, const ModelSpec& spec,
                              const Dataset& d,
                              const std::vector<ClientPartition>& partitions,
                              const std::vector<int>& forget_clients);

// Fraction of patched test images classified as the target label. Images
// whose true label already is the target are excluded.
struct AsrCounts {
    std::size_t hits = 0;
    std::size_t total = 0;

    double rate() const { return total ? double(hits) / total : 0.0; }
};
AsrCounts backdoor_asr(const ParamVector& params, const ModelSpec& spec,
                       const Dataset& test, const PatchSpec& patch, int target_label);

// Cross-entropy of each selected sample, in `indices` order.
std::vector<double> per_sample_losses(const ParamVector& params, const ModelSpec& spec,
                                      const Dataset& d, const std::vector<int>& indices);

// Loss-threshold membership inference. Both loss pools are balanced to the
// smaller side by seeded subsampling, then split in half: the first half
// fits a threshold and direction maximising balanced accuracy, the second
// half reports it. Needs at least 20 losses per side.
struct MiaResult {
    double accuracy = 0.0;       // balanced accuracy on the held-out half
    double train_accuracy = 0.0; // balanced accuracy on the fitting half
    double threshold = 0.0;
    bool member_below = true;    // member iff loss < threshold
    std::size_t per_side = 0;    // pool size per side after balancing
};
MiaResult mia_accuracy_from_losses(std::vector<double> member_losses,
                                   std::vector<double> nonmember_losses,
                                   std::uint64_t seed);

// Convenience wrapper: losses of the member/nonmember samples under the
// model, then the threshold attack above.
MiaResult mia_loss_threshold(const ParamVector& params, const ModelSpec& spec,
                             const Dataset& member_d,
                             const std::vector<int>& member_indices,
                             const Dataset& nonmember_d,
                             const std::vector<int>& nonmember_indices,
                             std::uint64_t seed);

} // namespace fedul
