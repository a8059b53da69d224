#include "fedul/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fedul/rng.hpp"

namespace fedul {

namespace {

constexpr std::size_t kEvalChunk = 1024;

// Runs f over gathered chunks so huge index lists never materialise as one
// batch.
template <typename F>
void for_chunks(const Dataset& d, const std::vector<int>& indices, F&& f) {
    for (std::size_t s = 0; s < indices.size(); s += kEvalChunk) {
        const std::size_t e = std::min(indices.size(), s + kEvalChunk);
        const std::vector<int> slice(indices.begin() + s, indices.begin() + e);
        f(gather(d, slice));
    }
}

std::size_t count_correct(const ParamVector& params, const ModelSpec& spec,
                          const Dataset& d, const std::vector<int>& indices) {
    std::size_t correct = 0;
    for_chunks(d, indices, [&](const Batch& b) {
        const std::vector<int> preds = predict(params, spec, b);
        for (int i = 0; i < b.n; ++i) correct += preds[i] == b.y[i];
    });
    return correct;
}

double balanced_accuracy(const std::vector<double>& member,
                         const std::vector<double>& nonmember, std::size_t from,
                         std::size_t to, double threshold, bool member_below) {
    std::size_t tp = 0, tn = 0;
    for (std::size_t i = from; i < to; ++i) {
        const bool m_hit = member_below ? member[i] < threshold : member[i] >= threshold;
        const bool n_hit = member_below ? nonmember[i] >= threshold : nonmember[i] < threshold;
        tp += m_hit;
        tn += n_hit;
    }
    const double per_side = static_cast<double>(to - from);
    return 0.5 * (tp / per_side + tn / per_side);
}

} // namespace

double accuracy(const ParamVector& params, const ModelSpec& spec, const Batch& batch) {
    if (batch.n == 0) throw DataError("accuracy: empty batch");
    const std::vector<int> preds = predict(params, spec, batch);
    std::size_t correct = 0;
    for (int i = 0; i < batch.n; ++i) correct += preds[i] == batch.y[i];
    return static_cast<double>(correct) / batch.n;
}

EvalReport accuracy_rset_uset(const ParamVector& params, const ModelSpec& spec,
                              const Dataset& d,
                              const std::vector<ClientPartition>& partitions,
                              const std::vector<int>& forget_clients) {
    const std::set<int> forget(forget_clients.begin(), forget_clients.end());
    std::set<int> known;
    for (const auto& p : partitions) known.insert(p.client_id);
    for (int id : forget)
        if (!known.count(id))
            throw ConfigError("eval: forget client " + std::to_string(id) +
                              " is not in the partition set");

    std::vector<int> rset, uset;
    for (const auto& p : partitions) {
        auto& side = forget.count(p.client_id) ? uset : rset;
        side.insert(side.end(), p.indices.begin(), p.indices.end());
    }
    if (uset.empty()) throw DataError("eval: U-Set is empty");
    if (rset.empty()) throw DataError("eval: R-Set is empty");

    EvalReport report;
    report.rset_total = rset.size();
    report.uset_total = uset.size();
    report.rset_correct = count_correct(params, spec, d, rset);
    report.uset_correct = count_correct(params, spec, d, uset);
    return report;
}

AsrCounts backdoor_asr(const ParamVector& params, const ModelSpec& spec,
                       const Dataset& test, const PatchSpec& patch, int target_label) {
    test.validate();
    if (target_label < 0 || target_label >= test.classes)
        throw ConfigError("eval: backdoor target label out of range");

    const int features = test.features();
    AsrCounts out;
    Batch chunk;
    chunk.features = features;
    std::vector<double> image(features);

    auto flush = [&]() {
        if (chunk.n == 0) return;
        const std::vector<int> preds = predict(params, spec, chunk);
        for (int p : preds) out.hits += p == target_label;
        chunk.x.clear();
        chunk.y.clear();
        chunk.n = 0;
    };

    for (int i = 0; i < test.n; ++i) {
        if (test.y[i] == target_label) continue;
        ++out.total;
        std::copy_n(test.x.begin() + std::size_t(i) * features, features, image.begin());
        apply_patch(image, test.h, test.w, test.c, patch);
        chunk.x.insert(chunk.x.end(), image.begin(), image.end());
        chunk.y.push_back(test.y[i]);
        ++chunk.n;
        if (chunk.n == static_cast<int>(kEvalChunk)) flush();
    }
    flush();
    return out;
}

std::vector<double> per_sample_losses(const ParamVector& params, const ModelSpec& spec,
                                      const Dataset& d, const std::vector<int>& indices) {
    std::vector<double> losses;
    losses.reserve(indices.size());
    for_chunks(d, indices, [&](const Batch& b) {
        const ForwardResult fr = forward_loss(params, spec, b);
        losses.insert(losses.end(), fr.per_sample_loss.begin(), fr.per_sample_loss.end());
    });
    return losses;
}

MiaResult mia_accuracy_from_losses(std::vector<double> member_losses,
                                   std::vector<double> nonmember_losses,
                                   std::uint64_t seed) {
    if (member_losses.size() < 20 || nonmember_losses.size() < 20)
        throw DataError("mia: need at least 20 losses per side, got " +
                        std::to_string(member_losses.size()) + " members and " +
                        std::to_string(nonmember_losses.size()) + " nonmembers");
    for (auto* pool : {&member_losses, &nonmember_losses})
        for (double& v : *pool) {
            if (std::isnan(v)) throw DataError("mia: NaN loss");
            v = std::min(v, std::numeric_limits<double>::max());
        }

    Rng mrng(mix_seed(seed, seed_tag::eval, 0x6d6961ULL, 0));
    Rng nrng(mix_seed(seed, seed_tag::eval, 0x6d6961ULL, 1));
    mrng.shuffle(member_losses);
    nrng.shuffle(nonmember_losses);
    const std::size_t k = std::min(member_losses.size(), nonmember_losses.size());
    member_losses.resize(k);
    nonmember_losses.resize(k);
    const std::size_t half = k / 2;

    // Candidate thresholds from the fitting half only.
    std::vector<double> fit;
    fit.insert(fit.end(), member_losses.begin(), member_losses.begin() + half);
    fit.insert(fit.end(), nonmember_losses.begin(), nonmember_losses.begin() + half);
    std::sort(fit.begin(), fit.end());
    std::vector<double> candidates;
    candidates.push_back(fit.front() - 1.0);
    for (std::size_t i = 0; i + 1 < fit.size(); ++i)
        if (fit[i] < fit[i + 1]) candidates.push_back(0.5 * (fit[i] + fit[i + 1]));
    candidates.push_back(fit.back() + 1.0);

    MiaResult best;
    best.train_accuracy = -1.0;
    for (double t : candidates) {
        for (bool below : {true, false}) {
            const double bal =
                balanced_accuracy(member_losses, nonmember_losses, 0, half, t, below);
            if (bal > best.train_accuracy) {
                best.train_accuracy = bal;
                best.threshold = t;
                best.member_below = below;
            }
        }
    }

    best.per_side = k;
    best.accuracy = balanced_accuracy(member_losses, nonmember_losses, half, k,
                                      best.threshold, best.member_below);
    return best;
}

MiaResult mia_loss_threshold(const ParamVector& params, const ModelSpec& spec,
                             const Dataset& member_d,
                             const std::vector<int>& member_indices,
                             const Dataset& nonmember_d,
                             const std::vector<int>& nonmember_indices,
                             std::uint64_t seed) {
    return mia_accuracy_from_losses(
        per_sample_losses(params, spec, member_d, member_indices),
        per_sample_losses(params, spec, nonmember_d, nonmember_indices), seed);
}

} // namespace fedul
