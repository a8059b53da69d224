#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedul/dataset.hpp"

namespace fedul {

struct ClientPartition {
    int client_id = 0;
    std::vector<int> indices;  // rows of the dataset owned by this client
    std::vector<int> poisoned; // subset of indices carrying a backdoor trigger
};

// rows = clients, cols = classes, entries = sample counts.
struct CountMatrix {
    std::vector<std::vector<long long>> counts;

    int clients() const { return static_cast<int>(counts.size()); }
    int classes() const { return counts.empty() ? 0 : static_cast<int>(counts[0].size()); }
    long long total() const;
    std::vector<long long> class_totals() const;
    void validate() const;

    // CSV with a header row of class ids and one row per client.
    static CountMatrix from_csv(const std::string& path);
    void to_csv(const std::string& path) const;

    // Proportional rescale to a new grand total using largest remainders,
    // preserving the non-IID shape at reduced scale.
    CountMatrix scaled_to_total(long long new_total) const;
};

// Draw counts[c][k] samples of class k for client c, without replacement,
// deterministically per seed. Throws DataError naming the class and
// shortfall if counts exceed availability.
std::vector<ClientPartition> partition_by_counts(const Dataset& d, const CountMatrix& m,
                                                 std::uint64_t seed);

// Label-skewed split: per class, client proportions ~ Dirichlet(alpha_dir).
// Every sample is assigned exactly once.
std::vector<ClientPartition> partition_dirichlet(const Dataset& d, int clients,
                                                 double alpha_dir, std::uint64_t seed);

// Trigger patch anchored at the bottom-right corner.
struct PatchSpec {
    int rows = 5;
    int cols = 8;
    double intensity = 1.0;

    int pixels() const { return rows * cols; }
};

void apply_patch(std::vector<double>& image, int h, int w, int c, const PatchSpec& patch);

// Returns a modified copy of the dataset plus the partition with
// poisonedIndices filled: `count` of the client's samples get the patch and
// the target label. Inputs are not mutated.
std::pair<ClientPartition, Dataset> inject_backdoor(const ClientPartition& part,
                                                    const Dataset& d, int count,
                                                    const PatchSpec& patch,
                                                    int target_label, std::uint64_t seed);

} // namespace fedul
