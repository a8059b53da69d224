#include "fedul/partition.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedul/rng.hpp"

namespace fedul {

long long CountMatrix::total() const {
    long long t = 0;
    for (const auto& row : counts)
        for (long long v : row) t += v;
    return t;
}

std::vector<long long> CountMatrix::class_totals() const {
    std::vector<long long> t(classes(), 0);
    for (const auto& row : counts)
        for (std::size_t k = 0; k < row.size(); ++k) t[k] += row[k];
    return t;
}

void CountMatrix::validate() const {
    if (counts.empty()) throw DataError("count matrix: no clients");
    const std::size_t cols = counts[0].size();
    if (cols == 0) throw DataError("count matrix: no classes");
    for (const auto& row : counts) {
        if (row.size() != cols) throw DataError("count matrix: ragged rows");
        for (long long v : row)
            if (v < 0) throw DataError("count matrix: negative count");
    }
}

CountMatrix CountMatrix::from_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("count matrix: cannot open " + path);
    std::string line;
    if (!std::getline(f, line))
        throw DataError("count matrix: empty file " + path);
    // Header row holds the class ids; only its width matters.
    std::size_t cols = 0;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) ++cols;
    }
    if (cols == 0) throw DataError("count matrix: empty header in " + path);

    CountMatrix m;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<long long> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stoll(cell));
            } catch (const std::exception&) {
                throw DataError("count matrix: bad cell '" + cell + "' in " + path);
            }
        }
        if (row.size() != cols)
            throw DataError("count matrix: row width " + std::to_string(row.size()) +
                            " != header width " + std::to_string(cols) + " in " + path);
        m.counts.push_back(std::move(row));
    }
    m.validate();
    return m;
}

void CountMatrix::to_csv(const std::string& path) const {
    validate();
    std::ofstream f(path);
    if (!f) throw IoError("count matrix: cannot write " + path);
    for (int k = 0; k < classes(); ++k) f << (k ? "," : "") << k;
    f << "\n";
    for (const auto& row : counts) {
        for (std::size_t k = 0; k < row.size(); ++k) f << (k ? "," : "") << row[k];
        f << "\n";
    }
    if (!f) throw IoError("count matrix: write failed for " + path);
}

CountMatrix CountMatrix::scaled_to_total(long long new_total) const {
    validate();
    if (new_total < 0) throw ConfigError("count matrix: negative target total");
    const long long old_total = total();
    if (old_total == 0) throw DataError("count matrix: cannot scale an all-zero matrix");

    struct Cell {
        int row, col;
        double remainder;
    };
    CountMatrix out;
    out.counts.assign(clients(), std::vector<long long>(classes(), 0));
    std::vector<Cell> cells;
    long long assigned = 0;
    for (int r = 0; r < clients(); ++r)
        for (int k = 0; k < classes(); ++k) {
            const double exact =
                static_cast<double>(counts[r][k]) * new_total / old_total;
            const long long floor_v = static_cast<long long>(exact);
            out.counts[r][k] = floor_v;
            assigned += floor_v;
            cells.push_back({r, k, exact - floor_v});
        }
    // Largest remainders get the leftover units; ties break on (row, col)
    // for determinism.
    std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        return a.remainder > b.remainder;
    });
    for (long long i = 0; i < new_total - assigned; ++i) {
        const Cell& c = cells[static_cast<std::size_t>(i)];
        ++out.counts[c.row][c.col];
    }
    return out;
}

std::vector<ClientPartition> partition_by_counts(const Dataset& d, const CountMatrix& m,
                                                 std::uint64_t seed) {
    d.validate();
    m.validate();
    if (m.classes() != d.classes)
        throw DataError("partition: matrix has " + std::to_string(m.classes()) +
                        " classes, dataset has " + std::to_string(d.classes));

    std::vector<std::vector<int>> by_class(d.classes);
    for (int i = 0; i < d.n; ++i) by_class[d.y[i]].push_back(i);

    const std::vector<long long> need = m.class_totals();
    for (int k = 0; k < d.classes; ++k)
        if (need[k] > static_cast<long long>(by_class[k].size()))
            throw DataError("partition: class " + std::to_string(k) + " needs " +
                            std::to_string(need[k]) + " samples, only " +
                            std::to_string(by_class[k].size()) + " available (short " +
                            std::to_string(need[k] - (long long)by_class[k].size()) + ")");

    std::vector<ClientPartition> parts(m.clients());
    for (int r = 0; r < m.clients(); ++r) parts[r].client_id = r;

    for (int k = 0; k < d.classes; ++k) {
        Rng rng(mix_seed(seed, seed_tag::part, static_cast<std::uint64_t>(k)));
        rng.shuffle(by_class[k]);
        std::size_t at = 0;
        for (int r = 0; r < m.clients(); ++r)
            for (long long j = 0; j < m.counts[r][k]; ++j)
                parts[r].indices.push_back(by_class[k][at++]);
    }
    for (auto& p : parts) std::sort(p.indices.begin(), p.indices.end());
    return parts;
}

std::vector<ClientPartition> partition_dirichlet(const Dataset& d, int clients,
                                                 double alpha_dir, std::uint64_t seed) {
    d.validate();
    if (clients < 2) throw ConfigError("partition: need at least 2 clients");
    if (!(alpha_dir > 0.0)) throw ConfigError("partition: alpha must be positive");

    std::vector<ClientPartition> parts(clients);
    for (int r = 0; r < clients; ++r) parts[r].client_id = r;

    std::vector<std::vector<int>> by_class(d.classes);
    for (int i = 0; i < d.n; ++i) by_class[d.y[i]].push_back(i);

    for (int k = 0; k < d.classes; ++k) {
        Rng rng(mix_seed(seed, seed_tag::part, 0xd1a1ULL, static_cast<std::uint64_t>(k)));
        const std::vector<double> p = rng.dirichlet(alpha_dir, clients);
        rng.shuffle(by_class[k]);
        const int avail = static_cast<int>(by_class[k].size());

        // Largest-remainder quotas so every sample lands somewhere.
        std::vector<int> quota(clients);
        std::vector<std::pair<double, int>> rem(clients);
        int assigned = 0;
        for (int r = 0; r < clients; ++r) {
            const double exact = p[r] * avail;
            quota[r] = static_cast<int>(exact);
            assigned += quota[r];
            rem[r] = {exact - quota[r], r};
        }
        std::stable_sort(rem.begin(), rem.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int i = 0; i < avail - assigned; ++i) ++quota[rem[i].second];

        std::size_t at = 0;
        for (int r = 0; r < clients; ++r)
            for (int j = 0; j < quota[r]; ++j) parts[r].indices.push_back(by_class[k][at++]);
    }
    for (auto& p : parts) std::sort(p.indices.begin(), p.indices.end());
    return parts;
}

void apply_patch(std::vector<double>& image, int h, int w, int c, const PatchSpec& patch) {
    if (patch.rows < 1 || patch.cols < 1 || patch.rows > h || patch.cols > w)
        throw ConfigError("backdoor: patch " + std::to_string(patch.rows) + "x" +
                          std::to_string(patch.cols) + " does not fit " +
                          std::to_string(h) + "x" + std::to_string(w) + " images");
    if (image.size() != static_cast<std::size_t>(h) * w * c)
        throw ContractError("backdoor: image buffer size mismatch");
    for (int ch = 0; ch < c; ++ch)
        for (int i = h - patch.rows; i < h; ++i)
            for (int j = w - patch.cols; j < w; ++j)
                image[(static_cast<std::size_t>(ch) * h + i) * w + j] = patch.intensity;
}

std::pair<ClientPartition, Dataset> inject_backdoor(const ClientPartition& part,
                                                    const Dataset& d, int count,
                                                    const PatchSpec& patch,
                                                    int target_label, std::uint64_t seed) {
    d.validate();
    if (count < 0) throw ConfigError("backdoor: negative count");
    if (count > static_cast<int>(part.indices.size()))
        throw ConfigError("backdoor: count " + std::to_string(count) +
                          " exceeds client partition size " +
                          std::to_string(part.indices.size()));
    if (target_label < 0 || target_label >= d.classes)
        throw ConfigError("backdoor: target label out of range");

    ClientPartition out_part = part;
    Dataset out = d;
    if (count == 0) return {out_part, out};

    std::vector<int> pool = part.indices;
    Rng rng(mix_seed(seed, seed_tag::poison, static_cast<std::uint64_t>(part.client_id)));
    rng.shuffle(pool);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());

    const int feats = d.features();
    std::vector<double> image(feats);
    for (int idx : pool) {
        auto row = out.x.begin() + static_cast<std::size_t>(idx) * feats;
        std::copy_n(row, feats, image.begin());
        apply_patch(image, d.h, d.w, d.c, patch);
        std::copy_n(image.begin(), feats, row);
        out.y[idx] = target_label;
    }
    out_part.poisoned = pool;
    return {out_part, out};
}

} // namespace fedul
