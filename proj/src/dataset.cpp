#include "fedul/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fedul/rng.hpp"

namespace fedul {

void Dataset::validate() const {
    if (n <= 0) throw DataError("dataset: empty");
    if (classes < 1) throw DataError("dataset: classes must be positive");
    if (x.size() != static_cast<std::size_t>(n) * features() ||
        y.size() != static_cast<std::size_t>(n))
        throw DataError("dataset: inconsistent storage sizes");
    for (int label : y)
        if (label < 0 || label >= classes)
            throw DataError("dataset: label " + std::to_string(label) +
                            " outside [0," + std::to_string(classes) + ")");
    for (double v : x)
        if (!std::isfinite(v)) throw DataError("dataset: non-finite input value");
}

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw DataError("idx: truncated file " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw IoError("idx: cannot open " + images_path);
    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw IoError("idx: cannot open " + labels_path);

    const std::uint32_t magic_i = read_be32(fi, images_path);
    if (magic_i != 0x00000803u)
        throw DataError("idx: bad magic in " + images_path + " (expected 0x803)");
    const std::uint32_t n_images = read_be32(fi, images_path);
    const std::uint32_t rows = read_be32(fi, images_path);
    const std::uint32_t cols = read_be32(fi, images_path);

    const std::uint32_t magic_l = read_be32(fl, labels_path);
    if (magic_l != 0x00000801u)
        throw DataError("idx: bad magic in " + labels_path + " (expected 0x801)");
    const std::uint32_t n_labels = read_be32(fl, labels_path);

    if (n_images != n_labels)
        throw DataError("idx: count mismatch, " + std::to_string(n_images) +
                        " images vs " + std::to_string(n_labels) + " labels");

    Dataset d;
    d.n = static_cast<int>(n_images);
    d.h = static_cast<int>(rows);
    d.w = static_cast<int>(cols);
    d.c = 1;

    const std::size_t pixels = static_cast<std::size_t>(n_images) * rows * cols;
    std::vector<unsigned char> raw(pixels);
    if (!fi.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels)))
        throw DataError("idx: truncated file " + images_path);
    std::vector<unsigned char> lab(n_labels);
    if (!fl.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(n_labels)))
        throw DataError("idx: truncated file " + labels_path);

    d.x.resize(pixels);
    for (std::size_t i = 0; i < pixels; ++i) d.x[i] = raw[i] / 255.0;
    d.y.resize(n_labels);
    int max_label = 0;
    for (std::size_t i = 0; i < n_labels; ++i) {
        d.y[i] = lab[i];
        max_label = std::max(max_label, d.y[i]);
    }
    d.classes = max_label + 1;
    d.validate();
    return d;
}

void write_idx(const Dataset& d, const std::string& images_path,
               const std::string& labels_path) {
    d.validate();
    if (d.c != 1) throw DataError("idx: only single-channel images supported");
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw IoError("idx: cannot write " + images_path);
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw IoError("idx: cannot write " + labels_path);

    write_be32(fi, 0x00000803u);
    write_be32(fi, static_cast<std::uint32_t>(d.n));
    write_be32(fi, static_cast<std::uint32_t>(d.h));
    write_be32(fi, static_cast<std::uint32_t>(d.w));
    std::vector<unsigned char> raw(d.x.size());
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        const double v = std::clamp(d.x[i], 0.0, 1.0);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    fi.write(reinterpret_cast<const char*>(raw.data()),
             static_cast<std::streamsize>(raw.size()));

    write_be32(fl, 0x00000801u);
    write_be32(fl, static_cast<std::uint32_t>(d.n));
    std::vector<unsigned char> lab(d.y.size());
    for (std::size_t i = 0; i < d.y.size(); ++i)
        lab[i] = static_cast<unsigned char>(d.y[i]);
    fl.write(reinterpret_cast<const char*>(lab.data()),
             static_cast<std::streamsize>(lab.size()));
    if (!fi || !fl) throw IoError("idx: write failed");
}

Dataset synth_blobs(int class_count, int per_class, int features, std::uint64_t seed) {
    if (class_count < 1 || per_class < 1 || features < 1)
        throw ConfigError("synth_blobs: all arguments must be positive");
    Dataset d;
    d.n = class_count * per_class;
    d.h = 1;
    d.w = features;
    d.c = 1;
    d.classes = class_count;
    d.x.resize(static_cast<std::size_t>(d.n) * features);
    d.y.resize(d.n);

    const double scale = 4.0; // simplex vertex distance in units of the unit sigma
    Rng rng(mix_seed(seed, seed_tag::data));
    std::size_t at = 0;
    for (int k = 0; k < class_count; ++k) {
        const int axis = k % features;
        for (int s = 0; s < per_class; ++s) {
            const int idx = k * per_class + s;
            d.y[idx] = k;
            for (int j = 0; j < features; ++j)
                d.x[at++] = (j == axis ? scale : 0.0) + rng.normal();
        }
    }
    return d;
}

namespace {

// Bilinear upsample of a coarse grid to h x w.
std::vector<double> upsample(const std::vector<double>& grid, int g, int h, int w) {
    std::vector<double> img(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i) {
        const double u = h == 1 ? 0.0 : double(i) * (g - 1) / (h - 1);
        const int u0 = std::min(g - 2, static_cast<int>(u));
        const double fu = u - u0;
        for (int j = 0; j < w; ++j) {
            const double v = w == 1 ? 0.0 : double(j) * (g - 1) / (w - 1);
            const int v0 = std::min(g - 2, static_cast<int>(v));
            const double fv = v - v0;
            const double a = grid[u0 * g + v0], b = grid[u0 * g + v0 + 1];
            const double c = grid[(u0 + 1) * g + v0], dd = grid[(u0 + 1) * g + v0 + 1];
            img[static_cast<std::size_t>(i) * w + j] =
                (1 - fu) * ((1 - fv) * a + fv * b) + fu * ((1 - fv) * c + fv * dd);
        }
    }
    return img;
}

} // namespace

Dataset synth_images(const std::vector<int>& per_class, const SynthImageConfig& cfg,
                     std::uint64_t seed, const std::string& split) {
    if (per_class.empty()) throw ConfigError("synth_images: no classes given");
    for (int count : per_class)
        if (count < 0) throw ConfigError("synth_images: negative class count");
    if (cfg.h < 2 || cfg.w < 2 || cfg.grid < 2)
        throw ConfigError("synth_images: degenerate geometry");
    if (cfg.similarity < 0.0 || cfg.similarity >= 1.0)
        throw ConfigError("synth_images: similarity must be in [0,1)");
    if (cfg.label_noise < 0.0 || cfg.label_noise >= 1.0)
        throw ConfigError("synth_images: label_noise must be in [0,1)");

    const int classes = static_cast<int>(per_class.size());
    const int g = cfg.grid;

    // Templates depend on the seed only, so train and test share them.
    Rng base_rng(mix_seed(seed, seed_tag::data, 0xba5eULL));
    std::vector<double> base(static_cast<std::size_t>(g) * g);
    for (auto& v : base) v = base_rng.uniform();

    std::vector<std::vector<double>> templates(classes);
    for (int k = 0; k < classes; ++k) {
        Rng trng(mix_seed(seed, seed_tag::data, 0x7e3aULL, static_cast<std::uint64_t>(k)));
        std::vector<double> grid(static_cast<std::size_t>(g) * g);
        for (std::size_t i = 0; i < grid.size(); ++i)
            grid[i] = cfg.similarity * base[i] + (1.0 - cfg.similarity) * trng.uniform();
        templates[k] = upsample(grid, g, cfg.h, cfg.w);
    }

    Dataset d;
    d.h = cfg.h;
    d.w = cfg.w;
    d.c = 1;
    d.classes = classes;
    d.split = split;
    d.n = 0;
    for (int count : per_class) d.n += count;
    if (d.n <= 0) throw ConfigError("synth_images: zero total samples");
    d.x.reserve(static_cast<std::size_t>(d.n) * d.features());
    d.y.reserve(d.n);

    const std::uint64_t split_tag = split == "train" ? 0 : 1;
    Rng srng(mix_seed(seed, seed_tag::data, 0x5a3eULL, split_tag));
    for (int k = 0; k < classes; ++k) {
        for (int s = 0; s < per_class[k]; ++s) {
            const double gain = 1.0 + cfg.jitter * (2.0 * srng.uniform() - 1.0);
            for (int p = 0; p < d.features(); ++p) {
                const double v = gain * templates[k][p] + cfg.noise * srng.normal();
                d.x.push_back(std::clamp(v, 0.0, 1.0));
            }
            int label = k;
            const double flip = srng.uniform();
            if (cfg.label_noise > 0.0 && flip < cfg.label_noise && classes > 1) {
                label = static_cast<int>(srng.below(static_cast<std::uint64_t>(classes - 1)));
                if (label >= k) ++label;
            }
            d.y.push_back(label);
        }
    }
    d.validate();
    return d;
}

void corrupt_labels(Dataset& d, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ConfigError("corrupt_labels: fraction must be in [0,1)");
    if (fraction == 0.0 || d.classes < 2) return;
    const int flips = static_cast<int>(std::llround(fraction * d.n));
    if (flips == 0) return;

    std::vector<int> order(d.n);
    for (int i = 0; i < d.n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, seed_tag::data, 0xf11bULL));
    rng.shuffle(order);
    for (int i = 0; i < flips; ++i) {
        const int idx = order[i];
        const int offset = 1 + static_cast<int>(rng.below(d.classes - 1));
        d.y[idx] = (d.y[idx] + offset) % d.classes;
    }
}

Batch gather(const Dataset& d, const std::vector<int>& indices) {
    if (indices.empty()) throw ContractError("gather: empty index set");
    Batch b;
    b.n = static_cast<int>(indices.size());
    b.features = d.features();
    b.x.resize(static_cast<std::size_t>(b.n) * b.features);
    b.y.resize(b.n);
    for (int i = 0; i < b.n; ++i) {
        const int src = indices[i];
        if (src < 0 || src >= d.n)
            throw ContractError("gather: index " + std::to_string(src) + " out of range");
        std::copy_n(d.x.begin() + static_cast<std::size_t>(src) * b.features, b.features,
                    b.x.begin() + static_cast<std::size_t>(i) * b.features);
        b.y[i] = d.y[src];
    }
    return b;
}

Batch full_batch(const Dataset& d) {
    Batch b;
    b.n = d.n;
    b.features = d.features();
    b.x = d.x;
    b.y = d.y;
    return b;
}

} // namespace fedul
