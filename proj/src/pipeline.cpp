#include "fedul/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fedul/rng.hpp"
#include "fedul/serialize.hpp"

namespace fedul {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}

    double seconds() const {
        const auto dt = std::chrono::steady_clock::now() - t0_;
        return std::chrono::duration<double>(dt).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

// Blob test sets need draws disjoint from the training set, so shift the
// seed; the class means are seed-independent, only the noise differs.
constexpr std::uint64_t kTestSalt = 0x7e57ULL;

std::pair<Dataset, Dataset> build_datasets(const DataConfig& d, std::uint64_t seed,
                                           const std::vector<long long>* class_totals) {
    if (d.source == "synth-blobs") {
        int per_class = d.blob_per_class_train;
        if (class_totals)
            for (long long t : *class_totals)
                per_class = std::max(per_class, static_cast<int>(t));
        Dataset train = synth_blobs(d.blob_classes, per_class, d.blob_features, seed);
        Dataset test = synth_blobs(d.blob_classes, d.blob_per_class_test,
                                   d.blob_features, mix_seed(seed, kTestSalt));
        test.split = "test";
        return {std::move(train), std::move(test)};
    }
    if (d.source == "synth-images") {
        std::vector<int> per_class(d.image_classes, d.image_per_class_train);
        if (class_totals) {
            if (static_cast<int>(class_totals->size()) != d.image_classes)
                throw ConfigError(
                    "config: counts matrix classes do not match data.imageClasses");
            for (std::size_t k = 0; k < per_class.size(); ++k)
                per_class[k] = static_cast<int>((*class_totals)[k]);
        }
        // Labels are corrupted after partitioning (see materialize), so the
        // per-class bookkeeping of the split stays exact.
        SynthImageConfig gen = d.image;
        gen.label_noise = 0.0;
        Dataset train = synth_images(per_class, gen, seed, "train");
        Dataset test = synth_images(
            std::vector<int>(d.image_classes, d.image_per_class_test), gen, seed,
            "test");
        return {std::move(train), std::move(test)};
    }
    // idx
    Dataset train = load_idx(d.train_images, d.train_labels);
    Dataset test = load_idx(d.test_images, d.test_labels);
    test.split = "test";
    if (test.classes > train.classes)
        throw DataError("test labels exceed the training label range");
    test.classes = train.classes;
    if (test.features() != train.features())
        throw DataError("train and test image shapes disagree");
    return {std::move(train), std::move(test)};
}

} // namespace

Problem materialize(const RunConfig& cfg) {
    cfg.validate();

    CountMatrix matrix;
    bool have_matrix = false;
    if (!cfg.data.counts_csv.empty()) {
        matrix = CountMatrix::from_csv(cfg.data.counts_csv);
        if (cfg.data.total_samples > 0)
            matrix = matrix.scaled_to_total(cfg.data.total_samples);
        if (matrix.clients() != cfg.data.clients)
            throw ConfigError("config: counts matrix has " +
                              std::to_string(matrix.clients()) + " clients, expected " +
                              std::to_string(cfg.data.clients));
        have_matrix = true;
    }

    Problem p;
    const std::vector<long long> totals = have_matrix ? matrix.class_totals()
                                                      : std::vector<long long>{};
    auto [train, test] = build_datasets(cfg.data, cfg.seed, have_matrix ? &totals : nullptr);
    p.train = std::move(train);
    p.test = std::move(test);

    if (have_matrix) {
        if (matrix.classes() != p.train.classes)
            throw ConfigError("config: counts matrix has " +
                              std::to_string(matrix.classes()) + " classes, dataset has " +
                              std::to_string(p.train.classes));
        p.partitions = partition_by_counts(p.train, matrix, cfg.seed);
    } else {
        p.partitions = partition_dirichlet(p.train, cfg.data.clients,
                                           cfg.data.dirichlet_alpha, cfg.seed);
    }

    if (cfg.data.source == "synth-images" && cfg.data.image.label_noise > 0.0) {
        corrupt_labels(p.train, cfg.data.image.label_noise,
                       mix_seed(cfg.seed, 0));
        corrupt_labels(p.test, cfg.data.image.label_noise,
                       mix_seed(cfg.seed, 1));
    }

    p.spec.arch = arch_from_string(cfg.model.arch);
    p.spec.input_h = p.train.h;
    p.spec.input_w = p.train.w;
    p.spec.input_c = p.train.c;
    p.spec.classes = p.train.classes;
    p.spec.hidden = cfg.model.hidden;
    p.spec.init_seed = cfg.seed;
    p.spec.validate();

    if (cfg.backdoor.count > 0) {
        if (cfg.backdoor.target >= p.train.classes)
            throw ConfigError("config: backdoor.target exceeds the class count");
        auto part = std::find_if(p.partitions.begin(), p.partitions.end(),
                                 [&](const ClientPartition& c) {
                                     return c.client_id == cfg.backdoor.client;
                                 });
        if (part == p.partitions.end())
            throw ConfigError("config: backdoor.client has no partition");
        auto [poisoned_part, poisoned_train] =
            inject_backdoor(*part, p.train, cfg.backdoor.count, cfg.backdoor.patch,
                            cfg.backdoor.target, cfg.seed);
        *part = std::move(poisoned_part);
        p.train = std::move(poisoned_train);
        p.poisoned = true;
    }
    return p;
}

ArtifactPaths artifact_paths(const std::string& out_dir) {
    const fs::path dir(out_dir);
    ArtifactPaths p;
    p.model = (dir / "model.cnda").string();
    p.initial = (dir / "initial.cnda").string();
    p.ledger = (dir / "ledger.cnda").string();
    p.store = (dir / "rounds.cnda").string();
    p.meta = (dir / "meta.json").string();
    p.rounds = (dir / "rounds.jsonl").string();
    return p;
}

std::string train_fingerprint(const RunConfig& cfg) {
    RunConfig stripped = cfg;
    stripped.unlearn = UnlearnConfig{};
    stripped.unlearn.forget_clients = {0};
    stripped.method = Method::Conda;
    return config_hash(stripped);
}

FedResult train_to_dir(const RunConfig& cfg, const Problem& problem,
                       const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);

    const Stopwatch watch;
    FedResult fed = run_federated(cfg.train, problem.spec, problem.partitions,
                                  problem.train);
    const double seconds = watch.seconds();

    const ArtifactPaths paths = artifact_paths(out_dir);
    save_model(paths.model, fed.params, problem.spec);
    save_model(paths.initial, fed.initial, problem.spec);
    save_ledger(paths.ledger, fed.ledger);
    if (cfg.train.store_rounds) save_store(paths.store, fed.store);

    // One line per round keeps long runs greppable.
    fs::remove(paths.rounds, ec);
    for (const auto& rec : fed.records) {
        json line;
        line["round"] = rec.round;
        line["loss"] = rec.global_loss;
        line["participants"] = rec.participants.size();
        append_line(paths.rounds, line.dump());
    }

    json meta;
    meta["config"] = json::parse(canonical_json(cfg));
    meta["configHash"] = config_hash(cfg);
    meta["trainFingerprint"] = train_fingerprint(cfg);
    meta["trainSeconds"] = seconds;
    meta["paramCount"] = fed.params.size();
    meta["rounds"] = fed.records.size();
    if (!fed.records.empty()) meta["finalLoss"] = fed.records.back().global_loss;
    std::ofstream out(paths.meta);
    if (!out) throw IoError("cannot open for writing: " + paths.meta);
    out << meta.dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("write failed: " + paths.meta);

    return fed;
}

LoadedRun load_run(const RunConfig& cfg, const std::string& dir) {
    const ArtifactPaths paths = artifact_paths(dir);
    if (!fs::exists(paths.meta))
        throw ArtifactError("no run artifacts in " + dir + " (missing meta.json)");

    std::ifstream in(paths.meta);
    json meta;
    try {
        in >> meta;
    } catch (const json::exception&) {
        throw DataError("unreadable meta.json in " + dir);
    }
    const std::string stored = meta.value("trainFingerprint", "");
    if (stored != train_fingerprint(cfg))
        throw ConfigError("artifacts in " + dir +
                          " were trained with a different configuration");

    LoadedRun run;
    const LoadedModel model = load_model(paths.model);
    const LoadedModel initial = load_model(paths.initial);
    run.params = model.params;
    run.initial = initial.params;
    run.ledger = load_ledger(paths.ledger);
    if (fs::exists(paths.store)) run.store = load_store(paths.store);

    if (run.params.size() != run.ledger.dim || run.initial.size() != run.params.size())
        throw DataError("artifact dimensions disagree in " + dir);
    return run;
}

UnlearnOutcome run_unlearn_method(const RunConfig& cfg, const Problem& problem,
                                  const FedResult& fed, Method method) {
    UnlearnOutcome out;
    const std::vector<int>& forget = cfg.unlearn.forget_clients;
    const Stopwatch watch;
    switch (method) {
        case Method::Conda: {
            auto [params, report] = conda_unlearn(fed.params, fed.ledger, cfg.unlearn);
            out.params = std::move(params);
            out.dampening = report;
            break;
        }
        case Method::Retrain:
            out.params = retrain_baseline(cfg.train, problem.spec, problem.partitions,
                                          problem.train, forget);
            break;
        case Method::NegGrad:
            out.params = neggrad_baseline(fed.params, cfg.train, problem.spec,
                                          problem.partitions, problem.train, forget,
                                          cfg.unlearn.neggrad_steps,
                                          cfg.unlearn.neggrad_lr);
            break;
        case Method::Pga:
            out.params = pga_baseline(fed.params, fed.params, cfg.train, problem.spec,
                                      problem.partitions, problem.train, forget,
                                      cfg.unlearn.pga_radius, cfg.unlearn.pga_steps,
                                      cfg.unlearn.pga_lr,
                                      cfg.unlearn.pga_finetune_rounds);
            break;
        case Method::FedEraser:
            out.params = federaser_baseline(fed.initial, fed.store, cfg.train,
                                            problem.spec, problem.partitions,
                                            problem.train, forget,
                                            cfg.unlearn.federaser_calibration_epochs);
            break;
    }
    out.seconds = watch.seconds();
    return out;
}

EvalReport evaluate_model(const RunConfig& cfg, const Problem& problem,
                          const ParamVector& params) {
    // Accuracy and membership inference look at the forgotten clients'
    // ordinary samples; backdoored samples carry a planted label and are
    // judged by the attack success rate instead.
    std::vector<ClientPartition> clean_parts = problem.partitions;
    std::vector<int> members;
    const std::set<int> forget(cfg.unlearn.forget_clients.begin(),
                               cfg.unlearn.forget_clients.end());
    for (auto& part : clean_parts) {
        if (!forget.count(part.client_id)) continue;
        if (!part.poisoned.empty()) {
            const std::set<int> bad(part.poisoned.begin(), part.poisoned.end());
            std::vector<int> kept;
            for (int idx : part.indices)
                if (!bad.count(idx)) kept.push_back(idx);
            part.indices = std::move(kept);
            part.poisoned.clear();
        }
        members.insert(members.end(), part.indices.begin(), part.indices.end());
    }

    EvalReport report = accuracy_rset_uset(params, problem.spec, problem.train,
                                           clean_parts, cfg.unlearn.forget_clients);

    const Batch test = full_batch(problem.test);
    const std::vector<int> preds = predict(params, problem.spec, test);
    report.test_total = static_cast<std::size_t>(test.n);
    for (int i = 0; i < test.n; ++i) report.test_correct += preds[i] == test.y[i];

    if (problem.poisoned) {
        const AsrCounts asr = backdoor_asr(params, problem.spec, problem.test,
                                           cfg.backdoor.patch, cfg.backdoor.target);
        report.asr_hits = asr.hits;
        report.asr_total = asr.total;
    }

    std::vector<int> nonmembers(problem.test.n);
    for (int i = 0; i < problem.test.n; ++i) nonmembers[i] = i;
    if (members.size() >= 20 && nonmembers.size() >= 20)
        report.mia_accuracy =
            mia_loss_threshold(params, problem.spec, problem.train, members,
                               problem.test, nonmembers, cfg.seed)
                .accuracy;
    return report;
}

} // namespace fedul
