#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "fedul/pipeline.hpp"
#include "fedul/serialize.hpp"

using namespace fedul;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    TempDir() {
        path = fs::temp_directory_path() /
               ("fedul_pipe_" + std::to_string(getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string sub(const std::string& name) const { return (path / name).string(); }

    static int counter;
};

int TempDir::counter = 0;

// Small, fast instance shared by most cases here.
RunConfig small_cfg() {
    return parse_config(R"({
        "seed": 11,
        "data": {"source": "synth-blobs", "clients": 3, "blobClasses": 3,
                 "blobFeatures": 6, "blobPerClassTrain": 30, "blobPerClassTest": 20,
                 "dirichletAlpha": 100.0},
        "model": {"arch": "logistic-regression"},
        "train": {"rounds": 4, "localEpochs": 1, "lr": 0.1, "batchSize": 16,
                  "storeRounds": true},
        "unlearn": {"forgetClients": [1]}
    })");
}

} // namespace

TEST_CASE("materialize is deterministic and covers the dataset") {
    const RunConfig cfg = small_cfg();
    const Problem a = materialize(cfg);
    const Problem b = materialize(cfg);
    CHECK(a.train.x == b.train.x);
    CHECK(a.train.y == b.train.y);
    CHECK(a.test.x == b.test.x);
    REQUIRE(a.partitions.size() == 3);
    for (std::size_t i = 0; i < a.partitions.size(); ++i)
        CHECK(a.partitions[i].indices == b.partitions[i].indices);

    std::size_t covered = 0;
    for (const auto& p : a.partitions) covered += p.indices.size();
    CHECK(covered == static_cast<std::size_t>(a.train.n));

    // Blob test draws must differ from the training draws.
    CHECK(a.test.x != std::vector<double>(a.train.x.begin(),
                                          a.train.x.begin() + a.test.x.size()));
    CHECK_FALSE(a.poisoned);
    CHECK(a.spec.classes == 3);
}

TEST_CASE("materialize with a counts matrix and a backdoor") {
    TempDir tmp;
    const std::string csv = tmp.sub("counts.csv");
    {
        CountMatrix m;
        m.counts = {{40, 0, 10}, {10, 50, 0}, {0, 0, 40}};
        m.to_csv(csv);
    }
    RunConfig cfg = small_cfg();
    cfg.data.counts_csv = csv;
    cfg.backdoor.count = 15;
    cfg.backdoor.client = 0;
    cfg.backdoor.target = 1;
    cfg.backdoor.patch.rows = 1;
    cfg.backdoor.patch.cols = 2;

    const Problem p = materialize(cfg);
    CHECK(p.poisoned);
    REQUIRE(p.partitions[0].poisoned.size() == 15);
    CHECK(p.partitions[0].indices.size() == 50);
    CHECK(p.partitions[1].indices.size() == 60);
    for (int idx : p.partitions[0].poisoned) CHECK(p.train.y[idx] == 1);

    // Matrix shape mismatches are named config errors.
    RunConfig bad = cfg;
    bad.data.clients = 4;
    bad.unlearn.forget_clients = {1};
    CHECK_THROWS_AS(materialize(bad), ConfigError);
}

TEST_CASE("train_to_dir writes the artifact set and unlearning reloads it") {
    TempDir tmp;
    const RunConfig cfg = small_cfg();
    const Problem problem = materialize(cfg);
    const std::string dir = tmp.sub("run");
    const FedResult fed = train_to_dir(cfg, problem, dir);

    const ArtifactPaths paths = artifact_paths(dir);
    CHECK(fs::exists(paths.model));
    CHECK(fs::exists(paths.initial));
    CHECK(fs::exists(paths.ledger));
    CHECK(fs::exists(paths.store)); // storeRounds was on
    CHECK(fs::exists(paths.meta));
    CHECK(fs::exists(paths.rounds));

    std::ifstream rounds(paths.rounds);
    std::string line;
    int lines = 0;
    while (std::getline(rounds, line)) ++lines;
    CHECK(lines == cfg.train.rounds);

    const LoadedRun run = load_run(cfg, dir);
    CHECK(run.params == fed.params);   // bitwise through disk
    CHECK(run.initial == fed.initial);
    CHECK(run.ledger.running_sum == fed.ledger.running_sum);
    CHECK(run.store.rounds.size() == fed.store.rounds.size());

    // A config with different training settings must be refused.
    RunConfig other = cfg;
    other.train.rounds = 5;
    CHECK_THROWS_AS(load_run(other, dir), ConfigError);

    // Different unlearning settings are fine: same training artifacts.
    RunConfig tweaked = cfg;
    tweaked.unlearn.alpha = 0.01;
    tweaked.method = Method::Retrain;
    CHECK_NOTHROW(load_run(tweaked, dir));
    CHECK(train_fingerprint(tweaked) == train_fingerprint(cfg));
    CHECK(config_hash(tweaked) != config_hash(cfg));

    CHECK_THROWS_AS(load_run(cfg, tmp.sub("void")), ArtifactError);
}

TEST_CASE("every method dispatches and reports runtime") {
    const RunConfig cfg = small_cfg();
    const Problem problem = materialize(cfg);
    const FedResult fed = run_federated(cfg.train, problem.spec, problem.partitions,
                                        problem.train);

    for (Method m : {Method::Conda, Method::Retrain, Method::NegGrad, Method::Pga,
                     Method::FedEraser}) {
        const UnlearnOutcome out = run_unlearn_method(cfg, problem, fed, m);
        REQUIRE(out.params.size() == fed.params.size());
        check_finite(out.params, "unlearned params");
        CHECK(out.seconds >= 0.0);
        if (m == Method::Conda)
            CHECK(out.dampening.dim == fed.params.size());
        else
            CHECK(out.dampening.dim == 0);
    }

    // Same method, same inputs, same parameters.
    const UnlearnOutcome a = run_unlearn_method(cfg, problem, fed, Method::Retrain);
    const UnlearnOutcome b = run_unlearn_method(cfg, problem, fed, Method::Retrain);
    CHECK(a.params == b.params);
}

TEST_CASE("evaluation fills the report and skips thin MIA pools") {
    const RunConfig cfg = small_cfg();
    const Problem problem = materialize(cfg);
    const FedResult fed = run_federated(cfg.train, problem.spec, problem.partitions,
                                        problem.train);

    const EvalReport r = evaluate_model(cfg, problem, fed.params);
    CHECK(r.rset_total + r.uset_total == static_cast<std::size_t>(problem.train.n));
    CHECK(r.test_total == static_cast<std::size_t>(problem.test.n));
    CHECK(r.acc_test() > 0.8);
    CHECK(r.asr_total == 0); // no backdoor in this config
    CHECK(r.mia_accuracy >= 0.0); // pools are large enough here
    CHECK(r.mia_accuracy <= 1.0);

    // Reports are deterministic.
    const EvalReport r2 = evaluate_model(cfg, problem, fed.params);
    CHECK(r.mia_accuracy == r2.mia_accuracy);
    CHECK(r.rset_correct == r2.rset_correct);
}

TEST_CASE("poisoned members are excluded from accuracy and mia pools") {
    TempDir tmp;
    RunConfig cfg = small_cfg();
    cfg.backdoor.count = 25;
    cfg.backdoor.client = 1; // the forget client
    cfg.backdoor.target = 0;
    cfg.backdoor.patch.rows = 1;
    cfg.backdoor.patch.cols = 2;

    const Problem problem = materialize(cfg);
    const FedResult fed = run_federated(cfg.train, problem.spec, problem.partitions,
                                        problem.train);
    const EvalReport r = evaluate_model(cfg, problem, fed.params);

    const std::size_t forget_size = problem.partitions[1].indices.size();
    CHECK(r.uset_total == forget_size - 25);
    CHECK(r.asr_total > 0);
    CHECK(r.asr_hits <= r.asr_total);
}
