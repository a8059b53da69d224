#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedul/rng.hpp"
#include "fedul/unlearn.hpp"

using namespace fedul;

namespace {

ContributionLedger ledger_from_averages(const std::vector<ParamVector>& avgs) {
    ContributionLedger ledger;
    std::vector<int> ids;
    for (std::size_t i = 0; i < avgs.size(); ++i) ids.push_back(static_cast<int>(i));
    ledger.init(ids, avgs[0].size());
    for (std::size_t i = 0; i < avgs.size(); ++i) {
        ledger.running_sum[i] = avgs[i];
        ledger.rounds_participated[i] = 1;
    }
    return ledger;
}

UnlearnConfig basic_cfg(std::vector<int> forget) {
    UnlearnConfig cfg;
    cfg.forget_clients = std::move(forget);
    return cfg;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

ModelSpec blob_spec(int features, int classes, std::uint64_t seed) {
    ModelSpec s;
    s.arch = Arch::LogisticRegression;
    s.input_h = 1;
    s.input_w = features;
    s.classes = classes;
    s.init_seed = seed;
    return s;
}

double accuracy(const ParamVector& params, const ModelSpec& spec, const Batch& b) {
    const std::vector<int> preds = predict(params, spec, b);
    int correct = 0;
    for (int i = 0; i < b.n; ++i) correct += preds[i] == b.y[i];
    return static_cast<double>(correct) / b.n;
}

} // namespace

TEST_CASE("unlearn config validation") {
    const std::vector<int> ids = {0, 1, 2};
    UnlearnConfig cfg = basic_cfg({1});
    CHECK_NOTHROW(cfg.validate(ids));

    CHECK_THROWS_AS(basic_cfg({}).validate(ids), ConfigError);
    CHECK_THROWS_AS(basic_cfg({0, 1, 2}).validate(ids), ConfigError);
    CHECK_THROWS_AS(basic_cfg({5}).validate(ids), ConfigError);
    CHECK_THROWS_AS(basic_cfg({1, 1}).validate(ids), ConfigError);

    cfg = basic_cfg({1});
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(cfg.validate(ids), ConfigError);
    cfg = basic_cfg({1});
    cfg.upper_bound = 0.0;
    CHECK_THROWS_AS(cfg.validate(ids), ConfigError);
    cfg = basic_cfg({1});
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(cfg.validate(ids), ConfigError);

    CHECK(selection_rule_from_string("ratio-cutoff") == SelectionRule::RatioCutoff);
    CHECK(selection_rule_from_string("beta-cutoff") == SelectionRule::BetaCutoff);
    CHECK_THROWS_AS(selection_rule_from_string("other"), ConfigError);
}

TEST_CASE("mean contributions arithmetic") {
    const auto ledger = ledger_from_averages({{1.0, -1.0}, {3.0, 1.0}});
    const ParamVector single = mean_contributions(ledger, {1});
    CHECK(single[0] == doctest::Approx(3.0));
    CHECK(single[1] == doctest::Approx(1.0));

    const ParamVector both = mean_contributions(ledger, {0, 1});
    CHECK(both[0] == doctest::Approx(2.0));
    CHECK(both[1] == doctest::Approx(0.0));
}

TEST_CASE("dampening hand example") {
    // client 1 is forgotten; all-client mean [2,1], forget mean [1,4]
    const auto ledger = ledger_from_averages({{3.0, -2.0}, {1.0, 4.0}});
    UnlearnConfig cfg = basic_cfg({1});
    cfg.lambda = 1.0;
    cfg.alpha = 0.5;
    cfg.upper_bound = 1.0;

    const ParamVector theta = {10.0, 10.0};
    const auto [out, report] = conda_unlearn(theta, ledger, cfg);
    CHECK(out[0] == 10.0);
    CHECK(out[1] == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(report.selected_count == 1);
    CHECK(report.dim == 2);
    CHECK(report.mean_beta == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("alpha zero selects nothing") {
    const auto ledger = ledger_from_averages({{0.5, 2.0, -1.0}, {1.5, -2.0, 0.5}});
    UnlearnConfig cfg = basic_cfg({0});
    cfg.alpha = 0.0;
    const ParamVector theta = {1.0, -2.0, 3.0};
    const auto [out, report] = conda_unlearn(theta, ledger, cfg);
    CHECK(out == theta);
    CHECK(report.selected_count == 0);
    CHECK(report.mean_beta == 0.0);
}

TEST_CASE("an average forget client leaves the model intact") {
    // Every client shares the same contribution, so all ratios are 1.
    // Four clients keep the mean exact in binary.
    const ParamVector avg = {0.5, -0.3, 0.1};
    const auto ledger = ledger_from_averages({avg, avg, avg, avg});
    UnlearnConfig cfg = basic_cfg({2});
    cfg.alpha = 2.0;
    cfg.lambda = 1.0;
    cfg.upper_bound = 1.0;
    const ParamVector theta = {4.0, 5.0, -6.0};
    const auto [out, report] = conda_unlearn(theta, ledger, cfg);
    CHECK(out == theta); // beta = 1 exactly
    CHECK(report.selected_count == 3);
    CHECK(report.mean_beta == doctest::Approx(1.0));
}

TEST_CASE("lambda zero with unbounded alpha zeroes the model") {
    const auto ledger = ledger_from_averages({{0.5, -2.0}, {1.0, 0.25}});
    UnlearnConfig cfg = basic_cfg({1});
    cfg.lambda = 0.0;
    cfg.alpha = std::numeric_limits<double>::infinity();
    const ParamVector theta = {7.0, -8.0};
    const auto [out, report] = conda_unlearn(theta, ledger, cfg);
    CHECK(out == ParamVector{0.0, 0.0});
    CHECK(report.selected_count == 2);
    CHECK(report.mean_beta == 0.0);
}

TEST_CASE("zero forget contribution leaves the model unchanged") {
    const auto ledger = ledger_from_averages({{0.5, -2.0, 0.0}, {0.0, 0.0, 0.0}});
    UnlearnConfig cfg = basic_cfg({1});
    cfg.alpha = 0.9; // every ratio is >= 1 when the forget mean is zero
    const ParamVector theta = {1.0, 2.0, 3.0};
    const auto [out, report] = conda_unlearn(theta, ledger, cfg);
    CHECK(out == theta);
    CHECK(report.selected_count == 0);
}

TEST_CASE("dampening matches a brute-force oracle on random instances") {
    Rng rng(20250814);
    for (int trial = 0; trial < 1000; ++trial) {
        const int dim = 1 + static_cast<int>(rng.below(20));
        const int clients = 2 + static_cast<int>(rng.below(4));
        const int n_forget = 1 + static_cast<int>(rng.below(clients - 1));

        ContributionLedger ledger;
        std::vector<int> ids;
        for (int i = 0; i < clients; ++i) ids.push_back(i);
        ledger.init(ids, dim);
        for (int i = 0; i < clients; ++i) {
            ledger.rounds_participated[i] = 1 + static_cast<int>(rng.below(3));
            for (int p = 0; p < dim; ++p)
                ledger.running_sum[i][p] =
                    rng.uniform(-2.0, 2.0) * ledger.rounds_participated[i];
            if (rng.below(8) == 0)
                std::fill(ledger.running_sum[i].begin(), ledger.running_sum[i].end(), 0.0);
        }

        std::vector<int> pool = ids;
        rng.shuffle(pool);
        std::vector<int> forget(pool.begin(), pool.begin() + n_forget);
        std::sort(forget.begin(), forget.end());

        UnlearnConfig cfg = basic_cfg(forget);
        cfg.lambda = rng.uniform(0.0, 3.0);
        cfg.alpha = rng.uniform(0.0, 2.0);
        cfg.upper_bound = rng.uniform(0.05, 2.0);
        cfg.rule = rng.below(2) ? SelectionRule::BetaCutoff : SelectionRule::RatioCutoff;

        ParamVector theta(dim);
        for (auto& v : theta) v = rng.uniform(-5.0, 5.0);

        const auto [out, report] = conda_unlearn(theta, ledger, cfg);

        // Brute-force elementwise recomputation straight from the sums.
        std::size_t expect_selected = 0;
        for (int p = 0; p < dim; ++p) {
            double pa = 0.0;
            for (int i = 0; i < clients; ++i)
                pa += ledger.running_sum[i][p] / ledger.rounds_participated[i];
            pa /= clients;
            double pf = 0.0;
            for (int id : forget)
                pf += ledger.running_sum[id][p] / ledger.rounds_participated[id];
            pf /= static_cast<double>(forget.size());

            const double ratio = (std::fabs(pa) + cfg.epsilon) / (std::fabs(pf) + cfg.epsilon);
            const double beta = std::min(cfg.lambda * ratio, cfg.upper_bound);
            const bool sel = cfg.rule == SelectionRule::BetaCutoff
                                 ? beta < cfg.alpha * ratio
                                 : ratio < cfg.alpha;
            const double expect = sel ? beta * theta[p] : theta[p];
            if (sel) {
                ++expect_selected;
                CHECK(beta >= 0.0);
                CHECK(beta <= cfg.upper_bound);
            }
            REQUIRE(std::fabs(out[p] - expect) <= 1e-12);
            if (!sel) REQUIRE(out[p] == theta[p]); // untouched bits
        }
        REQUIRE(report.selected_count == expect_selected);
    }
}

TEST_CASE("selection count is monotone in alpha") {
    Rng rng(99);
    const int dim = 50;
    ContributionLedger ledger;
    ledger.init({0, 1, 2}, dim);
    for (int i = 0; i < 3; ++i) {
        ledger.rounds_participated[i] = 1;
        for (int p = 0; p < dim; ++p) ledger.running_sum[i][p] = rng.uniform(-1.0, 1.0);
    }
    ParamVector theta(dim);
    for (auto& v : theta) v = rng.uniform(-1.0, 1.0);

    std::size_t prev = 0;
    for (double alpha : {0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 10.0}) {
        UnlearnConfig cfg = basic_cfg({2});
        cfg.alpha = alpha;
        const auto [out, report] = conda_unlearn(theta, ledger, cfg);
        CHECK(report.selected_count >= prev);
        prev = report.selected_count;
    }

    // The histogram covers every parameter exactly once.
    UnlearnConfig cfg = basic_cfg({2});
    const auto [out, report] = conda_unlearn(theta, ledger, cfg);
    std::size_t total = 0;
    for (std::size_t v : report.ratio_hist) total += v;
    CHECK(total == static_cast<std::size_t>(dim));
}

TEST_CASE("retrain baseline never sees the forgotten client's classes") {
    // Client 0 holds every sample of class 0.
    const Dataset train = synth_blobs(3, 80, 6, 41);
    CountMatrix m;
    m.counts = {{80, 0, 0}, {0, 80, 0}, {0, 0, 80}};
    const auto parts = partition_by_counts(train, m, 3);

    const ModelSpec spec = blob_spec(6, 3, 12);
    FedConfig cfg;
    cfg.rounds = 12;
    cfg.local_epochs = 2;
    cfg.lr = 0.1;
    cfg.batch_size = 16;
    cfg.seed = 8;

    const FedResult original = run_federated(cfg, spec, parts, train);
    const ParamVector retrained = retrain_baseline(cfg, spec, parts, train, {0});

    const Batch uset = gather(train, parts[0].indices);
    const double acc_orig = accuracy(original.params, spec, uset);
    const double acc_re = accuracy(retrained, spec, uset);
    CHECK(acc_orig > 0.9);      // class 0 was trained on
    CHECK(acc_re < acc_orig);   // class 0 never seen
    CHECK(acc_re < 0.5);

    CHECK_THROWS_AS(retrain_baseline(cfg, spec, parts, train, {0, 1, 2}), ConfigError);
}

TEST_CASE("neggrad identity and ascent direction") {
    const Dataset train = synth_blobs(3, 60, 6, 77);
    CountMatrix m;
    m.counts = {{60, 30, 0}, {0, 30, 60}};
    const auto parts = partition_by_counts(train, m, 5);
    const ModelSpec spec = blob_spec(6, 3, 3);

    FedConfig cfg;
    cfg.rounds = 15;
    cfg.local_epochs = 2;
    cfg.lr = 0.1;
    cfg.batch_size = 16;
    cfg.seed = 2;
    const FedResult fed = run_federated(cfg, spec, parts, train);

    const ParamVector same = neggrad_baseline(fed.params, cfg, spec, parts, train, {1}, 0, 1e-3);
    CHECK(same == fed.params);

    const Batch forget_batch = gather(train, parts[1].indices);
    double prev_loss = forward_loss(fed.params, spec, forget_batch).loss;
    double prev_acc = accuracy(fed.params, spec, forget_batch);
    for (int steps = 1; steps <= 5; ++steps) {
        const ParamVector after =
            neggrad_baseline(fed.params, cfg, spec, parts, train, {1}, steps, 1e-3);
        const double loss = forward_loss(after, spec, forget_batch).loss;
        CHECK(loss >= prev_loss - 1e-9);
        prev_loss = loss;
        if (steps == 5) CHECK(accuracy(after, spec, forget_batch) <= prev_acc + 1e-12);
    }
}

TEST_CASE("pga respects the projection ball") {
    const Dataset train = synth_blobs(2, 40, 5, 15);
    CountMatrix m;
    m.counts = {{40, 0}, {0, 40}};
    const auto parts = partition_by_counts(train, m, 4);
    const ModelSpec spec = blob_spec(5, 2, 9);

    FedConfig cfg;
    cfg.rounds = 10;
    cfg.local_epochs = 1;
    cfg.lr = 0.1;
    cfg.batch_size = 16;
    cfg.seed = 14;
    const FedResult fed = run_federated(cfg, spec, parts, train);

    const double radius = 1e-3;
    const ParamVector out = pga_baseline(fed.params, fed.params, cfg, spec, parts, train,
                                         {1}, radius, 8, 0.5, 0);
    double norm2 = 0.0;
    for (std::size_t p = 0; p < out.size(); ++p) {
        const double off = out[p] - fed.params[p];
        norm2 += off * off;
    }
    CHECK(std::sqrt(norm2) <= radius + 1e-9);
}

TEST_CASE("pga with a huge ball is plain gradient ascent") {
    const Dataset train = synth_blobs(2, 30, 4, 25);
    CountMatrix m;
    m.counts = {{30, 0}, {0, 30}};
    const auto parts = partition_by_counts(train, m, 6);
    const ModelSpec spec = blob_spec(4, 2, 5);
    FedConfig cfg;
    cfg.seed = 3;

    const ParamVector start = init_model(spec);
    const ParamVector out = pga_baseline(start, start, cfg, spec, parts, train, {0},
                                         1e18, 4, 0.05, 0);

    const Batch forget_batch = gather(train, parts[0].indices);
    ParamVector manual = start;
    for (int step = 0; step < 4; ++step)
        sgd_step_inplace(manual, backward(manual, spec, forget_batch), -0.05);
    CHECK(out == manual);
}

TEST_CASE("pga projection rescales a double-radius offset by half") {
    const Dataset train = synth_blobs(2, 30, 4, 26);
    CountMatrix m;
    m.counts = {{30, 0}, {0, 30}};
    const auto parts = partition_by_counts(train, m, 7);
    const ModelSpec spec = blob_spec(4, 2, 6);
    FedConfig cfg;

    const ParamVector start = init_model(spec);
    const Batch forget_batch = gather(train, parts[0].indices);
    const ParamVector grad = backward(start, spec, forget_batch);
    double gnorm = 0.0;
    for (double g : grad) gnorm += g * g;
    gnorm = std::sqrt(gnorm);
    REQUIRE(gnorm > 0.0);

    // One ascent step of exactly twice the ball radius.
    const double radius = 0.01;
    const double lr = 2.0 * radius / gnorm;
    const ParamVector out =
        pga_baseline(start, start, cfg, spec, parts, train, {0}, radius, 1, lr, 0);
    for (std::size_t p = 0; p < out.size(); ++p)
        CHECK(out[p] - start[p] == doctest::Approx(0.5 * lr * grad[p]).epsilon(1e-9));
}

TEST_CASE("federaser replays the retained clients") {
    const Dataset train = synth_blobs(3, 45, 5, 61);
    CountMatrix m;
    m.counts = {{45, 0, 0}, {0, 45, 0}, {0, 0, 45}};
    const auto parts = partition_by_counts(train, m, 11);
    const ModelSpec spec = blob_spec(5, 3, 21);

    FedConfig cfg;
    cfg.rounds = 5;
    cfg.local_epochs = 2;
    cfg.lr = 0.05;
    cfg.batch_size = 16;
    cfg.seed = 47;
    cfg.store_rounds = true;
    const FedResult fed = run_federated(cfg, spec, parts, train);

    SUBCASE("missing store is a config error") {
        RoundStore empty;
        CHECK_THROWS_AS(federaser_baseline(fed.initial, empty, cfg, spec, parts, train,
                                           {0}, 1),
                        ConfigError);
    }

    SUBCASE("full calibration equals a retained-client retrain") {
        const ParamVector replayed = federaser_baseline(
            fed.initial, fed.store, cfg, spec, parts, train, {0}, cfg.local_epochs);

        std::vector<ClientPartition> kept = {parts[1], parts[2]};
        const FedResult reference = run_federated(cfg, spec, kept, train, &fed.initial);
        CHECK(max_abs_diff(replayed, reference.params) < 1e-9);
    }

    SUBCASE("short calibration keeps the stored directions") {
        cfg.local_epochs = 2;
        const ParamVector out = federaser_baseline(fed.initial, fed.store, cfg, spec,
                                                   parts, train, {0}, 1);
        check_finite(out, "federaser output");
        CHECK(out != fed.params);

        // First round by hand: calibrated norm, stored direction.
        ParamVector manual = fed.initial;
        const StoredRound& sr = fed.store.rounds[0];
        std::vector<ParamVector> updates;
        for (std::size_t j = 0; j < sr.participants.size(); ++j) {
            const int cid = sr.participants[j];
            if (cid == 0) continue;
            const ParamVector calibrated = local_train(
                manual, spec, parts[cid], train, 1, cfg.lr, cfg.batch_size,
                mix_seed(cfg.seed, seed_tag::local, static_cast<std::uint64_t>(cid), 0ULL));
            double cal2 = 0.0, sto2 = 0.0;
            for (std::size_t p = 0; p < manual.size(); ++p) {
                const double c = calibrated[p] - manual[p];
                cal2 += c * c;
                sto2 += sr.updates[j][p] * sr.updates[j][p];
            }
            const double scale = std::sqrt(cal2) / std::sqrt(sto2);
            ParamVector u(manual.size());
            for (std::size_t p = 0; p < u.size(); ++p) u[p] = scale * sr.updates[j][p];
            updates.push_back(std::move(u));
        }
        for (std::size_t p = 0; p < manual.size(); ++p) {
            double acc = 0.0;
            for (const auto& u : updates) acc += u[p];
            manual[p] += acc / updates.size();
        }

        // Rerun with a single-round store to compare one round exactly.
        RoundStore one;
        one.dim = fed.store.dim;
        one.rounds.push_back(fed.store.rounds[0]);
        const ParamVector one_round = federaser_baseline(fed.initial, one, cfg, spec,
                                                         parts, train, {0}, 1);
        CHECK(max_abs_diff(one_round, manual) < 1e-12);
    }
}
