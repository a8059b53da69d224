#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "fedul/pipeline.hpp"
#include "fedul/serialize.hpp"

using namespace fedul;
using nlohmann::json;

namespace {

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

// Shared flags: a config file plus ad-hoc overrides. Overrides are applied
// after parsing so the stored canonical config reflects what actually ran.
struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<int> forget;
    std::string method;
    double alpha = -1.0;
    double lambda = -1.0;
    double upper_bound = -1.0;
    std::string selection_rule;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON run configuration")
        ->required();
    cmd->add_option("--seed", o.seed, "master seed override")
        ->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_option("--forget", o.forget, "forget client ids (comma separated)")
        ->delimiter(',');
    cmd->add_option("--method", o.method,
                    "unlearning method: conda|retrain|neggrad|pga|federaser");
    cmd->add_option("--alpha", o.alpha, "dampening cutoff override");
    cmd->add_option("--lambda", o.lambda, "dampening constant override");
    cmd->add_option("--upper-bound", o.upper_bound, "dampening cap override");
    cmd->add_option("--selection-rule", o.selection_rule, "ratio-cutoff|beta-cutoff");
}

RunConfig load_with_overrides(const CommonOpts& o) {
    RunConfig cfg = load_config(o.config_path);
    if (o.seed_set) {
        cfg.seed = o.seed;
        cfg.train.seed = o.seed;
    }
    if (!o.forget.empty()) cfg.unlearn.forget_clients = o.forget;
    if (!o.method.empty()) cfg.method = method_from_string(o.method);
    if (o.alpha >= 0.0) cfg.unlearn.alpha = o.alpha;
    if (o.lambda >= 0.0) cfg.unlearn.lambda = o.lambda;
    if (o.upper_bound > 0.0) cfg.unlearn.upper_bound = o.upper_bound;
    if (!o.selection_rule.empty())
        cfg.unlearn.rule = selection_rule_from_string(o.selection_rule);
    cfg.validate();
    return cfg;
}

void print_eval(const EvalReport& r, bool poisoned) {
    std::cout << "accuracy: test=" << fmt(r.acc_test()) << " rset=" << fmt(r.acc_rset())
              << " uset=" << fmt(r.acc_uset()) << "\n";
    if (poisoned)
        std::cout << "backdoor asr: " << fmt(r.asr()) << " (" << r.asr_hits << "/"
                  << r.asr_total << ")\n";
    if (r.mia_accuracy >= 0.0)
        std::cout << "mia accuracy: " << fmt(r.mia_accuracy) << "\n";
}

json eval_json(const EvalReport& r) {
    json j;
    j["accTest"] = r.acc_test();
    j["accRSet"] = r.acc_rset();
    j["accUSet"] = r.acc_uset();
    j["rsetCorrect"] = r.rset_correct;
    j["rsetTotal"] = r.rset_total;
    j["usetCorrect"] = r.uset_correct;
    j["usetTotal"] = r.uset_total;
    j["testCorrect"] = r.test_correct;
    j["testTotal"] = r.test_total;
    j["backdoorASR"] = r.asr();
    j["asrHits"] = r.asr_hits;
    j["asrTotal"] = r.asr_total;
    j["miaAccuracy"] = r.mia_accuracy;
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

int run_train(const CommonOpts& opts, const std::string& out_dir) {
    const RunConfig cfg = load_with_overrides(opts);
    const Problem problem = materialize(cfg);
    std::cout << "dataset: " << cfg.data.source << " train=" << problem.train.n
              << " test=" << problem.test.n << " classes=" << problem.train.classes
              << " clients=" << problem.partitions.size() << "\n";
    std::cout << "model: " << cfg.model.arch << " params=" << param_count(problem.spec)
              << "\n";

    const FedResult fed = train_to_dir(cfg, problem, out_dir);
    const double final_loss =
        fed.records.empty() ? 0.0 : fed.records.back().global_loss;
    std::cout << "trained " << fed.records.size() << " rounds, final loss "
              << fmt(final_loss) << "\n";

    const EvalReport report = evaluate_model(cfg, problem, fed.params);
    print_eval(report, problem.poisoned);
    std::cout << "artifacts: " << out_dir << " (config " << config_hash(cfg) << ")\n";
    return 0;
}

FedResult as_fed_result(LoadedRun&& run) {
    FedResult fed;
    fed.params = std::move(run.params);
    fed.initial = std::move(run.initial);
    fed.ledger = std::move(run.ledger);
    fed.store = std::move(run.store);
    return fed;
}

int run_unlearn(const CommonOpts& opts, const std::string& artifacts,
                const std::string& out_dir) {
    const RunConfig cfg = load_with_overrides(opts);
    const Problem problem = materialize(cfg);
    const FedResult fed = as_fed_result(load_run(cfg, artifacts));

    const UnlearnOutcome out = run_unlearn_method(cfg, problem, fed, cfg.method);
    const EvalReport report = evaluate_model(cfg, problem, out.params);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    const std::string model_path =
        (std::filesystem::path(out_dir) / "model.cnda").string();
    save_model(model_path, out.params, problem.spec);

    json rj;
    rj["method"] = method_to_string(cfg.method);
    rj["seconds"] = out.seconds;
    rj["configHash"] = config_hash(cfg);
    rj["eval"] = eval_json(report);
    if (out.dampening.dim > 0) {
        rj["selectedCount"] = out.dampening.selected_count;
        rj["meanBeta"] = out.dampening.mean_beta;
        rj["dim"] = out.dampening.dim;
    }
    write_json_file((std::filesystem::path(out_dir) / "report.json").string(), rj);

    std::cout << "method: " << method_to_string(cfg.method) << " ("
              << fmt(out.seconds, 3) << "s)\n";
    if (out.dampening.dim > 0)
        std::cout << "dampened " << out.dampening.selected_count << "/"
                  << out.dampening.dim << " parameters, mean beta "
                  << fmt(out.dampening.mean_beta) << "\n";
    print_eval(report, problem.poisoned);
    std::cout << "unlearned model: " << model_path << "\n";
    return 0;
}

int run_sweep(const CommonOpts& opts, const std::string& artifacts,
              std::vector<double> alphas, std::string out_csv) {
    RunConfig cfg = load_with_overrides(opts);
    if (alphas.empty())
        throw ConfigError("sweep-alpha: --alphas must list at least one value");
    if (out_csv.empty())
        out_csv = (std::filesystem::path(artifacts) / "sweep.csv").string();

    const Problem problem = materialize(cfg);
    const FedResult fed = as_fed_result(load_run(cfg, artifacts));

    std::vector<std::vector<std::string>> rows;
    for (double alpha : alphas) {
        cfg.unlearn.alpha = alpha;
        cfg.validate();
        const UnlearnOutcome out = run_unlearn_method(cfg, problem, fed, Method::Conda);
        const EvalReport r = evaluate_model(cfg, problem, out.params);
        rows.push_back({num(alpha), num(r.acc_rset()), num(r.acc_uset()), num(r.asr()),
                        num(r.mia_accuracy), std::to_string(out.dampening.selected_count),
                        num(out.dampening.mean_beta), num(out.seconds)});
        std::cout << "alpha=" << num(alpha) << " selected="
                  << out.dampening.selected_count << " accRSet=" << fmt(r.acc_rset())
                  << " accUSet=" << fmt(r.acc_uset()) << " asr=" << fmt(r.asr())
                  << " mia=" << fmt(r.mia_accuracy) << "\n";
    }
    write_csv(out_csv,
              {"alpha", "accRSet", "accUSet", "backdoorASR", "miaAccuracy",
               "selectedCount", "meanBeta", "seconds"},
              rows);
    std::cout << "sweep: " << out_csv << "\n";
    return 0;
}

int run_compare(const CommonOpts& opts, const std::string& artifacts,
                std::vector<std::string> methods, std::string out_csv) {
    RunConfig cfg = load_with_overrides(opts);
    if (methods.empty())
        methods = {"conda", "retrain", "neggrad", "pga", "federaser"};
    if (out_csv.empty())
        out_csv = (std::filesystem::path(artifacts) / "compare.csv").string();

    const Problem problem = materialize(cfg);
    const FedResult fed = as_fed_result(load_run(cfg, artifacts));

    std::vector<std::vector<std::string>> rows;
    for (const std::string& name : methods) {
        const Method m = method_from_string(name);
        const UnlearnOutcome out = run_unlearn_method(cfg, problem, fed, m);
        const EvalReport r = evaluate_model(cfg, problem, out.params);
        rows.push_back({name, num(r.acc_rset()), num(r.acc_uset()), num(r.acc_test()),
                        num(r.asr()), num(r.mia_accuracy), num(out.seconds)});
        std::cout << std::left << std::setw(10) << name << " accRSet="
                  << fmt(r.acc_rset()) << " accUSet=" << fmt(r.acc_uset())
                  << " asr=" << fmt(r.asr()) << " mia=" << fmt(r.mia_accuracy)
                  << " time=" << fmt(out.seconds, 3) << "s\n";
    }
    write_csv(out_csv,
              {"method", "accRSet", "accUSet", "accTest", "backdoorASR", "miaAccuracy",
               "seconds"},
              rows);
    std::cout << "comparison: " << out_csv << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic federated training and unlearning"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    std::string train_out;
    CLI::App* train_cmd = app.add_subcommand("train", "train a federated model");
    add_common(train_cmd, train_opts);
    train_cmd->add_option("--out", train_out, "artifact directory")->required();

    CommonOpts unlearn_opts;
    std::string unlearn_artifacts, unlearn_out;
    CLI::App* unlearn_cmd =
        app.add_subcommand("unlearn", "remove clients from a trained model");
    add_common(unlearn_cmd, unlearn_opts);
    unlearn_cmd->add_option("--artifacts", unlearn_artifacts, "training artifact dir")
        ->required();
    unlearn_cmd->add_option("--out", unlearn_out, "output directory")->required();

    CommonOpts sweep_opts;
    std::string sweep_artifacts, sweep_out;
    std::vector<double> sweep_alphas;
    CLI::App* sweep_cmd =
        app.add_subcommand("sweep-alpha", "dampening cutoff sweep (conda)");
    add_common(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--artifacts", sweep_artifacts, "training artifact dir")
        ->required();
    sweep_cmd->add_option("--alphas", sweep_alphas, "cutoff values (comma separated)")
        ->delimiter(',')
        ->required();
    sweep_cmd->add_option("--out", sweep_out, "output CSV path");

    CommonOpts cmp_opts;
    std::string cmp_artifacts, cmp_out;
    std::vector<std::string> cmp_methods;
    CLI::App* cmp_cmd = app.add_subcommand("compare", "run several methods side by side");
    add_common(cmp_cmd, cmp_opts);
    cmp_cmd->add_option("--artifacts", cmp_artifacts, "training artifact dir")
        ->required();
    cmp_cmd->add_option("--methods", cmp_methods, "methods to run (comma separated)")
        ->delimiter(',');
    cmp_cmd->add_option("--out", cmp_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return run_train(train_opts, train_out);
        if (unlearn_cmd->parsed())
            return run_unlearn(unlearn_opts, unlearn_artifacts, unlearn_out);
        if (sweep_cmd->parsed())
            return run_sweep(sweep_opts, sweep_artifacts, sweep_alphas, sweep_out);
        if (cmp_cmd->parsed())
            return run_compare(cmp_opts, cmp_artifacts, cmp_methods, cmp_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const ArtifactError& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
