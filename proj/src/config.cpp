#include "fedul/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedul/serialize.hpp"

namespace fedul {

namespace {

using nlohmann::json;

// Pulls known keys out of `obj` and rejects everything else, so a typo like
// "lrr" fails loudly instead of silently using the default.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj.is_object())
            throw ConfigError("config: " + path_ + " must be a JSON object");
    }

    ~Section() = default;

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: bad type for " + path_ + "." + key);
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void done() const {
        for (const auto& [key, value] : obj_.items())
            if (!seen_.count(key))
                throw ConfigError("config: unknown key " + path_ + "." + key);
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

void parse_data(const json& j, DataConfig& d) {
    Section s(j, "data");
    s.get("source", d.source);
    s.get("clients", d.clients);
    s.get("countsCsv", d.counts_csv);
    s.get("totalSamples", d.total_samples);
    s.get("dirichletAlpha", d.dirichlet_alpha);
    s.get("trainImages", d.train_images);
    s.get("trainLabels", d.train_labels);
    s.get("testImages", d.test_images);
    s.get("testLabels", d.test_labels);
    s.get("blobClasses", d.blob_classes);
    s.get("blobFeatures", d.blob_features);
    s.get("blobPerClassTrain", d.blob_per_class_train);
    s.get("blobPerClassTest", d.blob_per_class_test);
    s.get("imageClasses", d.image_classes);
    s.get("imagePerClassTrain", d.image_per_class_train);
    s.get("imagePerClassTest", d.image_per_class_test);
    if (const json* img = s.child("image")) {
        Section is(*img, "data.image");
        is.get("h", d.image.h);
        is.get("w", d.image.w);
        is.get("grid", d.image.grid);
        is.get("noise", d.image.noise);
        is.get("similarity", d.image.similarity);
        is.get("jitter", d.image.jitter);
        is.get("labelNoise", d.image.label_noise);
        is.done();
    }
    s.done();
}

void parse_model(const json& j, ModelConfig& m) {
    Section s(j, "model");
    s.get("arch", m.arch);
    s.get("hidden", m.hidden);
    s.done();
}

void parse_train(const json& j, FedConfig& t) {
    Section s(j, "train");
    s.get("rounds", t.rounds);
    s.get("localEpochs", t.local_epochs);
    s.get("lr", t.lr);
    s.get("batchSize", t.batch_size);
    s.get("participation", t.participation);
    s.get("weightedAverage", t.weighted_average);
    s.get("storeRounds", t.store_rounds);
    s.get("lossSampleCap", t.loss_sample_cap);
    s.done();
}

void parse_backdoor(const json& j, BackdoorConfig& b) {
    Section s(j, "backdoor");
    s.get("count", b.count);
    s.get("client", b.client);
    s.get("target", b.target);
    s.get("patchRows", b.patch.rows);
    s.get("patchCols", b.patch.cols);
    s.get("intensity", b.patch.intensity);
    s.done();
}

void parse_unlearn(const json& j, UnlearnConfig& u, Method& method) {
    Section s(j, "unlearn");
    std::string method_name = method_to_string(method);
    std::string rule = selection_rule_to_string(u.rule);
    s.get("method", method_name);
    s.get("forgetClients", u.forget_clients);
    s.get("lambda", u.lambda);
    s.get("alpha", u.alpha);
    s.get("upperBound", u.upper_bound);
    s.get("epsilon", u.epsilon);
    s.get("selectionRule", rule);
    s.get("neggradSteps", u.neggrad_steps);
    s.get("neggradLr", u.neggrad_lr);
    s.get("pgaRadius", u.pga_radius);
    s.get("pgaSteps", u.pga_steps);
    s.get("pgaLr", u.pga_lr);
    s.get("pgaFinetuneRounds", u.pga_finetune_rounds);
    s.get("federaserCalibrationEpochs", u.federaser_calibration_epochs);
    s.done();
    method = method_from_string(method_name);
    u.rule = selection_rule_from_string(rule);
}

} // namespace

void RunConfig::validate() const {
    if (data.source != "synth-blobs" && data.source != "synth-images" &&
        data.source != "idx")
        throw ConfigError("config: data.source must be synth-blobs, synth-images or idx");
    if (data.clients < 2)
        throw ConfigError("config: data.clients must be at least 2");
    if (data.total_samples < 0)
        throw ConfigError("config: data.totalSamples must be >= 0");
    if (!(data.dirichlet_alpha > 0.0))
        throw ConfigError("config: data.dirichletAlpha must be > 0");
    if (data.source == "idx" &&
        (data.train_images.empty() || data.train_labels.empty()))
        throw ConfigError("config: idx source needs data.trainImages and data.trainLabels");
    if (data.source == "synth-blobs" &&
        (data.blob_classes < 2 || data.blob_features < 1 || data.blob_per_class_train < 1))
        throw ConfigError("config: bad synth-blobs shape");
    if (data.source == "synth-images" &&
        (data.image_classes < 2 || data.image_per_class_train < 1))
        throw ConfigError("config: bad synth-images shape");

    arch_from_string(model.arch); // throws on unknown names
    train.validate();

    if (backdoor.count < 0)
        throw ConfigError("config: backdoor.count must be >= 0");
    if (backdoor.count > 0) {
        if (backdoor.client < 0 || backdoor.client >= data.clients)
            throw ConfigError("config: backdoor.client out of range");
        if (backdoor.target < 0)
            throw ConfigError("config: backdoor.target must be >= 0");
        if (backdoor.patch.rows < 1 || backdoor.patch.cols < 1)
            throw ConfigError("config: backdoor patch must be at least 1x1");
    }

    std::vector<int> ids(data.clients);
    for (int i = 0; i < data.clients; ++i) ids[i] = i;
    unlearn.validate(ids);
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }

    RunConfig cfg;
    Section root(j, "$");
    root.get("seed", cfg.seed);
    if (const json* c = root.child("data")) parse_data(*c, cfg.data);
    if (const json* c = root.child("model")) parse_model(*c, cfg.model);
    if (const json* c = root.child("train")) parse_train(*c, cfg.train);
    if (const json* c = root.child("backdoor")) parse_backdoor(*c, cfg.backdoor);
    if (const json* c = root.child("unlearn")) parse_unlearn(*c, cfg.unlearn, cfg.method);
    root.done();
    cfg.train.seed = cfg.seed;
    if (cfg.unlearn.forget_clients.empty()) cfg.unlearn.forget_clients = {0};
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string canonical_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    json& d = j["data"];
    d["source"] = cfg.data.source;
    d["clients"] = cfg.data.clients;
    d["countsCsv"] = cfg.data.counts_csv;
    d["totalSamples"] = cfg.data.total_samples;
    d["dirichletAlpha"] = cfg.data.dirichlet_alpha;
    d["trainImages"] = cfg.data.train_images;
    d["trainLabels"] = cfg.data.train_labels;
    d["testImages"] = cfg.data.test_images;
    d["testLabels"] = cfg.data.test_labels;
    d["blobClasses"] = cfg.data.blob_classes;
    d["blobFeatures"] = cfg.data.blob_features;
    d["blobPerClassTrain"] = cfg.data.blob_per_class_train;
    d["blobPerClassTest"] = cfg.data.blob_per_class_test;
    d["imageClasses"] = cfg.data.image_classes;
    d["imagePerClassTrain"] = cfg.data.image_per_class_train;
    d["imagePerClassTest"] = cfg.data.image_per_class_test;
    json& img = d["image"];
    img["h"] = cfg.data.image.h;
    img["w"] = cfg.data.image.w;
    img["grid"] = cfg.data.image.grid;
    img["noise"] = cfg.data.image.noise;
    img["similarity"] = cfg.data.image.similarity;
    img["jitter"] = cfg.data.image.jitter;
    img["labelNoise"] = cfg.data.image.label_noise;
    json& m = j["model"];
    m["arch"] = cfg.model.arch;
    m["hidden"] = cfg.model.hidden;
    json& t = j["train"];
    t["rounds"] = cfg.train.rounds;
    t["localEpochs"] = cfg.train.local_epochs;
    t["lr"] = cfg.train.lr;
    t["batchSize"] = cfg.train.batch_size;
    t["participation"] = cfg.train.participation;
    t["weightedAverage"] = cfg.train.weighted_average;
    t["storeRounds"] = cfg.train.store_rounds;
    t["lossSampleCap"] = cfg.train.loss_sample_cap;
    json& b = j["backdoor"];
    b["count"] = cfg.backdoor.count;
    b["client"] = cfg.backdoor.client;
    b["target"] = cfg.backdoor.target;
    b["patchRows"] = cfg.backdoor.patch.rows;
    b["patchCols"] = cfg.backdoor.patch.cols;
    b["intensity"] = cfg.backdoor.patch.intensity;
    json& u = j["unlearn"];
    u["method"] = method_to_string(cfg.method);
    u["forgetClients"] = cfg.unlearn.forget_clients;
    u["lambda"] = cfg.unlearn.lambda;
    u["alpha"] = cfg.unlearn.alpha;
    u["upperBound"] = cfg.unlearn.upper_bound;
    u["epsilon"] = cfg.unlearn.epsilon;
    u["selectionRule"] = selection_rule_to_string(cfg.unlearn.rule);
    u["neggradSteps"] = cfg.unlearn.neggrad_steps;
    u["neggradLr"] = cfg.unlearn.neggrad_lr;
    u["pgaRadius"] = cfg.unlearn.pga_radius;
    u["pgaSteps"] = cfg.unlearn.pga_steps;
    u["pgaLr"] = cfg.unlearn.pga_lr;
    u["pgaFinetuneRounds"] = cfg.unlearn.pga_finetune_rounds;
    u["federaserCalibrationEpochs"] = cfg.unlearn.federaser_calibration_epochs;
    return j.dump();
}

std::string config_hash(const RunConfig& cfg) {
    return hex64(fnv1a64(canonical_json(cfg)));
}

} // namespace fedul
