#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedul/serialize.hpp"

using namespace fedul;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    TempDir() {
        path = fs::temp_directory_path() /
               ("fedul_cli_" + std::to_string(getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string sub(const std::string& name) const { return (path / name).string(); }

    static int counter;
};

int TempDir::counter = 0;

struct CmdResult {
    int code = -1;
    std::string output;

    bool contains(const std::string& needle) const {
        return output.find(needle) != std::string::npos;
    }
};

CmdResult run_cli(const std::string& args, const TempDir& tmp) {
    const std::string capture = tmp.sub("cmd_out.txt");
    const std::string cmd = std::string(FEDUL_CLI) + " " + args + " > " + capture +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    CmdResult r;
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    std::ifstream in(capture);
    std::ostringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

std::string write_config(const TempDir& tmp, const std::string& name = "run.json") {
    const std::string path = tmp.sub(name);
    std::ofstream(path) << R"({
        "seed": 11,
        "data": {"source": "synth-blobs", "clients": 3, "blobClasses": 3,
                 "blobFeatures": 6, "blobPerClassTrain": 30, "blobPerClassTest": 20,
                 "dirichletAlpha": 100.0},
        "model": {"arch": "logistic-regression"},
        "train": {"rounds": 4, "localEpochs": 1, "lr": 0.1, "batchSize": 16,
                  "storeRounds": true},
        "unlearn": {"forgetClients": [1]}
    })";
    return path;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) row.push_back(field);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

TEST_CASE("train writes artifacts and reruns bit-identically") {
    TempDir tmp;
    const std::string cfg = write_config(tmp);

    const CmdResult r1 =
        run_cli("train --config " + cfg + " --out " + tmp.sub("a"), tmp);
    CHECK(r1.code == 0);
    CHECK(r1.contains("artifacts:"));
    CHECK(fs::exists(tmp.sub("a") + "/model.cnda"));
    CHECK(fs::exists(tmp.sub("a") + "/meta.json"));
    CHECK(fs::exists(tmp.sub("a") + "/rounds.cnda"));

    const CmdResult r2 =
        run_cli("train --config " + cfg + " --out " + tmp.sub("b"), tmp);
    REQUIRE(r2.code == 0);
    CHECK(file_digest(tmp.sub("a") + "/model.cnda") ==
          file_digest(tmp.sub("b") + "/model.cnda"));
    CHECK(file_digest(tmp.sub("a") + "/ledger.cnda") ==
          file_digest(tmp.sub("b") + "/ledger.cnda"));
}

TEST_CASE("cli error paths map to exit codes") {
    TempDir tmp;
    const std::string cfg = write_config(tmp);

    CHECK(run_cli("train --config " + tmp.sub("absent.json") + " --out " +
                      tmp.sub("x"),
                  tmp)
              .code == 3);

    const std::string broken = tmp.sub("broken.json");
    std::ofstream(broken) << "{not json";
    CHECK(run_cli("train --config " + broken + " --out " + tmp.sub("x"), tmp).code == 2);

    const std::string typo = tmp.sub("typo.json");
    std::ofstream(typo) << R"({"train": {"lrr": 0.5}})";
    const CmdResult bad_key =
        run_cli("train --config " + typo + " --out " + tmp.sub("x"), tmp);
    CHECK(bad_key.code == 2);
    CHECK(bad_key.contains("train.lrr"));

    CHECK(run_cli("train --config " + cfg + " --frobnicate", tmp).code == 2);
    CHECK(run_cli("", tmp).code == 2);
    CHECK(run_cli("--help", tmp).code == 0);

    CHECK(run_cli("unlearn --config " + cfg + " --artifacts " + tmp.sub("void") +
                      " --out " + tmp.sub("u"),
                  tmp)
              .code == 4);
}

TEST_CASE("unlearn produces a model, a report, and is reproducible") {
    TempDir tmp;
    const std::string cfg = write_config(tmp);
    REQUIRE(run_cli("train --config " + cfg + " --out " + tmp.sub("art"), tmp).code == 0);

    const std::string base = "unlearn --config " + cfg + " --artifacts " +
                             tmp.sub("art") + " --method conda --alpha 0.3 --out ";
    const CmdResult u1 = run_cli(base + tmp.sub("u1"), tmp);
    CHECK(u1.code == 0);
    CHECK(u1.contains("method: conda"));
    CHECK(u1.contains("dampened"));
    REQUIRE(fs::exists(tmp.sub("u1") + "/model.cnda"));
    REQUIRE(fs::exists(tmp.sub("u1") + "/report.json"));

    std::ifstream rep(tmp.sub("u1") + "/report.json");
    std::ostringstream buf;
    buf << rep.rdbuf();
    CHECK(buf.str().find("selectedCount") != std::string::npos);
    CHECK(buf.str().find("accRSet") != std::string::npos);

    const CmdResult u2 = run_cli(base + tmp.sub("u2"), tmp);
    REQUIRE(u2.code == 0);
    CHECK(file_digest(tmp.sub("u1") + "/model.cnda") ==
          file_digest(tmp.sub("u2") + "/model.cnda"));

    // Every baseline runs from the same artifacts.
    for (const std::string m : {"retrain", "neggrad", "pga", "federaser"}) {
        const CmdResult r = run_cli("unlearn --config " + cfg + " --artifacts " +
                                        tmp.sub("art") + " --method " + m + " --out " +
                                        tmp.sub("m_" + m),
                                    tmp);
        CHECK(r.code == 0);
        CHECK(fs::exists(tmp.sub("m_" + m) + "/model.cnda"));
    }

    // A different seed means different artifacts are required.
    CHECK(run_cli("unlearn --config " + cfg + " --artifacts " + tmp.sub("art") +
                      " --seed 99 --out " + tmp.sub("u3"),
                  tmp)
              .code == 2);
}

TEST_CASE("sweep-alpha emits the expected csv") {
    TempDir tmp;
    const std::string cfg = write_config(tmp);
    REQUIRE(run_cli("train --config " + cfg + " --out " + tmp.sub("art"), tmp).code == 0);

    const std::string csv = tmp.sub("sweep.csv");
    const CmdResult r = run_cli("sweep-alpha --config " + cfg + " --artifacts " +
                                    tmp.sub("art") +
                                    " --alphas 0.01,0.1,0.5,2.0 --out " + csv,
                                tmp);
    REQUIRE(r.code == 0);

    const auto rows = read_csv(csv);
    REQUIRE(rows.size() == 5); // header + 4 alphas
    CHECK(rows[0] == std::vector<std::string>{"alpha", "accRSet", "accUSet",
                                              "backdoorASR", "miaAccuracy",
                                              "selectedCount", "meanBeta", "seconds"});
    long long prev = -1;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const long long selected = std::stoll(rows[i][5]);
        CHECK(selected >= prev);
        prev = selected;
    }

    CHECK(run_cli("sweep-alpha --config " + cfg + " --artifacts " + tmp.sub("art") +
                      " --out " + csv,
                  tmp)
              .code == 2); // --alphas is required
}

TEST_CASE("compare emits one row per method") {
    TempDir tmp;
    const std::string cfg = write_config(tmp);
    REQUIRE(run_cli("train --config " + cfg + " --out " + tmp.sub("art"), tmp).code == 0);

    const std::string csv = tmp.sub("cmp.csv");
    const CmdResult r = run_cli("compare --config " + cfg + " --artifacts " +
                                    tmp.sub("art") + " --methods conda,retrain --out " +
                                    csv,
                                tmp);
    REQUIRE(r.code == 0);
    const auto rows = read_csv(csv);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][0] == "conda");
    CHECK(rows[2][0] == "retrain");
    CHECK(rows[0][0] == "method");
}
