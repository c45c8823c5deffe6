#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "cgheat/io.hpp"

using namespace cgheat;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(CGHEAT_BIN) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cgheat_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const TempDir& tmp, const nlohmann::json& j) {
    const fs::path p = tmp.path / "config.json";
    write_json(p, j);
    return p;
}

nlohmann::json tiny_config() {
    return {{"fine_mesh", {{"nel_x", 4}, {"nel_y", 4}}},
            {"coarse_mesh", {{"nel_x", 2}, {"nel_y", 2}}},
            {"medium", {{"length_scale", 0.3}}},
            {"n_train", 1},
            {"n_test", 1},
            {"n_reference", 2},
            {"seed", 7}};
}

}  // namespace

TEST_CASE("cli: config and usage errors exit with code 2") {
    TempDir tmp;
    CHECK(run("--config " + (tmp.path / "nope.json").string() + " generate") == 4);
    CHECK(run("generate") == 2);  // --config is required

    auto bad = tiny_config();
    bad["n_train"] = 0;
    CHECK(run("--config " + write_config(tmp, bad).string() + " generate") == 2);

    auto neg = tiny_config();
    neg["medium"]["length_scale"] = -1.0;
    CHECK(run("--config " + write_config(tmp, neg).string() + " generate") == 2);
}

TEST_CASE("cli: generate writes a loadable dataset with the right shapes") {
    TempDir tmp;
    const auto cfg = write_config(tmp, tiny_config());
    const fs::path out = tmp.path / "train";
    REQUIRE(run("--config " + cfg.string() + " --out " + out.string() + " generate") == 0);

    CHECK(read_raw_f64(out / "sample_0000.lambda.bin").size() == 16);
    CHECK(read_raw_f64(out / "sample_0000.uf.bin").size() == 25);
    auto ds = load_dataset(out);
    REQUIRE(ds.samples.size() == 1);
    CHECK(ds.fine_mesh == MeshSpec{4, 4});

    // different splits use different seed streams
    const fs::path test_out = tmp.path / "test";
    REQUIRE(run("--config " + cfg.string() + " --out " + test_out.string() +
                " generate --split test") == 0);
    auto ts = load_dataset(test_out);
    CHECK(ts.samples[0].lambda_f.cells.values != ds.samples[0].lambda_f.cells.values);
}

TEST_CASE("cli: generate is byte-reproducible") {
    TempDir tmp;
    const auto cfg = write_config(tmp, tiny_config());
    const fs::path a = tmp.path / "a", b = tmp.path / "b";
    REQUIRE(run("--config " + cfg.string() + " --out " + a.string() + " generate") == 0);
    REQUIRE(run("--config " + cfg.string() + " --out " + b.string() + " generate") == 0);
    for (const std::string f : {"sample_0000.lambda.bin", "sample_0000.uf.bin", "manifest.json"})
        CHECK(hash_file(a / f) == hash_file(b / f));

    // a different seed changes the payloads
    const fs::path c = tmp.path / "c";
    REQUIRE(run("--config " + cfg.string() + " --seed 8 --out " + c.string() + " generate") == 0);
    CHECK(hash_file(a / "sample_0000.lambda.bin") != hash_file(c / "sample_0000.lambda.bin"));
}

TEST_CASE("cli: train/predict/evaluate pipeline smoke") {
    TempDir tmp;
    auto j = tiny_config();
    j["fine_mesh"] = {{"nel_x", 8}, {"nel_y", 8}};
    j["n_train"] = 4;
    j["n_test"] = 2;
    j["n_reference"] = 3;
    j["n_pred_samples"] = 32;
    j["em"] = {{"max_iter", 2},
               {"tol", 0.0},
               {"window", 2},
               {"mcmc", {{"burn_in", 30}, {"samples", 60}}},
               {"gamma", {{"mode", "fixed"}, {"value", 1.0}}},
               {"lower_bound_samples", 16},
               {"pred_score_samples", 16}};
    const auto cfg = write_config(tmp, j);
    const std::string base = "--config " + cfg.string() + " --out ";

    REQUIRE(run(base + (tmp.path / "train").string() + " generate") == 0);
    REQUIRE(run(base + (tmp.path / "test").string() + " generate --split test") == 0);
    REQUIRE(run(base + (tmp.path / "ref").string() + " generate --split reference") == 0);
    REQUIRE(run(base + (tmp.path / "fit").string() + " train --data " +
                (tmp.path / "train").string()) == 0);

    CHECK(fs::exists(tmp.path / "fit" / "model.json"));
    std::ifstream log(tmp.path / "fit" / "training_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "iteration,lower_bound,mean_accept_rate,nnz_theta,wall_time_s");

    const std::string model = (tmp.path / "fit" / "model.json").string();
    REQUIRE(run(base + (tmp.path / "pred").string() + " predict --model " + model + " --data " +
                (tmp.path / "test").string()) == 0);
    CHECK(read_raw_f64(tmp.path / "pred" / "pred_0000.mean.bin").size() == 81);

    REQUIRE(run(base + (tmp.path / "eval").string() + " evaluate --model " + model + " --data " +
                (tmp.path / "test").string() + " --reference " + (tmp.path / "ref").string()) ==
            0);
    std::ifstream metrics(tmp.path / "eval" / "metrics.csv");
    std::getline(metrics, header);
    CHECK(header == "metric,value");

    // evaluating against a missing model is an io failure
    CHECK(run(base + (tmp.path / "eval2").string() + " evaluate --model " +
              (tmp.path / "no.json").string() + " --data " + (tmp.path / "test").string() +
              " --reference " + (tmp.path / "ref").string()) == 4);
}

TEST_CASE("cli: sweep smoke produces one finite row per grid point") {
    TempDir tmp;
    auto j = tiny_config();
    j["fine_mesh"] = {{"nel_x", 8}, {"nel_y", 8}};
    j["n_test"] = 2;
    j["n_reference"] = 3;
    j["n_pred_samples"] = 16;
    j["em"] = {{"max_iter", 2},
               {"tol", 0.0},
               {"window", 2},
               {"mcmc", {{"burn_in", 20}, {"samples", 40}}},
               {"gamma", {{"mode", "fixed"}, {"value", 1.0}}},
               {"lower_bound_samples", 8},
               {"pred_score_samples", 8}};
    j["sweep"] = {{"n_train", {3}}, {"coarse", {{2, 2}}}};
    const auto cfg = write_config(tmp, j);
    REQUIRE(run("--config " + cfg.string() + " --out " + (tmp.path / "sweep").string() +
                " sweep") == 0);

    std::ifstream csv(tmp.path / "sweep" / "sweep.csv");
    std::string header, row;
    std::getline(csv, header);
    CHECK(header == "n_train,coarse_dim,relative_error,nnz_theta,wall_time");
    REQUIRE(static_cast<bool>(std::getline(csv, row)));
    CHECK(row.rfind("3,2x2,", 0) == 0);
    CHECK(row.find("nan") == std::string::npos);
    CHECK(fs::exists(tmp.path / "sweep" / "fit_2x2_n3" / "model.json"));
}
