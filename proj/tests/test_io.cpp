#include <doctest.h>

#include <filesystem>
#include <random>

#include "cgheat/io.hpp"

using namespace cgheat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cgheat_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Dataset tiny_dataset() {
    Dataset d;
    d.fine_mesh = {4, 4};
    d.bc = BoundaryConditions::corner_flux(d.fine_mesh);
    d.length_scale = 0.125;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    MediumSpec med;
    for (int i = 0; i < 3; ++i) {
        Sample smp;
        smp.seed = 1000 + i;
        smp.lambda_f.medium = med;
        smp.lambda_f.cells = Grid(4, 4);
        for (auto& v : smp.lambda_f.cells.values)
            v = rng() % 2 ? med.lambda_hi : med.lambda_lo;
        smp.u_f = Eigen::VectorXd::NullaryExpr(25, [&](Eigen::Index) { return nd(rng); });
        d.samples.push_back(std::move(smp));
    }
    return d;
}

}  // namespace

TEST_CASE("raw f64 roundtrip and error paths") {
    TempDir tmp;
    std::vector<double> data{1.0, -2.5, 3.25e-300, 1e300, 0.0};
    const auto file = tmp.path / "x.bin";
    write_raw_f64(file, data.data(), data.size());
    CHECK(read_raw_f64(file) == data);
    CHECK(fs::file_size(file) == 40);

    CHECK_THROWS_AS(read_raw_f64(tmp.path / "missing.bin"), IoError);

    // truncated payload (not a multiple of 8 bytes)
    write_text_atomic(tmp.path / "bad.bin", "abc");
    CHECK_THROWS_AS(read_raw_f64(tmp.path / "bad.bin"), IoError);
}

TEST_CASE("json roundtrip through disk") {
    TempDir tmp;
    nlohmann::json j = {{"a", 1}, {"b", {1.5, 2.5}}, {"c", "text"}};
    write_json(tmp.path / "j.json", j);
    CHECK(read_json(tmp.path / "j.json") == j);
    CHECK_THROWS_AS(read_json(tmp.path / "nope.json"), IoError);
}

TEST_CASE("fnv1a64 known values") {
    CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("dataset save/load roundtrip is bitwise") {
    TempDir tmp;
    auto d = tiny_dataset();
    save_dataset(tmp.path / "ds", d);
    auto back = load_dataset(tmp.path / "ds");

    CHECK(back.fine_mesh == d.fine_mesh);
    CHECK(back.bc.dirichlet == d.bc.dirichlet);
    CHECK(back.bc.flux == d.bc.flux);
    CHECK(back.length_scale == d.length_scale);
    REQUIRE(back.samples.size() == d.samples.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        CHECK(back.samples[i].seed == d.samples[i].seed);
        CHECK(back.samples[i].lambda_f.cells.values == d.samples[i].lambda_f.cells.values);
        CHECK(back.samples[i].lambda_f.medium.lambda_hi == d.samples[i].lambda_f.medium.lambda_hi);
        CHECK(back.samples[i].u_f == d.samples[i].u_f);
    }
    CHECK(dataset_hash(back) == dataset_hash(d));

    // no temp files left behind by the atomic writes
    for (const auto& entry : fs::recursive_directory_iterator(tmp.path))
        CHECK(entry.path().extension() != ".tmp");
}

TEST_CASE("manifest hashes match the files on disk") {
    TempDir tmp;
    auto d = tiny_dataset();
    save_dataset(tmp.path / "ds", d);
    auto manifest = read_json(tmp.path / "ds" / "manifest.json");
    REQUIRE(manifest.contains("samples"));
    REQUIRE(manifest.at("samples").size() == 3);
    for (const auto& entry : manifest.at("samples")) {
        const std::string stem = entry.at("stem");
        CHECK(hash_file(tmp.path / "ds" / (stem + ".lambda.bin")) ==
              entry.at("lambda_hash").get<std::uint64_t>());
        CHECK(hash_file(tmp.path / "ds" / (stem + ".uf.bin")) ==
              entry.at("uf_hash").get<std::uint64_t>());
    }
    CHECK(manifest.at("n_samples") == 3);

    // rewriting the same dataset reproduces byte-identical payloads
    save_dataset(tmp.path / "ds2", d);
    for (const std::string name : {"sample_0000.lambda.bin", "sample_0002.uf.bin", "manifest.json"})
        CHECK(hash_file(tmp.path / "ds" / name) == hash_file(tmp.path / "ds2" / name));
}

TEST_CASE("load reports malformed payload sizes") {
    TempDir tmp;
    auto d = tiny_dataset();
    save_dataset(tmp.path / "ds", d);
    // truncate a solution payload
    auto raw = read_raw_f64(tmp.path / "ds" / "sample_0001.uf.bin");
    raw.pop_back();
    write_raw_f64(tmp.path / "ds" / "sample_0001.uf.bin", raw.data(), raw.size());
    CHECK_THROWS_AS(load_dataset(tmp.path / "ds"), IoError);
}
