#include "cgheat/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

namespace cgheat {

static_assert(std::endian::native == std::endian::little,
              "raw float64 artifacts are little-endian; big-endian hosts are unsupported");

namespace fs = std::filesystem;

namespace {

void write_bytes_atomic(const fs::path& path, const void* data, std::size_t n) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

}  // namespace

void write_raw_f64(const fs::path& path, const double* data, std::size_t n) {
    write_bytes_atomic(path, data, n * sizeof(double));
}

std::vector<double> read_raw_f64(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open: " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(double) != 0)
        throw IoError("file size not a multiple of 8: " + path.string());
    std::vector<double> v(bytes / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read failed: " + path.string());
    return v;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_bytes_atomic(path, text.data(), text.size());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("bad JSON in " + path.string() + ": " + e.what());
    }
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto n = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (in.eof()) break;
    }
    return h;
}

namespace {

std::string sample_stem(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04zu", i);
    return buf;
}

nlohmann::json flux_json(const FluxSpec& f) {
    return {{"qx0", f.qx0}, {"qx_y", f.qx_y}, {"qy0", f.qy0}, {"qy_x", f.qy_x}};
}

FluxSpec flux_from(const nlohmann::json& j) {
    return {j.at("qx0"), j.at("qx_y"), j.at("qy0"), j.at("qy_x")};
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& dataset) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());

    nlohmann::json manifest;
    manifest["n_samples"] = dataset.samples.size();
    manifest["fine_mesh"] = {{"nel_x", dataset.fine_mesh.nel_x},
                             {"nel_y", dataset.fine_mesh.nel_y}};
    manifest["length_scale"] = dataset.length_scale;
    nlohmann::json bc_j;
    bc_j["dirichlet"] = nlohmann::json::array();
    for (const auto& [node, value] : dataset.bc.dirichlet)
        bc_j["dirichlet"].push_back({node, value});
    bc_j["flux"] = flux_json(dataset.bc.flux);
    manifest["bc"] = bc_j;
    manifest["samples"] = nlohmann::json::array();

    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& smp = dataset.samples[i];
        const std::string stem = sample_stem(i);
        const fs::path lam_bin = dir / (stem + ".lambda.bin");
        const fs::path uf_bin = dir / (stem + ".uf.bin");

        write_raw_f64(lam_bin, smp.lambda_f.cells.values.data(), smp.lambda_f.cells.size());
        write_raw_f64(uf_bin, smp.u_f.data(), static_cast<std::size_t>(smp.u_f.size()));

        write_json(dir / (stem + ".lambda.json"),
                   {{"nx", smp.lambda_f.cells.nx},
                    {"ny", smp.lambda_f.cells.ny},
                    {"lambda_hi", smp.lambda_f.medium.lambda_hi},
                    {"lambda_lo", smp.lambda_f.medium.lambda_lo},
                    {"phi_hi", smp.lambda_f.medium.phi_hi},
                    {"l", dataset.length_scale},
                    {"seed", smp.seed}});
        write_json(dir / (stem + ".uf.json"),
                   {{"nel_x", dataset.fine_mesh.nel_x},
                    {"nel_y", dataset.fine_mesh.nel_y},
                    {"n_nodes", dataset.fine_mesh.n_nodes()},
                    {"bc", bc_j}});

        manifest["samples"].push_back({{"stem", stem},
                                       {"seed", smp.seed},
                                       {"lambda_hash", hash_file(lam_bin)},
                                       {"uf_hash", hash_file(uf_bin)}});
    }
    write_json(dir / "manifest.json", manifest);
}

Dataset load_dataset(const fs::path& dir) {
    const auto manifest = read_json(dir / "manifest.json");
    Dataset ds;
    ds.fine_mesh = {manifest.at("fine_mesh").at("nel_x"), manifest.at("fine_mesh").at("nel_y")};
    ds.length_scale = manifest.at("length_scale");
    for (const auto& d : manifest.at("bc").at("dirichlet"))
        ds.bc.dirichlet.emplace_back(d.at(0).get<int>(), d.at(1).get<double>());
    ds.bc.flux = flux_from(manifest.at("bc").at("flux"));

    for (const auto& entry : manifest.at("samples")) {
        const std::string stem = entry.at("stem");
        const auto lam_side = read_json(dir / (stem + ".lambda.json"));

        Sample smp;
        smp.seed = entry.at("seed").get<std::uint64_t>();
        smp.lambda_f.medium.lambda_hi = lam_side.at("lambda_hi");
        smp.lambda_f.medium.lambda_lo = lam_side.at("lambda_lo");
        smp.lambda_f.medium.phi_hi = lam_side.at("phi_hi");
        smp.lambda_f.cells = Grid(lam_side.at("nx"), lam_side.at("ny"));
        smp.lambda_f.cells.values = read_raw_f64(dir / (stem + ".lambda.bin"));
        if (smp.lambda_f.cells.values.size() !=
            static_cast<std::size_t>(smp.lambda_f.cells.nx) * smp.lambda_f.cells.ny)
            throw IoError("lambda payload size mismatch: " + stem);

        const auto uf = read_raw_f64(dir / (stem + ".uf.bin"));
        if (static_cast<int>(uf.size()) != ds.fine_mesh.n_nodes())
            throw IoError("uf payload size mismatch: " + stem);
        smp.u_f = Eigen::Map<const Eigen::VectorXd>(uf.data(), uf.size());
        ds.samples.push_back(std::move(smp));
    }
    return ds;
}

std::uint64_t dataset_hash(const Dataset& dataset) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto fold = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& smp : dataset.samples) {
        fold(smp.lambda_f.cells.values.data(), smp.lambda_f.cells.size() * sizeof(double));
        fold(smp.u_f.data(), static_cast<std::size_t>(smp.u_f.size()) * sizeof(double));
    }
    return h;
}

}  // namespace cgheat
