#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgheat/fem.hpp"
#include "cgheat/microstructure.hpp"

namespace cgheat {

/// Raw little-endian float64, written atomically (temp file + rename).
void write_raw_f64(const std::filesystem::path& path, const double* data, std::size_t n);
std::vector<double> read_raw_f64(const std::filesystem::path& path);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t hash_file(const std::filesystem::path& path);

/// One (input, output) pair of the fine-grained model.
struct Sample {
    Microstructure lambda_f;
    Eigen::VectorXd u_f;  // fine nodal temperatures
    std::uint64_t seed = 0;
};

struct Dataset {
    MeshSpec fine_mesh;
    BoundaryConditions bc;
    double length_scale = 0.0;
    std::vector<Sample> samples;
};

/// Writes sample_%04zu.{lambda,uf}.bin + JSON sidecars plus a manifest
/// recording seeds and content hashes.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

/// Hash over all sample payloads; keys design-matrix caches.
std::uint64_t dataset_hash(const Dataset& dataset);

}  // namespace cgheat
