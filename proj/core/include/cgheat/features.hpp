#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgheat/fem.hpp"
#include "cgheat/microstructure.hpp"

namespace cgheat {

// ---- effective-medium approximations (2D) ----

/// Maxwell-Garnett: matrix phase with dilute spherical inclusions.
double mga(double lambda_mat, double lambda_inc, double phi_inc);

/// Self-consistent (Bruggeman) approximation; phase-inversion symmetric.
double sca(double lambda_mat, double lambda_inc, double phi_inc);

/// Differential effective medium: root of
/// ((l_inc - l_eff)/(l_inc - l_mat)) * sqrt(l_mat/l_eff) = 1 - phi_inc,
/// bracketed between the phase conductivities, relative tolerance 1e-12.
double dem(double lambda_mat, double lambda_inc, double phi_inc);

// ---- morphology ----

enum class DistanceMetric { euclidean, cityblock, chessboard };

DistanceMetric distance_metric_from_string(const std::string& name);

/// Distance from every pixel to the nearest mask pixel (mask nonzero).
/// All-zero mask yields +inf everywhere.
std::vector<double> distance_transform(int nx, int ny, const std::vector<std::uint8_t>& mask,
                                       DistanceMetric metric = DistanceMetric::euclidean);

/// Per-blob (8-connected), per-line and distance-transform statistics of a
/// binary two-phase sub-grid, in pixel units. Statistics of an absent phase
/// are 0 by convention.
std::map<std::string, double> morphology_features(
    const Microstructure& subgrid, DistanceMetric metric = DistanceMetric::euclidean);

// ---- catalog / design matrix ----

/// One feature function chi_j. kind is one of "constant",
/// "effective_medium" (params: formula = mga|sca|dem, matrix = auto|hi|lo)
/// or "morphological" (name = statistic key, params: optional metric).
struct FeatureEntry {
    std::string name;
    std::string kind;
    nlohmann::json params = nlohmann::json::object();
};

/// Ordered feature list; the column order of every design matrix. Holds the
/// optional per-feature standardization (shift, scale) fitted on training
/// data; the constant column is exempt.
class FeatureCatalog {
public:
    std::vector<FeatureEntry> entries;
    std::vector<double> shift;  // empty until fitted
    std::vector<double> scale;

    std::size_t size() const { return entries.size(); }
    bool normalized() const { return !shift.empty(); }

    /// Raw (un-normalized) feature row for one coarse-element sub-grid.
    Eigen::VectorXd evaluate_row(const Microstructure& subgrid) const;

    /// Shipped default: constant + effective-medium (both matrix
    /// assignments for MGA/DEM) + the full morphology statistic set.
    static FeatureCatalog default_catalog();

    static FeatureCatalog from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    std::uint64_t hash() const;

    void validate() const;
};

struct DesignMatrix {
    Eigen::MatrixXd values;  // n_coarse_elements x n_features
};

/// Split the fine grid into the rectangular sub-grids belonging to each
/// coarse element, coarse row-major order. Shapes must divide evenly.
std::vector<Microstructure> partition(const Microstructure& fine, const MeshSpec& coarse);

/// Phi(lambda_f): row k = catalog features of sub-grid k, normalized when
/// the catalog normalization is fitted. Throws DataError on non-finite values.
DesignMatrix build_design_matrix(const Microstructure& fine, const MeshSpec& coarse,
                                 const FeatureCatalog& catalog);

/// Standardize non-constant features to mean 0, sd 1 over the row stack of
/// the given raw design matrices. Near-constant columns keep scale 1.
void fit_normalization(FeatureCatalog& catalog, const std::vector<DesignMatrix>& raw);

}  // namespace cgheat
