#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <optional>

#include <json.hpp>

#include "cgheat/features.hpp"
#include "cgheat/fem.hpp"
#include "cgheat/microstructure.hpp"

namespace cgheat {

/// All learnable and fixed parameters of the two-density generative model.
/// The interpolation matrix W is fixed by the meshes and rebuilt on load,
/// never stored.
struct ModelParams {
    Eigen::VectorXd theta_c;  // encoder weights, one per catalog feature
    Eigen::VectorXd sigma2;   // encoder variances, one per coarse element
    Eigen::VectorXd s;        // decoder variances, one per fine node
    MeshSpec coarse_mesh;
    MeshSpec fine_mesh;
    BoundaryConditions bc;
    FeatureCatalog catalog;

    std::uint64_t catalog_hash() const { return catalog.hash(); }
    Eigen::SparseMatrix<double> build_interpolation() const {
        return interpolation_matrix(coarse_mesh, fine_mesh);
    }
    void validate() const;

    nlohmann::json to_json() const;
    static ModelParams from_json(const nlohmann::json& j);
};

/// Exact log density of N(z | mean, diag(sigma2)).
double gaussian_diag_log_density(const Eigen::VectorXd& z, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& sigma2);

/// Encoder p_c: N(z_c | Phi theta_c, diag(sigma^2)); mean passed precomputed.
double encoder_log_density(const Eigen::VectorXd& z_c, const Eigen::VectorXd& phi_theta,
                           const Eigen::VectorXd& sigma2);

/// Decoder p_cf: N(U_f | W U_c, diag(s)).
double decoder_log_density(const Eigen::VectorXd& u_f, const Eigen::VectorXd& u_c,
                           const Eigen::SparseMatrix<double>& w, const Eigen::VectorXd& s);

struct PredictiveEnsemble {
    Eigen::VectorXd mean;      // per fine node
    Eigen::VectorXd variance;  // per fine node, >= 0
    int n_samples = 0;
    std::vector<Eigen::VectorXd> samples;  // retained only on request
};

/// Generative prediction: draw z_c ~ p_c, solve the coarse model, draw
/// U_f ~ p_cf; streaming per-node mean/variance. Deterministic per seed.
PredictiveEnsemble predict(const Microstructure& lambda_f, const ModelParams& params,
                           int n_samples, std::uint64_t seed, bool retain_samples = false);

}  // namespace cgheat
