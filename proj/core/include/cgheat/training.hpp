#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "cgheat/io.hpp"
#include "cgheat/surrogate.hpp"

namespace cgheat {

struct McmcConfig {
    int burn_in = 500;
    int n_samples = 500;
    double target_accept = 0.3;
};

struct GammaConfig {
    std::string mode = "cv";  // "cv" | "fixed"
    double value = 0.0;       // used when mode == "fixed"
    std::vector<double> grid;  // empty -> default log-spaced grid
    int folds = 5;
};

struct EmConfig {
    int max_iter = 200;
    double tol = 1e-4;
    int window = 5;
    McmcConfig mcmc;
    GammaConfig gamma;
    std::string e_step = "mcmc";  // "mcmc" | "quadrature" (1-element coarse models)
    int lower_bound_samples = 128;
    int pred_score_samples = 512;
    std::uint64_t seed = 0;

    static EmConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Monte-Carlo (or quadrature) estimates of the per-sample posterior moments
/// needed by the M-step.
struct SampleMoments {
    Eigen::VectorXd z_mean;       // <z_c>
    Eigen::VectorXd z_sq;         // <z_{c,k}^2>
    Eigen::VectorXd residual_sq;  // <(U_f - W U_c(z_c))_j^2>
    double accept_rate = 1.0;
    bool accept_warning = false;
    double log_normalizer = 0.0;  // quadrature path only: log int p_cf p_c dz
};

struct EmIterationStats {
    int iteration = 0;
    double lower_bound = 0.0;
    double lb_std_error = 0.0;
    double mean_accept_rate = 0.0;
    int nnz_theta = 0;
    double wall_time_s = 0.0;
};

struct EmState {
    int iteration = 0;
    std::vector<EmIterationStats> trace;
    std::vector<SampleMoments> e_step_stats;
};

/// Precomputed per-dataset quantities shared by E-steps, M-steps and scoring.
class TrainingContext {
public:
    TrainingContext(const Dataset& data, const MeshSpec& coarse_mesh,
                    const FeatureCatalog& catalog);

    const Dataset& data() const { return *data_; }
    const MeshSpec& coarse_mesh() const { return coarse_mesh_; }
    const FeatureCatalog& catalog() const { return catalog_; }
    const std::vector<Eigen::MatrixXd>& phi() const { return phi_; }
    const CoarseSolver& solver() const { return solver_; }
    const Eigen::SparseMatrix<double>& interpolation() const { return w_; }
    int n_samples() const { return static_cast<int>(phi_.size()); }

private:
    const Dataset* data_;
    MeshSpec coarse_mesh_;
    FeatureCatalog catalog_;  // normalization already fitted by caller
    std::vector<Eigen::MatrixXd> phi_;
    CoarseSolver solver_;
    Eigen::SparseMatrix<double> w_;
};

/// Adaptive random-walk Metropolis E-step targeting
/// q_i proportional to p_cf(U_f | U_c(z), s) p_c(z | Phi theta, sigma^2).
/// warm_starts: previous posterior means (chain inits); null on iteration 0.
std::vector<SampleMoments> e_step(const TrainingContext& ctx, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& sigma2, const Eigen::VectorXd& s,
                                  const McmcConfig& mcmc, std::uint64_t seed,
                                  std::uint64_t iteration,
                                  const std::vector<Eigen::VectorXd>* warm_starts);

/// Deterministic trapezoid-quadrature E-step; requires a 1-element coarse
/// model. Also fills log_normalizer with the exact per-sample likelihood.
std::vector<SampleMoments> e_step_quadrature(const TrainingContext& ctx,
                                             const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd& sigma2,
                                             const Eigen::VectorXd& s);

/// Weighted-LASSO encoder update by cyclic coordinate descent with exact
/// soft-thresholding; intercept column unpenalized; gamma = 0 reduces to the
/// normal equations.
Eigen::VectorXd m_step_theta(const std::vector<SampleMoments>& moments,
                             const std::vector<Eigen::MatrixXd>& design_matrices,
                             const Eigen::VectorXd& sigma2, double gamma,
                             const Eigen::VectorXd& theta_init, int intercept_col = 0);

Eigen::VectorXd m_step_sigma(const std::vector<SampleMoments>& moments,
                             const std::vector<Eigen::MatrixXd>& design_matrices,
                             const Eigen::VectorXd& theta);

Eigen::VectorXd m_step_s(const std::vector<SampleMoments>& moments);

/// Soft-thresholding operator sign(x) max(|x| - t, 0).
double soft_threshold(double x, double t);

struct LowerBoundEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte-Carlo estimate of the marginal log likelihood sum_i log pbar_i plus
/// the log prior, by importance sampling from the encoder.
LowerBoundEstimate estimate_lower_bound(const TrainingContext& ctx, const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd& sigma2, const Eigen::VectorXd& s,
                                        double gamma, int n_is_samples, std::uint64_t seed);

/// log p(theta_c) under the Laplace sparsity prior; 0 when gamma == 0.
double laplace_log_prior(const Eigen::VectorXd& theta, double gamma);

struct FitResult {
    ModelParams params;
    EmState state;
    double gamma = 0.0;
    struct CvCell {
        double gamma;
        double mean_score;
        double se;  // standard error of mean_score over held-out samples
    };
    std::vector<CvCell> cv_table;
};

/// Monte-Carlo EM at a fixed gamma. Fits the catalog normalization on this
/// dataset, then alternates E-step and theta -> sigma -> s updates until the
/// windowed lower-bound estimate stalls.
FitResult fit_em(const Dataset& data, const FeatureCatalog& raw_catalog,
                 const MeshSpec& coarse_mesh, const EmConfig& config, double gamma,
                 std::uint64_t seed);

/// Full training entry point: gamma by K-fold cross-validation on held-out
/// predictive log score (or fixed by config), then a final fit on all data.
FitResult fit(const Dataset& data, const FeatureCatalog& raw_catalog, const MeshSpec& coarse_mesh,
              const EmConfig& config);

/// Held-out predictive log density log pbar(u_f | lambda_f) estimated with
/// n_samples encoder draws.
double predictive_log_score(const ModelParams& params, const Microstructure& lambda_f,
                            const Eigen::VectorXd& u_f, int n_samples, std::uint64_t seed);

}  // namespace cgheat
