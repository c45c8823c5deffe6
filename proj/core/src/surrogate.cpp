#include "cgheat/surrogate.hpp"

#include <cmath>
#include <random>

#include "cgheat/rng.hpp"

namespace cgheat {

namespace {
constexpr double kVarianceFloor = 1e-12;
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

void ModelParams::validate() const {
    coarse_mesh.validate();
    fine_mesh.validate();
    catalog.validate();
    if (theta_c.size() != static_cast<Eigen::Index>(catalog.size()))
        throw ConfigError("ModelParams: theta_c length must match catalog size");
    if (sigma2.size() != coarse_mesh.n_elements())
        throw ConfigError("ModelParams: sigma2 length must match coarse element count");
    if (s.size() != fine_mesh.n_nodes())
        throw ConfigError("ModelParams: s length must match fine node count");
    if ((sigma2.array() <= 0.0).any()) throw ConfigError("ModelParams: sigma2 must be > 0");
    if ((s.array() <= 0.0).any()) throw ConfigError("ModelParams: s must be > 0");
    if (fine_mesh.nel_x % coarse_mesh.nel_x != 0 || fine_mesh.nel_y % coarse_mesh.nel_y != 0)
        throw ConfigError("ModelParams: meshes are not nested");
}

double gaussian_diag_log_density(const Eigen::VectorXd& z, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& sigma2) {
    if (z.size() != mean.size() || z.size() != sigma2.size())
        throw ConfigError("gaussian_diag_log_density: dimension mismatch");
    double lp = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        const double d = z[k] - mean[k];
        lp += -0.5 * (kLog2Pi + std::log(sigma2[k])) - 0.5 * d * d / sigma2[k];
    }
    return lp;
}

double encoder_log_density(const Eigen::VectorXd& z_c, const Eigen::VectorXd& phi_theta,
                           const Eigen::VectorXd& sigma2) {
    return gaussian_diag_log_density(z_c, phi_theta, sigma2);
}

double decoder_log_density(const Eigen::VectorXd& u_f, const Eigen::VectorXd& u_c,
                           const Eigen::SparseMatrix<double>& w, const Eigen::VectorXd& s) {
    const Eigen::VectorXd mean = w * u_c;
    return gaussian_diag_log_density(u_f, mean, s);
}

PredictiveEnsemble predict(const Microstructure& lambda_f, const ModelParams& params,
                           int n_samples, std::uint64_t seed, bool retain_samples) {
    if (n_samples < 1) throw ConfigError("predict: n_samples must be >= 1");
    params.validate();

    const auto phi = build_design_matrix(lambda_f, params.coarse_mesh, params.catalog);
    const Eigen::VectorXd mu = phi.values * params.theta_c;
    const Eigen::VectorXd sigma =
        params.sigma2.cwiseMax(kVarianceFloor).array().sqrt().matrix();
    const Eigen::VectorXd s_sd = params.s.cwiseMax(kVarianceFloor).array().sqrt().matrix();

    const CoarseSolver solver(params.coarse_mesh,
                              remap_bc(params.bc, params.fine_mesh, params.coarse_mesh));
    const Eigen::SparseMatrix<double> w = params.build_interpolation();
    const Eigen::Index n_f = params.fine_mesh.n_nodes();

    PredictiveEnsemble out;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_f);
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(n_f);
    if (retain_samples) out.samples.reserve(n_samples);

    for (int m = 0; m < n_samples; ++m) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(m));
        std::normal_distribution<double> ndist(0.0, 1.0);

        Eigen::VectorXd z(mu.size());
        for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = mu[k] + sigma[k] * ndist(rng);

        Eigen::VectorXd u_c;
        try {
            u_c = solver.solve_log_conductivity(z);
        } catch (const NumericError& e) {
            std::string dump = "predict: coarse solve failed for z_c = [";
            for (Eigen::Index k = 0; k < z.size(); ++k)
                dump += (k ? ", " : "") + std::to_string(z[k]);
            throw NumericError(dump + "]: " + e.what());
        }

        Eigen::VectorXd u_f = w * u_c;
        for (Eigen::Index j = 0; j < n_f; ++j) u_f[j] += s_sd[j] * ndist(rng);

        sum += u_f;
        sumsq += u_f.cwiseProduct(u_f);
        if (retain_samples) out.samples.push_back(std::move(u_f));
    }

    out.n_samples = n_samples;
    out.mean = sum / n_samples;
    out.variance =
        (sumsq / n_samples - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
    return out;
}

namespace {

nlohmann::json bc_to_json(const BoundaryConditions& bc) {
    nlohmann::json j;
    j["dirichlet"] = nlohmann::json::array();
    for (const auto& [node, value] : bc.dirichlet) j["dirichlet"].push_back({node, value});
    j["flux"] = {{"qx0", bc.flux.qx0}, {"qx_y", bc.flux.qx_y}, {"qy0", bc.flux.qy0},
                 {"qy_x", bc.flux.qy_x}};
    return j;
}

BoundaryConditions bc_from_json(const nlohmann::json& j) {
    BoundaryConditions bc;
    for (const auto& d : j.at("dirichlet"))
        bc.dirichlet.emplace_back(d.at(0).get<int>(), d.at(1).get<double>());
    const auto& f = j.at("flux");
    bc.flux = {f.at("qx0"), f.at("qx_y"), f.at("qy0"), f.at("qy_x")};
    return bc;
}

}  // namespace

nlohmann::json ModelParams::to_json() const {
    nlohmann::json j;
    j["theta_c"] = std::vector<double>(theta_c.data(), theta_c.data() + theta_c.size());
    j["sigma2"] = std::vector<double>(sigma2.data(), sigma2.data() + sigma2.size());
    j["s"] = std::vector<double>(s.data(), s.data() + s.size());
    j["coarse_mesh"] = {{"nel_x", coarse_mesh.nel_x}, {"nel_y", coarse_mesh.nel_y}};
    j["fine_mesh"] = {{"nel_x", fine_mesh.nel_x}, {"nel_y", fine_mesh.nel_y}};
    j["bc"] = bc_to_json(bc);
    j["catalog"] = catalog.to_json();
    j["catalog_hash"] = catalog_hash();
    // W is reconstructed from the meshes; record the recipe only.
    j["interpolation"] = "coarse-bilinear-shape-functions";
    return j;
}

ModelParams ModelParams::from_json(const nlohmann::json& j) {
    ModelParams p;
    const auto theta = j.at("theta_c").get<std::vector<double>>();
    const auto sig = j.at("sigma2").get<std::vector<double>>();
    const auto sv = j.at("s").get<std::vector<double>>();
    p.theta_c = Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
    p.sigma2 = Eigen::Map<const Eigen::VectorXd>(sig.data(), sig.size());
    p.s = Eigen::Map<const Eigen::VectorXd>(sv.data(), sv.size());
    p.coarse_mesh = {j.at("coarse_mesh").at("nel_x"), j.at("coarse_mesh").at("nel_y")};
    p.fine_mesh = {j.at("fine_mesh").at("nel_x"), j.at("fine_mesh").at("nel_y")};
    p.bc = bc_from_json(j.at("bc"));
    p.catalog = FeatureCatalog::from_json(j.at("catalog"));
    p.validate();
    return p;
}

}  // namespace cgheat
