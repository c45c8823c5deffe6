#include "cgheat/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "cgheat/rng.hpp"

namespace cgheat {

namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double diag_gauss_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& var) {
    double lp = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double d = x[k] - mean[k];
        lp += -0.5 * (kLog2Pi + std::log(var[k])) - 0.5 * d * d / var[k];
    }
    return lp;
}

/// Decoder log density from the cached squared residual vector.
double decoder_logpdf_from_sq(const Eigen::VectorXd& sq_resid, const Eigen::VectorXd& s) {
    double lp = 0.0;
    for (Eigen::Index j = 0; j < s.size(); ++j)
        lp += -0.5 * (kLog2Pi + std::log(s[j])) - 0.5 * sq_resid[j] / s[j];
    return lp;
}

struct TargetEval {
    double logp = kNegInf;
    Eigen::VectorXd sq_resid;
};

TargetEval eval_target(const TrainingContext& ctx, int i, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& phi_theta, const Eigen::VectorXd& sigma2,
                       const Eigen::VectorXd& s) {
    TargetEval ev;
    Eigen::VectorXd u_c;
    try {
        u_c = ctx.solver().solve_log_conductivity(z);
    } catch (const NumericError&) {
        return ev;  // rejected proposal
    }
    const Eigen::VectorXd wu = ctx.interpolation() * u_c;
    ev.sq_resid = (ctx.data().samples[i].u_f - wu).array().square().matrix();
    ev.logp = diag_gauss_logpdf(z, phi_theta, sigma2) + decoder_logpdf_from_sq(ev.sq_resid, s);
    return ev;
}

}  // namespace

TrainingContext::TrainingContext(const Dataset& data, const MeshSpec& coarse_mesh,
                                 const FeatureCatalog& catalog)
    : data_(&data),
      coarse_mesh_(coarse_mesh),
      catalog_(catalog),
      solver_(coarse_mesh, remap_bc(data.bc, data.fine_mesh, coarse_mesh)),
      w_(interpolation_matrix(coarse_mesh, data.fine_mesh)) {
    if (data.samples.empty()) throw ConfigError("TrainingContext: empty dataset");
    for (const auto& smp : data.samples) {
        if (smp.lambda_f.cells.nx != data.fine_mesh.nel_x ||
            smp.lambda_f.cells.ny != data.fine_mesh.nel_y)
            throw ConfigError("TrainingContext: microstructure/mesh shape mismatch");
        if (smp.u_f.size() != data.fine_mesh.n_nodes())
            throw ConfigError("TrainingContext: solution length mismatch");
    }
    phi_.reserve(data.samples.size());
    for (const auto& smp : data.samples)
        phi_.push_back(build_design_matrix(smp.lambda_f, coarse_mesh, catalog_).values);
}

std::vector<SampleMoments> e_step(const TrainingContext& ctx, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& sigma2, const Eigen::VectorXd& s,
                                  const McmcConfig& mcmc, std::uint64_t seed,
                                  std::uint64_t iteration,
                                  const std::vector<Eigen::VectorXd>* warm_starts) {
    const int n = ctx.n_samples();
    const int n_c = static_cast<int>(sigma2.size());
    std::vector<SampleMoments> out(n);
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            auto rng = make_rng(seed, iteration, static_cast<std::uint64_t>(i));
            std::normal_distribution<double> ndist(0.0, 1.0);
            std::uniform_real_distribution<double> udist(0.0, 1.0);

            const Eigen::VectorXd phi_theta = ctx.phi()[i] * theta;
            Eigen::VectorXd z =
                warm_starts ? (*warm_starts)[i] : phi_theta;
            TargetEval cur = eval_target(ctx, i, z, phi_theta, sigma2, s);
            if (cur.logp == kNegInf) {
                z = Eigen::VectorXd::Zero(n_c);
                cur = eval_target(ctx, i, z, phi_theta, sigma2, s);
                if (cur.logp == kNegInf)
                    throw NumericError("e_step: cannot evaluate target at chain init");
            }

            // per-coordinate proposal scales, one global adaptation factor
            const Eigen::VectorXd base_step = sigma2.array().sqrt().matrix();
            double log_scale = std::log(2.4 / std::sqrt(static_cast<double>(n_c)));

            Eigen::VectorXd sum_z = Eigen::VectorXd::Zero(n_c);
            Eigen::VectorXd sum_zsq = Eigen::VectorXd::Zero(n_c);
            Eigen::VectorXd sum_rsq = Eigen::VectorXd::Zero(ctx.data().fine_mesh.n_nodes());
            int accepted_retained = 0;

            Eigen::VectorXd proposal(n_c);
            const int total = mcmc.burn_in + mcmc.n_samples;
            for (int t = 0; t < total; ++t) {
                const double scale = std::exp(log_scale);
                for (int k = 0; k < n_c; ++k)
                    proposal[k] = z[k] + scale * base_step[k] * ndist(rng);
                const TargetEval prop = eval_target(ctx, i, proposal, phi_theta, sigma2, s);
                const bool accept =
                    prop.logp > kNegInf && std::log(udist(rng)) < prop.logp - cur.logp;
                if (accept) {
                    z = proposal;
                    cur = prop;
                }
                if (t < mcmc.burn_in) {
                    const double gain = std::min(0.25, 1.0 / std::sqrt(t + 1.0));
                    log_scale += gain * ((accept ? 1.0 : 0.0) - mcmc.target_accept);
                } else {
                    accepted_retained += accept;
                    sum_z += z;
                    sum_zsq += z.cwiseProduct(z);
                    sum_rsq += cur.sq_resid;
                }
            }

            SampleMoments m;
            m.z_mean = sum_z / mcmc.n_samples;
            m.z_sq = sum_zsq / mcmc.n_samples;
            m.residual_sq = sum_rsq / mcmc.n_samples;
            m.accept_rate = static_cast<double>(accepted_retained) / mcmc.n_samples;
            m.accept_warning = m.accept_rate < 0.05 || m.accept_rate > 0.9;
            out[i] = std::move(m);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<SampleMoments> e_step_quadrature(const TrainingContext& ctx,
                                             const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd& sigma2,
                                             const Eigen::VectorXd& s) {
    if (sigma2.size() != 1)
        throw ConfigError("e_step_quadrature: requires a 1-element coarse model");
    const int n = ctx.n_samples();
    std::vector<SampleMoments> out(n);

    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd phi_theta = ctx.phi()[i] * theta;
        const double mu = phi_theta[0];
        const double sd = std::sqrt(sigma2[0]);

        auto logq = [&](double z) {
            Eigen::VectorXd zv(1);
            zv[0] = z;
            return eval_target(ctx, i, zv, phi_theta, sigma2, s);
        };

        // coarse scan to locate the posterior mode, then a fine uniform grid
        // over the region within 45 nats of the mode
        const double lo0 = mu - 30.0 * sd - 5.0, hi0 = mu + 30.0 * sd + 5.0;
        const int n_scan = 801;
        const double h0 = (hi0 - lo0) / (n_scan - 1);
        std::vector<double> scan_logp(n_scan);
        int best = 0;
        for (int g = 0; g < n_scan; ++g) {
            scan_logp[g] = logq(lo0 + g * h0).logp;
            if (scan_logp[g] > scan_logp[best]) best = g;
        }
        int gl = best, gr = best;
        while (gl > 0 && scan_logp[gl] > scan_logp[best] - 45.0) --gl;
        while (gr < n_scan - 1 && scan_logp[gr] > scan_logp[best] - 45.0) ++gr;
        const double lo = lo0 + gl * h0, hi = lo0 + gr * h0;

        const int n_fine = 1601;
        const double h = (hi - lo) / (n_fine - 1);
        std::vector<double> logp(n_fine);
        std::vector<Eigen::VectorXd> sq(n_fine);
        double lmax = kNegInf;
        for (int g = 0; g < n_fine; ++g) {
            auto ev = logq(lo + g * h);
            logp[g] = ev.logp;
            sq[g] = std::move(ev.sq_resid);
            lmax = std::max(lmax, logp[g]);
        }

        double z0 = 0.0, z1 = 0.0, z2 = 0.0;
        Eigen::VectorXd rsq = Eigen::VectorXd::Zero(ctx.data().fine_mesh.n_nodes());
        for (int g = 0; g < n_fine; ++g) {
            const double w = (g == 0 || g == n_fine - 1) ? 0.5 * h : h;
            const double p = std::exp(logp[g] - lmax) * w;
            const double z = lo + g * h;
            z0 += p;
            z1 += p * z;
            z2 += p * z * z;
            rsq += p * sq[g];
        }

        SampleMoments m;
        m.z_mean = Eigen::VectorXd::Constant(1, z1 / z0);
        m.z_sq = Eigen::VectorXd::Constant(1, z2 / z0);
        m.residual_sq = rsq / z0;
        m.accept_rate = 1.0;
        m.log_normalizer = lmax + std::log(z0);
        out[i] = std::move(m);
    }
    return out;
}

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

Eigen::VectorXd m_step_theta(const std::vector<SampleMoments>& moments,
                             const std::vector<Eigen::MatrixXd>& design_matrices,
                             const Eigen::VectorXd& sigma2, double gamma,
                             const Eigen::VectorXd& theta_init, int intercept_col) {
    if (moments.size() != design_matrices.size())
        throw ConfigError("m_step_theta: moments/design count mismatch");
    if (!(gamma >= 0.0)) throw ConfigError("m_step_theta: gamma must be >= 0");
    const Eigen::Index p = theta_init.size();
    const Eigen::VectorXd inv_var = sigma2.cwiseInverse();

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < moments.size(); ++i) {
        const auto& phi = design_matrices[i];
        const Eigen::MatrixXd wphi = inv_var.asDiagonal() * phi;
        a.noalias() += phi.transpose() * wphi;
        b.noalias() += wphi.transpose() * moments[i].z_mean;
    }

    const double pen = std::sqrt(gamma);
    Eigen::VectorXd theta = theta_init;
    Eigen::VectorXd a_theta = a * theta;
    constexpr int kMaxSweeps = 10000;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (a(j, j) <= 0.0) continue;
            const double r = b[j] - a_theta[j] + a(j, j) * theta[j];
            const double updated =
                j == intercept_col ? r / a(j, j) : soft_threshold(r, pen) / a(j, j);
            const double delta = updated - theta[j];
            if (delta != 0.0) {
                a_theta += delta * a.col(j);
                theta[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (max_change < 1e-10) break;
        // incremental gradient drifts over long runs; refresh periodically
        if (sweep % 256 == 255) a_theta.noalias() = a * theta;
    }
    if (!theta.allFinite())
        throw NumericError("m_step_theta: coordinate descent diverged (non-finite iterate)");
    return theta;
}

Eigen::VectorXd m_step_sigma(const std::vector<SampleMoments>& moments,
                             const std::vector<Eigen::MatrixXd>& design_matrices,
                             const Eigen::VectorXd& theta) {
    if (moments.empty()) throw ConfigError("m_step_sigma: no moments");
    const Eigen::Index n_c = moments[0].z_mean.size();
    Eigen::VectorXd sigma2 = Eigen::VectorXd::Zero(n_c);
    for (std::size_t i = 0; i < moments.size(); ++i) {
        const Eigen::VectorXd mu = design_matrices[i] * theta;
        // <(z - Phi theta)^2> = <z^2> - 2 mu <z> + mu^2, with the current theta
        sigma2 += (moments[i].z_sq - 2.0 * mu.cwiseProduct(moments[i].z_mean) +
                   mu.cwiseProduct(mu));
    }
    sigma2 /= static_cast<double>(moments.size());
    return sigma2.cwiseMax(kVarianceFloor);
}

Eigen::VectorXd m_step_s(const std::vector<SampleMoments>& moments) {
    if (moments.empty()) throw ConfigError("m_step_s: no moments");
    Eigen::VectorXd s = Eigen::VectorXd::Zero(moments[0].residual_sq.size());
    for (const auto& m : moments) s += m.residual_sq;
    s /= static_cast<double>(moments.size());
    return s.cwiseMax(kVarianceFloor);
}

double laplace_log_prior(const Eigen::VectorXd& theta, double gamma) {
    if (gamma == 0.0) return 0.0;
    const double root = std::sqrt(gamma);
    return theta.size() * std::log(0.5 * root) - root * theta.lpNorm<1>();
}

namespace {

/// log mean_m exp(logw_m) plus a delta-method standard error of the estimate.
std::pair<double, double> log_mean_exp_with_se(const std::vector<double>& logw) {
    const double mx = *std::max_element(logw.begin(), logw.end());
    if (mx == kNegInf) return {kNegInf, 0.0};
    double sum = 0.0, sumsq = 0.0;
    for (double lw : logw) {
        const double w = std::exp(lw - mx);
        sum += w;
        sumsq += w * w;
    }
    const int m = static_cast<int>(logw.size());
    const double mean = sum / m;
    const double var = std::max(sumsq / m - mean * mean, 0.0);
    const double se = std::sqrt(var / m) / mean;
    return {mx + std::log(mean), se};
}

double is_log_likelihood(const CoarseSolver& solver, const Eigen::SparseMatrix<double>& w,
                         const Eigen::VectorXd& u_f, const Eigen::VectorXd& phi_theta,
                         const Eigen::VectorXd& sigma2, const Eigen::VectorXd& s, int n_draws,
                         std::mt19937_64& rng, double* se_out) {
    std::normal_distribution<double> ndist(0.0, 1.0);
    const Eigen::VectorXd sd = sigma2.array().sqrt().matrix();
    std::vector<double> logw(n_draws, kNegInf);
    Eigen::VectorXd z(phi_theta.size());
    for (int m = 0; m < n_draws; ++m) {
        for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = phi_theta[k] + sd[k] * ndist(rng);
        try {
            const Eigen::VectorXd u_c = solver.solve_log_conductivity(z);
            const Eigen::VectorXd sq = (u_f - w * u_c).array().square().matrix();
            logw[m] = decoder_logpdf_from_sq(sq, s);
        } catch (const NumericError&) {
            // z draw outside the solvable range contributes zero weight
        }
    }
    auto [value, se] = log_mean_exp_with_se(logw);
    if (se_out) *se_out = se;
    return value;
}

}  // namespace

LowerBoundEstimate estimate_lower_bound(const TrainingContext& ctx, const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd& sigma2, const Eigen::VectorXd& s,
                                        double gamma, int n_is_samples, std::uint64_t seed) {
    LowerBoundEstimate out;
    double var_sum = 0.0;
    for (int i = 0; i < ctx.n_samples(); ++i) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(i), 0x1bULL);
        double se = 0.0;
        const Eigen::VectorXd phi_theta = ctx.phi()[i] * theta;
        out.value += is_log_likelihood(ctx.solver(), ctx.interpolation(),
                                       ctx.data().samples[i].u_f, phi_theta, sigma2, s,
                                       n_is_samples, rng, &se);
        var_sum += se * se;
    }
    out.value += laplace_log_prior(theta, gamma);
    out.std_error = std::sqrt(var_sum);
    return out;
}

double predictive_log_score(const ModelParams& params, const Microstructure& lambda_f,
                            const Eigen::VectorXd& u_f, int n_samples, std::uint64_t seed) {
    const auto phi = build_design_matrix(lambda_f, params.coarse_mesh, params.catalog);
    const CoarseSolver solver(params.coarse_mesh,
                              remap_bc(params.bc, params.fine_mesh, params.coarse_mesh));
    const Eigen::SparseMatrix<double> w = params.build_interpolation();
    auto rng = make_rng(seed, 0x5c0ULL);
    return is_log_likelihood(solver, w, u_f, phi.values * params.theta_c, params.sigma2, params.s,
                             n_samples, rng, nullptr);
}

namespace {

/// log-SCA per coarse element: the initial encoder target.
Eigen::VectorXd sca_targets(const Microstructure& ms, const MeshSpec& coarse) {
    const auto subs = partition(ms, coarse);
    Eigen::VectorXd z(subs.size());
    for (std::size_t k = 0; k < subs.size(); ++k) {
        std::size_t n_hi = 0;
        for (double v : subs[k].cells.values) n_hi += v == subs[k].medium.lambda_hi;
        const double phi_hi = static_cast<double>(n_hi) / subs[k].size();
        z[k] = std::log(sca(subs[k].medium.lambda_lo, subs[k].medium.lambda_hi, phi_hi));
    }
    return z;
}

}  // namespace

FitResult fit_em(const Dataset& data, const FeatureCatalog& raw_catalog,
                 const MeshSpec& coarse_mesh, const EmConfig& config, double gamma,
                 std::uint64_t seed) {
    if (data.samples.empty()) throw ConfigError("fit_em: empty dataset");
    coarse_mesh.validate();
    if (data.fine_mesh.nel_x % coarse_mesh.nel_x != 0 ||
        data.fine_mesh.nel_y % coarse_mesh.nel_y != 0)
        throw ConfigError("fit_em: meshes are not nested");

    // standardize features on this dataset
    FeatureCatalog catalog = raw_catalog;
    catalog.shift.clear();
    catalog.scale.clear();
    {
        std::vector<DesignMatrix> raw;
        raw.reserve(data.samples.size());
        for (const auto& smp : data.samples)
            raw.push_back(build_design_matrix(smp.lambda_f, coarse_mesh, catalog));
        fit_normalization(catalog, raw);
    }
    TrainingContext ctx(data, coarse_mesh, catalog);

    const int n = ctx.n_samples();
    const Eigen::Index p = static_cast<Eigen::Index>(catalog.size());
    const int n_c = coarse_mesh.n_elements();
    const Eigen::Index n_f = data.fine_mesh.n_nodes();

    // init: ridge fit of Phi theta to the per-element log-SCA
    Eigen::MatrixXd ata = 1e-8 * Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(p);
    std::vector<Eigen::VectorXd> z_targets(n);
    for (int i = 0; i < n; ++i) {
        z_targets[i] = sca_targets(data.samples[i].lambda_f, coarse_mesh);
        ata.noalias() += ctx.phi()[i].transpose() * ctx.phi()[i];
        atb.noalias() += ctx.phi()[i].transpose() * z_targets[i];
    }
    Eigen::VectorXd theta = ata.ldlt().solve(atb);

    Eigen::VectorXd sigma2 = Eigen::VectorXd::Zero(n_c);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n_f);
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd mu = ctx.phi()[i] * theta;
        sigma2 += (z_targets[i] - mu).array().square().matrix();
        const Eigen::VectorXd u_c0 = ctx.solver().solve_log_conductivity(mu);
        s += (data.samples[i].u_f - ctx.interpolation() * u_c0).array().square().matrix();
    }
    // keep enough initial spread for the chains to move
    sigma2 = (sigma2 / n).cwiseMax(1e-2);
    s = (s / n).cwiseMax(1e-8);

    const bool quadrature = config.e_step == "quadrature";
    EmState state;
    std::vector<Eigen::VectorXd> warm;
    std::vector<double> lb_trace;
    const auto t_start = std::chrono::steady_clock::now();

    for (int it = 0; it < config.max_iter; ++it) {
        std::vector<SampleMoments> moments =
            quadrature ? e_step_quadrature(ctx, theta, sigma2, s)
                       : e_step(ctx, theta, sigma2, s, config.mcmc, mix64(seed, 0xe5ULL),
                                static_cast<std::uint64_t>(it),
                                warm.empty() ? nullptr : &warm);

        theta = m_step_theta(moments, ctx.phi(), sigma2, gamma, theta);
        sigma2 = m_step_sigma(moments, ctx.phi(), theta);
        s = m_step_s(moments);

        warm.resize(n);
        double accept_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            warm[i] = moments[i].z_mean;
            accept_sum += moments[i].accept_rate;
        }

        EmIterationStats stats;
        stats.iteration = it;
        if (quadrature) {
            // exact likelihood of the *updated* parameters, so the trace is
            // the penalized log marginal and ascends monotonically
            double lb = laplace_log_prior(theta, gamma);
            for (const auto& m : e_step_quadrature(ctx, theta, sigma2, s))
                lb += m.log_normalizer;
            stats.lower_bound = lb;
            stats.lb_std_error = 0.0;
        } else {
            const auto lb = estimate_lower_bound(ctx, theta, sigma2, s, gamma,
                                                 config.lower_bound_samples,
                                                 mix64(seed, 0x1bed, it));
            stats.lower_bound = lb.value;
            stats.lb_std_error = lb.std_error;
        }
        stats.mean_accept_rate = accept_sum / n;
        stats.nnz_theta = static_cast<int>((theta.array() != 0.0).count());
        stats.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        state.trace.push_back(stats);
        state.e_step_stats = std::move(moments);
        state.iteration = it + 1;
        lb_trace.push_back(stats.lower_bound);

        // windowed stall check on the (noisy) bound estimate
        const int w = config.window;
        if (static_cast<int>(lb_trace.size()) >= 2 * w) {
            double m1 = 0.0, m0 = 0.0;
            for (int k = 0; k < w; ++k) {
                m1 += lb_trace[lb_trace.size() - 1 - k];
                m0 += lb_trace[lb_trace.size() - 1 - w - k];
            }
            m1 /= w;
            m0 /= w;
            if (std::abs(m1 - m0) < config.tol * (std::abs(m1) + 1e-12)) break;
        }
    }

    FitResult result;
    result.params.theta_c = theta;
    result.params.sigma2 = sigma2;
    result.params.s = s;
    result.params.coarse_mesh = coarse_mesh;
    result.params.fine_mesh = data.fine_mesh;
    result.params.bc = data.bc;
    result.params.catalog = catalog;
    result.params.validate();
    result.state = std::move(state);
    result.gamma = gamma;
    return result;
}

FitResult fit(const Dataset& data, const FeatureCatalog& raw_catalog, const MeshSpec& coarse_mesh,
              const EmConfig& config) {
    double gamma = config.gamma.value;
    std::vector<FitResult::CvCell> cv_table;

    if (config.gamma.mode == "cv") {
        std::vector<double> grid = config.gamma.grid;
        if (grid.empty()) grid = {1e-1, 1e0, 1e1, 1e2, 1e3, 1e4, 1e5};
        const int folds = std::min<int>(config.gamma.folds, static_cast<int>(data.samples.size()));
        if (folds < 2) throw ConfigError("fit: cross-validation needs >= 2 samples");

        for (double g : grid) {
            std::vector<double> scores;
            for (int f = 0; f < folds; ++f) {
                Dataset train;
                train.fine_mesh = data.fine_mesh;
                train.bc = data.bc;
                train.length_scale = data.length_scale;
                std::vector<int> held;
                for (int i = 0; i < static_cast<int>(data.samples.size()); ++i) {
                    if (i % folds == f)
                        held.push_back(i);
                    else
                        train.samples.push_back(data.samples[i]);
                }
                const auto fold_fit = fit_em(train, raw_catalog, coarse_mesh, config, g,
                                             mix64(config.seed, 0xcf, f));
                for (int i : held) {
                    scores.push_back(predictive_log_score(
                        fold_fit.params, data.samples[i].lambda_f, data.samples[i].u_f,
                        config.pred_score_samples, mix64(config.seed, 0x5cf, i)));
                }
            }
            const int n = static_cast<int>(scores.size());
            const double mean_score =
                std::accumulate(scores.begin(), scores.end(), 0.0) / n;
            double var = 0.0;
            for (double s : scores) var += (s - mean_score) * (s - mean_score);
            const double se = n > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
            cv_table.push_back({g, mean_score, se});
        }

        // One-standard-error rule: among the gammas whose mean score is within
        // one SE of the best, keep the largest (sparsest fit). Also resolves
        // exact ties toward sparser models.
        double best_score = kNegInf, best_se = 0.0;
        for (const auto& cell : cv_table) {
            if (cell.mean_score >= best_score) {
                best_score = cell.mean_score;
                best_se = cell.se;
            }
        }
        gamma = kNegInf;
        for (const auto& cell : cv_table) {
            if (cell.mean_score >= best_score - best_se) gamma = std::max(gamma, cell.gamma);
        }
    } else if (config.gamma.mode != "fixed") {
        throw ConfigError("fit: gamma.mode must be 'cv' or 'fixed'");
    }

    FitResult result = fit_em(data, raw_catalog, coarse_mesh, config, gamma, config.seed);
    result.cv_table = std::move(cv_table);
    return result;
}

EmConfig EmConfig::from_json(const nlohmann::json& j) {
    EmConfig c;
    c.max_iter = j.value("max_iter", c.max_iter);
    c.tol = j.value("tol", c.tol);
    c.window = j.value("window", c.window);
    c.e_step = j.value("e_step", c.e_step);
    c.lower_bound_samples = j.value("lower_bound_samples", c.lower_bound_samples);
    c.pred_score_samples = j.value("pred_score_samples", c.pred_score_samples);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mcmc")) {
        const auto& m = j["mcmc"];
        c.mcmc.burn_in = m.value("burn_in", c.mcmc.burn_in);
        c.mcmc.n_samples = m.value("samples", c.mcmc.n_samples);
        c.mcmc.target_accept = m.value("target_accept", c.mcmc.target_accept);
    }
    if (j.contains("gamma")) {
        const auto& g = j["gamma"];
        c.gamma.mode = g.value("mode", c.gamma.mode);
        c.gamma.value = g.value("value", c.gamma.value);
        c.gamma.folds = g.value("folds", c.gamma.folds);
        if (g.contains("grid")) c.gamma.grid = g["grid"].get<std::vector<double>>();
    }
    return c;
}

nlohmann::json EmConfig::to_json() const {
    return {{"max_iter", max_iter},
            {"tol", tol},
            {"window", window},
            {"e_step", e_step},
            {"lower_bound_samples", lower_bound_samples},
            {"pred_score_samples", pred_score_samples},
            {"seed", seed},
            {"mcmc",
             {{"burn_in", mcmc.burn_in},
              {"samples", mcmc.n_samples},
              {"target_accept", mcmc.target_accept}}},
            {"gamma",
             {{"mode", gamma.mode},
              {"value", gamma.value},
              {"folds", gamma.folds},
              {"grid", gamma.grid}}}};
}

}  // namespace cgheat
