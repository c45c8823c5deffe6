#include "cgheat/metrics.hpp"

#include <cmath>
#include <sstream>

#include "cgheat/rng.hpp"

namespace cgheat {

double reference_variance(const Dataset& reference) {
    const int n = static_cast<int>(reference.samples.size());
    if (n < 2) throw ConfigError("reference_variance: need >= 2 reference samples");
    const Eigen::Index n_f = reference.samples[0].u_f.size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_f);
    for (const auto& smp : reference.samples) {
        if (smp.u_f.size() != n_f)
            throw ConfigError("reference_variance: inconsistent solution lengths");
        mean += smp.u_f;
    }
    mean /= n;
    double acc = 0.0;
    for (const auto& smp : reference.samples) acc += (smp.u_f - mean).squaredNorm();
    return acc / (static_cast<double>(n) * n_f);
}

MetricsReport evaluate(const ModelParams& params, const Dataset& test, const Dataset& reference,
                       int n_pred_samples, std::uint64_t seed, int k_max) {
    if (test.samples.empty()) throw ConfigError("evaluate: empty test set");
    if (k_max < 1) throw ConfigError("evaluate: k_max must be >= 1");
    params.validate();

    MetricsReport report;
    report.n_pred_samples = n_pred_samples;
    report.var_uf = reference_variance(reference);
    report.coverage.assign(k_max, 0.0);

    const Eigen::Index n_f = params.fine_mesh.n_nodes();
    double d2_sum = 0.0;
    std::vector<long long> inside(k_max, 0);

    for (std::size_t i = 0; i < test.samples.size(); ++i) {
        const auto& smp = test.samples[i];
        if (smp.u_f.size() != n_f) throw ConfigError("evaluate: solution length mismatch");
        const auto ens = predict(smp.lambda_f, params, n_pred_samples,
                                 mix64(seed, static_cast<std::uint64_t>(i)));

        SampleMetrics sm;
        sm.seed = smp.seed;
        sm.d2 = (ens.mean - smp.u_f).squaredNorm() / static_cast<double>(n_f);
        sm.coverage.assign(k_max, 0.0);

        const Eigen::VectorXd sd = ens.variance.array().sqrt().matrix();
        for (Eigen::Index j = 0; j < n_f; ++j) {
            const double dev = std::abs(smp.u_f[j] - ens.mean[j]);
            for (int k = 0; k < k_max; ++k) {
                if (dev <= (k + 1) * sd[j]) {
                    sm.coverage[k] += 1.0;
                    ++inside[k];
                }
            }
        }
        for (int k = 0; k < k_max; ++k) sm.coverage[k] /= static_cast<double>(n_f);
        d2_sum += sm.d2;
        report.per_sample.push_back(std::move(sm));
    }

    const double n_total = static_cast<double>(test.samples.size()) * n_f;
    report.d2 = d2_sum / test.samples.size();
    report.relative_error = report.d2 / report.var_uf;
    for (int k = 0; k < k_max; ++k) report.coverage[k] = inside[k] / n_total;
    return report;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["d2"] = d2;
    j["var_uf"] = var_uf;
    j["relative_error"] = relative_error;
    j["n_pred_samples"] = n_pred_samples;
    for (std::size_t k = 0; k < coverage.size(); ++k)
        j["coverage_" + std::to_string(k + 1) + "sd"] = coverage[k];
    j["per_sample"] = nlohmann::json::array();
    for (const auto& sm : per_sample) {
        nlohmann::json row = {{"seed", sm.seed}, {"d2", sm.d2}};
        for (std::size_t k = 0; k < sm.coverage.size(); ++k)
            row["coverage_" + std::to_string(k + 1) + "sd"] = sm.coverage[k];
        j["per_sample"].push_back(std::move(row));
    }
    return j;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "metric,value\n";
    out << "d2," << d2 << "\n";
    out << "var_uf," << var_uf << "\n";
    out << "relative_error," << relative_error << "\n";
    for (std::size_t k = 0; k < coverage.size(); ++k)
        out << "coverage_" << (k + 1) << "sd," << coverage[k] << "\n";
    out << "n_pred_samples," << n_pred_samples << "\n";
    return out.str();
}

}  // namespace cgheat
