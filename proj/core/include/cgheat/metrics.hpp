#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "cgheat/io.hpp"
#include "cgheat/surrogate.hpp"

namespace cgheat {

struct SampleMetrics {
    std::uint64_t seed = 0;
    double d2 = 0.0;                    // mean_j (pred_mean_j - u_f_j)^2
    std::vector<double> coverage;       // fraction inside mean +- k sd, k = 1..
};

/// Accuracy summary of the surrogate on a labelled test set, normalized by
/// the spread of a reference fine-grained ensemble.
struct MetricsReport {
    double d2 = 0.0;              // mean squared deviation of the predictive mean
    double var_uf = 0.0;          // per-node variance of the reference set, averaged
    double relative_error = 0.0;  // d2 / var_uf
    std::vector<double> coverage;  // pooled over samples and nodes, k = 1..k_max
    int n_pred_samples = 0;
    std::vector<SampleMetrics> per_sample;

    nlohmann::json to_json() const;
    /// metric,value rows; coverage keys are coverage_1sd etc.
    std::string to_csv() const;
};

/// Pooled variance of the reference fine-grained solutions: variance across
/// samples at each node, averaged over nodes. Needs >= 2 samples.
double reference_variance(const Dataset& reference);

/// Runs the predictive ensemble on every test sample (seed stream derived
/// from `seed` and the sample index) and accumulates the report.
MetricsReport evaluate(const ModelParams& params, const Dataset& test,
                       const Dataset& reference, int n_pred_samples, std::uint64_t seed,
                       int k_max = 3);

}  // namespace cgheat
