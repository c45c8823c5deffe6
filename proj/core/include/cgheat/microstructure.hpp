#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cgheat/grid.hpp"

namespace cgheat {

/// Stationary zero-mean unit-variance Gaussian random field on the unit
/// square, squared-exponential covariance exp(-|x_i - x_j|^2 / l^2),
/// evaluated at cell centers of an nx x ny grid.
struct GrfSpec {
    int nx = 1;
    int ny = 1;
    double length_scale = 0.1;

    void validate() const;
};

/// Two-phase conductivity description of the random medium.
struct MediumSpec {
    double lambda_hi = 10.0;
    double lambda_lo = 1.0;
    double phi_hi = 0.2;  // target volume fraction of the high phase

    double contrast_ratio() const { return lambda_hi / lambda_lo; }
    void validate() const;
};

/// Binary conductivity field: one value per fine cell, either lambda_hi or
/// lambda_lo. Same storage order as Grid (row-major, y slowest).
struct Microstructure {
    Grid cells;
    MediumSpec medium;

    bool is_high(int ix, int iy) const { return cells.at(ix, iy) == medium.lambda_hi; }
    std::size_t size() const { return cells.size(); }
};

/// Standard-normal quantile c with P(xi > c) = phi_hi, computed by bisection
/// on the CDF to 1e-12 absolute tolerance.
double threshold_level(double phi_hi);

/// Standard normal CDF (exact via erfc).
double standard_normal_cdf(double x);

/// Samples the GRF by circulant embedding of the covariance on a padded
/// periodic grid (FFT). Construction is O(M log M) once; each sample is one
/// FFT. Thread-safe: sample() owns its buffers.
class GrfSampler {
public:
    explicit GrfSampler(const GrfSpec& spec);
    ~GrfSampler();
    GrfSampler(const GrfSampler&) = delete;
    GrfSampler& operator=(const GrfSampler&) = delete;

    /// One realization; fully determined by seed.
    Grid sample(std::uint64_t seed) const;

    const GrfSpec& spec() const { return spec_; }
    int embedding_size_x() const { return mx_; }
    int embedding_size_y() const { return my_; }

private:
    GrfSpec spec_;
    int mx_ = 0, my_ = 0;
    std::vector<double> sqrt_eigs_;  // sqrt of embedding eigenvalues, size mx*my
    void* plan_ = nullptr;           // fftw_plan, reused via fftw_execute_dft
};

/// Convenience: sample the GRF once for (spec, seed).
Grid sample_grf(const GrfSpec& spec, std::uint64_t seed);

/// Threshold a unit-variance Gaussian field into a two-phase medium:
/// lambda_hi where field > threshold_level(phi_hi), else lambda_lo.
Microstructure threshold_field(const Grid& field, const MediumSpec& medium);

}  // namespace cgheat
