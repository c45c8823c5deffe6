#include "cgheat/microstructure.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <random>

#include "cgheat/rng.hpp"

namespace cgheat {

namespace {
std::mutex fftw_planner_mutex;  // FFTW planning is not thread-safe
}

void GrfSpec::validate() const {
    if (nx < 1 || ny < 1) throw ConfigError("GrfSpec: grid dimensions must be >= 1");
    if (!(length_scale > 0.0)) throw ConfigError("GrfSpec: length_scale must be > 0");
}

void MediumSpec::validate() const {
    if (!(lambda_lo > 0.0)) throw ConfigError("MediumSpec: lambda_lo must be > 0");
    if (!(lambda_hi > lambda_lo)) throw ConfigError("MediumSpec: lambda_hi must exceed lambda_lo");
    if (!(phi_hi > 0.0 && phi_hi < 1.0)) throw ConfigError("MediumSpec: phi_hi must be in (0,1)");
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double threshold_level(double phi_hi) {
    if (!(phi_hi > 0.0 && phi_hi < 1.0)) throw ConfigError("threshold_level: phi_hi must be in (0,1)");
    // P(xi > c) = phi_hi  <=>  CDF(c) = 1 - phi_hi
    const double target = 1.0 - phi_hi;
    double lo = -40.0, hi = 40.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (standard_normal_cdf(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

GrfSampler::GrfSampler(const GrfSpec& spec) : spec_(spec) {
    spec_.validate();
    const double hx = 1.0 / spec_.nx;
    const double hy = 1.0 / spec_.ny;
    const double l2 = spec_.length_scale * spec_.length_scale;

    // Embed the covariance on a periodic grid of at least twice the target
    // size; enlarge if the embedding has non-negligible negative eigenvalues.
    int pad = 2;
    constexpr int kMaxPad = 32;
    for (;; pad *= 2) {
        mx_ = pad * spec_.nx;
        my_ = pad * spec_.ny;
        const std::size_t m = static_cast<std::size_t>(mx_) * my_;

        std::vector<double> cov(m);
        for (int iy = 0; iy < my_; ++iy) {
            const int wy = std::min(iy, my_ - iy);
            const double dy = wy * hy;
            for (int ix = 0; ix < mx_; ++ix) {
                const int wx = std::min(ix, mx_ - ix);
                const double dx = wx * hx;
                cov[static_cast<std::size_t>(iy) * mx_ + ix] = std::exp(-(dx * dx + dy * dy) / l2);
            }
        }

        std::vector<fftw_complex> in(m), out(m);
        for (std::size_t k = 0; k < m; ++k) {
            in[k][0] = cov[k];
            in[k][1] = 0.0;
        }
        fftw_plan p;
        {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex);
            p = fftw_plan_dft_2d(my_, mx_, in.data(), out.data(), FFTW_FORWARD, FFTW_ESTIMATE);
        }
        fftw_execute(p);
        {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex);
            fftw_destroy_plan(p);
        }

        double max_eig = 0.0, min_eig = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            max_eig = std::max(max_eig, out[k][0]);
            min_eig = std::min(min_eig, out[k][0]);
        }
        if (min_eig >= -1e-8 * max_eig) {
            sqrt_eigs_.resize(m);
            for (std::size_t k = 0; k < m; ++k)
                sqrt_eigs_[k] = std::sqrt(std::max(out[k][0], 0.0));
            break;
        }
        if (pad >= kMaxPad)
            throw NumericError("GrfSampler: covariance embedding not positive definite at max padding");
    }

    const std::size_t m = static_cast<std::size_t>(mx_) * my_;
    std::vector<fftw_complex> in(m), out(m);
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex);
        plan_ = fftw_plan_dft_2d(my_, mx_, in.data(), out.data(), FFTW_FORWARD, FFTW_ESTIMATE);
    }
}

GrfSampler::~GrfSampler() {
    if (plan_) {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex);
        fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    }
}

Grid GrfSampler::sample(std::uint64_t seed) const {
    const std::size_t m = static_cast<std::size_t>(mx_) * my_;
    std::vector<fftw_complex> in(m), out(m);

    auto rng = make_rng(seed);
    std::normal_distribution<double> ndist(0.0, 1.0);
    const double norm = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::size_t k = 0; k < m; ++k) {
        const double a = ndist(rng);
        const double b = ndist(rng);
        in[k][0] = sqrt_eigs_[k] * a * norm;
        in[k][1] = sqrt_eigs_[k] * b * norm;
    }
    // Real part of the DFT of sqrt(eigs) * complex white noise has exactly
    // the embedded covariance; restrict to the leading nx x ny block.
    fftw_execute_dft(static_cast<fftw_plan>(plan_), in.data(), out.data());

    Grid g(spec_.nx, spec_.ny);
    for (int iy = 0; iy < spec_.ny; ++iy)
        for (int ix = 0; ix < spec_.nx; ++ix)
            g.at(ix, iy) = out[static_cast<std::size_t>(iy) * mx_ + ix][0];
    return g;
}

Grid sample_grf(const GrfSpec& spec, std::uint64_t seed) {
    GrfSampler sampler(spec);
    return sampler.sample(seed);
}

Microstructure threshold_field(const Grid& field, const MediumSpec& medium) {
    medium.validate();
    const double c = threshold_level(medium.phi_hi);
    Microstructure ms;
    ms.cells = Grid(field.nx, field.ny);
    ms.medium = medium;
    for (std::size_t k = 0; k < field.size(); ++k)
        ms.cells.values[k] = field.values[k] > c ? medium.lambda_hi : medium.lambda_lo;
    return ms;
}

}  // namespace cgheat
