#include <doctest.h>

#include <cmath>

#include "cgheat/microstructure.hpp"
#include "cgheat/rng.hpp"
#include "oracles.hpp"

using namespace cgheat;

TEST_CASE("threshold_level basics") {
    CHECK(std::abs(threshold_level(0.5)) < 1e-12);
    // table values
    CHECK(threshold_level(0.2) == doctest::Approx(0.8416).epsilon(1e-3));
    CHECK(threshold_level(0.9772) == doctest::Approx(-2.0).epsilon(2e-3));
    CHECK_THROWS_AS(threshold_level(0.0), ConfigError);
    CHECK_THROWS_AS(threshold_level(1.0), ConfigError);
}

TEST_CASE("threshold_level matches quadrature-based quantile oracle") {
    for (double phi : {0.05, 0.2, 0.5, 0.8, 0.95}) {
        const double c = threshold_level(phi);
        CHECK(c == doctest::Approx(oracle::normal_quantile(1.0 - phi)).epsilon(1e-7));
        // defining property P(xi > c) = phi
        CHECK(1.0 - standard_normal_cdf(c) == doctest::Approx(phi).epsilon(1e-10));
    }
}

TEST_CASE("threshold_field basics") {
    MediumSpec med;  // hi=10 lo=1 phi=0.2
    Grid field(4, 4, 1.0);  // all positive
    med.phi_hi = 0.5;
    auto ms = threshold_field(field, med);
    for (double v : ms.cells.values) CHECK(v == med.lambda_hi);

    // exact tie at the threshold goes to the low phase
    Grid tie(2, 1, 0.0);
    tie.at(0, 0) = threshold_level(0.5);  // == 0
    tie.at(1, 0) = 1e-12;
    auto tms = threshold_field(tie, med);
    CHECK(tms.cells.at(0, 0) == med.lambda_lo);
    CHECK(tms.cells.at(1, 0) == med.lambda_hi);
}

TEST_CASE("threshold_field counts and phase inversion") {
    MediumSpec med;
    med.phi_hi = 0.3;
    const double c = threshold_level(med.phi_hi);
    Grid field(5, 3);
    auto rng = make_rng(42);
    std::normal_distribution<double> nd;
    int above = 0;
    for (auto& v : field.values) {
        v = nd(rng);
        above += v > c;
    }
    auto ms = threshold_field(field, med);
    int hi = 0;
    for (std::size_t k = 0; k < ms.size(); ++k) hi += ms.cells.values[k] == med.lambda_hi;
    CHECK(hi == above);

    // thresholding -field with 1-phi swaps labels (ties are measure-zero here)
    Grid neg = field;
    for (auto& v : neg.values) v = -v;
    MediumSpec inv = med;
    inv.phi_hi = 1.0 - med.phi_hi;
    auto msi = threshold_field(neg, inv);
    for (std::size_t k = 0; k < ms.size(); ++k) {
        const bool was_hi = ms.cells.values[k] == med.lambda_hi;
        const bool now_hi = msi.cells.values[k] == inv.lambda_hi;
        CHECK(was_hi == !now_hi);
    }
}

TEST_CASE("grf determinism and 1x1 degenerate variance") {
    GrfSpec one{1, 1, 0.3};
    const int n = 20000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = sample_grf(one, i).values[0];
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));

    GrfSpec spec{16, 16, 0.1};
    auto a = sample_grf(spec, 1234);
    auto b = sample_grf(spec, 1234);
    CHECK(a.values == b.values);
    auto c = sample_grf(spec, 1235);
    CHECK(a.values != c.values);
}

TEST_CASE("grf covariance and volume fraction at moderate sample count") {
    GrfSpec spec{32, 32, 0.25};
    const int n = 2000;
    const double h = 1.0 / 32;

    double var_sum = 0.0, lag_sum = 0.0, lag_cnt = 0.0;
    MediumSpec med;  // phi 0.2
    double frac_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        auto g = sample_grf(spec, 5000 + i);
        for (int iy = 0; iy < 32; ++iy)
            for (int ix = 0; ix + 1 < 32; ++ix) {
                lag_sum += g.at(ix, iy) * g.at(ix + 1, iy);
                lag_cnt += 1.0;
            }
        for (double v : g.values) var_sum += v * v;
        auto ms = threshold_field(g, med);
        int hi = 0;
        for (std::size_t k = 0; k < ms.size(); ++k) hi += ms.cells.values[k] == med.lambda_hi;
        frac_sum += static_cast<double>(hi) / ms.size();
    }
    const double var = var_sum / (n * 32.0 * 32.0);
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));
    const double lag1 = lag_sum / lag_cnt;
    CHECK(lag1 == doctest::Approx(std::exp(-h * h / (0.25 * 0.25))).epsilon(0.03));
    CHECK(frac_sum / n == doctest::Approx(0.2).epsilon(0.06));
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS((GrfSpec{0, 4, 0.1}).validate(), ConfigError);
    CHECK_THROWS_AS((GrfSpec{4, 4, 0.0}).validate(), ConfigError);
    MediumSpec bad;
    bad.lambda_lo = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    MediumSpec swap;
    swap.lambda_hi = 1.0;
    swap.lambda_lo = 2.0;
    CHECK_THROWS_AS(swap.validate(), ConfigError);
}
