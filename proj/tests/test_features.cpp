#include <doctest.h>

#include <cmath>
#include <random>

#include "cgheat/features.hpp"
#include "oracles.hpp"

using namespace cgheat;

namespace {

Microstructure make_ms(int nx, int ny, const std::vector<int>& hi_mask, MediumSpec med = {}) {
    Microstructure ms;
    ms.medium = med;
    ms.cells = Grid(nx, ny);
    for (std::size_t k = 0; k < hi_mask.size(); ++k)
        ms.cells.values[k] = hi_mask[k] ? med.lambda_hi : med.lambda_lo;
    return ms;
}

// independent bisection on the DEM residual
double dem_oracle(double lm, double li, double phi) {
    auto res = [&](double lam) {
        return (li - lam) / (li - lm) * std::sqrt(lm / lam) - (1.0 - phi);
    };
    double lo = std::min(lm, li), hi = std::max(lm, li);
    const double slo = res(lm);
    for (int i = 0; i < 500; ++i) {
        const double mid = 0.5 * (lo + hi);
        // res is monotone from res(lm)=phi down to res(li)<=0 along lm->li
        const bool same_side = (res(mid) > 0.0) == (slo > 0.0);
        ((lm < li) == same_side ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("mga closed form and limits") {
    CHECK(mga(3.0, 7.0, 0.0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(mga(3.0, 7.0, 1.0) == doctest::Approx(7.0).epsilon(1e-14));
    CHECK(mga(5.0, 5.0, 0.37) == doctest::Approx(5.0).epsilon(1e-14));
    // lam_mat=1, lam_inc=10, phi=0.2 -> 12.8/9.2
    CHECK(mga(1.0, 10.0, 0.2) == doctest::Approx(12.8 / 9.2).epsilon(1e-14));
    CHECK_THROWS_AS(mga(-1.0, 2.0, 0.5), ConfigError);
    CHECK_THROWS_AS(mga(1.0, 2.0, 1.5), ConfigError);
}

TEST_CASE("sca closed form, limits and phase inversion") {
    CHECK(sca(3.0, 7.0, 0.0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(sca(3.0, 7.0, 1.0) == doctest::Approx(7.0).epsilon(1e-14));
    CHECK(sca(1.0, 10.0, 0.5) == doctest::Approx(std::sqrt(10.0)).epsilon(1e-14));
    for (double phi : {0.1, 0.3, 0.6, 0.9})
        CHECK(sca(2.0, 9.0, phi) == doctest::Approx(sca(9.0, 2.0, 1.0 - phi)).epsilon(1e-13));
}

TEST_CASE("dem root, residual and oracle agreement") {
    CHECK(dem(3.0, 7.0, 0.0) == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(dem(3.0, 7.0, 1.0) == doctest::Approx(7.0).epsilon(1e-10));
    CHECK(dem(4.0, 4.0, 0.3) == 4.0);
    for (double phi : {0.05, 0.2, 0.5, 0.8}) {
        for (auto [lm, li] : {std::pair{1.0, 10.0}, {10.0, 1.0}, {0.5, 2.0}}) {
            const double lam = dem(lm, li, phi);
            const double resid = (li - lam) / (li - lm) * std::sqrt(lm / lam) - (1.0 - phi);
            CHECK(std::abs(resid) < 1e-10);
            CHECK(lam == doctest::Approx(dem_oracle(lm, li, phi)).epsilon(1e-9));
        }
    }
}

TEST_CASE("effective-medium bounds and monotonicity") {
    for (int i = 0; i <= 100; ++i) {
        const double phi = i / 100.0;
        for (double lam : {mga(1.0, 10.0, phi), sca(1.0, 10.0, phi), dem(1.0, 10.0, phi)}) {
            CHECK(lam >= 1.0 - 1e-12);
            CHECK(lam <= 10.0 + 1e-12);
        }
        if (i > 0) {
            const double prev = i / 100.0 - 0.01;
            CHECK(mga(1.0, 10.0, phi) >= mga(1.0, 10.0, prev) - 1e-12);
            CHECK(sca(1.0, 10.0, phi) >= sca(1.0, 10.0, prev) - 1e-12);
            CHECK(dem(1.0, 10.0, phi) >= dem(1.0, 10.0, prev) - 1e-10);
        }
    }
}

TEST_CASE("partition index arithmetic") {
    MediumSpec med;
    Microstructure fine;
    fine.medium = med;
    fine.cells = Grid(8, 8);
    for (int iy = 0; iy < 8; ++iy)
        for (int ix = 0; ix < 8; ++ix) fine.cells.at(ix, iy) = iy * 8 + ix;

    auto subs = partition(fine, MeshSpec{2, 2});
    REQUIRE(subs.size() == 4);
    // sub-grid (0,0): fine x 0..3, y 0..3
    for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 4; ++ix) CHECK(subs[0].cells.at(ix, iy) == iy * 8 + ix);
    // sub-grid (1,0): fine x 4..7
    CHECK(subs[1].cells.at(0, 0) == 4);
    // coarse row-major: element (0,1) comes third
    CHECK(subs[2].cells.at(0, 0) == 4 * 8);

    auto whole = partition(fine, MeshSpec{1, 1});
    CHECK(whole.size() == 1);
    CHECK(whole[0].cells.values == fine.cells.values);

    CHECK_THROWS_AS(partition(fine, MeshSpec{3, 3}), ConfigError);
}

TEST_CASE("morphology: full-phase grid") {
    auto ms = make_ms(4, 4, std::vector<int>(16, 1));
    auto f = morphology_features(ms);
    CHECK(f.at("hi_blob_convex_area_max") == 16.0);
    CHECK(f.at("hi_extent_x_max") == 4.0);
    CHECK(f.at("hi_extent_y_max") == 4.0);
    CHECK(f.at("lo_blob_convex_area_max") == 0.0);
    CHECK(f.at("lo_extent_x_mean") == 0.0);
    CHECK(f.at("hi_cross_x_max") == 4.0);
    CHECK(f.at("hi_cross_x_min") == 4.0);
    CHECK(f.at("lo_cross_x_max") == 0.0);
    CHECK(f.at("hi_dist_max") == 0.0);
    CHECK(f.at("lo_dist_mean") == 0.0);  // absent phase convention
}

TEST_CASE("morphology: single pixel and brute-force distance") {
    std::vector<int> mask(16, 0);
    mask[1 * 4 + 2] = 1;  // pixel (2,1)
    auto ms = make_ms(4, 4, mask);
    auto f = morphology_features(ms);
    CHECK(f.at("hi_blob_convex_area_max") == 1.0);
    CHECK(f.at("hi_extent_x_max") == 1.0);
    CHECK(f.at("hi_extent_y_max") == 1.0);

    std::vector<std::uint8_t> m8(16, 0);
    m8[1 * 4 + 2] = 1;
    auto brute = oracle::brute_distance(4, 4, m8, "euclidean");
    const double mx = *std::max_element(brute.begin(), brute.end());
    CHECK(f.at("hi_dist_max") == mx);
}

TEST_CASE("morphology: checkerboard rows") {
    std::vector<int> mask(16);
    for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 4; ++ix) mask[iy * 4 + ix] = (ix + iy) % 2;
    MediumSpec med;
    auto ms = make_ms(4, 4, mask, med);
    auto f = morphology_features(ms);
    CHECK(f.at("hi_cross_x_max") == 2.0);
    CHECK(f.at("hi_cross_x_min") == 2.0);
    const double geo = std::log(std::sqrt(med.lambda_hi * med.lambda_lo));
    CHECK(f.at("path_log_geom_x_max") == doctest::Approx(geo).epsilon(1e-12));
    CHECK(f.at("path_log_geom_y_mean") == doctest::Approx(geo).epsilon(1e-12));
}

TEST_CASE("morphology equals brute force on random 5x5 grids") {
    auto rng = std::mt19937_64(99);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<int> mask(25);
        for (auto& v : mask) v = static_cast<int>(rng() % 2);
        auto ms = make_ms(5, 5, mask);
        auto prod = morphology_features(ms);
        auto ref = oracle::brute_morphology(ms);
        REQUIRE(prod.size() == ref.size());
        for (const auto& [key, value] : ref) {
            INFO("key ", key, " trial ", trial);
            CHECK(prod.at(key) == doctest::Approx(value).epsilon(1e-12));
        }
    }
}

TEST_CASE("alternate distance metrics match brute force") {
    std::vector<std::uint8_t> mask(30, 0);
    mask[7] = mask[22] = 1;
    for (const std::string metric : {"euclidean", "cityblock", "chessboard"}) {
        auto prod = distance_transform(6, 5, mask, distance_metric_from_string(metric));
        auto ref = oracle::brute_distance(6, 5, mask, metric);
        for (std::size_t k = 0; k < prod.size(); ++k) CHECK(prod[k] == ref[k]);
    }
}

TEST_CASE("design matrix: degenerate and constant cases") {
    MediumSpec med;
    auto hi = make_ms(4, 4, std::vector<int>(16, 1), med);

    FeatureCatalog cat = FeatureCatalog::default_catalog();
    auto phi = build_design_matrix(hi, MeshSpec{1, 1}, cat);
    CHECK(phi.values.rows() == 1);
    CHECK(phi.values.cols() == static_cast<Eigen::Index>(cat.size()));
    // homogeneous high phase: every effective-medium feature is log lambda_hi
    for (std::size_t j = 0; j < cat.size(); ++j) {
        if (cat.entries[j].kind != "effective_medium") continue;
        CHECK(phi.values(0, j) == doctest::Approx(std::log(med.lambda_hi)).epsilon(1e-9));
    }

    FeatureCatalog just_const;
    just_const.entries.push_back({"constant", "constant", nlohmann::json::object()});
    auto ones = build_design_matrix(hi, MeshSpec{2, 2}, just_const);
    CHECK(ones.values == Eigen::MatrixXd::Ones(4, 1));
}

TEST_CASE("normalization standardizes the training stack") {
    MediumSpec med;
    auto rng = std::mt19937_64(7);
    FeatureCatalog cat = FeatureCatalog::default_catalog();
    std::vector<Microstructure> fields;
    std::vector<DesignMatrix> raw;
    for (int i = 0; i < 12; ++i) {
        std::vector<int> mask(64);
        for (auto& v : mask) v = static_cast<int>(rng() % 2);
        fields.push_back(make_ms(8, 8, mask, med));
        raw.push_back(build_design_matrix(fields.back(), MeshSpec{2, 2}, cat));
    }
    fit_normalization(cat, raw);
    REQUIRE(cat.normalized());

    // recompute moments of the normalized stack
    const Eigen::Index p = static_cast<Eigen::Index>(cat.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p), sumsq = Eigen::VectorXd::Zero(p);
    int n = 0;
    for (const auto& ms : fields) {
        auto phi = build_design_matrix(ms, MeshSpec{2, 2}, cat);
        sum += phi.values.colwise().sum().transpose();
        sumsq += phi.values.array().square().colwise().sum().matrix().transpose();
        n += static_cast<int>(phi.values.rows());
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        if (cat.entries[j].kind == "constant") {
            CHECK(sum[j] == static_cast<double>(n));
            continue;
        }
        const double mean = sum[j] / n;
        const double var = sumsq[j] / n - mean * mean;
        CHECK(std::abs(mean) < 1e-10);
        // near-constant columns keep scale 1 and are exempt from the sd check
        if (var > 1e-8) CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("design row locality") {
    MediumSpec med;
    std::vector<int> mask(64, 0);
    for (int k = 0; k < 64; k += 3) mask[k] = 1;
    auto ms = make_ms(8, 8, mask, med);
    FeatureCatalog cat = FeatureCatalog::default_catalog();
    auto phi0 = build_design_matrix(ms, MeshSpec{2, 2}, cat);

    // flip a cell in coarse element (1,1); rows 0..2 must be bit-identical
    auto ms2 = ms;
    ms2.cells.at(6, 6) = ms2.cells.at(6, 6) == med.lambda_hi ? med.lambda_lo : med.lambda_hi;
    auto phi1 = build_design_matrix(ms2, MeshSpec{2, 2}, cat);
    for (int r = 0; r < 3; ++r)
        for (Eigen::Index j = 0; j < phi0.values.cols(); ++j)
            CHECK(phi0.values(r, j) == phi1.values(r, j));
    CHECK(phi0.values.row(3) != phi1.values.row(3));
}

TEST_CASE("catalog json roundtrip and hash") {
    FeatureCatalog cat = FeatureCatalog::default_catalog();
    auto j = cat.to_json();
    auto back = FeatureCatalog::from_json(j);
    CHECK(back.size() == cat.size());
    CHECK(back.hash() == cat.hash());
    for (std::size_t k = 0; k < cat.size(); ++k) CHECK(back.entries[k].name == cat.entries[k].name);

    FeatureCatalog dup;
    dup.entries.push_back({"a", "constant", nlohmann::json::object()});
    dup.entries.push_back({"a", "constant", nlohmann::json::object()});
    CHECK_THROWS_AS(dup.validate(), ConfigError);
}
