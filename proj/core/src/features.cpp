#include "cgheat/features.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace cgheat {

double mga(double lambda_mat, double lambda_inc, double phi_inc) {
    if (!(lambda_mat > 0.0) || !(lambda_inc > 0.0))
        throw ConfigError("mga: conductivities must be > 0");
    if (!(phi_inc >= 0.0 && phi_inc <= 1.0)) throw ConfigError("mga: phi_inc must be in [0,1]");
    const double num = lambda_mat + lambda_inc + phi_inc * (lambda_inc - lambda_mat);
    const double den = lambda_mat + lambda_inc - phi_inc * (lambda_inc - lambda_mat);
    if (!(den > 0.0)) throw NumericError("mga: nonpositive denominator");
    return lambda_mat * num / den;
}

double sca(double lambda_mat, double lambda_inc, double phi_inc) {
    if (!(lambda_mat > 0.0) || !(lambda_inc > 0.0))
        throw ConfigError("sca: conductivities must be > 0");
    if (!(phi_inc >= 0.0 && phi_inc <= 1.0)) throw ConfigError("sca: phi_inc must be in [0,1]");
    const double phi_mat = 1.0 - phi_inc;
    const double alpha = lambda_mat * (2.0 * phi_mat - 1.0) + lambda_inc * (2.0 * phi_inc - 1.0);
    return 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0 * lambda_mat * lambda_inc));
}

double dem(double lambda_mat, double lambda_inc, double phi_inc) {
    if (!(lambda_mat > 0.0) || !(lambda_inc > 0.0))
        throw ConfigError("dem: conductivities must be > 0");
    if (!(phi_inc >= 0.0 && phi_inc <= 1.0)) throw ConfigError("dem: phi_inc must be in [0,1]");
    if (lambda_mat == lambda_inc) return lambda_mat;

    auto residual = [&](double lam) {
        return (lambda_inc - lam) / (lambda_inc - lambda_mat) * std::sqrt(lambda_mat / lam) -
               (1.0 - phi_inc);
    };
    // residual(lambda_mat) = phi_inc >= 0, residual(lambda_inc) <= 0;
    // the residual is monotone in between.
    double lo = lambda_mat, hi = lambda_inc;
    if (residual(lo) < 0.0 || residual(hi) > 0.0)
        throw NumericError("dem: root not bracketed");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (residual(mid) >= 0.0)
            lo = mid;
        else
            hi = mid;
        if (std::abs(hi - lo) <= 1e-12 * std::abs(mid)) break;
    }
    return 0.5 * (lo + hi);
}

DistanceMetric distance_metric_from_string(const std::string& name) {
    if (name == "euclidean") return DistanceMetric::euclidean;
    if (name == "cityblock") return DistanceMetric::cityblock;
    if (name == "chessboard") return DistanceMetric::chessboard;
    throw ConfigError("unknown distance metric: " + name);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void sq_dist_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    d.assign(n, 0.0);
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (f[v[0]] == kInf) {
            v[0] = q;
            continue;
        }
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k] && k > 0)
                --k;
            else
                break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        if (f[v[0]] == kInf) {
            d[q] = kInf;
            continue;
        }
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

std::vector<double> euclidean_dt(int nx, int ny, const std::vector<std::uint8_t>& mask) {
    std::vector<double> d(static_cast<std::size_t>(nx) * ny);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = mask[k] ? 0.0 : kInf;

    std::vector<double> col(ny), out(ny);
    for (int ix = 0; ix < nx; ++ix) {
        for (int iy = 0; iy < ny; ++iy) col[iy] = d[static_cast<std::size_t>(iy) * nx + ix];
        sq_dist_1d(col, out);
        for (int iy = 0; iy < ny; ++iy) d[static_cast<std::size_t>(iy) * nx + ix] = out[iy];
    }
    std::vector<double> row(nx), rout(nx);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) row[ix] = d[static_cast<std::size_t>(iy) * nx + ix];
        sq_dist_1d(row, rout);
        for (int ix = 0; ix < nx; ++ix)
            d[static_cast<std::size_t>(iy) * nx + ix] =
                rout[ix] == kInf ? kInf : std::sqrt(rout[ix]);
    }
    return d;
}

// Exact two-pass chamfer for L1 (4-neighborhood) and Chebyshev (8-neighborhood).
std::vector<double> chamfer_dt(int nx, int ny, const std::vector<std::uint8_t>& mask,
                               bool diagonal) {
    std::vector<double> d(static_cast<std::size_t>(nx) * ny);
    auto idx = [nx](int ix, int iy) { return static_cast<std::size_t>(iy) * nx + ix; };
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = mask[k] ? 0.0 : kInf;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            double v = d[idx(ix, iy)];
            if (ix > 0) v = std::min(v, d[idx(ix - 1, iy)] + 1.0);
            if (iy > 0) v = std::min(v, d[idx(ix, iy - 1)] + 1.0);
            if (diagonal && ix > 0 && iy > 0) v = std::min(v, d[idx(ix - 1, iy - 1)] + 1.0);
            if (diagonal && ix < nx - 1 && iy > 0) v = std::min(v, d[idx(ix + 1, iy - 1)] + 1.0);
            d[idx(ix, iy)] = v;
        }
    for (int iy = ny - 1; iy >= 0; --iy)
        for (int ix = nx - 1; ix >= 0; --ix) {
            double v = d[idx(ix, iy)];
            if (ix < nx - 1) v = std::min(v, d[idx(ix + 1, iy)] + 1.0);
            if (iy < ny - 1) v = std::min(v, d[idx(ix, iy + 1)] + 1.0);
            if (diagonal && ix < nx - 1 && iy < ny - 1) v = std::min(v, d[idx(ix + 1, iy + 1)] + 1.0);
            if (diagonal && ix > 0 && iy < ny - 1) v = std::min(v, d[idx(ix - 1, iy + 1)] + 1.0);
            d[idx(ix, iy)] = v;
        }
    return d;
}

}  // namespace

std::vector<double> distance_transform(int nx, int ny, const std::vector<std::uint8_t>& mask,
                                       DistanceMetric metric) {
    if (static_cast<std::size_t>(nx) * ny != mask.size())
        throw ConfigError("distance_transform: mask size mismatch");
    switch (metric) {
        case DistanceMetric::euclidean: return euclidean_dt(nx, ny, mask);
        case DistanceMetric::cityblock: return chamfer_dt(nx, ny, mask, false);
        case DistanceMetric::chessboard: return chamfer_dt(nx, ny, mask, true);
    }
    throw ConfigError("distance_transform: bad metric");
}

namespace {

struct Blob {
    std::vector<std::pair<int, int>> pixels;
    int min_x = 0, max_x = 0, min_y = 0, max_y = 0;
};

std::vector<Blob> label_blobs(int nx, int ny, const std::vector<std::uint8_t>& mask) {
    auto idx = [nx](int ix, int iy) { return static_cast<std::size_t>(iy) * nx + ix; };
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<Blob> blobs;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            if (!mask[idx(ix, iy)] || seen[idx(ix, iy)]) continue;
            Blob blob;
            blob.min_x = blob.max_x = ix;
            blob.min_y = blob.max_y = iy;
            std::deque<std::pair<int, int>> queue{{ix, iy}};
            seen[idx(ix, iy)] = 1;
            while (!queue.empty()) {
                auto [px, py] = queue.front();
                queue.pop_front();
                blob.pixels.emplace_back(px, py);
                blob.min_x = std::min(blob.min_x, px);
                blob.max_x = std::max(blob.max_x, px);
                blob.min_y = std::min(blob.min_y, py);
                blob.max_y = std::max(blob.max_y, py);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int qx = px + dx, qy = py + dy;
                        if (qx < 0 || qx >= nx || qy < 0 || qy >= ny) continue;
                        if (mask[idx(qx, qy)] && !seen[idx(qx, qy)]) {
                            seen[idx(qx, qy)] = 1;
                            queue.emplace_back(qx, qy);
                        }
                    }
                }
            }
            blobs.push_back(std::move(blob));
        }
    }
    return blobs;
}

// Convex hull area over the pixel-corner points of the blob (a single pixel
// spans the unit square of its four corners, so its area is 1).
double blob_convex_area(const Blob& blob) {
    std::vector<std::pair<long, long>> pts;
    pts.reserve(blob.pixels.size() * 4);
    for (auto [px, py] : blob.pixels) {
        pts.emplace_back(px, py);
        pts.emplace_back(px + 1, py);
        pts.emplace_back(px, py + 1);
        pts.emplace_back(px + 1, py + 1);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const int n = static_cast<int>(pts.size());
    if (n < 3) return 0.0;

    auto cross = [](const std::pair<long, long>& o, const std::pair<long, long>& a,
                    const std::pair<long, long>& b) {
        return (a.first - o.first) * (b.second - o.second) -
               (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<long, long>> hull(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const int lower = k + 1;
    for (int i = n - 2; i >= 0; --i) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);

    long twice_area = 0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        twice_area += a.first * b.second - b.first * a.second;
    }
    return 0.5 * std::abs(static_cast<double>(twice_area));
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
}

double max_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

double min_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
}

void phase_stats(std::map<std::string, double>& out, const std::string& prefix, int nx, int ny,
                 const std::vector<std::uint8_t>& mask, DistanceMetric metric) {
    const auto blobs = label_blobs(nx, ny, mask);
    std::vector<double> areas, ext_x, ext_y;
    for (const auto& blob : blobs) {
        areas.push_back(blob_convex_area(blob));
        ext_x.push_back(blob.max_x - blob.min_x + 1.0);
        ext_y.push_back(blob.max_y - blob.min_y + 1.0);
    }
    out[prefix + "_blob_convex_area_max"] = max_of(areas);
    out[prefix + "_blob_convex_area_mean"] = mean_of(areas);
    out[prefix + "_extent_x_max"] = max_of(ext_x);
    out[prefix + "_extent_x_mean"] = mean_of(ext_x);
    out[prefix + "_extent_y_max"] = max_of(ext_y);
    out[prefix + "_extent_y_mean"] = mean_of(ext_y);

    const bool present = !blobs.empty();
    if (present) {
        const auto dt = distance_transform(nx, ny, mask, metric);
        double sum = 0.0, mx = 0.0;
        for (double v : dt) {
            sum += v;
            mx = std::max(mx, v);
        }
        out[prefix + "_dist_mean"] = sum / dt.size();
        out[prefix + "_dist_max"] = mx;
    } else {
        out[prefix + "_dist_mean"] = 0.0;
        out[prefix + "_dist_max"] = 0.0;
    }

    // pixel-cross: phase pixels crossed on straight boundary-to-boundary
    // lines; _x rows (lines along x), _y columns.
    auto idx = [nx](int ix, int iy) { return static_cast<std::size_t>(iy) * nx + ix; };
    std::vector<double> cross_x(ny, 0.0), cross_y(nx, 0.0);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            if (mask[idx(ix, iy)]) {
                cross_x[iy] += 1.0;
                cross_y[ix] += 1.0;
            }
    out[prefix + "_cross_x_mean"] = mean_of(cross_x);
    out[prefix + "_cross_x_max"] = max_of(cross_x);
    out[prefix + "_cross_x_min"] = min_of(cross_x);
    out[prefix + "_cross_y_mean"] = mean_of(cross_y);
    out[prefix + "_cross_y_max"] = max_of(cross_y);
    out[prefix + "_cross_y_min"] = min_of(cross_y);
}

void path_mean_stats(std::map<std::string, double>& out, const Microstructure& ms) {
    const int nx = ms.cells.nx, ny = ms.cells.ny;
    std::vector<double> harm_x, geom_x, arith_x, harm_y, geom_y, arith_y;

    auto line_means = [](const std::vector<double>& lam, double& h, double& g, double& a) {
        double inv = 0.0, lg = 0.0, s = 0.0;
        for (double v : lam) {
            inv += 1.0 / v;
            lg += std::log(v);
            s += v;
        }
        const double n = static_cast<double>(lam.size());
        h = n / inv;
        g = std::exp(lg / n);
        a = s / n;
    };

    std::vector<double> line;
    for (int iy = 0; iy < ny; ++iy) {
        line.clear();
        for (int ix = 0; ix < nx; ++ix) line.push_back(ms.cells.at(ix, iy));
        double h, g, a;
        line_means(line, h, g, a);
        harm_x.push_back(std::log(h));
        geom_x.push_back(std::log(g));
        arith_x.push_back(std::log(a));
    }
    for (int ix = 0; ix < nx; ++ix) {
        line.clear();
        for (int iy = 0; iy < ny; ++iy) line.push_back(ms.cells.at(ix, iy));
        double h, g, a;
        line_means(line, h, g, a);
        harm_y.push_back(std::log(h));
        geom_y.push_back(std::log(g));
        arith_y.push_back(std::log(a));
    }

    out["path_log_harm_x_max"] = max_of(harm_x);
    out["path_log_harm_x_mean"] = mean_of(harm_x);
    out["path_log_geom_x_max"] = max_of(geom_x);
    out["path_log_geom_x_mean"] = mean_of(geom_x);
    out["path_log_arith_x_max"] = max_of(arith_x);
    out["path_log_arith_x_mean"] = mean_of(arith_x);
    out["path_log_harm_y_max"] = max_of(harm_y);
    out["path_log_harm_y_mean"] = mean_of(harm_y);
    out["path_log_geom_y_max"] = max_of(geom_y);
    out["path_log_geom_y_mean"] = mean_of(geom_y);
    out["path_log_arith_y_max"] = max_of(arith_y);
    out["path_log_arith_y_mean"] = mean_of(arith_y);
}

}  // namespace

std::map<std::string, double> morphology_features(const Microstructure& subgrid,
                                                  DistanceMetric metric) {
    const int nx = subgrid.cells.nx, ny = subgrid.cells.ny;
    if (nx < 1 || ny < 1) throw ConfigError("morphology_features: empty sub-grid");

    std::vector<std::uint8_t> hi(subgrid.size()), lo(subgrid.size());
    for (std::size_t k = 0; k < subgrid.size(); ++k) {
        hi[k] = subgrid.cells.values[k] == subgrid.medium.lambda_hi;
        lo[k] = !hi[k];
    }
    std::map<std::string, double> out;
    phase_stats(out, "hi", nx, ny, hi, metric);
    phase_stats(out, "lo", nx, ny, lo, metric);
    path_mean_stats(out, subgrid);
    return out;
}

std::vector<Microstructure> partition(const Microstructure& fine, const MeshSpec& coarse) {
    coarse.validate();
    const int nx = fine.cells.nx, ny = fine.cells.ny;
    if (nx % coarse.nel_x != 0 || ny % coarse.nel_y != 0)
        throw ConfigError("partition: fine grid not divisible by coarse element counts");
    const int sx = nx / coarse.nel_x, sy = ny / coarse.nel_y;

    std::vector<Microstructure> subs;
    subs.reserve(coarse.n_elements());
    for (int ey = 0; ey < coarse.nel_y; ++ey) {
        for (int ex = 0; ex < coarse.nel_x; ++ex) {
            Microstructure sub;
            sub.medium = fine.medium;
            sub.cells = Grid(sx, sy);
            for (int iy = 0; iy < sy; ++iy)
                for (int ix = 0; ix < sx; ++ix)
                    sub.cells.at(ix, iy) = fine.cells.at(ex * sx + ix, ey * sy + iy);
            subs.push_back(std::move(sub));
        }
    }
    return subs;
}

namespace {

double evaluate_effective_medium(const FeatureEntry& entry, const Microstructure& sub) {
    const std::string formula = entry.params.value("formula", "sca");
    const std::string matrix = entry.params.value("matrix", "auto");

    std::size_t n_hi = 0;
    for (double v : sub.cells.values) n_hi += v == sub.medium.lambda_hi;
    const double phi_hi = static_cast<double>(n_hi) / sub.size();

    bool hi_is_matrix;
    if (matrix == "hi")
        hi_is_matrix = true;
    else if (matrix == "lo")
        hi_is_matrix = false;
    else if (matrix == "auto")
        // the majority phase (by target fraction) plays the matrix role
        hi_is_matrix = sub.medium.phi_hi >= 0.5;
    else
        throw ConfigError("effective_medium feature: bad matrix assignment " + matrix);

    const double lam_mat = hi_is_matrix ? sub.medium.lambda_hi : sub.medium.lambda_lo;
    const double lam_inc = hi_is_matrix ? sub.medium.lambda_lo : sub.medium.lambda_hi;
    const double phi_inc = hi_is_matrix ? 1.0 - phi_hi : phi_hi;

    double lam_eff;
    if (formula == "mga")
        lam_eff = mga(lam_mat, lam_inc, phi_inc);
    else if (formula == "sca")
        lam_eff = sca(lam_mat, lam_inc, phi_inc);
    else if (formula == "dem")
        lam_eff = dem(lam_mat, lam_inc, phi_inc);
    else
        throw ConfigError("effective_medium feature: unknown formula " + formula);
    return std::log(lam_eff);
}

}  // namespace

Eigen::VectorXd FeatureCatalog::evaluate_row(const Microstructure& subgrid) const {
    // morphology statistics are computed once and shared by all entries
    // that use the default metric
    std::map<std::string, double> morph;
    bool have_morph = false;

    Eigen::VectorXd row(entries.size());
    for (std::size_t j = 0; j < entries.size(); ++j) {
        const auto& e = entries[j];
        if (e.kind == "constant") {
            row[j] = 1.0;
        } else if (e.kind == "effective_medium") {
            row[j] = evaluate_effective_medium(e, subgrid);
        } else if (e.kind == "morphological") {
            const std::string metric_name = e.params.value("metric", "euclidean");
            if (metric_name == "euclidean") {
                if (!have_morph) {
                    morph = morphology_features(subgrid);
                    have_morph = true;
                }
                auto it = morph.find(e.name);
                if (it == morph.end())
                    throw ConfigError("unknown morphology statistic: " + e.name);
                row[j] = it->second;
            } else {
                auto alt = morphology_features(subgrid, distance_metric_from_string(metric_name));
                auto it = alt.find(e.name);
                if (it == alt.end())
                    throw ConfigError("unknown morphology statistic: " + e.name);
                row[j] = it->second;
            }
        } else {
            throw ConfigError("unknown feature kind: " + e.kind);
        }
    }
    return row;
}

FeatureCatalog FeatureCatalog::default_catalog() {
    FeatureCatalog cat;
    cat.entries.push_back({"constant", "constant", nlohmann::json::object()});
    for (const char* formula : {"mga", "dem"}) {
        for (const char* matrix : {"lo", "hi"}) {
            cat.entries.push_back({std::string("log_") + formula + "_mat_" + matrix,
                                   "effective_medium",
                                   {{"formula", formula}, {"matrix", matrix}}});
        }
    }
    cat.entries.push_back({"log_sca", "effective_medium", {{"formula", "sca"}}});

    // one entry per morphology statistic key (computed on a 1x1 probe grid
    // just to enumerate the key set)
    Microstructure probe;
    probe.medium = MediumSpec{};
    probe.cells = Grid(1, 1, probe.medium.lambda_hi);
    for (const auto& [key, value] : morphology_features(probe)) {
        (void)value;
        cat.entries.push_back({key, "morphological", nlohmann::json::object()});
    }
    cat.validate();
    return cat;
}

void FeatureCatalog::validate() const {
    std::vector<std::string> names;
    for (const auto& e : entries) names.push_back(e.name);
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw ConfigError("FeatureCatalog: duplicate feature names");
    if (normalized()) {
        if (shift.size() != entries.size() || scale.size() != entries.size())
            throw ConfigError("FeatureCatalog: normalization length mismatch");
        for (double s : scale)
            if (!(s > 0.0)) throw ConfigError("FeatureCatalog: normalization scale must be > 0");
    }
}

FeatureCatalog FeatureCatalog::from_json(const nlohmann::json& j) {
    FeatureCatalog cat;
    for (const auto& je : j.at("entries")) {
        FeatureEntry e;
        e.name = je.at("name").get<std::string>();
        e.kind = je.at("kind").get<std::string>();
        e.params = je.value("params", nlohmann::json::object());
        cat.entries.push_back(std::move(e));
    }
    if (j.contains("normalization")) {
        cat.shift = j["normalization"].at("shift").get<std::vector<double>>();
        cat.scale = j["normalization"].at("scale").get<std::vector<double>>();
    }
    cat.validate();
    return cat;
}

nlohmann::json FeatureCatalog::to_json() const {
    nlohmann::json j;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries)
        j["entries"].push_back({{"name", e.name}, {"kind", e.kind}, {"params", e.params}});
    if (normalized()) j["normalization"] = {{"shift", shift}, {"scale", scale}};
    return j;
}

std::uint64_t FeatureCatalog::hash() const {
    const std::string dump = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

DesignMatrix build_design_matrix(const Microstructure& fine, const MeshSpec& coarse,
                                 const FeatureCatalog& catalog) {
    catalog.validate();
    const auto subs = partition(fine, coarse);
    DesignMatrix phi;
    phi.values.resize(static_cast<Eigen::Index>(subs.size()), catalog.size());
    for (std::size_t k = 0; k < subs.size(); ++k) {
        Eigen::VectorXd row = catalog.evaluate_row(subs[k]);
        if (catalog.normalized()) {
            for (std::size_t j = 0; j < catalog.size(); ++j)
                row[j] = (row[j] - catalog.shift[j]) / catalog.scale[j];
        }
        for (std::size_t j = 0; j < catalog.size(); ++j) {
            if (!std::isfinite(row[j]))
                throw DataError("non-finite feature '" + catalog.entries[j].name +
                                "' in coarse element " + std::to_string(k));
        }
        phi.values.row(static_cast<Eigen::Index>(k)) = row;
    }
    return phi;
}

void fit_normalization(FeatureCatalog& catalog, const std::vector<DesignMatrix>& raw) {
    if (raw.empty()) throw ConfigError("fit_normalization: empty training stack");
    const Eigen::Index p = static_cast<Eigen::Index>(catalog.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p), sumsq = Eigen::VectorXd::Zero(p);
    std::size_t n = 0;
    for (const auto& m : raw) {
        if (m.values.cols() != p) throw ConfigError("fit_normalization: column count mismatch");
        sum += m.values.colwise().sum().transpose();
        sumsq += m.values.array().square().colwise().sum().matrix().transpose();
        n += m.values.rows();
    }
    catalog.shift.assign(p, 0.0);
    catalog.scale.assign(p, 1.0);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (catalog.entries[j].kind == "constant") continue;
        const double mean = sum[j] / n;
        const double var = std::max(sumsq[j] / n - mean * mean, 0.0);
        const double sd = std::sqrt(var);
        catalog.shift[j] = mean;
        catalog.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    catalog.validate();
}

}  // namespace cgheat
