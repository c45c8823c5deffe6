// cgheat: batch front end — dataset generation, training, prediction,
// evaluation and sweeps, all driven by a JSON config + seed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "cgheat/io.hpp"
#include "cgheat/metrics.hpp"
#include "cgheat/rng.hpp"
#include "cgheat/training.hpp"

namespace fs = std::filesystem;
using namespace cgheat;

namespace {

struct ExperimentConfig {
    MediumSpec medium;
    double length_scale = 0.0781;
    MeshSpec fine_mesh{64, 64};
    MeshSpec coarse_mesh{4, 4};
    double corner_value = -50.0;
    FluxSpec flux;
    int n_train = 32;
    int n_test = 64;
    int n_reference = 256;
    int n_pred_samples = 512;
    std::optional<std::string> catalog_path;
    EmConfig em;
    std::uint64_t seed = 0;
    // sweep axes
    std::vector<int> sweep_n_train = {8, 16, 32, 64};
    std::vector<MeshSpec> sweep_coarse = {{2, 2}, {4, 4}};

    BoundaryConditions bc() const {
        return BoundaryConditions::corner_flux(fine_mesh, corner_value, flux);
    }
};

ExperimentConfig load_config(const fs::path& path) {
    const auto j = read_json(path);
    ExperimentConfig c;
    try {
        if (j.contains("medium")) {
            const auto& m = j["medium"];
            c.medium.lambda_hi = m.value("lambda_hi", c.medium.lambda_hi);
            c.medium.lambda_lo = m.value("lambda_lo", c.medium.lambda_lo);
            c.medium.phi_hi = m.value("phi_hi", c.medium.phi_hi);
            c.length_scale = m.value("length_scale", c.length_scale);
        }
        auto mesh = [](const nlohmann::json& mj, MeshSpec d) {
            return MeshSpec{mj.value("nel_x", d.nel_x), mj.value("nel_y", d.nel_y)};
        };
        if (j.contains("fine_mesh")) c.fine_mesh = mesh(j["fine_mesh"], c.fine_mesh);
        if (j.contains("coarse_mesh")) c.coarse_mesh = mesh(j["coarse_mesh"], c.coarse_mesh);
        if (j.contains("bc")) {
            const auto& b = j["bc"];
            c.corner_value = b.value("corner_value", c.corner_value);
            if (b.contains("flux")) {
                const auto& f = b["flux"];
                c.flux.qx0 = f.value("qx0", c.flux.qx0);
                c.flux.qx_y = f.value("qx_y", c.flux.qx_y);
                c.flux.qy0 = f.value("qy0", c.flux.qy0);
                c.flux.qy_x = f.value("qy_x", c.flux.qy_x);
            }
        }
        c.n_train = j.value("n_train", c.n_train);
        c.n_test = j.value("n_test", c.n_test);
        c.n_reference = j.value("n_reference", c.n_reference);
        c.n_pred_samples = j.value("n_pred_samples", c.n_pred_samples);
        if (j.contains("catalog")) c.catalog_path = j["catalog"].get<std::string>();
        if (j.contains("em")) c.em = EmConfig::from_json(j["em"]);
        c.seed = j.value("seed", c.seed);
        if (j.contains("sweep")) {
            const auto& s = j["sweep"];
            if (s.contains("n_train")) c.sweep_n_train = s["n_train"].get<std::vector<int>>();
            if (s.contains("coarse")) {
                c.sweep_coarse.clear();
                for (const auto& cm : s["coarse"])
                    c.sweep_coarse.push_back({cm.at(0).get<int>(), cm.at(1).get<int>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    c.medium.validate();
    c.fine_mesh.validate();
    c.coarse_mesh.validate();
    if (c.length_scale <= 0.0) throw ConfigError("bad config: length_scale must be > 0");
    if (c.n_train < 1 || c.n_test < 1 || c.n_reference < 2)
        throw ConfigError("bad config: sample counts too small");
    if (c.catalog_path && !fs::exists(*c.catalog_path))
        throw ConfigError("bad config: catalog file not found: " + *c.catalog_path);
    return c;
}

FeatureCatalog load_catalog(const ExperimentConfig& cfg) {
    if (cfg.catalog_path) return FeatureCatalog::from_json(read_json(*cfg.catalog_path));
    return FeatureCatalog::default_catalog();
}

std::uint64_t split_tag(const std::string& split) {
    if (split == "train") return 0x11;
    if (split == "test") return 0x22;
    if (split == "reference") return 0x33;
    throw ConfigError("unknown split: " + split);
}

/// Samples n microstructures and solves the fine model for each. Sample i is
/// fully determined by mix64(seed, tag, i); FEM failures drop the sample and
/// log its seed.
Dataset make_dataset(const ExperimentConfig& cfg, int n, std::uint64_t tag,
                     std::uint64_t seed) {
    Dataset ds;
    ds.fine_mesh = cfg.fine_mesh;
    ds.bc = cfg.bc();
    ds.length_scale = cfg.length_scale;

    const GrfSpec grf{cfg.fine_mesh.nel_x, cfg.fine_mesh.nel_y, cfg.length_scale};
    const GrfSampler sampler(grf);

    std::vector<std::optional<Sample>> slots(n);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        const std::uint64_t si = mix64(seed, tag, static_cast<std::uint64_t>(i));
        try {
            Sample smp;
            smp.seed = si;
            smp.lambda_f = threshold_field(sampler.sample(si), cfg.medium);
            const auto sys = assemble(cfg.fine_mesh, smp.lambda_f.cells.values, ds.bc);
            smp.u_f = solve(sys).nodal_values;
            slots[i] = std::move(smp);
        } catch (const NumericError& e) {
#pragma omp critical
            std::cerr << "warning: dropping sample seed=" << si << ": " << e.what() << "\n";
        }
    }
    for (auto& s : slots)
        if (s) ds.samples.push_back(std::move(*s));
    if (ds.samples.empty()) throw NumericError("make_dataset: all samples failed");
    return ds;
}

std::string training_log_csv(const EmState& state) {
    std::ostringstream out;
    out.precision(17);
    out << "iteration,lower_bound,mean_accept_rate,nnz_theta,wall_time_s\n";
    for (const auto& it : state.trace)
        out << it.iteration << "," << it.lower_bound << "," << it.mean_accept_rate << ","
            << it.nnz_theta << "," << it.wall_time_s << "\n";
    return out.str();
}

void write_fit_artifacts(const fs::path& out_dir, const FitResult& result) {
    fs::create_directories(out_dir);
    write_json(out_dir / "model.json", result.params.to_json());
    write_text_atomic(out_dir / "training_log.csv", training_log_csv(result.state));
    if (!result.cv_table.empty()) {
        std::ostringstream cv;
        cv.precision(17);
        cv << "gamma,mean_score,se\n";
        for (const auto& cell : result.cv_table)
            cv << cell.gamma << "," << cell.mean_score << "," << cell.se << "\n";
        write_text_atomic(out_dir / "cv_table.csv", cv.str());
    }
    write_json(out_dir / "fit.json",
               {{"gamma", result.gamma}, {"iterations", result.state.iteration}});
}

int run_generate(const ExperimentConfig& cfg, const std::string& split, const fs::path& out) {
    const int n = split == "train"    ? cfg.n_train
                  : split == "test"   ? cfg.n_test
                                      : cfg.n_reference;
    const Dataset ds = make_dataset(cfg, n, split_tag(split), cfg.seed);
    save_dataset(out, ds);
    std::cout << "wrote " << ds.samples.size() << " samples to " << out.string() << "\n";
    return 0;
}

int run_train(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& out) {
    const Dataset ds = load_dataset(data_dir);
    EmConfig em = cfg.em;
    em.seed = cfg.seed;
    const FitResult result = fit(ds, load_catalog(cfg), cfg.coarse_mesh, em);
    write_fit_artifacts(out, result);
    std::cout << "model written to " << (out / "model.json").string() << " (gamma = "
              << result.gamma << ", " << result.state.iteration << " EM iterations)\n";
    return 0;
}

int run_predict(const ExperimentConfig& cfg, const fs::path& model_path,
                const fs::path& data_dir, const fs::path& out) {
    const ModelParams params = ModelParams::from_json(read_json(model_path));
    const Dataset ds = load_dataset(data_dir);
    fs::create_directories(out);

    nlohmann::json manifest;
    manifest["n_pred_samples"] = cfg.n_pred_samples;
    manifest["predictions"] = nlohmann::json::array();
    std::vector<PredictiveEnsemble> ens(ds.samples.size());

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i)
        ens[i] = predict(ds.samples[i].lambda_f, params, cfg.n_pred_samples,
                         mix64(cfg.seed, 0x9d, static_cast<std::uint64_t>(i)));

    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "pred_%04zu", i);
        const fs::path mean_bin = out / (std::string(stem) + ".mean.bin");
        const fs::path var_bin = out / (std::string(stem) + ".var.bin");
        write_raw_f64(mean_bin, ens[i].mean.data(), ens[i].mean.size());
        write_raw_f64(var_bin, ens[i].variance.data(), ens[i].variance.size());
        manifest["predictions"].push_back({{"stem", stem},
                                           {"sample_seed", ds.samples[i].seed},
                                           {"mean_hash", hash_file(mean_bin)},
                                           {"var_hash", hash_file(var_bin)}});
    }
    write_json(out / "predictions.json", manifest);
    std::cout << "wrote " << ds.samples.size() << " predictive ensembles to " << out.string()
              << "\n";
    return 0;
}

int run_evaluate(const ExperimentConfig& cfg, const fs::path& model_path,
                 const fs::path& data_dir, const fs::path& ref_dir, const fs::path& out) {
    const ModelParams params = ModelParams::from_json(read_json(model_path));
    const Dataset test = load_dataset(data_dir);
    const Dataset reference = load_dataset(ref_dir);
    const MetricsReport report =
        evaluate(params, test, reference, cfg.n_pred_samples, mix64(cfg.seed, 0xe7a1));
    fs::create_directories(out);
    write_text_atomic(out / "metrics.csv", report.to_csv());
    write_json(out / "metrics.json", report.to_json());
    std::cout << report.to_csv();
    return 0;
}

int run_sweep(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    int n_pool = 0;
    for (int n : cfg.sweep_n_train) n_pool = std::max(n_pool, n);
    if (n_pool < 1) throw ConfigError("sweep: empty n_train grid");

    std::cerr << "sweep: generating pool of " << n_pool << " train + " << cfg.n_test
              << " test + " << cfg.n_reference << " reference samples\n";
    const Dataset pool = make_dataset(cfg, n_pool, split_tag("train"), cfg.seed);
    const Dataset test = make_dataset(cfg, cfg.n_test, split_tag("test"), cfg.seed);
    const Dataset reference =
        make_dataset(cfg, cfg.n_reference, split_tag("reference"), cfg.seed);
    const FeatureCatalog catalog = load_catalog(cfg);

    std::ostringstream csv;
    csv.precision(17);
    csv << "n_train,coarse_dim,relative_error,nnz_theta,wall_time\n";
    write_text_atomic(out / "sweep.csv", csv.str());

    for (const MeshSpec& coarse : cfg.sweep_coarse) {
        for (int n : cfg.sweep_n_train) {
            const std::string dim =
                std::to_string(coarse.nel_x) + "x" + std::to_string(coarse.nel_y);
            const auto t0 = std::chrono::steady_clock::now();
            try {
                if (n > static_cast<int>(pool.samples.size()))
                    throw ConfigError("sweep: pool smaller than requested n_train");
                Dataset train;
                train.fine_mesh = pool.fine_mesh;
                train.bc = pool.bc;
                train.length_scale = pool.length_scale;
                train.samples.assign(pool.samples.begin(), pool.samples.begin() + n);

                EmConfig em = cfg.em;
                em.seed = mix64(cfg.seed, split_tag("train"), n);
                const FitResult result = fit(train, catalog, coarse, em);
                const MetricsReport report = evaluate(result.params, test, reference,
                                                      cfg.n_pred_samples,
                                                      mix64(cfg.seed, 0xe7a1, n));
                const double wall =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                const int nnz =
                    static_cast<int>((result.params.theta_c.array() != 0.0).count());
                csv << n << "," << dim << "," << report.relative_error << "," << nnz << ","
                    << wall << "\n";
                write_fit_artifacts(out / ("fit_" + dim + "_n" + std::to_string(n)), result);
                std::cerr << "sweep: " << dim << " N=" << n
                          << " relative_error=" << report.relative_error << "\n";
            } catch (const std::exception& e) {
                const double wall =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                csv << n << "," << dim << ",nan,0," << wall << "\n";
                std::cerr << "sweep: point " << dim << " N=" << n << " failed: " << e.what()
                          << "\n";
            }
            write_text_atomic(out / "sweep.csv", csv.str());
        }
    }
    std::cout << "sweep table written to " << (out / "sweep.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse-grained surrogate pipeline for random two-phase heat conduction"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path = "out";
    std::optional<std::uint64_t> seed_override;
    int threads = 0;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--seed", seed_override, "override config seed");
    app.add_option("--out", out_path, "output directory");
    app.add_option("--threads", threads, "worker threads (0 = library default)");

    auto* gen = app.add_subcommand("generate", "sample microstructures + fine FEM solves");
    std::string split = "train";
    gen->add_option("--split", split, "train | test | reference")
        ->check(CLI::IsMember({"train", "test", "reference"}));

    auto* train = app.add_subcommand("train", "fit the surrogate on a dataset");
    std::string data_dir;
    train->add_option("--data", data_dir, "dataset directory")->required();

    auto* pred = app.add_subcommand("predict", "predictive ensembles for a dataset");
    std::string model_path;
    std::string pred_data;
    pred->add_option("--model", model_path, "model.json")->required();
    pred->add_option("--data", pred_data, "dataset directory")->required();

    auto* eval = app.add_subcommand("evaluate", "error and coverage metrics");
    std::string eval_model, eval_data, ref_dir;
    eval->add_option("--model", eval_model, "model.json")->required();
    eval->add_option("--data", eval_data, "test dataset directory")->required();
    eval->add_option("--reference", ref_dir, "reference dataset directory")->required();

    auto* sweep = app.add_subcommand("sweep", "train/evaluate over the (N, coarse mesh) grid");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        ExperimentConfig cfg = load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (gen->parsed()) return run_generate(cfg, split, out_path);
        if (train->parsed()) return run_train(cfg, data_dir, out_path);
        if (pred->parsed()) return run_predict(cfg, model_path, pred_data, out_path);
        if (eval->parsed()) return run_evaluate(cfg, eval_model, eval_data, ref_dir, out_path);
        if (sweep->parsed()) return run_sweep(cfg, out_path);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
