// Wall-clock comparison of the pipeline hot paths. The headline number is
// the fine CG solve vs the precomputed coarse direct solve (the whole point
// of the surrogate: >100x per evaluation at production sizes).

#include <benchmark/benchmark.h>

#include "cgheat/features.hpp"
#include "cgheat/fem.hpp"
#include "cgheat/microstructure.hpp"
#include "cgheat/rng.hpp"

using namespace cgheat;

namespace {

Microstructure sample_medium(int n, double l, std::uint64_t seed) {
    MediumSpec med;
    return threshold_field(sample_grf(GrfSpec{n, n, l}, seed), med);
}

void bm_fine_solve(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const MeshSpec mesh{n, n};
    const auto ms = sample_medium(n, 0.0781, 42);
    const auto bc = BoundaryConditions::corner_flux(mesh);
    for (auto _ : state) {
        auto sol = solve(assemble(mesh, ms.cells.values, bc));
        benchmark::DoNotOptimize(sol.nodal_values);
    }
    state.SetLabel(std::to_string(mesh.n_nodes()) + " nodes");
}

void bm_coarse_solve(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const MeshSpec coarse{n, n};
    const CoarseSolver solver(coarse, BoundaryConditions::corner_flux(coarse));
    Eigen::VectorXd z = Eigen::VectorXd::Constant(coarse.n_elements(), 0.7);
    for (int k = 0; k < z.size(); ++k) z[k] += 0.01 * k;
    for (auto _ : state) {
        auto u = solver.solve_log_conductivity(z);
        benchmark::DoNotOptimize(u);
    }
    state.SetLabel(std::to_string(coarse.n_nodes()) + " nodes");
}

void bm_grf_sample(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const GrfSampler sampler(GrfSpec{n, n, 0.0781});
    std::uint64_t seed = 0;
    for (auto _ : state) {
        auto g = sampler.sample(seed++);
        benchmark::DoNotOptimize(g.values);
    }
}

void bm_design_matrix(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto ms = sample_medium(n, 0.0781, 7);
    const auto cat = FeatureCatalog::default_catalog();
    for (auto _ : state) {
        auto phi = build_design_matrix(ms, MeshSpec{4, 4}, cat);
        benchmark::DoNotOptimize(phi.values);
    }
}

}  // namespace

BENCHMARK(bm_fine_solve)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_coarse_solve)->Arg(2)->Arg(4)->Arg(8);
BENCHMARK(bm_grf_sample)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_design_matrix)->Arg(64)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
