#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <utility>
#include <vector>

#include "cgheat/errors.hpp"
#include "cgheat/grid.hpp"

namespace cgheat {

/// Regular quadrilateral mesh of the unit square, nel_x x nel_y elements.
/// Node id = iy * (nel_x + 1) + ix, y varying slowest.
struct MeshSpec {
    int nel_x = 1;
    int nel_y = 1;

    int n_nodes() const { return (nel_x + 1) * (nel_y + 1); }
    int n_elements() const { return nel_x * nel_y; }
    double hx() const { return 1.0 / nel_x; }
    double hy() const { return 1.0 / nel_y; }
    int node_id(int ix, int iy) const { return iy * (nel_x + 1) + ix; }
    bool operator==(const MeshSpec&) const = default;
    void validate() const;
};

/// Affine boundary heat-flux vector Q(x,y) = (qx0 + qx_y * y, qy0 + qy_x * x).
struct FluxSpec {
    double qx0 = 150.0;
    double qx_y = -30.0;
    double qy0 = 100.0;
    double qy_x = -30.0;

    std::array<double, 2> operator()(double x, double y) const {
        return {qx0 + qx_y * y, qy0 + qy_x * x};
    }
    bool operator==(const FluxSpec&) const = default;
};

/// Dirichlet pins plus a prescribed flux on the remaining boundary.
/// Dirichlet nodes are excluded from the flux load assembly.
struct BoundaryConditions {
    std::vector<std::pair<int, double>> dirichlet;
    FluxSpec flux;

    /// Default BC family: a single Dirichlet node at the upper-left corner
    /// (x,y) = (0,1) and the affine flux field on the rest of the boundary.
    static BoundaryConditions corner_flux(const MeshSpec& mesh, double corner_value = -50.0,
                                          FluxSpec flux = {});
};

struct FemSolution {
    MeshSpec mesh;
    Eigen::VectorXd nodal_values;
};

/// Assembled, Dirichlet-reduced SPD linear system.
struct LinearSystem {
    MeshSpec mesh;
    Eigen::SparseMatrix<double> matrix;  // reduced, symmetric positive definite
    Eigen::VectorXd rhs;                 // reduced load
    std::vector<int> free_of_node;       // node -> reduced index, -1 if Dirichlet
    std::vector<int> node_of_free;       // reduced index -> node
    std::vector<double> dirichlet_values;  // per node, only valid where pinned
};

/// Reference bilinear-quad stiffness for a hx x hy element with unit
/// conductivity, 2x2 Gauss quadrature. Local node order:
/// (0,0), (1,0), (0,1), (1,1) in element-local coordinates.
Eigen::Matrix4d element_stiffness(double hx, double hy);

/// Stiffness + flux load assembly with Dirichlet row/column elimination.
/// conductivity: one positive value per element, Grid order.
LinearSystem assemble(const MeshSpec& mesh, const std::vector<double>& conductivity,
                      const BoundaryConditions& bc);

/// Preconditioned conjugate gradient solve, relative tolerance 1e-10.
FemSolution solve(const LinearSystem& system);

/// Re-expresses Dirichlet node ids of `bc` (given on mesh `from`) on mesh
/// `to` by physical location. Every pinned node must land exactly on a `to`
/// grid point; the flux spec carries over unchanged.
BoundaryConditions remap_bc(const BoundaryConditions& bc, const MeshSpec& from,
                            const MeshSpec& to);

/// Coarse bilinear shape-function values at fine nodes: n_f-nodes x n_c-nodes,
/// rows sum to 1. Meshes must be nested (element ratios integral).
Eigen::SparseMatrix<double> interpolation_matrix(const MeshSpec& coarse, const MeshSpec& fine);

/// Repeated-solve path for the coarse model: precomputes element scatter,
/// flux load and Dirichlet reduction once, then each solve(z) assembles the
/// dense reduced system with lambda = exp(z) and factorizes it directly.
class CoarseSolver {
public:
    CoarseSolver(const MeshSpec& mesh, const BoundaryConditions& bc);

    /// z: per-element log-conductivities. Returns the full nodal vector.
    Eigen::VectorXd solve_log_conductivity(const Eigen::VectorXd& z) const;
    Eigen::VectorXd solve_conductivity(const Eigen::VectorXd& lambda) const;

    const MeshSpec& mesh() const { return mesh_; }

private:
    MeshSpec mesh_;
    BoundaryConditions bc_;
    Eigen::Matrix4d k_ref_;
    std::vector<std::array<int, 4>> element_nodes_;
    Eigen::VectorXd flux_load_;          // full nodes
    std::vector<int> free_of_node_;
    std::vector<int> node_of_free_;
    std::vector<double> dirichlet_values_;
};

/// One-shot convenience wrapper around CoarseSolver.
FemSolution coarse_solve(const MeshSpec& mesh, const Eigen::VectorXd& z_c,
                         const BoundaryConditions& bc);

}  // namespace cgheat
