#include "cgheat/fem.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <cmath>

namespace cgheat {

void MeshSpec::validate() const {
    if (nel_x < 1 || nel_y < 1) throw ConfigError("MeshSpec: element counts must be >= 1");
}

BoundaryConditions BoundaryConditions::corner_flux(const MeshSpec& mesh, double corner_value,
                                                   FluxSpec flux) {
    BoundaryConditions bc;
    bc.dirichlet = {{mesh.node_id(0, mesh.nel_y), corner_value}};
    bc.flux = flux;
    return bc;
}

BoundaryConditions remap_bc(const BoundaryConditions& bc, const MeshSpec& from,
                            const MeshSpec& to) {
    BoundaryConditions out;
    out.flux = bc.flux;
    for (const auto& [node, value] : bc.dirichlet) {
        const int ix = node % (from.nel_x + 1);
        const int iy = node / (from.nel_x + 1);
        if ((ix * to.nel_x) % from.nel_x != 0 || (iy * to.nel_y) % from.nel_y != 0)
            throw ConfigError("remap_bc: Dirichlet node not on the target mesh grid");
        out.dirichlet.emplace_back(
            to.node_id(ix * to.nel_x / from.nel_x, iy * to.nel_y / from.nel_y), value);
    }
    return out;
}

Eigen::Matrix4d element_stiffness(double hx, double hy) {
    // Bilinear shape functions on [0,hx] x [0,hy], 2x2 Gauss quadrature.
    Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
    const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    const double w = 0.25 * hx * hy;
    for (double xi : gp) {
        for (double eta : gp) {
            const double dndx[4] = {-(1 - eta) / hx, (1 - eta) / hx, -eta / hx, eta / hx};
            const double dndy[4] = {-(1 - xi) / hy, -xi / hy, (1 - xi) / hy, xi / hy};
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    k(a, b) += w * (dndx[a] * dndx[b] + dndy[a] * dndy[b]);
        }
    }
    return k;
}

namespace {

std::array<int, 4> element_node_ids(const MeshSpec& mesh, int ex, int ey) {
    return {mesh.node_id(ex, ey), mesh.node_id(ex + 1, ey), mesh.node_id(ex, ey + 1),
            mesh.node_id(ex + 1, ey + 1)};
}

/// Boundary load -inte N_a (Q . n) ds with 2-point Gauss per edge segment.
/// Dirichlet nodes are skipped.
Eigen::VectorXd flux_load(const MeshSpec& mesh, const BoundaryConditions& bc) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.n_nodes());
    std::vector<bool> pinned(mesh.n_nodes(), false);
    for (const auto& [node, value] : bc.dirichlet) {
        (void)value;
        pinned[node] = true;
    }

    const double gt[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};

    auto add_edge = [&](int n0, int n1, double x0, double y0, double x1, double y1, double nx,
                        double ny) {
        const double len = std::hypot(x1 - x0, y1 - y0);
        for (double t : gt) {
            const double x = x0 + t * (x1 - x0);
            const double y = y0 + t * (y1 - y0);
            const auto q = bc.flux(x, y);
            const double qn = q[0] * nx + q[1] * ny;
            const double w = 0.5 * len;
            if (!pinned[n0]) f[n0] -= w * (1.0 - t) * qn;
            if (!pinned[n1]) f[n1] -= w * t * qn;
        }
    };

    const double hx = mesh.hx(), hy = mesh.hy();
    for (int ex = 0; ex < mesh.nel_x; ++ex) {
        // bottom edge, outward normal (0,-1)
        add_edge(mesh.node_id(ex, 0), mesh.node_id(ex + 1, 0), ex * hx, 0.0, (ex + 1) * hx, 0.0,
                 0.0, -1.0);
        // top edge, outward normal (0,1)
        add_edge(mesh.node_id(ex, mesh.nel_y), mesh.node_id(ex + 1, mesh.nel_y), ex * hx, 1.0,
                 (ex + 1) * hx, 1.0, 0.0, 1.0);
    }
    for (int ey = 0; ey < mesh.nel_y; ++ey) {
        // left edge, outward normal (-1,0)
        add_edge(mesh.node_id(0, ey), mesh.node_id(0, ey + 1), 0.0, ey * hy, 0.0, (ey + 1) * hy,
                 -1.0, 0.0);
        // right edge, outward normal (1,0)
        add_edge(mesh.node_id(mesh.nel_x, ey), mesh.node_id(mesh.nel_x, ey + 1), 1.0, ey * hy, 1.0,
                 (ey + 1) * hy, 1.0, 0.0);
    }
    return f;
}

void build_reduction(const MeshSpec& mesh, const BoundaryConditions& bc,
                     std::vector<int>& free_of_node, std::vector<int>& node_of_free,
                     std::vector<double>& dirichlet_values) {
    if (bc.dirichlet.empty())
        throw ConfigError("assemble: at least one Dirichlet node required (singular system)");
    free_of_node.assign(mesh.n_nodes(), 0);
    dirichlet_values.assign(mesh.n_nodes(), 0.0);
    for (const auto& [node, value] : bc.dirichlet) {
        if (node < 0 || node >= mesh.n_nodes()) throw ConfigError("assemble: Dirichlet node out of range");
        free_of_node[node] = -1;
        dirichlet_values[node] = value;
    }
    node_of_free.clear();
    for (int n = 0; n < mesh.n_nodes(); ++n) {
        if (free_of_node[n] == 0) {
            free_of_node[n] = static_cast<int>(node_of_free.size());
            node_of_free.push_back(n);
        }
    }
}

}  // namespace

LinearSystem assemble(const MeshSpec& mesh, const std::vector<double>& conductivity,
                      const BoundaryConditions& bc) {
    mesh.validate();
    if (static_cast<int>(conductivity.size()) != mesh.n_elements())
        throw ConfigError("assemble: conductivity length must equal element count");
    for (double lam : conductivity)
        if (!(lam > 0.0)) throw ConfigError("assemble: conductivities must be > 0");

    LinearSystem sys;
    sys.mesh = mesh;
    build_reduction(mesh, bc, sys.free_of_node, sys.node_of_free, sys.dirichlet_values);
    const int n_free = static_cast<int>(sys.node_of_free.size());

    const Eigen::Matrix4d k_ref = element_stiffness(mesh.hx(), mesh.hy());
    Eigen::VectorXd load = flux_load(mesh, bc);
    Eigen::VectorXd rhs(n_free);
    for (int r = 0; r < n_free; ++r) rhs[r] = load[sys.node_of_free[r]];

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * 16);
    for (int ey = 0; ey < mesh.nel_y; ++ey) {
        for (int ex = 0; ex < mesh.nel_x; ++ex) {
            const double lam = conductivity[static_cast<std::size_t>(ey) * mesh.nel_x + ex];
            const auto nodes = element_node_ids(mesh, ex, ey);
            for (int a = 0; a < 4; ++a) {
                const int ra = sys.free_of_node[nodes[a]];
                if (ra < 0) continue;
                for (int b = 0; b < 4; ++b) {
                    const int rb = sys.free_of_node[nodes[b]];
                    const double kab = lam * k_ref(a, b);
                    if (rb < 0)
                        rhs[ra] -= kab * sys.dirichlet_values[nodes[b]];
                    else
                        trips.emplace_back(ra, rb, kab);
                }
            }
        }
    }
    sys.matrix.resize(n_free, n_free);
    sys.matrix.setFromTriplets(trips.begin(), trips.end());
    sys.rhs = std::move(rhs);
    return sys;
}

FemSolution solve(const LinearSystem& system) {
    FemSolution sol;
    sol.mesh = system.mesh;
    sol.nodal_values.resize(system.mesh.n_nodes());

    Eigen::VectorXd u_free;
    if (system.matrix.rows() > 0) {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>>
            cg;
        cg.setTolerance(1e-10);
        cg.setMaxIterations(10 * system.matrix.rows());
        cg.compute(system.matrix);
        u_free = cg.solve(system.rhs);
        if (cg.info() != Eigen::Success)
            throw NumericError("solve: CG did not converge, residual " + std::to_string(cg.error()));
    }

    for (int n = 0; n < system.mesh.n_nodes(); ++n) {
        const int r = system.free_of_node[n];
        sol.nodal_values[n] = r < 0 ? system.dirichlet_values[n] : u_free[r];
    }
    return sol;
}

Eigen::SparseMatrix<double> interpolation_matrix(const MeshSpec& coarse, const MeshSpec& fine) {
    coarse.validate();
    fine.validate();
    if (fine.nel_x % coarse.nel_x != 0 || fine.nel_y % coarse.nel_y != 0)
        throw ConfigError("interpolation_matrix: meshes are not nested");
    const int rx = fine.nel_x / coarse.nel_x;
    const int ry = fine.nel_y / coarse.nel_y;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(fine.n_nodes()) * 4);
    for (int iy = 0; iy <= fine.nel_y; ++iy) {
        const int ey = std::min(iy / ry, coarse.nel_y - 1);
        const double eta = static_cast<double>(iy - ey * ry) / ry;
        for (int ix = 0; ix <= fine.nel_x; ++ix) {
            const int ex = std::min(ix / rx, coarse.nel_x - 1);
            const double xi = static_cast<double>(ix - ex * rx) / rx;
            const int row = fine.node_id(ix, iy);
            const double n[4] = {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
            const int cols[4] = {coarse.node_id(ex, ey), coarse.node_id(ex + 1, ey),
                                 coarse.node_id(ex, ey + 1), coarse.node_id(ex + 1, ey + 1)};
            for (int a = 0; a < 4; ++a)
                if (n[a] != 0.0) trips.emplace_back(row, cols[a], n[a]);
        }
    }
    Eigen::SparseMatrix<double> w(fine.n_nodes(), coarse.n_nodes());
    w.setFromTriplets(trips.begin(), trips.end());
    return w;
}

CoarseSolver::CoarseSolver(const MeshSpec& mesh, const BoundaryConditions& bc)
    : mesh_(mesh), bc_(bc) {
    mesh_.validate();
    k_ref_ = element_stiffness(mesh_.hx(), mesh_.hy());
    element_nodes_.reserve(mesh_.n_elements());
    for (int ey = 0; ey < mesh_.nel_y; ++ey)
        for (int ex = 0; ex < mesh_.nel_x; ++ex)
            element_nodes_.push_back(element_node_ids(mesh_, ex, ey));
    build_reduction(mesh_, bc_, free_of_node_, node_of_free_, dirichlet_values_);
    flux_load_ = flux_load(mesh_, bc_);
}

Eigen::VectorXd CoarseSolver::solve_conductivity(const Eigen::VectorXd& lambda) const {
    if (lambda.size() != mesh_.n_elements())
        throw ConfigError("CoarseSolver: conductivity length mismatch");
    const int n_free = static_cast<int>(node_of_free_.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n_free, n_free);
    Eigen::VectorXd rhs(n_free);
    for (int r = 0; r < n_free; ++r) rhs[r] = flux_load_[node_of_free_[r]];

    for (int e = 0; e < mesh_.n_elements(); ++e) {
        const double lam = lambda[e];
        if (!(lam > 0.0) || !std::isfinite(lam))
            throw NumericError("CoarseSolver: nonpositive or non-finite conductivity");
        const auto& nodes = element_nodes_[e];
        for (int a = 0; a < 4; ++a) {
            const int ra = free_of_node_[nodes[a]];
            if (ra < 0) continue;
            for (int b = 0; b < 4; ++b) {
                const int rb = free_of_node_[nodes[b]];
                const double kab = lam * k_ref_(a, b);
                if (rb < 0)
                    rhs[ra] -= kab * dirichlet_values_[nodes[b]];
                else
                    k(ra, rb) += kab;
            }
        }
    }

    Eigen::VectorXd u_free;
    if (n_free > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success)
            throw NumericError("CoarseSolver: Cholesky factorization failed");
        u_free = llt.solve(rhs);
    }
    Eigen::VectorXd full(mesh_.n_nodes());
    for (int n = 0; n < mesh_.n_nodes(); ++n) {
        const int r = free_of_node_[n];
        full[n] = r < 0 ? dirichlet_values_[n] : u_free[r];
    }
    return full;
}

Eigen::VectorXd CoarseSolver::solve_log_conductivity(const Eigen::VectorXd& z) const {
    return solve_conductivity(z.array().exp().matrix());
}

FemSolution coarse_solve(const MeshSpec& mesh, const Eigen::VectorXd& z_c,
                         const BoundaryConditions& bc) {
    CoarseSolver solver(mesh, bc);
    FemSolution sol;
    sol.mesh = mesh;
    sol.nodal_values = solver.solve_log_conductivity(z_c);
    return sol;
}

}  // namespace cgheat
