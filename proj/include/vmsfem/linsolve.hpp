#pragma once

// Sparse solves of the per-step saddle-point system. The direct path wraps
// UMFPACK through Eigen and reuses the symbolic analysis while the sparsity
// pattern stays the same. The iterative path is restarted GMRES with a
// zero-fill incomplete LU preconditioner.

#include "vmsfem/assembly.hpp"
#include "vmsfem/errors.hpp"

#include <Eigen/SparseCore>
#include <Eigen/UmfPackSupport>
#include <unsupported/Eigen/IterativeSolvers>

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vmsfem {

enum class SolverKind { direct_lu, gmres_ilu0 };

inline std::optional<SolverKind> parse_solver_kind(std::string_view s) {
    if (s == "direct" || s == "direct_lu" || s == "lu") return SolverKind::direct_lu;
    if (s == "gmres" || s == "gmres_ilu0") return SolverKind::gmres_ilu0;
    return std::nullopt;
}

constexpr std::string_view solver_kind_name(SolverKind k) {
    return k == SolverKind::direct_lu ? "direct_lu" : "gmres_ilu0";
}

struct SolverConfig {
    SolverKind kind = SolverKind::direct_lu;
    double tolerance = 1e-10;
    int max_iterations = 2000;
    int restart = 100;

    /// Direct LU up to Level 6, GMRES above.
    static SolverConfig for_level(int level) {
        SolverConfig c;
        c.kind = level <= 6 ? SolverKind::direct_lu : SolverKind::gmres_ilu0;
        return c;
    }

    void validate() const {
        if (!(tolerance > 0.0)) throw ConfigError("solver tolerance must be positive");
        if (max_iterations < 1) throw ConfigError("solver needs at least one iteration");
        if (restart < 1) throw ConfigError("GMRES restart length must be positive");
    }
};

/// ILU(0) on the sparsity of A plus its diagonal, usable as an Eigen
/// preconditioner. Zero pivots, which the saddle-point structure produces in
/// the pressure and multiplier rows, are shifted to a small multiple of the
/// row norm.
class Ilu0Preconditioner {
public:
    using StorageIndex = int;
    using Scalar = double;
    using RowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
    enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic };

    Ilu0Preconditioner() = default;
    template <class M>
    explicit Ilu0Preconditioner(const M& m) {
        compute(m);
    }

    template <class M>
    Ilu0Preconditioner& analyzePattern(const M&) {
        return *this;
    }

    template <class M>
    Ilu0Preconditioner& factorize(const M& m) {
        // Union with an explicit zero diagonal, so structurally missing
        // pivots (multiplier row, ISS pressure rows) get the shift below.
        RowMatrix zero_diag(m.rows(), m.cols());
        zero_diag.setIdentity();
        zero_diag.coeffs().setZero();
        lu_ = RowMatrix(m) + zero_diag;
        lu_.makeCompressed();
        const int n = static_cast<int>(lu_.rows());
        diag_.assign(n, -1);
        const int* outer = lu_.outerIndexPtr();
        const int* inner = lu_.innerIndexPtr();
        double* val = lu_.valuePtr();
        std::vector<int> where(n, -1);
        for (int i = 0; i < n; ++i) {
            for (int k = outer[i]; k < outer[i + 1]; ++k) where[inner[k]] = k;
            double row_norm = 0.0;
            for (int k = outer[i]; k < outer[i + 1]; ++k) row_norm = std::max(row_norm, std::abs(val[k]));
            for (int k = outer[i]; k < outer[i + 1] && inner[k] < i; ++k) {
                const int j = inner[k];
                val[k] /= val[diag_[j]];
                const double lij = val[k];
                for (int kk = diag_[j] + 1; kk < outer[j + 1]; ++kk) {
                    const int w = where[inner[kk]];
                    if (w >= 0) val[w] -= lij * val[kk];
                }
            }
            const int d = where[i];
            if (d < 0) {
                info_ = Eigen::NumericalIssue;
                return *this;
            }
            diag_[i] = d;
            const double floor = 1e-8 * (row_norm > 0.0 ? row_norm : 1.0);
            if (std::abs(val[d]) < floor) val[d] = val[d] < 0.0 ? -floor : floor;
            for (int k = outer[i]; k < outer[i + 1]; ++k) where[inner[k]] = -1;
        }
        info_ = Eigen::Success;
        return *this;
    }

    template <class M>
    Ilu0Preconditioner& compute(const M& m) {
        analyzePattern(m);
        return factorize(m);
    }

    template <class Rhs>
    Eigen::VectorXd solve(const Eigen::MatrixBase<Rhs>& b) const {
        const int n = static_cast<int>(lu_.rows());
        Eigen::VectorXd x = b;
        const int* outer = lu_.outerIndexPtr();
        const int* inner = lu_.innerIndexPtr();
        const double* val = lu_.valuePtr();
        for (int i = 0; i < n; ++i)
            for (int k = outer[i]; k < diag_[i]; ++k) x[i] -= val[k] * x[inner[k]];
        for (int i = n - 1; i >= 0; --i) {
            for (int k = diag_[i] + 1; k < outer[i + 1]; ++k) x[i] -= val[k] * x[inner[k]];
            x[i] /= val[diag_[i]];
        }
        return x;
    }

    Eigen::ComputationInfo info() const { return info_; }

private:
    RowMatrix lu_;
    std::vector<int> diag_;
    Eigen::ComputationInfo info_ = Eigen::Success;
};

struct SolveReport {
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Stateful solver: keeps the UMFPACK symbolic factorization between calls
/// with the same pattern. Not to be shared between concurrent solves.
class LinearSolver {
public:
    explicit LinearSolver(SolverConfig config = {}) : config_(config) { config_.validate(); }

    const SolverConfig& config() const noexcept { return config_; }
    const SolveReport& last_report() const noexcept { return report_; }

    Vector solve(const Eigen::SparseMatrix<double>& A, const Vector& b) {
        if (A.rows() != A.cols()) throw UsageError("system matrix is not square");
        if (A.rows() != b.size()) throw UsageError("right-hand side size does not match the matrix");
        Vector x = config_.kind == SolverKind::direct_lu ? solve_direct(A, b) : solve_gmres(A, b);
        const double bn = b.norm();
        report_.relative_residual = (A * x - b).norm() / (bn > 0.0 ? bn : 1.0);
        if (!x.allFinite()) throw SolverError("solution contains non-finite values", report_.iterations,
                                              report_.relative_residual);
        return x;
    }

    Vector solve(const SparseSystem& sys) { return solve(sys.matrix, sys.rhs); }

private:
    Vector solve_direct(const Eigen::SparseMatrix<double>& A, const Vector& b) {
        if (!lu_ || lu_rows_ != A.rows() || lu_nnz_ != A.nonZeros()) {
            lu_ = std::make_unique<Eigen::UmfPackLU<Eigen::SparseMatrix<double>>>();
            lu_->analyzePattern(A);
            if (lu_->info() != Eigen::Success) {
                lu_.reset();
                throw SolverError("symbolic LU analysis failed");
            }
            lu_rows_ = A.rows();
            lu_nnz_ = A.nonZeros();
        }
        lu_->factorize(A);
        if (lu_->info() != Eigen::Success) throw SolverError("LU factorization failed: singular matrix");
        Vector x = lu_->solve(b);
        if (lu_->info() != Eigen::Success) throw SolverError("LU solve failed");
        report_.iterations = 1;
        return x;
    }

    Vector solve_gmres(const Eigen::SparseMatrix<double>& A, const Vector& b) {
        Eigen::GMRES<Eigen::SparseMatrix<double>, Ilu0Preconditioner> gmres;
        gmres.set_restart(config_.restart);
        gmres.setMaxIterations(config_.max_iterations);
        gmres.setTolerance(config_.tolerance);
        gmres.compute(A);
        if (gmres.info() != Eigen::Success) throw SolverError("incomplete LU factorization failed");
        Vector x = gmres.solve(b);
        report_.iterations = static_cast<int>(gmres.iterations());
        if (gmres.info() != Eigen::Success)
            throw SolverError("GMRES did not converge after " + std::to_string(gmres.iterations()) +
                                  " iterations, estimated residual " + std::to_string(gmres.error()),
                              static_cast<int>(gmres.iterations()), gmres.error());
        return x;
    }

    SolverConfig config_;
    SolveReport report_;
    std::unique_ptr<Eigen::UmfPackLU<Eigen::SparseMatrix<double>>> lu_;
    Eigen::Index lu_rows_ = -1;
    Eigen::Index lu_nnz_ = -1;
};

inline Vector solve(const SparseSystem& sys, const SolverConfig& config = {}) {
    LinearSolver s(config);
    return s.solve(sys);
}

inline Vector solve(const Eigen::SparseMatrix<double>& A, const Vector& b, const SolverConfig& config = {}) {
    LinearSolver s(config);
    return s.solve(A, b);
}

} // namespace vmsfem
