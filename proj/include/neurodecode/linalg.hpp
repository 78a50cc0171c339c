#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace neurodecode {

// Dense row-major matrix of doubles. Kept deliberately small: the project
// needs construction, element access, matrix-vector products and symmetric
// eigendecomposition, nothing else.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(entries_.data() + r * cols_, cols_);
    }
    std::span<double> row(std::size_t r) {
        return std::span<double>(entries_.data() + r * cols_, cols_);
    }

    std::vector<double>& entries() { return entries_; }
    const std::vector<double>& entries() const { return entries_; }

    // Throws ValidationError on any NaN/Inf entry.
    void require_finite(const char* context) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> entries_;
};

// Eigenvalues in descending order; eigenvectors(i, j) is component i of the
// unit eigenvector paired with eigenvalues[j]. Sign convention: within each
// vector the largest-magnitude component is positive (lowest index wins ties).
struct EigenPairs {
    std::vector<double> eigenvalues;
    Matrix eigenvectors;
};

// Symmetric eigendecomposition by cyclic Jacobi rotations.
//
// tol is the convergence threshold on the off-diagonal Frobenius norm;
// tol <= 0 selects the default of 1e-12 times the Frobenius norm of the
// input. Inputs must be square and symmetric to within 1e-9 (max abs
// entry difference); the matrix is symmetrized as (m + m^T)/2 before
// iteration. Throws ValidationError on shape/symmetry violations and
// NumericalError if 100 sweeps do not converge.
EigenPairs sym_eigen(const Matrix& m, double tol = 0.0);

// m * v. Throws ValidationError when sizes disagree.
std::vector<double> matvec(const Matrix& m, std::span<const double> v);

// acc += weight * v v^T, in place. Throws ValidationError when acc is not
// square with side v.size().
void outer_accumulate(Matrix& acc, std::span<const double> v, double weight);

}  // namespace neurodecode
