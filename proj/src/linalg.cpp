#include "neurodecode/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "neurodecode/errors.hpp"

namespace neurodecode {
namespace {

double frobenius_norm(const Matrix& m) {
    double sum = 0.0;
    for (double x : m.entries()) sum += x * x;
    return std::sqrt(sum);
}

double off_diagonal_frobenius(const Matrix& m) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (i != j) sum += m(i, j) * m(i, j);
    return std::sqrt(sum);
}

// One Jacobi rotation zeroing a(p, q), applied to a and accumulated into v.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
    const std::size_t n = a.rows();
    const double apq = a(p, q);
    if (apq == 0.0) return;

    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    double t;
    if (theta >= 0.0)
        t = 1.0 / (theta + std::sqrt(1.0 + theta * theta));
    else
        t = -1.0 / (-theta + std::sqrt(1.0 + theta * theta));
    const double c = 1.0 / std::sqrt(1.0 + t * t);
    const double s = t * c;
    const double tau = s / (1.0 + c);

    const double app = a(p, p);
    const double aqq = a(q, q);
    a(p, p) = app - t * apq;
    a(q, q) = aqq + t * apq;
    a(p, q) = 0.0;
    a(q, p) = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == p || i == q) continue;
        const double aip = a(i, p);
        const double aiq = a(i, q);
        a(i, p) = aip - s * (aiq + tau * aip);
        a(i, q) = aiq + s * (aip - tau * aiq);
        a(p, i) = a(i, p);
        a(q, i) = a(i, q);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double vip = v(i, p);
        const double viq = v(i, q);
        v(i, p) = vip - s * (viq + tau * vip);
        v(i, q) = viq + s * (vip - tau * viq);
    }
}

// Flip each column so its largest-magnitude component is positive; the
// lowest index wins magnitude ties so the choice is reproducible.
void fix_column_signs(Matrix& vectors) {
    for (std::size_t j = 0; j < vectors.cols(); ++j) {
        std::size_t pivot = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < vectors.rows(); ++i) {
            const double mag = std::abs(vectors(i, j));
            if (mag > best) {
                best = mag;
                pivot = i;
            }
        }
        if (vectors(pivot, j) < 0.0)
            for (std::size_t i = 0; i < vectors.rows(); ++i) vectors(i, j) = -vectors(i, j);
    }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::require_finite(const char* context) const {
    for (double x : entries_)
        if (!std::isfinite(x)) {
            std::ostringstream msg;
            msg << context << ": non-finite matrix entry";
            throw ValidationError(msg.str());
        }
}

EigenPairs sym_eigen(const Matrix& m, double tol) {
    if (m.rows() != m.cols())
        throw ValidationError("sym_eigen: matrix must be square, got " + std::to_string(m.rows()) +
                              "x" + std::to_string(m.cols()));
    const std::size_t n = m.rows();
    if (n == 0) throw ValidationError("sym_eigen: empty matrix");
    m.require_finite("sym_eigen");

    double max_asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            max_asym = std::max(max_asym, std::abs(m(i, j) - m(j, i)));
    if (max_asym > 1e-9) {
        std::ostringstream msg;
        msg << "sym_eigen: matrix asymmetric, max |m(i,j) - m(j,i)| = " << max_asym;
        throw ValidationError(msg.str());
    }

    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));

    if (tol <= 0.0) tol = 1e-12 * frobenius_norm(a);

    Matrix v = Matrix::identity(n);
    constexpr int kMaxSweeps = 100;
    bool converged = off_diagonal_frobenius(a) <= tol;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
        converged = off_diagonal_frobenius(a) <= tol;
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "sym_eigen: no convergence after " << kMaxSweeps
            << " sweeps, off-diagonal Frobenius norm " << off_diagonal_frobenius(a)
            << " above tolerance " << tol;
        throw NumericalError(msg.str());
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&a](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    EigenPairs result;
    result.eigenvalues.resize(n);
    result.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        result.eigenvalues[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) result.eigenvectors(i, j) = v(i, order[j]);
    }
    fix_column_signs(result.eigenvectors);
    return result;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> v) {
    if (m.cols() != v.size())
        throw ValidationError("matvec: got vector of length " + std::to_string(v.size()) +
                              " for a " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + " matrix");
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double sum = 0.0;
        const std::span<const double> row = m.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) sum += row[j] * v[j];
        out[i] = sum;
    }
    return out;
}

void outer_accumulate(Matrix& acc, std::span<const double> v, double weight) {
    if (acc.rows() != v.size() || acc.cols() != v.size())
        throw ValidationError("outer_accumulate: accumulator is " + std::to_string(acc.rows()) +
                              "x" + std::to_string(acc.cols()) + ", vector has length " +
                              std::to_string(v.size()));
    // weight * (v_i * v_j) so that the (i, j) and (j, i) updates round
    // identically and a symmetric accumulator stays exactly symmetric
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) acc(i, j) += weight * (v[i] * v[j]);
}

}  // namespace neurodecode
