#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "fimspec/errors.hpp"
#include "fimspec/spectra.hpp"

namespace fimspec {

namespace {

void dense_top(const Eigen::MatrixXd &A, int k, Eigen::VectorXd &values, Eigen::MatrixXd *vectors) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    const Eigen::Index n = A.rows();
    values.resize(k);
    for (int i = 0; i < k; ++i) values(i) = es.eigenvalues()(n - 1 - i);
    if (vectors) {
        vectors->resize(n, k);
        for (int i = 0; i < k; ++i) vectors->col(i) = es.eigenvectors().col(n - 1 - i);
    }
}

}  // namespace

void top_eigenpairs(const Eigen::MatrixXd &A, int k, Eigen::VectorXd &values, Eigen::MatrixXd *vectors,
                    double tol, int max_iter) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n) throw ShapeError("top_eigenpairs needs a square matrix");
    if (k < 1 || k > n) throw DomainError("requested eigenpair count out of range");
    if (n <= std::max<Eigen::Index>(300, 4 * k)) {
        dense_top(A, k, values, vectors);
        return;
    }
    const int m_max = static_cast<int>(std::min<Eigen::Index>(n, max_iter > 0 ? max_iter : std::max(600, 8 * k)));

    Eigen::MatrixXd Q(n, m_max);
    std::vector<double> alpha, beta;
    alpha.reserve(m_max);
    beta.reserve(m_max);

    std::mt19937_64 eng(0x5eed1a2c05ULL);
    std::normal_distribution<double> nd;
    Eigen::VectorXd q(n);
    for (Eigen::Index i = 0; i < n; ++i) q(i) = nd(eng);
    q.normalize();
    Q.col(0) = q;

    Eigen::VectorXd w(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    int m = 0;
    bool converged = false;
    for (int j = 0; j < m_max; ++j) {
        w.noalias() = A * Q.col(j);
        const double a = Q.col(j).dot(w);
        alpha.push_back(a);
        w -= a * Q.col(j);
        if (j > 0) w -= beta[j - 1] * Q.col(j - 1);
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd h = Q.leftCols(j + 1).transpose() * w;
            w.noalias() -= Q.leftCols(j + 1) * h;
        }
        const double b = w.norm();
        m = j + 1;

        const bool last = (m == m_max) || b <= 1e-14 * std::max(1.0, std::abs(alpha[0]));
        if ((m >= k && (m % 10 == 0)) || last) {
            Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
            Eigen::VectorXd e = Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1);
            tri.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
            if (tri.info() != Eigen::Success) throw NumericalError("tridiagonal eigensolve failed");
            if (m >= k) {
                const double scale = std::max(std::abs(tri.eigenvalues()(m - 1)), 1e-300);
                converged = true;
                for (int i = 0; i < k; ++i) {
                    const double r = b * std::abs(tri.eigenvectors()(m - 1, m - 1 - i));
                    if (r > tol * scale) {
                        converged = false;
                        break;
                    }
                }
            }
            if (converged || last) break;
        }
        beta.push_back(b);
        Q.col(j + 1) = w / b;
    }
    if (m < k) throw NumericalError("Lanczos subspace smaller than requested eigenpair count");
    if (!converged) {
        // Fall back to a dense solve rather than report unconverged values.
        dense_top(A, k, values, vectors);
        return;
    }
    values.resize(k);
    for (int i = 0; i < k; ++i) values(i) = tri.eigenvalues()(m - 1 - i);
    if (vectors) {
        vectors->resize(n, k);
        for (int i = 0; i < k; ++i) vectors->col(i) = Q.leftCols(m) * tri.eigenvectors().col(m - 1 - i);
    }
}

}  // namespace fimspec
