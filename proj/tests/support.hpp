#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls the dual builders under test; Jacobians are formed column by column
// with forward-mode tangents through an explicitly written network pass.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fimspec/network.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Net {
    std::vector<MatrixXd> W;  // layers 1..L at index 0..L-1
    std::vector<VectorXd> b;
    std::vector<fimspec::Activation> act;  // hidden layers 1..L-1 at index 0..L-2
};

inline Net from_instance(const fimspec::NetworkInstance &net) {
    Net o;
    const int L = net.depth();
    for (int l = 1; l <= L; ++l) {
        o.W.push_back(net.weight(l));
        o.b.push_back(net.bias(l));
        if (l < L) o.act.push_back(net.config().activation(l));
    }
    return o;
}

inline int depth(const Net &o) { return static_cast<int>(o.W.size()); }

// Single-sample forward pass that also returns every hidden state h^0..h^{L-1}.
inline VectorXd run(const Net &o, const VectorXd &x, std::vector<VectorXd> *hs = nullptr) {
    VectorXd h = x;
    if (hs) hs->assign(1, h);
    const int L = depth(o);
    for (int l = 0; l < L; ++l) {
        VectorXd u = o.W[l] * h + o.b[l];
        if (l == L - 1) return u;
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = o.act[l].eval(u(i));
        h = u;
        if (hs) hs->push_back(h);
    }
    return h;
}

// Tangent of f at x along a parameter direction (dW, db).
inline VectorXd tangent(const Net &o, const VectorXd &x, const std::vector<MatrixXd> &dW,
                        const std::vector<VectorXd> &db) {
    VectorXd h = x, dh = VectorXd::Zero(x.size());
    const int L = depth(o);
    for (int l = 0; l < L; ++l) {
        const VectorXd u = o.W[l] * h + o.b[l];
        const VectorXd du = dW[l] * h + o.W[l] * dh + db[l];
        if (l == L - 1) return du;
        h.resize(u.size());
        dh.resize(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            h(i) = o.act[l].eval(u(i));
            dh(i) = o.act[l].deriv(u(i)) * du(i);
        }
    }
    return dh;
}

// Tangent of f when the hidden state h^start is perturbed by dh0.
inline VectorXd state_tangent(const Net &o, const VectorXd &x, int start, const VectorXd &dh0) {
    std::vector<VectorXd> hs;
    run(o, x, &hs);
    VectorXd h = hs[start], dh = dh0;
    const int L = depth(o);
    for (int l = start; l < L; ++l) {
        const VectorXd u = o.W[l] * h + o.b[l];
        const VectorXd du = o.W[l] * dh;
        if (l == L - 1) return du;
        h.resize(u.size());
        dh.resize(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            h(i) = o.act[l].eval(u(i));
            dh(i) = o.act[l].deriv(u(i)) * du(i);
        }
    }
    return dh;
}

// P x CN Jacobian, column k*N + n = d f_k(n) / d theta. Parameters are listed
// layer by layer (W column-major, then b). `layer` > 0 restricts to that layer.
// wscale/bscale multiply the columns of each layer (NTK parameterization).
inline MatrixXd param_jacobian(const Net &o, const MatrixXd &x, int layer = 0,
                               const std::vector<double> &wscale = {}, double bscale = 1.0) {
    const int L = depth(o), N = static_cast<int>(x.cols());
    const int C = static_cast<int>(o.W.back().rows());
    std::vector<MatrixXd> dW;
    std::vector<VectorXd> db;
    for (int l = 0; l < L; ++l) {
        dW.push_back(MatrixXd::Zero(o.W[l].rows(), o.W[l].cols()));
        db.push_back(VectorXd::Zero(o.b[l].size()));
    }
    std::vector<std::vector<double>> rows;
    auto add = [&](double scale) {
        std::vector<double> row(static_cast<std::size_t>(C) * N);
        for (int n = 0; n < N; ++n) {
            const VectorXd t = tangent(o, x.col(n), dW, db) * scale;
            for (int k = 0; k < C; ++k) row[static_cast<std::size_t>(k) * N + n] = t(k);
        }
        rows.push_back(std::move(row));
    };
    for (int l = 0; l < L; ++l) {
        if (layer > 0 && l != layer - 1) continue;
        const double ws = wscale.empty() ? 1.0 : wscale[l];
        for (Eigen::Index j = 0; j < o.W[l].cols(); ++j)
            for (Eigen::Index i = 0; i < o.W[l].rows(); ++i) {
                dW[l](i, j) = 1.0;
                add(ws);
                dW[l](i, j) = 0.0;
            }
        for (Eigen::Index i = 0; i < o.b[l].size(); ++i) {
            db[l](i) = 1.0;
            add(bscale);
            db[l](i) = 0.0;
        }
    }
    MatrixXd J(rows.size(), static_cast<Eigen::Index>(C) * N);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) J(r, c) = rows[r][c];
    return J;
}

// M_l x CN Jacobian with respect to the hidden state h^l of each sample.
inline MatrixXd state_jacobian(const Net &o, const MatrixXd &x, int l) {
    const int N = static_cast<int>(x.cols());
    const int C = static_cast<int>(o.W.back().rows());
    const Eigen::Index m = o.W[l].cols();
    MatrixXd J(m, static_cast<Eigen::Index>(C) * N);
    for (Eigen::Index i = 0; i < m; ++i) {
        VectorXd e = VectorXd::Zero(m);
        e(i) = 1.0;
        for (int n = 0; n < N; ++n) {
            const VectorXd t = state_tangent(o, x.col(n), l, e);
            for (int k = 0; k < C; ++k) J(i, k * N + n) = t(k);
        }
    }
    return J;
}

// Columns of J centered over samples within each output block.
inline MatrixXd center_columns(const MatrixXd &J, int C, int N) {
    MatrixXd out = J;
    for (int k = 0; k < C; ++k) {
        const VectorXd mu = J.middleCols(k * N, N).rowwise().mean();
        out.middleCols(k * N, N).colwise() -= mu;
    }
    return out;
}

// Primal cross-entropy FIM (1/N) sum_n J_n Q_n J_n^T.
inline MatrixXd primal_cross(const MatrixXd &J, const MatrixXd &g) {
    const int C = static_cast<int>(g.rows()), N = static_cast<int>(g.cols());
    MatrixXd F = MatrixXd::Zero(J.rows(), J.rows());
    for (int n = 0; n < N; ++n) {
        MatrixXd Jn(J.rows(), C);
        for (int k = 0; k < C; ++k) Jn.col(k) = J.col(k * N + n);
        MatrixXd Q = -g.col(n) * g.col(n).transpose();
        Q.diagonal() += g.col(n);
        F += Jn * Q * Jn.transpose();
    }
    return F / N;
}

inline VectorXd sorted_eigs(const MatrixXd &A) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(A, Eigen::EigenvaluesOnly);
    VectorXd v = es.eigenvalues().reverse();
    return v;
}

// Top `count` eigenvalues, padding with zeros when the matrix is smaller.
inline VectorXd top(const VectorXd &desc, Eigen::Index count) {
    VectorXd out = VectorXd::Zero(count);
    out.head(std::min(count, desc.size())) = desc.head(std::min(count, desc.size()));
    return out;
}

inline double max_abs(const MatrixXd &A) { return A.cwiseAbs().maxCoeff(); }

// Monte-Carlo estimate of E[phi(x1) phi(x2)] for a bivariate normal.
template <class Phi>
double mc_iphi(Phi phi, double a, double b, long samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const double r = b / a, s = std::sqrt(a), c = std::sqrt(std::max(0.0, 1.0 - r * r));
    double acc = 0.0;
    for (long i = 0; i < samples; ++i) {
        const double z1 = z(rng), z2 = z(rng);
        acc += phi(s * z1) * phi(s * (r * z1 + c * z2));
    }
    return acc / static_cast<double>(samples);
}

// E f(Z) by composite Simpson on [-12, split] and [split, 12], so that a
// kink of f at `split` sits on a grid edge.
template <class F>
double normal_expect_split(F f, double split, int intervals = 20000) {
    auto simpson = [&](double lo, double hi) {
        if (hi <= lo) return 0.0;
        const double h = (hi - lo) / intervals;
        auto g = [&](double z) { return f(z) * std::exp(-0.5 * z * z) * 0.3989422804014327; };
        double acc = g(lo) + g(hi);
        for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * g(lo + i * h);
        return acc * h / 3.0;
    };
    split = std::clamp(split, -12.0, 12.0);
    return simpson(-12.0, split) + simpson(split, 12.0);
}

}  // namespace oracle
