#pragma once

// Tiny random instances and their duals formed from explicit Jacobians.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "fimspec/spectra.hpp"
#include "support.hpp"

namespace oracle {

using fimspec::Activation;
using fimspec::GramKind;
using fimspec::GramTag;
using fimspec::NetworkConfig;
using fimspec::NetworkInstance;
using fimspec::Parameterization;
using fimspec::SignalPack;

inline NetworkConfig make(int L, Activation act, double w, double b, int M, int C) {
    NetworkConfig c;
    c.depth = L;
    c.width = M;
    c.outputs = C;
    c.sigma_w2 = w;
    c.sigma_b2 = b;
    c.activations = {act};
    return c;
}

struct Tiny {
    NetworkConfig cfg;
    NetworkInstance net;
    MatrixXd x;
    SignalPack pack;
    oracle::Net o;
};

inline Tiny tiny(int seed, Parameterization p = Parameterization::Standard) {
    std::mt19937_64 rng(seed);
    const int L = 2 + seed % 2, M = 3 + seed % 6, C = 1 + seed % 3, N = 1 + (seed / 3) % 4;
    const Activation acts[] = {Activation::tanh(), Activation::erf(), Activation::relu(), Activation::leaky_relu()};
    NetworkConfig cfg = make(L, acts[seed % 4], 1.0 + 0.3 * (seed % 5), 0.05 + 0.1 * (seed % 3), M, C);
    if (seed % 5 == 0) {
        cfg.width_ratios.assign(L, 1.0);
        cfg.width_ratios[0] = 4.0 / M;
    }
    auto net = NetworkInstance::sample(cfg, p, 100 + seed);
    auto x = fimspec::sample_inputs(N, cfg.input_dim(), 200 + seed);
    auto pack = fimspec::propagate(net, x);
    auto o = oracle::from_instance(net);
    return {cfg, net, x, pack, o};
}

inline std::vector<double> ntk_wscale(const Tiny &t) {
    std::vector<double> s;
    for (int l = 1; l <= t.cfg.depth; ++l) s.push_back(std::sqrt(t.cfg.sigma_w2 / t.cfg.layer_width(l - 1)));
    return s;
}

// Block-diagonal Q^{1/2} in the k * N + n ordering, Q_n = diag(g_n) - g_n g_n^T.
// Each root is formed by Denman-Beavers iteration on Q_n + 1 1^T / C (which
// commutes with Q_n and has the ones vector as a unit eigenvector).
inline MatrixXd q_sqrt(const MatrixXd &g) {
    const int C = static_cast<int>(g.rows()), N = static_cast<int>(g.cols());
    MatrixXd R = MatrixXd::Zero(C * N, C * N);
    for (int n = 0; n < N; ++n) {
        MatrixXd Q = -g.col(n) * g.col(n).transpose();
        Q.diagonal() += g.col(n);
        const MatrixXd J = MatrixXd::Constant(C, C, 1.0 / C);
        MatrixXd Y = Q + J, Z = MatrixXd::Identity(C, C);
        for (int it = 0; it < 100; ++it) {
            const MatrixXd Yn = 0.5 * (Y + Z.inverse());
            Z = 0.5 * (Z + Y.inverse());
            const double change = (Yn - Y).cwiseAbs().maxCoeff();
            Y = Yn;
            if (change < 1e-15) break;
        }
        const MatrixXd r = Y - J;
        for (int k = 0; k < C; ++k)
            for (int kk = 0; kk < C; ++kk) R(k * N + n, kk * N + n) = r(k, kk);
    }
    return R;
}

// Expected dual for every kind, from the explicit Jacobians.
inline MatrixXd brute_dual(const GramKind &kind, const Tiny &t) {
    const int N = static_cast<int>(t.x.cols()), C = t.cfg.outputs, L = t.cfg.depth;
    switch (kind.tag) {
    case GramTag::FimMse: {
        const MatrixXd J = oracle::param_jacobian(t.o, t.x);
        return J.transpose() * J / N;
    }
    case GramTag::FimMseBlock: {
        const MatrixXd J = oracle::param_jacobian(t.o, t.x, kind.layer);
        return J.transpose() * J / N;
    }
    case GramTag::FimMseMeanSub: {
        const MatrixXd J = oracle::center_columns(oracle::param_jacobian(t.o, t.x), C, N);
        return J.transpose() * J / N;
    }
    case GramTag::Ntk:
    case GramTag::NtkMeanSub: {
        MatrixXd J = oracle::param_jacobian(t.o, t.x, 0, ntk_wscale(t), std::sqrt(t.cfg.sigma_b2));
        if (kind.tag == GramTag::NtkMeanSub) J = oracle::center_columns(J, C, N);
        return J.transpose() * J;
    }
    case GramTag::MetricA:
    case GramTag::MetricABlock: {
        MatrixXd A = MatrixXd::Zero(C * N, C * N);
        for (int l = 0; l < L; ++l) {
            if (kind.tag == GramTag::MetricABlock && l != kind.layer) continue;
            const MatrixXd J = oracle::state_jacobian(t.o, t.x, l);
            A += J.transpose() * J / N;
        }
        const int k = kind.tag == GramTag::MetricABlock ? std::max(kind.output, 0) : kind.output;
        if (k < 0) return A;
        return A.block(k * N, k * N, N, N);
    }
    case GramTag::FimCross:
    case GramTag::FimCrossBlock: {
        const MatrixXd J = oracle::param_jacobian(t.o, t.x, kind.tag == GramTag::FimCrossBlock ? kind.layer : 0);
        const MatrixXd R = q_sqrt(t.pack.g);
        return R * (J.transpose() * J / N) * R;
    }
    }
    throw std::logic_error("no brute-force dual for this kind");
}


}  // namespace oracle
