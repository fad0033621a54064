#include "fimspec/network.hpp"

#include <cmath>

#include "fimspec/errors.hpp"
#include "fimspec/rng.hpp"

namespace fimspec {

const char *parameterization_name(Parameterization p) {
    return p == Parameterization::Standard ? "standard" : "ntk";
}

Parameterization parse_parameterization(const std::string &s) {
    if (s == "standard") return Parameterization::Standard;
    if (s == "ntk") return Parameterization::Ntk;
    throw DomainError("unknown parameterization '" + s + "'");
}

NetworkInstance NetworkInstance::sample(const NetworkConfig &cfg, Parameterization p, std::uint64_t seed) {
    cfg.validate();
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;
    const double sb = std::sqrt(cfg.sigma_b2);
    for (int l = 1; l <= cfg.depth; ++l) {
        const int m = cfg.layer_width(l), mp = cfg.layer_width(l - 1);
        NormalStream ws(derive_seed(seed, {kStreamWeight, static_cast<std::uint64_t>(l)}));
        NormalStream bs(derive_seed(seed, {kStreamBias, static_cast<std::uint64_t>(l)}));
        W.push_back(ws.matrix(m, mp, std::sqrt(cfg.sigma_w2 / mp)));
        b.push_back(bs.vector(m, sb));
    }
    return NetworkInstance(cfg, p, std::move(W), std::move(b), seed);
}

NetworkInstance::NetworkInstance(NetworkConfig cfg, Parameterization p, std::vector<Eigen::MatrixXd> weights,
                                 std::vector<Eigen::VectorXd> biases, std::uint64_t seed)
    : cfg_(std::move(cfg)), param_(p), W_(std::move(weights)), b_(std::move(biases)), seed_(seed) {
    cfg_.validate();
    const int L = cfg_.depth;
    if (static_cast<int>(W_.size()) != L || static_cast<int>(b_.size()) != L)
        throw ShapeError("need exactly L weight matrices and bias vectors");
    for (int l = 1; l <= L; ++l) {
        const int m = cfg_.layer_width(l), mp = cfg_.layer_width(l - 1);
        if (W_[l - 1].rows() != m || W_[l - 1].cols() != mp)
            throw ShapeError("weight " + std::to_string(l) + " has wrong shape");
        if (b_[l - 1].size() != m) throw ShapeError("bias " + std::to_string(l) + " has wrong size");
    }
}

double NetworkInstance::weight_grad_scale(int l) const {
    if (param_ == Parameterization::Standard) return 1.0;
    return std::sqrt(cfg_.sigma_w2 / cfg_.layer_width(l - 1));
}

double NetworkInstance::bias_grad_scale() const {
    return param_ == Parameterization::Standard ? 1.0 : std::sqrt(cfg_.sigma_b2);
}

Eigen::MatrixXd sample_inputs(int n_samples, int dim, std::uint64_t seed) {
    if (n_samples < 1 || dim < 1) throw DomainError("sample_inputs needs positive sizes");
    NormalStream s(derive_seed(seed, {kStreamInput}));
    return s.matrix(dim, n_samples);
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd &f) {
    Eigen::MatrixXd g(f.rows(), f.cols());
    for (Eigen::Index n = 0; n < f.cols(); ++n) {
        const double mx = f.col(n).maxCoeff();
        g.col(n) = (f.col(n).array() - mx).exp().matrix();
        g.col(n) /= g.col(n).sum();
    }
    return g;
}

SignalPack forward(const NetworkInstance &net, const Eigen::MatrixXd &x) {
    const auto &cfg = net.config();
    const int L = cfg.depth;
    if (x.rows() != cfg.input_dim())
        throw ShapeError("input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(cfg.input_dim()));
    SignalPack p;
    p.x = x;
    p.pre.resize(L + 1);
    p.act.resize(L);
    p.act[0] = x;
    for (int l = 1; l <= L; ++l) {
        p.pre[l] = net.weight(l) * p.act[l - 1];
        p.pre[l].colwise() += net.bias(l);
        if (l < L) p.act[l] = cfg.activation(l).apply(p.pre[l]);
    }
    p.f = p.pre[L];
    p.g = softmax(p.f);
    return p;
}

void backward(const NetworkInstance &net, SignalPack &p) {
    const auto &cfg = net.config();
    const int L = cfg.depth, C = cfg.outputs, N = p.samples();
    if (static_cast<int>(p.pre.size()) != L + 1 || p.f.rows() != C) throw ShapeError("pack does not match network");
    p.delta.assign(L + 1, Eigen::MatrixXd());
    p.delta[L] = Eigen::MatrixXd::Zero(C, static_cast<Eigen::Index>(C) * N);
    for (int k = 0; k < C; ++k) p.delta[L].row(k).segment(static_cast<Eigen::Index>(k) * N, N).setOnes();
    for (int l = L - 1; l >= 1; --l) {
        const Eigen::MatrixXd dphi = cfg.activation(l).apply_deriv(p.pre[l]);
        p.delta[l].noalias() = net.weight(l + 1).transpose() * p.delta[l + 1];
        for (int k = 0; k < C; ++k) p.delta[l].middleCols(static_cast<Eigen::Index>(k) * N, N).array() *= dphi.array();
    }
}

SignalPack propagate(const NetworkInstance &net, const Eigen::MatrixXd &x) {
    SignalPack p = forward(net, x);
    backward(net, p);
    return p;
}

ParamGradients loss_gradients(const NetworkInstance &net, const SignalPack &p, const Eigen::MatrixXd &G) {
    const auto &cfg = net.config();
    const int L = cfg.depth;
    if (G.rows() != cfg.outputs || G.cols() != p.samples()) throw ShapeError("output gradient has wrong shape");
    ParamGradients out;
    out.dW.resize(L);
    out.db.resize(L);
    Eigen::MatrixXd d = G;
    for (int l = L; l >= 1; --l) {
        out.dW[l - 1].noalias() = d * p.act[l - 1].transpose();
        out.db[l - 1] = d.rowwise().sum();
        if (l > 1) {
            Eigen::MatrixXd up = net.weight(l).transpose() * d;
            d = up.cwiseProduct(cfg.activation(l - 1).apply_deriv(p.pre[l - 1]));
        }
    }
    return out;
}

}  // namespace fimspec
