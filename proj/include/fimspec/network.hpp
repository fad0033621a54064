#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fimspec/meanfield.hpp"

namespace fimspec {

enum class Parameterization { Standard, Ntk };

const char *parameterization_name(Parameterization p);
Parameterization parse_parameterization(const std::string &s);

// Weights are always stored in their effective form W^l; under the NTK
// parameterization W^l = sigma_w / sqrt(M_{l-1}) * omega^l and
// b^l = sigma_b * beta^l, which only changes the gradient scales.
class NetworkInstance {
public:
    static NetworkInstance sample(const NetworkConfig &cfg, Parameterization p, std::uint64_t seed);

    NetworkInstance(NetworkConfig cfg, Parameterization p, std::vector<Eigen::MatrixXd> weights,
                    std::vector<Eigen::VectorXd> biases, std::uint64_t seed = 0);

    [[nodiscard]] const NetworkConfig &config() const { return cfg_; }
    [[nodiscard]] Parameterization parameterization() const { return param_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] int depth() const { return cfg_.depth; }

    // 1 <= l <= L
    [[nodiscard]] const Eigen::MatrixXd &weight(int l) const { return W_.at(l - 1); }
    [[nodiscard]] const Eigen::VectorXd &bias(int l) const { return b_.at(l - 1); }
    Eigen::MatrixXd &weight(int l) { return W_.at(l - 1); }
    Eigen::VectorXd &bias(int l) { return b_.at(l - 1); }

    // d/d(omega) = weight_grad_scale * d/dW; 1 for Standard.
    [[nodiscard]] double weight_grad_scale(int l) const;
    [[nodiscard]] double bias_grad_scale() const;

private:
    NetworkConfig cfg_;
    Parameterization param_;
    std::vector<Eigen::MatrixXd> W_;
    std::vector<Eigen::VectorXd> b_;
    std::uint64_t seed_;
};

// Per-sample signals. Column n of x/pre/act/f/g is sample n. delta[l] holds
// d f_k(n) / d u^l(n) in column k * N + n.
struct SignalPack {
    Eigen::MatrixXd x;
    std::vector<Eigen::MatrixXd> pre;    // index 1..L (0 unused)
    std::vector<Eigen::MatrixXd> act;    // index 0..L-1, act[0] = x
    std::vector<Eigen::MatrixXd> delta;  // index 1..L (0 unused)
    Eigen::MatrixXd f;
    Eigen::MatrixXd g;

    [[nodiscard]] int samples() const { return static_cast<int>(x.cols()); }
    [[nodiscard]] int outputs() const { return static_cast<int>(f.rows()); }
    [[nodiscard]] bool has_backward() const { return !delta.empty(); }
};

struct ParamGradients {
    std::vector<Eigen::MatrixXd> dW;  // index 0..L-1 for layers 1..L
    std::vector<Eigen::VectorXd> db;
};

Eigen::MatrixXd sample_inputs(int n_samples, int dim, std::uint64_t seed);

Eigen::MatrixXd softmax(const Eigen::MatrixXd &f);

SignalPack forward(const NetworkInstance &net, const Eigen::MatrixXd &x);
void backward(const NetworkInstance &net, SignalPack &pack);
SignalPack propagate(const NetworkInstance &net, const Eigen::MatrixXd &x);

// Gradients of sum_n G(:, n) . f(n) with respect to the effective W, b.
ParamGradients loss_gradients(const NetworkInstance &net, const SignalPack &pack, const Eigen::MatrixXd &G);

}  // namespace fimspec
