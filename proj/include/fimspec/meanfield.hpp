#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fimspec/activations.hpp"
#include "fimspec/gauss.hpp"

namespace fimspec {

// Fully connected network of depth L: widths M_l = alpha_l * M for
// l = 0..L-1 (M_0 is the input dimension) and M_L = C linear outputs.
struct NetworkConfig {
    int depth = 3;
    int width = 1000;
    std::vector<double> width_ratios;     // alpha_0..alpha_{L-1}; empty means all ones
    int outputs = 10;
    double sigma_w2 = 1.0;
    double sigma_b2 = 0.0;
    std::vector<Activation> activations;  // hidden layers 1..L-1; a single entry is broadcast

    [[nodiscard]] double alpha(int l) const;
    [[nodiscard]] int layer_width(int l) const;
    [[nodiscard]] int input_dim() const { return layer_width(0); }
    // Activation of hidden layer l (1 <= l <= L-1).
    [[nodiscard]] const Activation &activation(int l) const;
    // Throws DomainError when the configuration is unusable.
    void validate() const;
    // sigma_b2 > 0 or every activation has nonzero Gaussian mean.
    [[nodiscard]] bool non_centered() const;
    [[nodiscard]] long long parameter_count() const;
};

enum class MomentMethod {
    Auto,            // closed form when known, then smoothed quadrature, then plain quadrature
    ClosedForm,      // closed form or error
    Quadrature,      // smoothed quadrature when a smoother exists, plain otherwise
    PlainQuadrature  // always the nested rule on phi itself
};

struct MeanFieldOptions {
    MomentMethod method = MomentMethod::Auto;
    std::optional<gauss::QuadratureRule> rule;

    [[nodiscard]] const gauss::QuadratureRule &quadrature() const {
        return rule ? *rule : gauss::default_rule();
    }
};

struct OrderParams {
    int depth = 0;
    std::vector<double> qhat1, qhat2;  // index 0..L-1
    std::vector<double> q1, q2;        // pre-activation variances, index 1..L (0 unused)
    std::vector<double> qtil1, qtil2;  // index 1..L (0 unused)
    double kappa1 = 0, kappa2 = 0;
    double kappa1p = 0, kappa2p = 0;
    double kappat1 = 0, kappat2 = 0;
    double alpha = 0, alphat = 0;
};

// Gaussian moments of one activation, dispatched by MomentMethod.
struct ActivationMoments {
    const Activation &act;
    const MeanFieldOptions &opts;

    [[nodiscard]] double sq(double a) const;            // int Du phi(sqrt(a) u)^2
    [[nodiscard]] double dsq(double a) const;           // int Du phi'(sqrt(a) u)^2
    [[nodiscard]] double iphi(double a, double b) const;
    [[nodiscard]] double idphi(double a, double b) const;
};

void forward_recursion(const NetworkConfig &cfg, OrderParams &op, const MeanFieldOptions &opts = {});
void backward_recursion(const NetworkConfig &cfg, OrderParams &op, const MeanFieldOptions &opts = {});
void kappas(const NetworkConfig &cfg, OrderParams &op);

OrderParams order_params(const NetworkConfig &cfg, const MeanFieldOptions &opts = {});

// Columns layer, qhat1, qhat2, qtil1, qtil2; undefined cells are empty.
std::string order_params_csv(const OrderParams &op);
std::string kappas_csv(const OrderParams &op);

}  // namespace fimspec
