#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "fimspec/gauss.hpp"

namespace fimspec {

enum class ActivationTag { Tanh, ReLU, LeakyReLU, Identity, Erf, Custom };

struct ClosedFormMoments {
    double i_phi;        // I_phi[a, b]
    double i_phi_deriv;  // I_phi'[a, b]
    double m1sq;         // (E phi(sqrt(a) u))^2
};

class Activation {
public:
    Activation() : Activation(ActivationTag::Tanh) {}

    static Activation tanh() { return Activation(ActivationTag::Tanh); }
    static Activation relu() { return Activation(ActivationTag::ReLU); }
    static Activation leaky_relu(double slope = 0.2);
    static Activation identity() { return Activation(ActivationTag::Identity); }
    static Activation erf() { return Activation(ActivationTag::Erf); }
    // User closure. `gaussian_mean_nonzero` declares whether E phi(u) != 0.
    static Activation custom(std::string name, std::function<double(double)> f,
                             std::function<double(double)> df, bool gaussian_mean_nonzero);

    // "tanh", "relu", "leaky_relu" or "leaky_relu:SLOPE", "identity", "erf".
    static Activation parse(const std::string &tag);

    [[nodiscard]] ActivationTag tag() const { return tag_; }
    [[nodiscard]] double slope() const { return slope_; }
    [[nodiscard]] std::string name() const;

    [[nodiscard]] double eval(double x) const;
    // Weak derivative. ReLU'(0) = 0, LeakyReLU'(0) = slope.
    [[nodiscard]] double deriv(double x) const;

    [[nodiscard]] bool has_nonzero_gaussian_mean() const;

    // Returns nothing when no closed form is known. Throws DomainError for a < 0.
    [[nodiscard]] std::optional<ClosedFormMoments> closed_form_moments(double a, double b) const;

    // E[phi(mu + sigma Z)] and E[phi'(mu + sigma Z)] when known in closed form.
    [[nodiscard]] std::optional<gauss::GaussianSmoother> value_smoother() const;
    [[nodiscard]] std::optional<gauss::GaussianSmoother> deriv_smoother() const;

    [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd &u) const;
    [[nodiscard]] Eigen::MatrixXd apply_deriv(const Eigen::MatrixXd &u) const;

private:
    explicit Activation(ActivationTag tag, double slope = 0.0) : tag_(tag), slope_(slope) {}

    ActivationTag tag_;
    double slope_;
    std::string custom_name_;
    std::function<double(double)> f_, df_;
    bool custom_mean_nonzero_ = false;
};

}  // namespace fimspec
