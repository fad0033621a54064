#include "fimspec/activations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fimspec/errors.hpp"

namespace fimspec {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kPi = std::numbers::pi;

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double relu_smooth(double mu, double sigma) {
    if (sigma <= 0.0) return mu > 0.0 ? mu : 0.0;
    const double z = mu / sigma;
    return mu * norm_cdf(z) + sigma * norm_pdf(z);
}

double step_smooth(double mu, double sigma) {
    if (sigma <= 0.0) return mu > 0.0 ? 1.0 : 0.0;
    return norm_cdf(mu / sigma);
}

// Arc-cosine kernel of degree 1 and 0.
void relu_moments(double a, double b, double &iphi, double &idphi) {
    if (a == 0.0) {
        iphi = 0.0;
        idphi = 0.0;
        return;
    }
    const double c = std::clamp(b / a, -1.0, 1.0);
    const double theta = std::acos(c);
    iphi = a / (2.0 * kPi) * (std::sin(theta) + (kPi - theta) * c);
    idphi = (kPi - theta) / (2.0 * kPi);
}

}  // namespace

Activation Activation::leaky_relu(double slope) {
    if (!std::isfinite(slope)) throw DomainError("leaky slope must be finite");
    return Activation(ActivationTag::LeakyReLU, slope);
}

Activation Activation::custom(std::string name, std::function<double(double)> f,
                              std::function<double(double)> df, bool gaussian_mean_nonzero) {
    if (!f || !df) throw DomainError("custom activation needs both phi and phi'");
    Activation a(ActivationTag::Custom);
    a.custom_name_ = std::move(name);
    a.f_ = std::move(f);
    a.df_ = std::move(df);
    a.custom_mean_nonzero_ = gaussian_mean_nonzero;
    return a;
}

Activation Activation::parse(const std::string &tag) {
    if (tag == "tanh") return tanh();
    if (tag == "relu") return relu();
    if (tag == "identity" || tag == "linear") return identity();
    if (tag == "erf") return erf();
    if (tag == "leaky_relu") return leaky_relu();
    const std::string prefix = "leaky_relu:";
    if (tag.rfind(prefix, 0) == 0) {
        const std::string rest = tag.substr(prefix.size());
        std::size_t pos = 0;
        double s = 0.0;
        try {
            s = std::stod(rest, &pos);
        } catch (const std::exception &) {
            throw DomainError("bad leaky slope in '" + tag + "'");
        }
        if (pos != rest.size()) throw DomainError("bad leaky slope in '" + tag + "'");
        return leaky_relu(s);
    }
    throw DomainError("unknown activation '" + tag + "'");
}

std::string Activation::name() const {
    switch (tag_) {
    case ActivationTag::Tanh: return "tanh";
    case ActivationTag::ReLU: return "relu";
    case ActivationTag::LeakyReLU: {
        std::ostringstream os;
        os << "leaky_relu:" << slope_;
        return os.str();
    }
    case ActivationTag::Identity: return "identity";
    case ActivationTag::Erf: return "erf";
    case ActivationTag::Custom: return custom_name_;
    }
    return "?";
}

double Activation::eval(double x) const {
    switch (tag_) {
    case ActivationTag::Tanh: return std::tanh(x);
    case ActivationTag::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationTag::LeakyReLU: return x > 0.0 ? x : slope_ * x;
    case ActivationTag::Identity: return x;
    case ActivationTag::Erf: return std::erf(x);
    case ActivationTag::Custom: return f_(x);
    }
    return 0.0;
}

double Activation::deriv(double x) const {
    switch (tag_) {
    case ActivationTag::Tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case ActivationTag::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActivationTag::LeakyReLU: return x > 0.0 ? 1.0 : slope_;
    case ActivationTag::Identity: return 1.0;
    case ActivationTag::Erf: return 2.0 / std::sqrt(kPi) * std::exp(-x * x);
    case ActivationTag::Custom: return df_(x);
    }
    return 0.0;
}

bool Activation::has_nonzero_gaussian_mean() const {
    switch (tag_) {
    case ActivationTag::ReLU: return true;
    case ActivationTag::LeakyReLU: return slope_ != 1.0;
    case ActivationTag::Custom: return custom_mean_nonzero_;
    default: return false;
    }
}

std::optional<ClosedFormMoments> Activation::closed_form_moments(double a, double b) const {
    if (!(a >= 0.0)) throw DomainError("closed_form_moments requires a >= 0");
    b = std::clamp(b, -a, a);
    switch (tag_) {
    case ActivationTag::Identity: return ClosedFormMoments{b, 1.0, 0.0};
    case ActivationTag::ReLU: {
        double i, di;
        relu_moments(a, b, i, di);
        return ClosedFormMoments{i, di, a / (2.0 * kPi)};
    }
    case ActivationTag::LeakyReLU: {
        // phi = s x + (1 - s) relu(x)
        const double s = slope_;
        double i, di;
        relu_moments(a, b, i, di);
        const double r = 1.0 - s;
        // E[x relu(y)] = b / 2 for jointly Gaussian centered x, y.
        const double iphi = s * s * b + 2.0 * s * r * 0.5 * b + r * r * i;
        const double idphi = s * s + 2.0 * s * r * 0.5 + r * r * di;
        return ClosedFormMoments{iphi, idphi, r * r * a / (2.0 * kPi)};
    }
    case ActivationTag::Erf: {
        const double d = 1.0 + 2.0 * a;
        const double iphi = 2.0 / kPi * std::asin(std::clamp(2.0 * b / d, -1.0, 1.0));
        const double disc = d * d - 4.0 * b * b;
        const double idphi = 4.0 / kPi / std::sqrt(disc);
        return ClosedFormMoments{iphi, idphi, 0.0};
    }
    default: return std::nullopt;
    }
}

std::optional<gauss::GaussianSmoother> Activation::value_smoother() const {
    switch (tag_) {
    case ActivationTag::ReLU: return gauss::GaussianSmoother(relu_smooth);
    case ActivationTag::LeakyReLU: {
        const double s = slope_;
        return gauss::GaussianSmoother([s](double mu, double sigma) {
            return s * mu + (1.0 - s) * relu_smooth(mu, sigma);
        });
    }
    case ActivationTag::Identity: return gauss::GaussianSmoother([](double mu, double) { return mu; });
    case ActivationTag::Erf:
        return gauss::GaussianSmoother([](double mu, double sigma) {
            return std::erf(mu / std::sqrt(1.0 + 2.0 * sigma * sigma));
        });
    default: return std::nullopt;
    }
}

std::optional<gauss::GaussianSmoother> Activation::deriv_smoother() const {
    switch (tag_) {
    case ActivationTag::ReLU: return gauss::GaussianSmoother(step_smooth);
    case ActivationTag::LeakyReLU: {
        const double s = slope_;
        return gauss::GaussianSmoother([s](double mu, double sigma) {
            return s + (1.0 - s) * step_smooth(mu, sigma);
        });
    }
    case ActivationTag::Identity: return gauss::GaussianSmoother([](double, double) { return 1.0; });
    case ActivationTag::Erf:
        return gauss::GaussianSmoother([](double mu, double sigma) {
            const double v = 1.0 + 2.0 * sigma * sigma;
            return 2.0 / std::sqrt(kPi) / std::sqrt(v) * std::exp(-mu * mu / v);
        });
    default: return std::nullopt;
    }
}

Eigen::MatrixXd Activation::apply(const Eigen::MatrixXd &u) const {
    switch (tag_) {
    case ActivationTag::Tanh: return u.array().tanh().matrix();
    case ActivationTag::ReLU: return u.cwiseMax(0.0);
    case ActivationTag::Identity: return u;
    default: return u.unaryExpr([this](double x) { return eval(x); });
    }
}

Eigen::MatrixXd Activation::apply_deriv(const Eigen::MatrixXd &u) const {
    switch (tag_) {
    case ActivationTag::Tanh: return (1.0 - u.array().tanh().square()).matrix();
    case ActivationTag::Identity: return Eigen::MatrixXd::Ones(u.rows(), u.cols());
    default: return u.unaryExpr([this](double x) { return deriv(x); });
    }
}

}  // namespace fimspec
