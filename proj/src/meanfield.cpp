#include "fimspec/meanfield.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fimspec/errors.hpp"

namespace fimspec {

double NetworkConfig::alpha(int l) const {
    if (l < 0 || l >= depth) throw DomainError("width ratio index out of range");
    if (width_ratios.empty()) return 1.0;
    return width_ratios.at(static_cast<std::size_t>(l));
}

int NetworkConfig::layer_width(int l) const {
    if (l == depth) return outputs;
    return static_cast<int>(std::lround(alpha(l) * width));
}

const Activation &NetworkConfig::activation(int l) const {
    if (l < 1 || l >= depth) throw DomainError("activation index out of range");
    if (activations.empty()) throw DomainError("no activation configured");
    if (activations.size() == 1) return activations.front();
    return activations.at(static_cast<std::size_t>(l - 1));
}

void NetworkConfig::validate() const {
    if (depth < 2) throw DomainError("depth must be at least 2");
    if (width < 1) throw DomainError("width must be positive");
    if (outputs < 1) throw DomainError("outputs must be positive");
    if (!(sigma_w2 > 0.0) || !std::isfinite(sigma_w2)) throw DomainError("sigma_w2 must be positive");
    if (!(sigma_b2 >= 0.0) || !std::isfinite(sigma_b2)) throw DomainError("sigma_b2 must be nonnegative");
    if (!width_ratios.empty() && static_cast<int>(width_ratios.size()) != depth)
        throw DomainError("width_ratios needs exactly L entries");
    for (double a : width_ratios)
        if (!(a > 0.0)) throw DomainError("width ratios must be positive");
    for (int l = 0; l < depth; ++l)
        if (layer_width(l) < 1) throw DomainError("layer width rounds to zero");
    if (activations.empty()) throw DomainError("no activation configured");
    if (activations.size() != 1 && static_cast<int>(activations.size()) != depth - 1)
        throw DomainError("activations needs 1 or L-1 entries");
}

bool NetworkConfig::non_centered() const {
    if (sigma_b2 > 0.0) return true;
    for (int l = 1; l < depth; ++l)
        if (!activation(l).has_nonzero_gaussian_mean()) return false;
    return true;
}

long long NetworkConfig::parameter_count() const {
    long long p = 0;
    for (int l = 1; l <= depth; ++l) {
        const long long m = layer_width(l), mp = layer_width(l - 1);
        p += m * mp + m;
    }
    return p;
}

double ActivationMoments::sq(double a) const {
    if (opts.method != MomentMethod::PlainQuadrature && opts.method != MomentMethod::Quadrature) {
        if (auto cf = act.closed_form_moments(a, a)) return cf->i_phi;
        if (opts.method == MomentMethod::ClosedForm) throw DomainError("no closed form for " + act.name());
    }
    const double s = std::sqrt(a);
    return gauss::gauss1d([&](double u) {
        const double v = act.eval(s * u);
        return v * v;
    }, opts.quadrature());
}

double ActivationMoments::dsq(double a) const {
    if (opts.method != MomentMethod::PlainQuadrature && opts.method != MomentMethod::Quadrature) {
        if (auto cf = act.closed_form_moments(a, a)) return cf->i_phi_deriv;
        if (opts.method == MomentMethod::ClosedForm) throw DomainError("no closed form for " + act.name());
    }
    const double s = std::sqrt(a);
    return gauss::gauss1d([&](double u) {
        const double v = act.deriv(s * u);
        return v * v;
    }, opts.quadrature());
}

double ActivationMoments::iphi(double a, double b) const {
    switch (opts.method) {
    case MomentMethod::Auto:
        if (auto cf = act.closed_form_moments(a, b)) return cf->i_phi;
        [[fallthrough]];
    case MomentMethod::Quadrature:
        if (auto sm = act.value_smoother()) return gauss::gauss2d_iphi_smoothed(*sm, a, b);
        break;
    case MomentMethod::ClosedForm:
        if (auto cf = act.closed_form_moments(a, b)) return cf->i_phi;
        throw DomainError("no closed form for " + act.name());
    case MomentMethod::PlainQuadrature: break;
    }
    return gauss::gauss2d_iphi([&](double x) { return act.eval(x); }, a, b, opts.quadrature());
}

double ActivationMoments::idphi(double a, double b) const {
    switch (opts.method) {
    case MomentMethod::Auto:
        if (auto cf = act.closed_form_moments(a, b)) return cf->i_phi_deriv;
        [[fallthrough]];
    case MomentMethod::Quadrature:
        if (auto sm = act.deriv_smoother()) return gauss::gauss2d_iphi_smoothed(*sm, a, b);
        break;
    case MomentMethod::ClosedForm:
        if (auto cf = act.closed_form_moments(a, b)) return cf->i_phi_deriv;
        throw DomainError("no closed form for " + act.name());
    case MomentMethod::PlainQuadrature: break;
    }
    return gauss::gauss2d_iphi([&](double x) { return act.deriv(x); }, a, b, opts.quadrature());
}

namespace {

void check_finite(double v, const char *what, int layer) {
    if (!std::isfinite(v))
        throw NumericalError(std::string("non-finite ") + what + " at layer " + std::to_string(layer));
}

}  // namespace

void forward_recursion(const NetworkConfig &cfg, OrderParams &op, const MeanFieldOptions &opts) {
    cfg.validate();
    const int L = cfg.depth;
    op.depth = L;
    op.qhat1.assign(L, 0.0);
    op.qhat2.assign(L, 0.0);
    op.q1.assign(L + 1, std::numeric_limits<double>::quiet_NaN());
    op.q2.assign(L + 1, std::numeric_limits<double>::quiet_NaN());
    op.qhat1[0] = 1.0;
    op.qhat2[0] = 0.0;
    for (int l = 1; l <= L; ++l) {
        op.q1[l] = cfg.sigma_w2 * op.qhat1[l - 1] + cfg.sigma_b2;
        op.q2[l] = cfg.sigma_w2 * op.qhat2[l - 1] + cfg.sigma_b2;
        check_finite(op.q1[l], "q1", l);
        check_finite(op.q2[l], "q2", l);
        if (l == L) break;
        ActivationMoments m{cfg.activation(l), opts};
        op.qhat1[l] = m.sq(op.q1[l]);
        op.qhat2[l] = m.iphi(op.q1[l], op.q2[l]);
        check_finite(op.qhat1[l], "qhat1", l);
        check_finite(op.qhat2[l], "qhat2", l);
    }
}

void backward_recursion(const NetworkConfig &cfg, OrderParams &op, const MeanFieldOptions &opts) {
    const int L = cfg.depth;
    if (static_cast<int>(op.q1.size()) != L + 1) throw DomainError("forward recursion missing");
    op.qtil1.assign(L + 1, std::numeric_limits<double>::quiet_NaN());
    op.qtil2.assign(L + 1, std::numeric_limits<double>::quiet_NaN());
    op.qtil1[L] = 1.0;
    op.qtil2[L] = 1.0;
    for (int l = L - 1; l >= 1; --l) {
        ActivationMoments m{cfg.activation(l), opts};
        op.qtil1[l] = cfg.sigma_w2 * op.qtil1[l + 1] * m.dsq(op.q1[l]);
        op.qtil2[l] = cfg.sigma_w2 * op.qtil2[l + 1] * m.idphi(op.q1[l], op.q2[l]);
        check_finite(op.qtil1[l], "qtil1", l);
        check_finite(op.qtil2[l], "qtil2", l);
    }
}

void kappas(const NetworkConfig &cfg, OrderParams &op) {
    const int L = cfg.depth;
    op.alpha = 0.0;
    for (int l = 1; l <= L - 1; ++l) op.alpha += cfg.alpha(l) * cfg.alpha(l - 1);
    op.alphat = 0.0;
    for (int l = 0; l <= L - 1; ++l) op.alphat += cfg.alpha(l);

    double k1 = 0, k2 = 0, k1p = 0, k2p = 0, kt1 = 0, kt2 = 0;
    for (int l = 1; l <= L; ++l) {
        const double a = cfg.alpha(l - 1);
        k1 += a * op.qtil1[l] * op.qhat1[l - 1];
        k2 += a * op.qtil2[l] * op.qhat2[l - 1];
        k1p += cfg.sigma_w2 * op.qtil1[l] * op.qhat1[l - 1] + cfg.sigma_b2 * op.qtil1[l];
        k2p += cfg.sigma_w2 * op.qtil2[l] * op.qhat2[l - 1] + cfg.sigma_b2 * op.qtil2[l];
        kt1 += op.qtil1[l];
        kt2 += op.qtil2[l];
    }
    op.kappa1 = k1 / op.alpha;
    op.kappa2 = k2 / op.alpha;
    op.kappa1p = k1p / op.alpha;
    op.kappa2p = k2p / op.alpha;
    op.kappat1 = cfg.sigma_w2 * kt1 / op.alphat;
    op.kappat2 = cfg.sigma_w2 * kt2 / op.alphat;
}

OrderParams order_params(const NetworkConfig &cfg, const MeanFieldOptions &opts) {
    OrderParams op;
    forward_recursion(cfg, op, opts);
    backward_recursion(cfg, op, opts);
    kappas(cfg, op);
    return op;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string order_params_csv(const OrderParams &op) {
    std::ostringstream os;
    os << "layer,qhat1,qhat2,qtil1,qtil2\n";
    const int L = op.depth;
    for (int l = 0; l <= L; ++l) {
        os << l << ',';
        if (l < L) os << fmt(op.qhat1[l]) << ',' << fmt(op.qhat2[l]) << ',';
        else os << ",,";
        if (l >= 1) os << fmt(op.qtil1[l]) << ',' << fmt(op.qtil2[l]);
        else os << ',';
        os << '\n';
    }
    return os.str();
}

std::string kappas_csv(const OrderParams &op) {
    std::ostringstream os;
    os << "name,value\n";
    os << "alpha," << fmt(op.alpha) << '\n';
    os << "alphat," << fmt(op.alphat) << '\n';
    os << "kappa1," << fmt(op.kappa1) << '\n';
    os << "kappa2," << fmt(op.kappa2) << '\n';
    os << "kappa1p," << fmt(op.kappa1p) << '\n';
    os << "kappa2p," << fmt(op.kappa2p) << '\n';
    os << "kappat1," << fmt(op.kappat1) << '\n';
    os << "kappat2," << fmt(op.kappat2) << '\n';
    return os.str();
}

}  // namespace fimspec
