#include "fimspec/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "fimspec/errors.hpp"

namespace fimspec::gauss {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Orthonormal (probabilist's) Hermite recurrence; returns p_n(x), p_n'(x),
// and sum_{k<n} p_k(x)^2.
void hermite_eval(int n, double x, double &pn, double &dpn, double &sumsq) {
    double p0 = 1.0, p1 = x, d0 = 0.0, d1 = 1.0;
    sumsq = 1.0;
    if (n == 0) {
        pn = 1.0;
        dpn = 0.0;
        sumsq = 0.0;
        return;
    }
    for (int k = 1; k < n; ++k) {
        sumsq += p1 * p1;
        const double s = std::sqrt(static_cast<double>(k));
        const double s1 = std::sqrt(static_cast<double>(k + 1));
        const double p2 = (x * p1 - s * p0) / s1;
        const double d2 = (p1 + x * d1 - s * d0) / s1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    pn = p1;
    dpn = d1;
}

}  // namespace

QuadratureRule gauss_hermite_rule(int order) {
    if (order < 1) throw DomainError("quadrature order must be positive");
    const int n = order;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(std::max(n - 1, 0));
    for (int i = 0; i + 1 < n; ++i) sub(i) = std::sqrt(static_cast<double>(i + 1));

    std::vector<double> x(n);
    if (n == 1) {
        x[0] = 0.0;
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericalError("Golub-Welsch eigensolve failed");
        for (int i = 0; i < n; ++i) x[i] = es.eigenvalues()(i);
    }

    // Newton polish and exact symmetrization.
    for (int i = 0; i < n; ++i) {
        for (int it = 0; it < 3; ++it) {
            double pn, dpn, ss;
            hermite_eval(n, x[i], pn, dpn, ss);
            if (dpn == 0.0) break;
            x[i] -= pn / dpn;
        }
    }
    for (int i = 0; i < n / 2; ++i) {
        const double v = 0.5 * (x[n - 1 - i] - x[i]);
        x[i] = -v;
        x[n - 1 - i] = v;
    }
    if (n % 2 == 1) x[n / 2] = 0.0;

    QuadratureRule rule;
    rule.name = "hermite:" + std::to_string(n);
    rule.nodes = x;
    rule.weights.resize(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double pn, dpn, ss;
        hermite_eval(n, x[i], pn, dpn, ss);
        rule.weights[i] = 1.0 / ss;
    }
    for (int i = 0; i < n / 2; ++i) {
        const double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
        rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    for (double w : rule.weights) total += w;
    for (double &w : rule.weights) w /= total;
    return rule;
}

void gauss_legendre_nodes(int order, std::vector<double> &nodes, std::vector<double> &weights) {
    if (order < 1) throw DomainError("quadrature order must be positive");
    const int n = order;
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    if (n == 1) {
        weights[0] = 2.0;
        return;
    }
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) nodes[n / 2] = 0.0;
}

QuadratureRule composite_legendre_rule(int panels, int points_per_panel, double half_width) {
    if (panels < 1 || points_per_panel < 1 || !(half_width > 0.0))
        throw DomainError("invalid composite rule parameters");
    if (panels % 2 != 0) throw DomainError("panel count must be even so that 0 is a panel edge");
    std::vector<double> gx, gw;
    gauss_legendre_nodes(points_per_panel, gx, gw);
    const double h = 2.0 * half_width / panels;

    QuadratureRule rule;
    rule.name = "legendre:" + std::to_string(panels) + ":" + std::to_string(points_per_panel);
    rule.nodes.reserve(static_cast<std::size_t>(panels) * points_per_panel);
    rule.weights.reserve(rule.nodes.capacity());
    for (int p = 0; p < panels; ++p) {
        const double lo = -half_width + p * h;
        const double mid = lo + 0.5 * h;
        for (int i = 0; i < points_per_panel; ++i) {
            const double x = mid + 0.5 * h * gx[i];
            rule.nodes.push_back(x);
            rule.weights.push_back(0.5 * h * gw[i] * normal_pdf(x));
        }
    }
    // Mirror to make the node set exactly symmetric.
    const std::size_t n = rule.nodes.size();
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double v = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
        rule.nodes[i] = -v;
        rule.nodes[n - 1 - i] = v;
        const double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
        rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    double total = 0.0;
    for (double w : rule.weights) total += w;
    for (double &w : rule.weights) w /= total;
    rule.panel_width = h;
    rule.half_width = half_width;
    rule.panel_nodes = gx;
    rule.panel_weights = gw;
    return rule;
}

const QuadratureRule &default_rule() {
    static const QuadratureRule rule = composite_legendre_rule();
    return rule;
}

QuadratureRule parse_rule(const std::string &spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    auto to_int = [&](const std::string &s) {
        std::size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(s, &pos);
        } catch (const std::exception &) {
            throw DomainError("bad quadrature spec '" + spec + "'");
        }
        if (pos != s.size()) throw DomainError("bad quadrature spec '" + spec + "'");
        return v;
    };
    if (parts.size() == 2 && parts[0] == "hermite") return gauss_hermite_rule(to_int(parts[1]));
    if (parts.size() == 2 && parts[0] == "legendre") return composite_legendre_rule(to_int(parts[1]));
    if (parts.size() == 3 && parts[0] == "legendre")
        return composite_legendre_rule(to_int(parts[1]), to_int(parts[2]));
    if (parts.size() == 1 && parts[0] == "default") return default_rule();
    throw DomainError("bad quadrature spec '" + spec + "'");
}

double gauss1d(const Fn &f, const QuadratureRule &rule) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double v = f(rule.nodes[i]);
        if (!std::isfinite(v)) throw NumericalError("non-finite integrand", rule.nodes[i]);
        acc += rule.weights[i] * v;
    }
    return acc;
}

namespace {

// E[phi(m + s X)] on the rule's grid. Composite grids are shifted by less than
// half a panel so that m + s x = 0 lies on a panel edge.
double inner_expectation(const Fn &phi, double m, double s, const QuadratureRule &rule) {
    const auto &x = rule.nodes;
    const auto &w = rule.weights;
    double acc = 0.0;
    const double h = rule.panel_width;
    double delta = 0.0;
    if (h > 0.0 && s > 0.0) {
        const double kink = -m / s;
        delta = kink - h * std::round(kink / h);
    }
    if (delta == 0.0) {
        for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * phi(m + s * x[i]);
        return acc;
    }
    const int panels = static_cast<int>(std::lround(2.0 * rule.half_width / h));
    const auto &gx = rule.panel_nodes;
    const auto &gw = rule.panel_weights;
    for (int p = 0; p < panels; ++p) {
        const double mid = -rule.half_width + delta + (p + 0.5) * h;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double u = mid + 0.5 * h * gx[i];
            acc += 0.5 * h * gw[i] * normal_pdf(u) * phi(m + s * u);
        }
    }
    return acc;
}

}  // namespace

double gauss2d_iphi(const Fn &phi, double a, double b, const QuadratureRule &rule) {
    if (!(a >= 0.0)) throw DomainError("I_phi requires a >= 0");
    if (!std::isfinite(a) || !std::isfinite(b)) throw NumericalError("non-finite I_phi arguments");
    if (a == 0.0) {
        const double v = phi(0.0);
        return v * v;
    }
    b = std::clamp(b, -a, a);
    const auto &x = rule.nodes;
    const auto &w = rule.weights;
    const std::size_t n = x.size();
    double acc = 0.0;
    if (b >= 0.0) {
        const double s = std::sqrt(a - b);
        const double t = std::sqrt(b);
        for (std::size_t j = 0; j < n; ++j) {
            const double inner = inner_expectation(phi, t * x[j], s, rule);
            acc += w[j] * inner * inner;
        }
    } else {
        const double c = b / a;
        const double sa = std::sqrt(a);
        const double r = std::sqrt(std::max(0.0, 1.0 - c * c));
        for (std::size_t i = 0; i < n; ++i) {
            const double p1 = phi(sa * x[i]);
            acc += w[i] * p1 * inner_expectation(phi, sa * c * x[i], sa * r, rule);
        }
    }
    if (!std::isfinite(acc)) throw NumericalError("non-finite I_phi");
    return acc;
}

double graded_integral(const Fn &h, double eps) {
    static const auto gl = [] {
        std::pair<std::vector<double>, std::vector<double>> r;
        gauss_legendre_nodes(16, r.first, r.second);
        return r;
    }();
    std::vector<double> pos;
    if (eps > 1e-14 && eps < 0.5) {
        for (double e = eps; e < 0.5; e *= 2.0) pos.push_back(e);
    }
    for (int k = 1; k <= 20; ++k) pos.push_back(0.5 * k);
    std::vector<double> edges;
    edges.reserve(2 * pos.size() + 1);
    for (auto it = pos.rbegin(); it != pos.rend(); ++it) edges.push_back(-*it);
    edges.push_back(0.0);
    for (double p : pos) edges.push_back(p);

    double acc = 0.0;
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
        const double lo = edges[s], hi = edges[s + 1];
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (std::size_t i = 0; i < gl.first.size(); ++i) {
            const double y = mid + half * gl.first[i];
            const double v = h(y);
            if (!std::isfinite(v)) throw NumericalError("non-finite integrand", y);
            acc += half * gl.second[i] * normal_pdf(y) * v;
        }
    }
    return acc;
}

double gauss2d_iphi_smoothed(const GaussianSmoother &smoother, double a, double b) {
    if (!(a >= 0.0)) throw DomainError("I_phi requires a >= 0");
    if (!std::isfinite(a) || !std::isfinite(b)) throw NumericalError("non-finite I_phi arguments");
    b = std::clamp(b, -a, a);
    const double t = std::sqrt(std::abs(b));
    const double s = std::sqrt(std::max(0.0, a - std::abs(b)));
    if (t == 0.0) {
        const double g = smoother(0.0, s);
        return g * g;
    }
    const double eps = s / t;
    double r;
    if (b >= 0.0) {
        r = graded_integral([&](double y) {
            const double g = smoother(t * y, s);
            return g * g;
        }, eps);
    } else {
        r = graded_integral([&](double y) { return smoother(t * y, s) * smoother(-t * y, s); }, eps);
    }
    if (!std::isfinite(r)) throw NumericalError("non-finite I_phi");
    return r;
}

}  // namespace fimspec::gauss
