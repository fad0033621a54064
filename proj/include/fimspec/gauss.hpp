#pragma once

#include <functional>
#include <string>
#include <vector>

namespace fimspec::gauss {

// Nodes and weights for integrals against the standard normal density,
// normalized so that the weights sum to one.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::string name;
    // Composite rules only: panel width and the per-panel Legendre rule on
    // [-1, 1]. Empty for Hermite.
    double panel_width = 0.0;
    double half_width = 0.0;
    std::vector<double> panel_nodes;
    std::vector<double> panel_weights;

    [[nodiscard]] int order() const { return static_cast<int>(nodes.size()); }
};

// Gauss-Hermite rule for the probabilist's weight exp(-x^2/2)/sqrt(2 pi).
QuadratureRule gauss_hermite_rule(int order = 101);

// Plain Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre_nodes(int order, std::vector<double> &nodes, std::vector<double> &weights);

// Composite Gauss-Legendre on [-half_width, half_width] with weights
// multiplied by the normal density. Panel edges include 0, so integrands
// with a kink at the origin are integrated to machine precision.
QuadratureRule composite_legendre_rule(int panels = 80, int points_per_panel = 16, double half_width = 10.0);

// Rule used when none is given explicitly.
const QuadratureRule &default_rule();

// Parses "hermite:ORDER", "legendre:PANELS" or "legendre:PANELS:POINTS".
QuadratureRule parse_rule(const std::string &spec);

using Fn = std::function<double(double)>;

// sum_i w_i f(x_i)
double gauss1d(const Fn &f, const QuadratureRule &rule = default_rule());

// I_phi[a, b] = E[phi(x1) phi(x2)] with Var x_i = a, Cov(x1, x2) = b.
// With a composite rule the inner grid is shifted so that a panel edge falls
// where the pre-activation crosses zero.
double gauss2d_iphi(const Fn &phi, double a, double b, const QuadratureRule &rule = default_rule());

// E[phi(mu + sigma Z)] for Z ~ N(0, 1), known in closed form.
using GaussianSmoother = std::function<double(double mu, double sigma)>;

// I_phi[a, b] with the inner expectation done by `smoother`. The outer
// integral uses a graded composite grid refined around the origin.
double gauss2d_iphi_smoothed(const GaussianSmoother &smoother, double a, double b);

// Outer helper: integral of h(y) against Du on the graded grid for a kink
// of width `eps` around y = 0.
double graded_integral(const Fn &h, double eps);

}  // namespace fimspec::gauss
