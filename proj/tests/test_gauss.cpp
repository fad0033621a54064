#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fimspec/errors.hpp"
#include "fimspec/gauss.hpp"
#include "support.hpp"

using namespace fimspec;
using namespace fimspec::gauss;

namespace {

double relu(double x) { return x > 0 ? x : 0.0; }

void check_rule(const QuadratureRule &r) {
    double sw = 0.0, m2 = 0.0;
    for (int i = 0; i < r.order(); ++i) {
        CHECK(r.weights[i] > 0.0);
        sw += r.weights[i];
        m2 += r.weights[i] * r.nodes[i] * r.nodes[i];
        CHECK(std::abs(r.nodes[i] + r.nodes[r.order() - 1 - i]) < 1e-12);
    }
    CHECK(std::abs(sw - 1.0) < 1e-12);
    CHECK(std::abs(m2 - 1.0) < 1e-10);
}

}  // namespace

TEST_CASE("rule invariants") {
    check_rule(default_rule());
    check_rule(gauss_hermite_rule(101));
    check_rule(gauss_hermite_rule(20));
    check_rule(composite_legendre_rule(40, 8, 10.0));
    check_rule(parse_rule("hermite:61"));
    check_rule(parse_rule("legendre:20:10"));
    CHECK(parse_rule("legendre:20").order() == 20 * 16);
    CHECK_THROWS_AS(parse_rule("simpson:3"), DomainError);
    CHECK_THROWS_AS(parse_rule("hermite:x"), DomainError);
}

TEST_CASE("hermite rule integrates even moments exactly") {
    const auto r = gauss_hermite_rule(30);
    // E u^4 = 3, E u^6 = 15, E u^8 = 105
    CHECK(gauss1d([](double u) { return std::pow(u, 4); }, r) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(gauss1d([](double u) { return std::pow(u, 6); }, r) == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(gauss1d([](double u) { return std::pow(u, 8); }, r) == doctest::Approx(105.0).epsilon(1e-11));
    CHECK(gauss1d([](double u) { return std::pow(u, 5); }, r) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("gauss1d examples") {
    CHECK(gauss1d([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(gauss1d([](double u) { return u * u; }) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(gauss1d([](double u) { return relu(u) * relu(u); }) == doctest::Approx(0.5).epsilon(1e-10));
    // cosine has E cos(u) = exp(-1/2)
    CHECK(gauss1d([](double u) { return std::cos(u); }) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("gauss1d reports the offending node") {
    try {
        (void)gauss1d([](double u) { return u > 1.0 ? std::nan("") : u; });
        FAIL("expected NumericalError");
    } catch (const NumericalError &e) {
        CHECK(e.node() > 1.0);
    }
}

TEST_CASE("gauss2d_iphi examples") {
    auto id = [](double x) { return x; };
    CHECK(gauss2d_iphi(id, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-10));
    CHECK(gauss2d_iphi(id, 2.0, 2.0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(gauss2d_iphi(id, 2.0, -0.7) == doctest::Approx(-0.7).epsilon(1e-10));
    // (E max(0, z))^2 = 1 / (2 pi)
    const double expect = 1.0 / (2.0 * std::numbers::pi);
    CHECK(gauss2d_iphi(relu, 1.0, 0.0) == doctest::Approx(expect).epsilon(1e-10));
    const double mc = oracle::mc_iphi(relu, 1.0, 0.0, 10'000'000, 11);
    CHECK(std::abs(mc - expect) < 5e-4);  // the oracle agrees with the analytic value
    CHECK(std::abs(gauss2d_iphi(relu, 1.0, 0.0) - mc) < 5e-4);
}

TEST_CASE("gauss2d_iphi edge cases") {
    auto t = [](double x) { return std::tanh(x) + 0.3; };
    CHECK_THROWS_AS((void)gauss2d_iphi(t, -1.0, 0.0), DomainError);
    CHECK(gauss2d_iphi(t, 0.0, 0.0) == doctest::Approx(0.09).epsilon(1e-14));
    // |b| marginally above a is clamped
    CHECK(gauss2d_iphi(t, 1.0, 1.0 + 1e-12) == doctest::Approx(gauss2d_iphi(t, 1.0, 1.0)).epsilon(1e-12));
    CHECK_THROWS_AS((void)gauss2d_iphi([](double x) { return std::exp(x * x * x * x); }, 1.0, 0.5), NumericalError);
}

TEST_CASE("diagonal of iphi equals the 1d second moment") {
    auto t = [](double x) { return std::tanh(x); };
    for (double a : {0.1, 0.5, 1.0, 3.0, 10.0}) {
        const double one = gauss1d([&](double u) { return std::pow(std::tanh(std::sqrt(a) * u), 2); });
        CHECK(std::abs(gauss2d_iphi(t, a, a) - one) < 1e-8);
        const double r1 = gauss1d([&](double u) { return std::pow(relu(std::sqrt(a) * u), 2); });
        CHECK(std::abs(gauss2d_iphi(relu, a, a) - r1) < 1e-8);
    }
}

TEST_CASE("iphi is monotone in b for monotone phi") {
    auto t = [](double x) { return std::tanh(x); };
    for (double a : {0.5, 2.0, 8.0}) {
        double prev_t = -1e300, prev_r = -1e300;
        for (int i = 0; i <= 40; ++i) {
            const double b = a * (-1.0 + i / 20.0);
            const double vt = gauss2d_iphi(t, a, b), vr = gauss2d_iphi(relu, a, b);
            CHECK(vt >= prev_t - 1e-12);
            CHECK(vr >= prev_r - 1e-12);
            prev_t = vt;
            prev_r = vr;
        }
    }
}

TEST_CASE("refining the rule changes results only slightly") {
    const auto coarse = composite_legendre_rule(80, 16);
    const auto fine = composite_legendre_rule(160, 16);
    const auto h1 = gauss_hermite_rule(101), h2 = gauss_hermite_rule(202);
    auto t = [](double x) { return std::tanh(x); };
    for (double a : {0.1, 1.0, 4.0, 10.0})
        for (double r : {-0.9, -0.3, 0.0, 0.4, 0.9, 1.0}) {
            const double b = r * a;
            CHECK(std::abs(gauss2d_iphi(t, a, b, coarse) - gauss2d_iphi(t, a, b, fine)) < 1e-8);
            CHECK(std::abs(gauss2d_iphi(relu, a, b, coarse) - gauss2d_iphi(relu, a, b, fine)) < 1e-4);
            // Hermite converges slowly for tanh(sqrt(a) x) at large a (poles near
            // the real axis); only require that doubling moves towards the fine grid.
            const double ref = gauss2d_iphi(t, a, b, fine);
            CHECK(std::abs(gauss2d_iphi(t, a, b, h2) - ref) <= std::abs(gauss2d_iphi(t, a, b, h1) - ref) + 1e-12);
        }
}

TEST_CASE("smoothed iphi matches the nested form for a smooth phi") {
    // E tanh is not closed form, so use erf: E erf(mu + s z) = erf(mu / sqrt(1 + 2 s^2)).
    GaussianSmoother sm = [](double mu, double s) { return std::erf(mu / std::sqrt(1.0 + 2.0 * s * s)); };
    auto phi = [](double x) { return std::erf(x); };
    for (double a : {0.3, 1.0, 5.0})
        for (double r : {-0.8, 0.0, 0.5, 0.99}) {
            const double b = r * a;
            CHECK(std::abs(gauss2d_iphi_smoothed(sm, a, b) - gauss2d_iphi(phi, a, b)) < 1e-9);
        }
}
