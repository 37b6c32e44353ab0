#include <doctest.h>

#include "xrt/metric.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

using namespace xrt;

namespace {

Christoffel conformal_gamma(const Vec2& dl) {
    Christoffel G;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                G[i](j, k) = (i == j) * dl[k] + (i == k) * dl[j] - (j == k) * dl[i];
    return G;
}

// Christoffels from centered differences of g itself.
Christoffel fd_gamma(const MetricField& m, const Vec2& x, double h) {
    MetricDeriv dg;
    for (int k = 0; k < 2; ++k) {
        Vec2 e = Vec2::Zero();
        e[k] = h;
        dg[k] = (m.g(x + e) - m.g(x - e)) / (2 * h);
    }
    return christoffel(m.g(x).inverse(), dg);
}

double gamma_diff(const Christoffel& a, const Christoffel& b) {
    return std::max((a[0] - b[0]).cwiseAbs().maxCoeff(), (a[1] - b[1]).cwiseAbs().maxCoeff());
}

} // namespace

TEST_CASE("euclidean geometry is flat") {
    auto m = builtin::euclidean();
    Geometry geo = eval_geometry(m, Vec2(0.3, -0.4));
    CHECK(geo.g.isApprox(Mat2::Identity()));
    CHECK(geo.density == doctest::Approx(1.0));
    CHECK(gamma_diff(geo.gamma, Christoffel{Mat2::Zero(), Mat2::Zero()}) == 0.0);
    Curvature c = curvature(m, Vec2(0.1, 0.2));
    CHECK(c.K == 0.0);
}

TEST_CASE("conformal components and closed-form Christoffels") {
    auto m = builtin::conformal_quadratic(0.1);
    Geometry geo = eval_geometry(m, Vec2(0.5, 0.0));
    CHECK(geo.g(0, 0) == doctest::Approx(std::exp(0.05)).epsilon(1e-14));
    CHECK(geo.g(1, 1) == doctest::Approx(std::exp(0.05)).epsilon(1e-14));
    CHECK(geo.g(0, 1) == 0.0);
    CHECK((geo.g * geo.g_inv - Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-12);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-0.7, 0.7);
    for (int t = 0; t < 50; ++t) {
        Vec2 x(U(rng), U(rng));
        Geometry g = eval_geometry(m, x);
        CHECK(gamma_diff(g.gamma, conformal_gamma(0.2 * x)) < 1e-13);
        CHECK(gamma_diff(g.gamma, fd_gamma(m, x, 1e-5)) < 1e-6);
        for (int i = 0; i < 2; ++i) CHECK(std::abs(g.gamma[i](0, 1) - g.gamma[i](1, 0)) < 1e-15);
    }
}

TEST_CASE("difference Christoffels converge at second order") {
    auto m = builtin::constant_curvature(0.8);
    Vec2 x(0.31, -0.22);
    Christoffel exact = eval_geometry(m, x).gamma;
    double e1 = gamma_diff(fd_gamma(m, x, 1e-2), exact);
    double e2 = gamma_diff(fd_gamma(m, x, 5e-3), exact);
    CHECK(e1 / e2 >= 3.5);
}

TEST_CASE("constant-curvature family has K = 1") {
    auto m = builtin::constant_curvature(0.8);
    double sum = 0, sum2 = 0, worst = 0;
    int n = 0;
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            double r = (i + 0.5) / 64.0, phi = 2 * std::numbers::pi * j / 64.0;
            double K = gaussian_curvature(m, Vec2(r * std::cos(phi), r * std::sin(phi)));
            worst = std::max(worst, std::abs(K - 1.0));
            sum += K;
            sum2 += K * K;
            ++n;
        }
    double mean = sum / n;
    double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
    CHECK(worst < 1e-4);
    CHECK(sd / mean <= 1e-3);
}

TEST_CASE("conformal curvature matches -exp(-2 lambda) laplacian lambda") {
    auto m = builtin::conformal_quadratic(0.1);
    CHECK(gaussian_curvature(m, Vec2(0, 0)) == doctest::Approx(-0.4).epsilon(1e-10));
    Vec2 x(0.4, 0.5);
    double expect = -std::exp(-2 * 0.1 * x.squaredNorm()) * 0.4;
    CHECK(gaussian_curvature(m, x) == doctest::Approx(expect).epsilon(1e-10));
    // difference-based second derivatives agree with the closed form
    builtin::ConformalFactor f{[](const Vec2& y) { return 0.1 * y.squaredNorm(); },
                               [](const Vec2& y) { return Vec2(0.2 * y); }, {}};
    auto fd = builtin::conformal("fd", f);
    CHECK(gaussian_curvature(fd, x) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("riemann tensor antisymmetries") {
    auto m = builtin::bump_perturbed(0.05, 6.0);
    Curvature c = curvature(m, Vec2(0.1, 0.3));
    const auto& R = c.R;
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    CHECK(std::abs(R[l][i][j][k] + R[l][j][i][k]) < 1e-12);
                    CHECK(std::abs(R[l][i][j][k] + R[l][j][k][i] + R[l][k][i][j]) < 1e-10);
                }
}

TEST_CASE("domain and data errors") {
    auto m = builtin::euclidean();
    CHECK_THROWS_AS(eval_geometry(m, Vec2(1.1, 0.0)), DomainError);
    CHECK_THROWS_AS(curvature(m, Vec2(0.0, -1.01)), DomainError);
    builtin::ConformalFactor f{[](const Vec2&) { return 0.0; }, [](const Vec2&) { return Vec2(0, 0); }, {}};
    CHECK_NOTHROW(builtin::conformal("flat", f));
    CHECK_THROWS_AS(builtin::euclidean(-1.0), UsageError);
}

TEST_CASE("sampled Lipschitz estimate stays below the declared bound") {
    for (const auto& m : {builtin::c11_test(), builtin::constant_curvature(0.8), builtin::conformal_quadratic(0.3)})
        CHECK(sampled_dg_lipschitz(m, 40) <= m.lip_bound());
}

TEST_CASE("symmetry and positive definiteness across builtins") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    for (const auto& m : {builtin::c11_test(), builtin::constant_curvature(1.25), builtin::bump_perturbed()}) {
        for (int t = 0; t < 100; ++t) {
            Vec2 x(U(rng), U(rng));
            if (x.norm() > 1) continue;
            Mat2 g = m.g(x);
            CHECK(g(0, 1) == g(1, 0));
            CHECK(g.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() >= m.lambda_min());
        }
    }
}

TEST_CASE("mollifier kernel and constant metrics") {
    MollifierSpec spec;
    CHECK(kernel_mass(spec) == doctest::Approx(1.0).epsilon(1e-14));
    spec.alpha = 4;
    auto m = mollify(builtin::euclidean(2.0), spec);
    for (Vec2 x : {Vec2(0, 0), Vec2(0.99, 0), Vec2(-0.5, 0.7)}) {
        CHECK((m.g(x) - 2.0 * Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-13);
        CHECK(m.dg(x)[0].cwiseAbs().maxCoeff() < 1e-13);
    }
    CHECK_THROWS_AS(mollify(builtin::euclidean(), MollifierSpec{0}), UsageError);
}

TEST_CASE("extension matches the metric to second order across the boundary") {
    auto m = builtin::conformal_quadratic(0.3);
    Vec2 u(0.6, 0.8);
    double s = 1e-3;
    MetricJet in = extended_jet(m, (1 - s) * u), out = extended_jet(m, (1 + s) * u), at = extended_jet(m, u);
    // second difference across the seam is O(s^2) when values and first two radial derivatives match
    Mat2 second = (in.g - 2 * at.g + out.g) / (s * s);
    Mat2 exact_rr = (m.jet(u).d2g[0][0] * u[0] * u[0] + 2 * m.jet(u).d2g[0][1] * u[0] * u[1] +
                     m.jet(u).d2g[1][1] * u[1] * u[1]);
    CHECK((second - exact_rr).cwiseAbs().maxCoeff() < 1e-2 * exact_rr.cwiseAbs().maxCoeff() + 1e-6);
    // first derivative continuous across the seam
    for (int k = 0; k < 2; ++k) CHECK((in.dg[k] - out.dg[k]).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("alpha too small is reported with the eigenvalue") {
    builtin::ConformalFactor f{[](const Vec2& x) { return -3.0 * std::pow(x.squaredNorm(), 2); },
                               [](const Vec2& x) { return Vec2(-12.0 * x.squaredNorm() * x); }, {}};
    auto m = builtin::conformal("steep", f);
    MollifierSpec spec;
    spec.alpha = 2;
    bool thrown = false;
    try {
        mollify(m, spec);
    } catch (const AlphaTooSmall& e) {
        thrown = true;
        CHECK(e.min_eigenvalue() <= 0.0);
        CHECK(e.alpha() == 2);
    }
    CHECK(thrown);
    spec.alpha = 32;
    CHECK_NOTHROW(mollify(m, spec));
}

TEST_CASE("sobolev distance trivial cases") {
    auto quad = DiskQuadrature::polar(8, 3, 24);
    auto e = builtin::euclidean();
    auto c = builtin::constant_curvature(0.8);
    for (auto n : all_sobolev_norms()) CHECK(sobolev_distance(c, c, n, quad) == 0.0);
    CHECK(sobolev_distance(e, builtin::euclidean(2.0), SobolevNorm::Linf, quad) == doctest::Approx(1.0));
    double area = 0;
    for (double w : quad.weights) area += w;
    CHECK(area == doctest::Approx(std::numbers::pi).epsilon(1e-12));
    CHECK(sobolev_norm_from_string("curvature_L1") == SobolevNorm::L1_curvature);
    CHECK_THROWS_AS(sobolev_norm_from_string("H7"), UsageError);
}

TEST_CASE("mollified C11 metric approaches the original in W1inf") {
    auto base = builtin::c11_test();
    auto quad = DiskQuadrature::polar(16, 4, 48);
    double prev = 1e300;
    for (int a : {4, 8, 16, 32}) {
        MollifierSpec spec;
        spec.alpha = a;
        double d = sobolev_distance(mollify(base, spec), base, SobolevNorm::W1inf, quad);
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("mollified bump approaches the original in W22") {
    auto base = builtin::bump_perturbed(0.05, 6.0);
    auto quad = DiskQuadrature::polar(16, 4, 48);
    double prev = 1e300;
    for (int a : {4, 8, 16, 32}) {
        MollifierSpec spec;
        spec.alpha = a;
        double d = sobolev_distance(mollify(base, spec), base, SobolevNorm::W22, quad);
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("grid-backed metric round trip and margins") {
    auto m = builtin::constant_curvature(0.8);
    std::string path = "test_metric_grid.txt";
    save_grid_metric(path, m, 129);
    auto g = load_grid_metric(path);
    CHECK(g.backing() == Backing::grid);
    Vec2 x(0.3, 0.2);
    CHECK((g.g(x) - m.g(x)).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((g.dg(x)[0] - m.dg(x)[0]).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(gaussian_curvature(g, x) == doctest::Approx(1.0).epsilon(2e-2));
    // at (1, 0) the difference stencil would leave the sampled square
    CHECK_THROWS_AS(curvature(g, Vec2(0.999, 0.0)), DomainError);
    std::remove(path.c_str());

    std::ofstream bad("bad_metric.txt");
    bad << "{\"dimension\": 2, \"shape\": [5, 5], \"spacing\": 0.5}\n# g11\n1,1,1\n";
    bad.close();
    CHECK_THROWS_AS(load_grid_metric("bad_metric.txt"), DataError);
    std::ofstream worse("bad_metric.txt");
    worse << "not json\n";
    worse.close();
    CHECK_THROWS_AS(load_grid_metric("bad_metric.txt"), DataError);
    CHECK_THROWS_AS(load_grid_metric("does_not_exist.txt"), DataError);
    std::remove("bad_metric.txt");
}
