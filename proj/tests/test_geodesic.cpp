#include <doctest.h>

#include "xrt/geodesic.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace xrt;

namespace {

using Vec3 = Eigen::Vector3d;

// Inverse stereographic chart of the unit sphere, y = c x.
Vec3 to_sphere(const Vec2& y) {
    double q = 1.0 + y.squaredNorm();
    return Vec3(2 * y[0] / q, 2 * y[1] / q, (y.squaredNorm() - 1.0) / q);
}
Vec3 to_sphere_d(const Vec2& y, const Vec2& u) {
    double q = 1.0 + y.squaredNorm();
    Vec2 top = (2.0 * u * q - 4.0 * y * y.dot(u)) / (q * q);
    return Vec3(top[0], top[1], 4.0 * y.dot(u) / (q * q));
}
Vec2 from_sphere(const Vec3& Z) { return Vec2(Z[0], Z[1]) / (1.0 - Z[2]); }

// Great-circle position at arclength t for the constant-curvature chart metric.
Vec2 great_circle(double c, const PhasePoint& z, double t) {
    Vec3 Z0 = to_sphere(c * z.x);
    Vec3 W0 = to_sphere_d(c * z.x, c * z.v);
    Vec3 Z = std::cos(t) * Z0 + std::sin(t) * W0;
    return from_sphere(Z) / c;
}

PhasePoint random_interior(std::mt19937_64& rng, const MetricField& m, double rmax = 0.95) {
    std::uniform_real_distribution<double> U(-1, 1), A(0, 2 * std::numbers::pi);
    Vec2 x;
    do {
        x = Vec2(U(rng), U(rng));
    } while (x.norm() > rmax);
    double a = A(rng);
    return {x, normalize(m, x, Vec2(std::cos(a), std::sin(a)))};
}

} // namespace

TEST_CASE("euclidean chords") {
    auto m = builtin::euclidean();
    GeodesicPath p = integrate_geodesic(m, {Vec2(0, 0), Vec2(1, 0)});
    CHECK(p.status == PathStatus::exited);
    CHECK(p.tau_plus == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((p.endpoint - Vec2(1, 0)).norm() < 1e-10);
    GeodesicPath q = integrate_geodesic(m, {Vec2(0.5, 0), Vec2(0, 1)});
    CHECK(std::abs(q.tau_plus - std::sqrt(0.75)) < 1e-8);
    ExitTimes e = exit_time(m, {Vec2(0, 0), Vec2(0.6, 0.8)});
    CHECK(e.tau_plus == doctest::Approx(1.0));
    CHECK(e.tau_minus == doctest::Approx(-1.0));
    for (std::size_t k = 0; k + 1 < p.x.size(); ++k) CHECK(boundary_defining(p.x[k]) >= 0.0);
}

TEST_CASE("boundary starts are classified by the normal component") {
    auto m = builtin::constant_curvature(0.8);
    Vec2 xb(0.6, 0.8);
    Vec2 t = normalize(m, xb, Vec2(-0.8, 0.6));
    GeodesicPath p = integrate_geodesic(m, {xb, t});
    CHECK(p.status == PathStatus::tangential_start);
    CHECK(p.tau_plus == 0.0);
    Vec2 out = normalize(m, xb, xb);
    CHECK(integrate_geodesic(m, {xb, out}).tau_plus == 0.0);
    Vec2 in = inward_normal(m, xb);
    CHECK(integrate_geodesic(m, {xb, in}).tau_plus > 1.0);
    // nearly tangential inward start still finds its short chord
    auto e = builtin::euclidean();
    double th = 1e-3;
    Vec2 v = std::sin(th) * inward_normal(e, Vec2(1, 0)) + std::cos(th) * Vec2(0, 1);
    CHECK(integrate_geodesic(e, {Vec2(1, 0), v}).tau_plus == doctest::Approx(2 * std::sin(th)).epsilon(1e-8));
}

TEST_CASE("random euclidean exit times match the chord root") {
    auto m = builtin::euclidean();
    std::mt19937_64 rng(11);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        PhasePoint z = random_interior(rng, m, 1.0);
        worst = std::max(worst, std::abs(exit_time(m, z).tau_plus - chord_exit_time(z.x, z.v)));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("constant curvature geodesics follow great circles") {
    const double c = 0.8;
    auto m = builtin::constant_curvature(c);
    std::mt19937_64 rng(5);
    double worst = 0, drift = 0;
    for (int i = 0; i < 20; ++i) {
        PhasePoint z = random_interior(rng, m, 0.8);
        GeodesicPath p = integrate_geodesic(m, z);
        drift = std::max(drift, p.max_drift);
        for (std::size_t k = 0; k < p.t.size(); k += 7)
            worst = std::max(worst, (p.x[k] - great_circle(c, z, p.t[k])).norm());
    }
    CHECK(worst <= 1e-6);
    CHECK(drift <= 1e-8);
}

TEST_CASE("rk4 error decays at fourth order") {
    const double c = 0.8;
    auto m = builtin::constant_curvature(c);
    PhasePoint z{Vec2(0.2, -0.1), normalize(m, Vec2(0.2, -0.1), Vec2(0.3, 1.0))};
    Vec2 exact = great_circle(c, z, 1.0);
    double e1 = (flow(m, z, 1.0, 1.0 / 8) .x - exact).norm();
    double e2 = (flow(m, z, 1.0, 1.0 / 16).x - exact).norm();
    CHECK(e1 / e2 >= 8.0);
}

TEST_CASE("reversibility and flow additivity") {
    auto m = builtin::conformal_quadratic(0.2);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 10; ++i) {
        PhasePoint z = random_interior(rng, m, 0.9);
        double tau = exit_time(m, z).tau_plus;
        PhasePoint end = flow(m, z, tau, 1.0 / 256);
        PhasePoint back = flow(m, end, -tau, 1.0 / 256);
        CHECK((back.x - z.x).norm() < 1e-6);
        double s = 0.37 * tau;
        PhasePoint mid = flow(m, z, s, 1.0 / 256);
        CHECK(std::abs(exit_time(m, mid).tau_plus - (tau - s)) < 1e-8);
    }
}

TEST_CASE("flow lipschitz probe") {
    auto e = builtin::euclidean();
    std::mt19937_64 rng(1);
    std::vector<std::pair<PhasePoint, PhasePoint>> pairs;
    std::normal_distribution<double> N(0, 1);
    for (int i = 0; i < 20; ++i) {
        PhasePoint z = random_interior(rng, e, 0.5);
        Vec2 dx(N(rng), N(rng)), dv(N(rng), N(rng));
        PhasePoint w{z.x + 3e-3 * dx, normalize(e, z.x, z.v + 3e-3 * dv)};
        pairs.push_back({z, w});
    }
    pairs.push_back({pairs[0].first, pairs[0].first});
    std::vector<double> times = {0.1, 0.25, 0.4};
    FlowProbe p = flow_lipschitz_probe(e, pairs, times);
    CHECK(p.ratios.back() == 0.0);
    CHECK(p.max_ratio <= 1.0 + 0.4 + 1e-6);

    // the mollified rough metric gives stable constants across alpha
    auto base = builtin::c11_test();
    std::vector<std::pair<PhasePoint, PhasePoint>> few(pairs.begin(), pairs.begin() + 4);
    MollifierSpec s16, s32;
    s16.alpha = 16;
    s32.alpha = 32;
    double a = flow_lipschitz_probe(mollify(base, s16), few, {0.4}).max_ratio;
    double b = flow_lipschitz_probe(mollify(base, s32), few, {0.4}).max_ratio;
    CHECK(std::abs(a - b) <= 0.2 * std::max(a, b));
}

TEST_CASE("jacobi fields on constant curvature") {
    // diameter through the center has length 4 atan(c)
    {
        auto m = builtin::constant_curvature(0.8);
        PhasePoint z{Vec2(-1, 0), inward_normal(m, Vec2(-1, 0))};
        GeodesicPath p = integrate_geodesic(m, z);
        CHECK(p.tau_plus == doctest::Approx(4 * std::atan(0.8)).epsilon(1e-9));
        JacobiData j = jacobi_index(m, p);
        CHECK(j.zeros.empty());
    }
    for (double c : {1.0, 1.25}) {
        auto m = builtin::constant_curvature(c);
        PhasePoint z{Vec2(-1, 0), inward_normal(m, Vec2(-1, 0))};
        GeodesicPath p = integrate_geodesic(m, z);
        JacobiData j = jacobi_index(m, p);
        REQUIRE(!j.zeros.empty());
        CHECK(std::abs(j.zeros.front().t - std::numbers::pi) < 1e-4);
        for (std::size_t k = 0; k < j.t.size(); k += 50) CHECK(std::abs(j.j[k] - std::sin(j.t[k])) < 1e-6);
    }
}

TEST_CASE("index form of the sine variation on a euclidean chord") {
    auto m = builtin::euclidean();
    for (double b : {0.0, 0.6}) {
        Vec2 x0(-std::sqrt(1 - b * b), b);
        GeodesicPath p = integrate_geodesic(m, {x0, Vec2(1, 0)});
        double L = p.tau_plus;
        auto V = [](double t, double len) {
            return std::make_pair(std::sin(std::numbers::pi * t / len),
                                  std::numbers::pi / len * std::cos(std::numbers::pi * t / len));
        };
        JacobiData j = jacobi_index(m, p, V);
        REQUIRE(j.index_form.has_value());
        CHECK(*j.index_form == doctest::Approx(std::numbers::pi * std::numbers::pi / (2 * L)).epsilon(1e-8));
    }
}

TEST_CASE("jacobi residual shrinks under refinement") {
    auto m = builtin::conformal_quadratic(0.3);
    PhasePoint z{Vec2(-1, 0), inward_normal(m, Vec2(-1, 0))};
    z.v = normalize(m, z.x, z.v + Vec2(0, 0.3));
    GeodesicPath p = integrate_geodesic(m, z);
    double r1 = jacobi_index(m, p, {}, 1.0 / 32).residual;
    double r2 = jacobi_index(m, p, {}, 1.0 / 64).residual;
    CHECK(r1 / r2 >= 3.5);
}

TEST_CASE("second fundamental form") {
    auto e = builtin::euclidean();
    CHECK(std::abs(second_fundamental_form(e, Vec2(1, 0), Vec2(0, 1)).value - 1.0) < 1e-6);
    auto h = builtin::constant_curvature(1.0);
    Vec2 xb(0.6, -0.8);
    Vec2 w = normalize(h, xb, Vec2(0.8, 0.6));
    CHECK(std::abs(second_fundamental_form(h, xb, w).value) < 1e-4);
    // lambda = -(a/2)|x|^2 gives S = exp(a/2)(1 - a)
    for (double a : {0.75, 1.0, 1.5}) {
        auto m = builtin::conformal_quadratic(-0.5 * a);
        Vec2 ww = normalize(m, Vec2(1, 0), Vec2(0, 1));
        double S = second_fundamental_form(m, Vec2(1, 0), ww).value;
        CHECK(std::abs(S - std::exp(0.5 * a) * (1 - a)) <= 1e-6);
    }
    CHECK_THROWS_AS(second_fundamental_form(e, Vec2(0.5, 0), Vec2(0, 1)), DomainError);
    CHECK_THROWS_AS(second_fundamental_form(e, Vec2(1, 0), Vec2(1, 0)), UsageError);
}

TEST_CASE("convexity transition located by bisection") {
    auto S_of = [](double a) {
        auto m = builtin::conformal_quadratic(-0.5 * a);
        return second_fundamental_form(m, Vec2(1, 0), normalize(m, Vec2(1, 0), Vec2(0, 1))).value;
    };
    double lo = 0.75, hi = 1.5;
    CHECK(S_of(lo) > 0);
    CHECK(S_of(hi) < 0);
    for (int i = 0; i < 30; ++i) {
        double mid = 0.5 * (lo + hi);
        (S_of(mid) > 0 ? lo : hi) = mid;
    }
    CHECK(std::abs(0.5 * (lo + hi) - 1.0) < 1e-4);
    // the tau^2 probe agrees: bounded before the transition, growing after it
    std::vector<double> scales = {1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512, 1.0 / 1024};
    auto convex = builtin::conformal_quadratic(-0.5 * 0.75);
    auto concave = builtin::conformal_quadratic(-0.5 * 1.5);
    auto pc = tau_squared_lipschitz_probe(convex, Vec2(1, 0), normalize(convex, Vec2(1, 0), Vec2(0, 1)), scales);
    auto pn = tau_squared_lipschitz_probe(concave, Vec2(1, 0), normalize(concave, Vec2(1, 0), Vec2(0, 1)), scales);
    CHECK(std::abs(pc.slope) < 0.1);
    CHECK(pn.slope >= 1.0 / 3.0 - 0.1);
}

TEST_CASE("exit time asymptotics near glancing directions") {
    for (const auto& m : {builtin::euclidean(), builtin::constant_curvature(0.8)}) {
        Vec2 xb(0, 1);
        Vec2 nu = inward_normal(m, xb);
        Vec2 T = normalize(m, xb, Vec2(1, 0));
        double S = second_fundamental_form(m, xb, T).value;
        double dev = 1.0;
        for (int k = 4; k <= 10; ++k) {
            double vp = std::ldexp(1.0, -k);
            Vec2 v = vp * nu + std::sqrt(1 - vp * vp) * T;
            double tau = integrate_geodesic(m, {xb, v}).tau_plus;
            dev = std::abs(tau * S / (2 * vp) - 1.0);
        }
        CHECK(dev <= 0.1);
    }
}

TEST_CASE("tau squared probe") {
    std::vector<double> scales;
    for (int k = 4; k <= 12; ++k) scales.push_back(std::ldexp(1.0, -k));
    auto e = builtin::euclidean();
    TauProbe p = tau_squared_lipschitz_probe(e, Vec2(0, -1), Vec2(1, 0), scales);
    CHECK(p.max_ratio <= 10.0);
    for (const auto& r : p.rows) CHECK(r.ratio == doctest::Approx(2 - r.h).epsilon(1e-6));
    auto h = builtin::constant_curvature(1.0);
    TauProbe q = tau_squared_lipschitz_probe(h, Vec2(0, -1), normalize(h, Vec2(0, -1), Vec2(1, 0)), scales);
    CHECK(q.slope > 1.0 / 3.0 - 0.1);
    CHECK(q.max_ratio > 10.0);
}

TEST_CASE("connecting geodesics") {
    auto e = builtin::euclidean();
    ConnectResult r = connect_points(e, Vec2(-0.5, 0), Vec2(0.5, 0));
    REQUIRE(r.unique());
    CHECK(r.solutions[0].length == doctest::Approx(1.0).epsilon(1e-9));

    auto m = builtin::constant_curvature(0.8);
    std::mt19937_64 rng(21);
    for (int i = 0; i < 5; ++i) {
        Vec2 x = random_interior(rng, m, 0.9).x, y = random_interior(rng, m, 0.9).x;
        ConnectResult a = connect_points(m, x, y);
        REQUIRE(a.unique());
        Vec2 dy(1e-4, -2e-4);
        ConnectResult b = connect_points(m, x, y + dy);
        REQUIRE(b.converged);
        CHECK(std::abs(a.solutions[0].length - b.solutions[0].length) <= 5.0 * dy.norm());
    }

    auto cap = builtin::constant_curvature(1.25);
    // both arcs of the equator |x| = 0.8 join these points
    double th = std::numbers::pi - 0.3;
    ConnectResult w = connect_points(cap, Vec2(0.8, 0), 0.8 * Vec2(std::cos(th), std::sin(th)));
    REQUIRE(w.solutions.size() >= 2);
    CHECK(w.solutions[0].length == doctest::Approx(th).epsilon(1e-6));
    CHECK(w.solutions[1].length == doctest::Approx(2 * std::numbers::pi - th).epsilon(1e-6));
    CHECK_THROWS_AS(connect_points(e, Vec2(0.1, 0), Vec2(0.1, 0)), UsageError);
}
