#include <doctest.h>

#include "xrt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace xrt;

namespace {

constexpr double pi = std::numbers::pi;

double bowl(const Vec2& x) { return 1.0 - x.squaredNorm(); }

class Scaled : public MetricSource {
public:
    Scaled(MetricField base, double c) : base_(std::move(base)), c_(c) {}
    Mat2 g(const Vec2& x) const override { return c_ * base_.g(x); }
    MetricDeriv dg(const Vec2& x) const override {
        MetricDeriv d = base_.dg(x);
        d[0] *= c_;
        d[1] *= c_;
        return d;
    }

private:
    MetricField base_;
    double c_;
};

// Smooth section with a few fiber harmonics.
BundleFunction smooth_section(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0, 1);
    std::array<double, 6> c;
    for (double& x : c) x = N(rng);
    return [c](const Vec2& x, const Vec2&, double psi) {
        return c[0] + c[1] * x[0] + c[2] * x[1] * std::cos(psi) + c[3] * std::sin(2 * psi) + c[4] * x[0] * x[1] +
               c[5] * std::cos(psi) * std::sin(psi);
    };
}

} // namespace

TEST_CASE("report plumbing") {
    CHECK(relative_residual(0.0, 0.0) == 0.0);
    CHECK(relative_residual(1.0, 0.98) == doctest::Approx(0.02));
    CHECK(relative_residual(1e-20, 0.0) == doctest::Approx(1e-6));

    VerificationReport r;
    r.check = "pestov";
    r.metric = "euclidean";
    r.grid = "polar(8x8x16)";
    r.lhs = 2.0;
    r.rhs = 1.99;
    r.tolerance = 0.01;
    r.trend = {{"polar(4x4x8)", 0.02}, {"polar(8x8x16)", 0.005}};
    r.terms["a"] = 1.5;
    r.notes.push_back("hello");
    settle(r);
    CHECK(r.passed);
    CHECK(r.rel_residual == doctest::Approx(0.005));
    VerificationReport back = report_from_json(to_json(r));
    CHECK(back.check == r.check);
    CHECK(back.rel_residual == r.rel_residual);
    CHECK(back.trend.size() == 2);
    CHECK(back.terms.at("a") == 1.5);
    CHECK(back.notes == r.notes);
    CHECK(format_reports({r}).find("PASS") != std::string::npos);
    CHECK_THROWS_AS(report_from_json(nlohmann::json{{"check", "x"}}), DataError);

    nlohmann::json golden = {{"checks", {{"pestov/euclidean", {{"rel_residual", 0.005}, {"lhs", 2.0}}}}}};
    CHECK(compare_golden({r}, golden).empty());
    golden["checks"]["pestov/euclidean"]["lhs"] = 2.1;
    auto mism = compare_golden({r}, golden);
    REQUIRE(mism.size() == 1);
    CHECK(mism[0].field == "lhs");
    r.metric = "other";
    CHECK(compare_golden({r}, golden).at(0).field == "missing");
    CHECK_THROWS_AS(compare_golden({r}, nlohmann::json::object()), DataError);
}

TEST_CASE("refinement study") {
    auto make = [](std::vector<double> res) {
        return [res, i = std::size_t(0)](const GridSpec& g) mutable {
            VerificationReport r;
            r.grid = std::to_string(g.n_r);
            r.rel_residual = res[i++];
            r.tolerance = 0.01;
            r.passed = r.rel_residual <= r.tolerance;
            return r;
        };
    };
    std::vector<GridSpec> grids = {{8, 8, 16}, {16, 16, 32}};
    VerificationReport ok = refinement_study(make({4e-3, 1e-3}), grids);
    CHECK(ok.passed);
    REQUIRE(ok.trend.size() == 2);
    CHECK(ok.trend[0].grid == "8");
    CHECK(!refinement_study(make({1.2e-3, 1e-3}), grids).passed);
    CHECK(refinement_study(make({1e-16, 2e-16}), grids).passed);
}

TEST_CASE("Pestov identity") {
    BundleGrid e(builtin::euclidean(), {16, 16, 32});
    VerificationReport z = pestov_residual(e, e.zeros_scalar(true));
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);
    CHECK(z.passed);
    CHECK_THROWS_AS(pestov_residual(e, e.zeros_scalar(false)), UsageError);
    CHECK_THROWS_AS(pestov_residual(e, e.scalar([](const Vec2&, const Vec2&, double) { return 1.0; }, true)), DataError);

    // the integral function of f = 0 runs through the whole pipeline as zeros
    IntegralFunction uf = integral_function(e, [](const Vec2&) { return 0.0; });
    uf.u.vanishes_on_boundary = true;
    VerificationReport zf = pestov_residual(e, uf.u);
    CHECK(zf.lhs == 0.0);
    CHECK(zf.rel_residual == 0.0);

    auto u_flat = [](const Vec2& x, const Vec2&, double psi) { return bowl(x) * std::sin(psi); };
    VerificationReport flat = refinement_study(
        [&](const GridSpec& g) {
            BundleGrid grid(builtin::euclidean(), g);
            return pestov_residual(grid, grid.scalar(u_flat, true));
        },
        {{16, 16, 32}, {32, 32, 64}});
    MESSAGE(format_reports({flat}));
    CHECK(flat.passed);

    auto u_curved = [](const Vec2& x, const Vec2&, double psi) {
        return bowl(x) * (x[0] + std::sin(psi) * std::cos(psi));
    };
    VerificationReport curved = refinement_study(
        [&](const GridSpec& g) {
            BundleGrid grid(builtin::constant_curvature(0.8), g);
            return pestov_residual(grid, grid.scalar(u_curved, true), 0.03);
        },
        {{16, 16, 32}, {32, 32, 64}});
    MESSAGE(format_reports({curved}));
    CHECK(curved.passed);
}

TEST_CASE("quadratic form") {
    BundleGrid e(builtin::euclidean(), {8, 8, 16});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0, 1);
    for (int t = 0; t < 100; ++t) {
        SectionN W = e.zeros_section();
        for (double& c : W.coeff) c = N(rng);
        CHECK(q_form(e, W) >= 0.0);
        SectionN xw = apply_X_section(e, W);
        CHECK(q_form(e, W) == doctest::Approx(inner(e, xw, xw)).epsilon(1e-12));
    }
    BundleGrid s(builtin::constant_curvature(1.0), {16, 16, 32});
    SectionN W = s.section(smooth_section(2));
    SectionN xw = apply_X_section(s, W);
    const double expect = inner(s, xw, xw) - inner(s, W, W);
    CHECK(std::abs(q_form(s, W) - expect) <= 1e-6 * std::abs(expect));
}

TEST_CASE("commutator identity") {
    BundleGrid e(builtin::euclidean(), {32, 32, 64});
    SectionN V = e.section(smooth_section(3));
    VerificationReport z = commutator_check(e, e.zeros_scalar(true), V);
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);
    CHECK_THROWS_AS(commutator_check(e, e.zeros_scalar(false), V), UsageError);

    // a pullback has no vertical gradient, so only two terms remain
    ScalarField u = e.scalar([](const Vec2& x, const Vec2&, double) { return bowl(x); }, true);
    VerificationReport r = commutator_check(e, u, V);
    CHECK(std::abs(r.terms.at("<Vu,XV>")) <= 1e-12);
    MESSAGE(format_reports({r}));
    CHECK(r.passed);

    ScalarField w = e.scalar([](const Vec2& x, const Vec2&, double psi) { return bowl(x) * std::cos(psi + x[1]); }, true);
    CHECK(commutator_check(e, w, V).passed);
}

TEST_CASE("one-form cancellation") {
    BundleGrid e(builtin::euclidean(), {32, 32, 64});
    VerificationReport z = oneform_cancellation(e, [](const Vec2&) { return Vec2(0, 0); });
    CHECK(z.lhs == 0.0);
    CHECK(z.passed);
    VerificationReport dx = oneform_cancellation(e, [](const Vec2&) { return Vec2(1, 0); });
    CHECK(std::abs(dx.lhs - pi * pi) <= 5e-3 * pi * pi);
    CHECK(std::abs(dx.rhs - pi * pi) <= 5e-3 * pi * pi);
    CHECK(dx.passed);

    BundleGrid c(builtin::constant_curvature(0.8), {32, 32, 64});
    VerificationReport poly = oneform_cancellation(
        c, [](const Vec2& x) { return Vec2(0.3 + x[0] * x[1] - x[1] * x[1], -1.2 * x[0] + 0.5 * x[0] * x[0] * x[1]); }, 0.01);
    MESSAGE(format_reports({poly}));
    CHECK(poly.passed);
}

TEST_CASE("Santalo check") {
    BundleGrid e(builtin::euclidean(), {32, 32, 64});
    RaySet rays = trace_rays(builtin::euclidean(), inflow_samples(builtin::euclidean(), 64, 32));
    VerificationReport z = santalo_check(e, rays, e.zeros_scalar());
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);
    CHECK(z.passed);
    VerificationReport one = santalo_check(e, rays, e.scalar([](const Vec2&, const Vec2&, double) { return 1.0; }));
    CHECK(std::abs(one.lhs - 2 * pi * pi) <= 5e-3 * 2 * pi * pi);
    CHECK(std::abs(one.rhs - 2 * pi * pi) <= 5e-3 * 2 * pi * pi);
    CHECK(one.passed);
    // smooth bump concentrated near the boundary, with a fiber dependence
    ScalarField bump = e.scalar([](const Vec2& x, const Vec2&, double psi) {
        const double d = (x.norm() - 0.85) / 0.08;
        return std::exp(-d * d) * (1.0 + 0.5 * std::cos(psi));
    });
    VerificationReport b = santalo_check(e, rays, bump, 0.02);
    MESSAGE(format_reports({b}));
    CHECK(b.passed);
    CHECK(b.terms.at("dropped_fraction") == 0.0);
}

TEST_CASE("mollification study") {
    MollificationStudy s = mollification_report(builtin::c11_test(), {4, 8, 16, 32}, all_sobolev_norms(), 0.05,
                                                DiskQuadrature::polar(16, 4, 48));
    REQUIRE(s.distance.size() == 4);
    REQUIRE(s.distance[0].size() == all_sobolev_norms().size());
    for (std::size_t k = 0; k < s.norms.size(); ++k) CHECK_MESSAGE(s.decreasing[k], to_string(s.norms[k]));
    CHECK(s.passed);
    const std::string csv = mollification_csv(s);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK_THROWS_AS(mollification_report(builtin::c11_test(), {8}), UsageError);
}

TEST_CASE("B1 constant by Rayleigh minimization") {
    BundleGrid e(builtin::euclidean(), {32, 32, 64});
    B1Estimate est = b1_estimate(e);
    MESSAGE("epsilon " << est.epsilon << " after " << est.iterations << " iterations, Q route " << est.q_check);
    CHECK(est.converged);
    CHECK(std::abs(est.epsilon - pi * pi / 4) <= 0.05 * pi * pi / 4);
    CHECK(est.q_check == doctest::Approx(est.epsilon).epsilon(1e-3));
    CHECK(std::is_sorted(est.ritz.begin(), est.ritz.end()));
    const double ray = ray_dirichlet_epsilon(builtin::euclidean(), 32, 16, 200);
    CHECK(std::abs(ray - pi * pi / 4) <= 0.05 * pi * pi / 4);
    B1Options bad;
    bad.phi_modes = 16;
    CHECK_THROWS_AS(b1_estimate(e, bad), UsageError);
}

TEST_CASE("shortest connection is invariant under metric scaling") {
    MetricField base = builtin::constant_curvature(0.8);
    MetricField scaled(std::make_shared<Scaled>(base, 4.0), "scaled", Backing::analytic);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-0.6, 0.6);
    for (int t = 0; t < 5; ++t) {
        Vec2 x(U(rng), U(rng)), y(U(rng), U(rng));
        ConnectResult a = connect_points(base, x, y), b = connect_points(scaled, x, y);
        REQUIRE(a.unique());
        REQUIRE(b.unique());
        const GeodesicPath& pa = a.solutions[0].path;
        const GeodesicPath& pb = b.solutions[0].path;
        // same point set: every vertex of one path lies near the other
        double worst = 0;
        for (const Vec2& p : pb.x) {
            double best = 1e300;
            for (const Vec2& q : pa.x) best = std::min(best, (p - q).norm());
            worst = std::max(worst, best);
        }
        CHECK(worst <= 1e-2);
        CHECK(b.solutions[0].length == doctest::Approx(2.0 * a.solutions[0].length).epsilon(1e-4));
    }
}

TEST_CASE("simplicity report on the Euclidean disk") {
    SimplicityOptions o;
    o.b1_grid = {16, 16, 32};
    o.b1.radial_modes = 6;
    o.b1.phi_modes = 6;
    o.b1.psi_modes = 6;
    o.pairs = 12;
    o.boundary_points = 2;
    o.jacobi_boundary = 8;
    o.jacobi_angles = 8;
    SimplicityReport r = simplicity_report(builtin::euclidean(), o);
    MESSAGE(format_simplicity(r));
    CHECK(r.b1.verdict == Verdict::pass);
    CHECK(r.b2.verdict == Verdict::pass);
    CHECK(r.b3.verdict == Verdict::pass);
    CHECK(r.all_pass());
    CHECK(!r.first_conjugate.has_value());
    CHECK(r.min_sff == doctest::Approx(1.0).epsilon(1e-5));
    nlohmann::json j = to_json(r);
    CHECK(j["B1"]["verdict"] == "pass");
    CHECK(j["simple"] == true);
}
