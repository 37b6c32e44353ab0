#include <doctest.h>

#include "xrt/transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

using namespace xrt;

namespace {

constexpr double pi = std::numbers::pi;

double bowl(const Vec2& x) { return 1.0 - x.squaredNorm(); }

// p = (1 - |x|^2)(1 + x1 - 0.5 x2^2) vanishes on the boundary.
double potential(const Vec2& x) { return bowl(x) * (1.0 + x[0] - 0.5 * x[1] * x[1]); }
Vec2 d_potential(const Vec2& x) {
    const double q = 1.0 + x[0] - 0.5 * x[1] * x[1];
    return Vec2(-2 * x[0] * q + bowl(x), -2 * x[1] * q - bowl(x) * x[1]);
}

Vec2 some_form(const Vec2& x) { return Vec2(std::sin(2 * x[1]) + x[0] * x[1], 0.5 + x[0] * x[0]); }

RaySet euclidean_rays(int nb, int na) { return trace_rays(builtin::euclidean(), inflow_samples(builtin::euclidean(), nb, na)); }

} // namespace

TEST_CASE("inflow sampling") {
    auto s = inflow_samples(builtin::euclidean(), 64, 32);
    KahanSum w;
    for (const auto& x : s) {
        w.add(x.weight);
        CHECK(x.weight >= 0);
        CHECK(x.v.dot(-x.x) >= 0);
    }
    CHECK(std::abs(w.value() - 4 * pi) <= 1e-3 * 4 * pi);
    // every boundary point carries the same angular weights
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].weight == doctest::Approx(s[i % 32].weight).epsilon(1e-14));
    CHECK_THROWS_AS(inflow_samples(builtin::euclidean(), 3, 8), UsageError);

    auto curved = inflow_samples(builtin::constant_curvature(0.8), 16, 8);
    for (const auto& x : curved) {
        Mat2 g = builtin::constant_curvature(0.8).g(x.x);
        CHECK(std::abs(x.v.dot(g * x.v) - 1.0) <= 1e-12);
    }
}

TEST_CASE("Santalo volume and chord integrals") {
    RaySet rays = euclidean_rays(64, 32);
    REQUIRE(rays.dropped.empty());
    KahanSum vol;
    double worst = 0;
    auto ones = xray(rays, [](const Vec2&) { return 1.0; });
    for (std::size_t i = 0; i < rays.rays.size(); ++i) {
        const auto& r = rays.rays[i];
        vol.add(r.sample.weight * r.path.t.back());
        worst = std::max(worst, std::abs(ones[i] - 2 * std::cos(r.sample.angle)));
    }
    CHECK(std::abs(vol.value() - 2 * pi * pi) <= 5e-3 * 2 * pi * pi);
    CHECK(worst <= 1e-8);
}

TEST_CASE("radial profile against the chord antiderivative") {
    RaySet rays = euclidean_rays(16, 16);
    auto vals = xray(rays, bowl);
    double worst = 0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double b = std::sin(rays.rays[i].sample.angle), L = 2 * std::sqrt(1 - b * b);
        worst = std::max(worst, std::abs(vals[i] - (L * (1 - b * b) - L * L * L / 12)));
        CHECK(vals[i] >= 0);
    }
    CHECK(worst <= 1e-7);
}

TEST_CASE("exact one-forms integrate to zero") {
    for (const auto& m : {builtin::euclidean(), builtin::constant_curvature(0.8), builtin::conformal_quadratic(0.1),
                          builtin::c11_test(), builtin::bump_perturbed()}) {
        RaySet rays = trace_rays(m, inflow_samples(m, 16, 8));
        auto dp = xray(rays, OneFormTarget(d_potential));
        auto h = xray(rays, OneFormTarget(some_form));
        auto hdp = xray(rays, OneFormTarget([](const Vec2& x) { return Vec2(some_form(x) + d_potential(x)); }));
        double worst = 0, gauge = 0;
        for (std::size_t i = 0; i < dp.size(); ++i) {
            worst = std::max(worst, std::abs(dp[i]));
            gauge = std::max(gauge, std::abs(hdp[i] - h[i]));
        }
        INFO(m.id());
        CHECK(worst <= 1e-6);
        CHECK(gauge <= 1e-6);
    }
}

TEST_CASE("integral function") {
    BundleGrid grid(builtin::euclidean(), {8, 8, 8});
    auto zero = integral_function(grid, [](const Vec2&) { return 0.0; });
    CHECK(std::all_of(zero.u.values.begin(), zero.u.values.end(), [](double x) { return x == 0.0; }));
    CHECK(zero.masked.empty());

    // u^1 is the exit time
    auto tau = integral_function(grid, [](const Vec2&) { return 1.0; });
    double worst = 0;
    for (std::size_t s = 0; s < grid.spatial_count(); ++s)
        for (int k = 0; k < grid.n_psi(); ++k)
            worst = std::max(worst, std::abs(tau.u.values[s * grid.n_psi() + k] -
                                             chord_exit_time(grid.node(s).x, grid.v(s, k))));
    CHECK(worst <= 1e-8);
}

TEST_CASE("fundamental theorem of calculus along the flow") {
    std::vector<double> res;
    for (int n : {8, 16, 32}) {
        BundleGrid grid(builtin::euclidean(), {n, n, 2 * n});
        auto uf = integral_function(grid, bowl);
        auto Xu = apply_X(grid, uf.u);
        ScalarField f = grid.scalar([](const Vec2& x, const Vec2&, double) { return bowl(x); });
        for (std::size_t q = 0; q < Xu.values.size(); ++q) Xu.values[q] += f.values[q];
        res.push_back(norm(grid, Xu, NormKind::L2SM));
        MESSAGE("n_r=" << n << " |Xu^f + f| = " << res.back());
    }
    // first order: halving the spacing at least halves the residual, with 10% slack
    CHECK(res[1] <= 0.55 * res[0]);
    CHECK(res[2] <= 0.55 * res[1]);
}

TEST_CASE("integral function is Lipschitz uniformly in the grid") {
    std::vector<double> lip;
    for (int n : {16, 32}) {
        BundleGrid grid(builtin::euclidean(), {n, n, 2 * n});
        auto uf = integral_function(grid, bowl);
        std::mt19937_64 rng(7);
        std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
        double worst = 0;
        for (int t = 0; t < 20000; ++t) {
            const std::size_t a = pick(rng), b = pick(rng);
            if (a == b) continue;
            const std::size_t sa = a / grid.n_psi(), sb = b / grid.n_psi();
            const double pa = grid.psi(static_cast<int>(a % grid.n_psi())), pb = grid.psi(static_cast<int>(b % grid.n_psi()));
            const double dpsi = std::abs(std::remainder(pa - pb, 2 * pi));
            const double dist = std::hypot((grid.node(sa).x - grid.node(sb).x).norm(), dpsi);
            worst = std::max(worst, std::abs(uf.u.values[a] - uf.u.values[b]) / dist);
        }
        lip.push_back(worst);
        MESSAGE("n_r=" << n << " Lipschitz estimate " << worst);
    }
    CHECK(std::isfinite(lip[1]));
    CHECK(lip[1] <= 1.25 * lip[0]);
}

TEST_CASE("pixel basis") {
    PixelBasis B = PixelBasis::build(24);
    KahanSum area;
    for (double a : B.area) area.add(a);
    CHECK(std::abs(area.value() - pi) <= 1e-4);
    for (double a : B.area) CHECK(a >= 0.25 * (2.0 / 24) * (2.0 / 24));
    auto c = B.project([](const Vec2&) { return 3.0; });
    for (int i = 0; i < B.size(); ++i) CHECK(c[i] == doctest::Approx(3.0));
    CHECK(B.evaluate(c, Vec2(0.1, -0.2)) == doctest::Approx(3.0));
    CHECK(B.evaluate(c, Vec2(1.1, 0.0)) == 0.0);
    CHECK_THROWS_AS(PixelBasis::build(1), UsageError);
}

TEST_CASE("scalar forward matrix") {
    RaySet rays = euclidean_rays(32, 16);
    PixelBasis B = PixelBasis::build(12);
    TransformMatrix T = assemble_forward(rays, B, "euclidean");
    REQUIRE(T.A.rows() == static_cast<Eigen::Index>(rays.rays.size()));
    double worst = 0;
    for (Eigen::Index r = 0; r < T.A.rows(); ++r)
        worst = std::max(worst, std::abs(T.A.row(r).sum() - rays.rays[static_cast<std::size_t>(r)].path.t.back()));
    CHECK(worst <= 1e-10);
    CHECK(T.A.allFinite());

    std::mt19937_64 rng(3);
    std::normal_distribution<double> N(0, 1);
    Eigen::VectorXd c(T.A.cols()), d(T.A.rows()), c2(T.A.cols());
    for (auto& x : c) x = N(rng);
    for (auto& x : d) x = N(rng);
    for (auto& x : c2) x = N(rng);
    const double lhs = (T.A * c).dot(d), rhs = c.dot(T.A.transpose() * d);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
    CHECK(((T.A * (c + c2)) - (T.A * c + T.A * c2)).norm() <= 1e-12 * (T.A * c).norm());

    CHECK_THROWS_AS(assemble_forward(RaySet{}, B, "euclidean"), UsageError);

    // basis-approximation error of the matrix path shrinks with the basis
    auto direct = xray(rays, bowl);
    Eigen::Map<const Eigen::VectorXd> dv(direct.data(), static_cast<Eigen::Index>(direct.size()));
    std::vector<double> err;
    for (int n : {8, 16, 32}) {
        PixelBasis P = PixelBasis::build(n);
        TransformMatrix M = assemble_forward(rays, P, "euclidean");
        err.push_back((M.A * P.project(bowl) - dv).norm() / dv.norm());
        MESSAGE("pixels " << n << " relative mismatch " << err.back());
    }
    CHECK(err[1] < err[0]);
    CHECK(err[2] < err[1]);
}

TEST_CASE("scalar injectivity at desk scale") {
    RaySet rays = euclidean_rays(64, 64);
    REQUIRE(rays.rays.size() == 4096);
    PixelBasis B = PixelBasis::build(24);
    TransformMatrix T = assemble_forward(rays, B, "euclidean");
    NullspaceReport rep = nullspace_analysis(T);
    MESSAGE("sigma_min/sigma_max = " << rep.sigma_ratio << ", duplicates " << rep.duplicate_rows);
    CHECK(rep.null_dimension == 0);

    // a duplicated row changes nothing
    TransformMatrix D = T;
    D.A.conservativeResize(T.A.rows() + 1, Eigen::NoChange);
    D.A.row(T.A.rows()) = T.A.row(5);
    NullspaceReport rd = nullspace_analysis(D);
    CHECK(rd.duplicate_rows == rep.duplicate_rows + 1);
    CHECK(rd.null_dimension == rep.null_dimension);
    CHECK(rd.sigma_ratio == doctest::Approx(rep.sigma_ratio).epsilon(1e-10));

    // sigma_min is a property of the operator, not of the sample
    TransformMatrix T2 = assemble_forward(euclidean_rays(128, 64), B, "euclidean");
    NullspaceReport r2 = nullspace_analysis(T2);
    const double s1 = rep.singular_values(rep.singular_values.size() - 1) / std::sqrt(4096.0);
    const double s2 = r2.singular_values(r2.singular_values.size() - 1) / std::sqrt(8192.0);
    MESSAGE("normalized sigma_min " << s1 << " vs " << s2);
    CHECK(std::abs(s2 - s1) <= 0.2 * s1);

    auto data = xray(rays, bowl);
    Eigen::Map<const Eigen::VectorXd> dv(data.data(), static_cast<Eigen::Index>(data.size()));
    Eigen::VectorXd ref = B.project(bowl);
    Eigen::VectorXd mass = Eigen::Map<const Eigen::VectorXd>(B.area.data(), B.size());
    Reconstruction rec = reconstruct(T, dv, 1e-6, &ref, &mass);
    REQUIRE(rec.relative_error.has_value());
    MESSAGE("relative reconstruction error " << *rec.relative_error);
    CHECK(*rec.relative_error <= 0.05);

    Reconstruction z = reconstruct(T, Eigen::VectorXd::Zero(T.A.rows()), 1e-6);
    CHECK(z.coeffs.norm() == 0.0);
    CHECK_THROWS_AS(reconstruct(T, dv, 0.0, nullptr), UsageError);
    CHECK_THROWS_AS(reconstruct(T, dv, -1.0, nullptr), UsageError);
}

TEST_CASE("edge basis gauge") {
    EdgeBasis E = EdgeBasis::build(12);
    Eigen::MatrixXd G = E.gauge_matrix();
    REQUIRE(G.cols() > 0);
    const double h = 2.0 / E.n;
    // each interior hat has two incoming and two outgoing edges
    CHECK(G.cwiseAbs().colwise().sum().minCoeff() == 4.0);

    RaySet rays = euclidean_rays(32, 32);
    TransformMatrix T = assemble_forward(rays, E, "euclidean");
    CHECK(T.kind == TargetKind::one_form);
    CHECK((T.A * G).cwiseAbs().maxCoeff() <= 1e-12);

    // constant forms are reproduced exactly on rays that stay in the covered cells
    Eigen::VectorXd cx = E.interpolate([](const Vec2&) { return Vec2(1.0, 0.0); });
    for (int e = 0; e < E.size(); ++e) CHECK(cx[e] == doctest::Approx(E.edges[e][0] == 0 ? h : 0.0));
}

TEST_CASE("one-form null space is the gauge space") {
    EdgeBasis E = EdgeBasis::build(12);
    Eigen::MatrixXd G = E.gauge_matrix();
    RaySet rays = euclidean_rays(64, 64);
    TransformMatrix T = assemble_forward(rays, E, "euclidean");
    NullspaceReport rep = nullspace_analysis(T, &G);
    MESSAGE("null " << rep.null_dimension << " gauge " << rep.gauge_dimension << " angle " << rep.max_principal_angle_deg);
    CHECK(rep.null_dimension == rep.gauge_dimension);
    CHECK(rep.max_principal_angle_deg <= 5.0);

    // data from an exact form is recovered up to the gauge: truth - reconstruction lies in span(G)
    auto data = xray(rays, OneFormTarget(d_potential));
    Eigen::Map<const Eigen::VectorXd> dv(data.data(), static_cast<Eigen::Index>(data.size()));
    Eigen::VectorXd truth = E.interpolate(d_potential);
    Reconstruction rec = reconstruct(T, T.A * truth, 1e-6);
    const double resid = gauge_residual(truth - rec.coeffs, G);
    MESSAGE("gauge residual " << resid);
    CHECK(resid <= 0.05);
    CHECK(dv.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("sinogram and matrix files") {
    RaySet rays = euclidean_rays(8, 4);
    PixelBasis B = PixelBasis::build(6);
    TransformMatrix T = assemble_forward(rays, B, "euclidean");
    const std::string path = "xrt_test_matrix.bin";
    save_matrix(path, T);
    TransformMatrix L = load_matrix(path);
    CHECK(L.A == T.A);
    CHECK(L.weights == T.weights);
    CHECK(L.ray_ids == T.ray_ids);
    CHECK(L.basis == T.basis);
    CHECK(L.metric_id == "euclidean");
    CHECK(L.kind == TargetKind::scalar);
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("short", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_matrix(path), DataError);
    CHECK_THROWS_AS(load_matrix("does_not_exist.bin"), DataError);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());

    write_sinogram("xrt_test_sino.csv", rays, xray(rays, bowl), "test");
    std::FILE* f = std::fopen("xrt_test_sino.csv", "r");
    REQUIRE(f);
    char line[256];
    int lines = 0;
    while (std::fgets(line, sizeof line, f)) ++lines;
    std::fclose(f);
    CHECK(lines == static_cast<int>(rays.rays.size()) + 2);
    std::remove("xrt_test_sino.csv");
}
