#include "xrt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace xrt {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

Vec2 boundary_point(int k, int n) {
    const double th = 2.0 * std::numbers::pi * (k + 0.25) / n;
    return Vec2(std::cos(th), std::sin(th));
}

} // namespace

SimplicityReport simplicity_report(const MetricField& metric, const SimplicityOptions& opts) {
    SimplicityReport rep;
    rep.metric = metric.id();

    // B1: Rayleigh minimization of Q plus the ray-wise cross-check
    try {
        BundleGrid grid(metric, opts.b1_grid);
        B1Estimate e = b1_estimate(grid, opts.b1);
        rep.ray_epsilon = ray_dirichlet_epsilon(metric, opts.jacobi_boundary, opts.jacobi_angles);
        rep.b1.value = e.epsilon;
        if (e.epsilon <= opts.b1.threshold)
            rep.b1.verdict = Verdict::fail;
        else
            rep.b1.verdict = e.converged ? Verdict::pass : Verdict::inconclusive;
        rep.b1.detail = fmt("epsilon %.6f on ", e.epsilon) + grid.descriptor() +
                        fmt(", %.0f iterations, residual %.2e", e.iterations, e.residual) +
                        (e.converged ? "" : " (not converged, value is the best bound)");
    } catch (const std::exception& ex) {
        rep.b1.verdict = Verdict::inconclusive;
        rep.b1.detail = ex.what();
    }

    // B2: multi-start shooting between random interior pairs
    try {
        std::mt19937_64 rng(opts.seed);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::vector<std::pair<Vec2, Vec2>> pairs(static_cast<std::size_t>(opts.pairs));
        for (auto& p : pairs) {
            auto draw = [&] {
                const double r = opts.pair_radius * std::sqrt(U(rng)), th = 2.0 * std::numbers::pi * U(rng);
                return Vec2(r * std::cos(th), r * std::sin(th));
            };
            p.first = draw();
            p.second = draw();
        }
        std::vector<int> count(pairs.size()), conv(pairs.size());
        parallel_for(pairs.size(), [&](std::size_t i) {
            ConnectResult c = connect_points(metric, pairs[i].first, pairs[i].second, opts.connect_starts);
            count[i] = static_cast<int>(c.solutions.size());
            conv[i] = c.converged ? 1 : 0;
        });
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (count[i] >= 2) ++rep.b2_multiple;
            if (!conv[i] || count[i] == 0) ++rep.b2_unconverged;
        }
        rep.b2.value = static_cast<double>(rep.b2_multiple);
        if (rep.b2_multiple > 0)
            rep.b2.verdict = Verdict::fail;
        else
            rep.b2.verdict = rep.b2_unconverged > 0 ? Verdict::inconclusive : Verdict::pass;
        rep.b2.detail = fmt("%.0f of %.0f pairs joined by several geodesics", rep.b2_multiple, opts.pairs) +
                        fmt(", %.0f unresolved", rep.b2_unconverged);
    } catch (const std::exception& ex) {
        rep.b2.verdict = Verdict::inconclusive;
        rep.b2.detail = ex.what();
    }

    // B3: tau^2 ratios near tangential boundary starts, with the second fundamental form as cross-check
    try {
        bool clean = true;
        rep.b3_slope = -1e300;
        rep.min_sff = 1e300;
        for (int k = 0; k < opts.boundary_points; ++k) {
            const Vec2 xb = boundary_point(k, opts.boundary_points);
            const Vec2 w = normalize(metric, xb, Vec2(-xb[1], xb[0]));
            TauProbe p = tau_squared_lipschitz_probe(metric, xb, w, opts.tau_scales);
            if (k == 0) rep.b3_rows = p.rows;
            rep.b3_slope = std::max(rep.b3_slope, p.slope);
            for (const auto& row : p.rows) clean = clean && row.status == PathStatus::exited;
            rep.min_sff = std::min(rep.min_sff, second_fundamental_form(metric, xb, w).value);
        }
        rep.b3.value = rep.b3_slope;
        if (rep.b3_slope > opts.b3_slope_limit)
            rep.b3.verdict = Verdict::fail;
        else
            rep.b3.verdict = clean ? Verdict::pass : Verdict::inconclusive;
        rep.b3.detail = fmt("log-log slope of the tau^2 ratio %.3f, min second fundamental form %.3e", rep.b3_slope,
                            rep.min_sff);
    } catch (const std::exception& ex) {
        rep.b3.verdict = Verdict::inconclusive;
        rep.b3.detail = ex.what();
    }

    // conjugate-point scan along inflow rays
    try {
        RaySet rays = trace_rays(metric, inflow_samples(metric, opts.jacobi_boundary, opts.jacobi_angles));
        std::vector<double> first(rays.rays.size(), -1.0);
        std::vector<int> endpoint(rays.rays.size(), 0);
        parallel_for(rays.rays.size(), [&](std::size_t i) {
            JacobiData j = jacobi_index(metric, rays.rays[i].path);
            for (const auto& z : j.zeros) {
                if (z.endpoint) {
                    endpoint[i] = 1;
                } else if (first[i] < 0) {
                    first[i] = z.t;
                }
            }
        });
        for (std::size_t i = 0; i < first.size(); ++i) {
            rep.endpoint_zeros += endpoint[i];
            if (first[i] >= 0 && (!rep.first_conjugate || first[i] < *rep.first_conjugate)) rep.first_conjugate = first[i];
        }
        if (rep.first_conjugate && rep.b1.verdict == Verdict::pass)
            rep.b1.detail += "; warning: conjugate points found although the minimization passed";
    } catch (const std::exception& ex) {
        rep.b1.detail += std::string("; conjugate scan failed: ") + ex.what();
    }
    return rep;
}

} // namespace xrt
