#include "xrt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace xrt {

double relative_residual(double lhs, double rhs, double floor) {
    return std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), floor});
}

void settle(VerificationReport& r, double scale) {
    r.abs_residual = std::abs(r.lhs - r.rhs);
    r.rel_residual = scale > 0.0 ? r.abs_residual / std::max(scale, 1e-14) : relative_residual(r.lhs, r.rhs);
    r.passed = r.rel_residual <= r.tolerance;
}

VerificationReport refinement_study(const std::function<VerificationReport(const GridSpec&)>& run,
                                    const std::vector<GridSpec>& coarse_to_fine, double growth, double floor) {
    if (coarse_to_fine.empty()) throw UsageError("refinement_study: no grids");
    std::vector<VerificationReport> all;
    for (const GridSpec& g : coarse_to_fine) all.push_back(run(g));
    VerificationReport out = all.back();
    bool monotone = true;
    for (std::size_t i = 0; i < all.size(); ++i) {
        out.trend.push_back({all[i].grid, all[i].rel_residual});
        if (i == 0) continue;
        const double coarse = all[i - 1].rel_residual, fine = all[i].rel_residual;
        if (coarse <= floor && fine <= floor) continue;
        if (coarse < growth * fine) monotone = false;
    }
    if (!monotone) out.notes.push_back("residual does not shrink by the expected factor under refinement");
    out.terms["refinement_ok"] = monotone ? 1.0 : 0.0;
    out.passed = out.passed && monotone;
    return out;
}

namespace {

VerificationReport base_report(const std::string& check, const BundleGrid& grid, double tolerance) {
    VerificationReport r;
    r.check = check;
    r.metric = grid.metric().id();
    r.grid = grid.descriptor();
    r.tolerance = tolerance;
    return r;
}

void require_vanishing(const BundleGrid& grid, const ScalarField& u, const std::string& who) {
    if (!u.vanishes_on_boundary) throw UsageError(who + ": u must be flagged as vanishing on the boundary");
    assert_vanishing(grid, u.values, who + " input");
}

} // namespace

VerificationReport pestov_residual(const BundleGrid& grid, const ScalarField& u, double tolerance) {
    require_vanishing(grid, u, "pestov_residual");
    VerificationReport r = base_report("pestov", grid, tolerance);
    ScalarField xu = apply_X(grid, u);
    SectionN vxu = v_grad(grid, xu);
    SectionN vu = v_grad(grid, u);
    const double lhs = inner(grid, vxu, vxu);
    const double q = q_form(grid, vu);
    const double xu2 = inner(grid, xu, xu);
    r.lhs = lhs;
    r.rhs = q + xu2;
    r.terms["|VXu|^2"] = lhs;
    r.terms["Q(Vu)"] = q;
    r.terms["|Xu|^2"] = xu2;
    settle(r);
    return r;
}

double q_form(const BundleGrid& grid, const SectionN& W) {
    SectionN xw = apply_X_section(grid, W);
    return inner(grid, xw, xw) - inner(grid, curvature_op(grid, W), W);
}

VerificationReport commutator_check(const BundleGrid& grid, const ScalarField& u, const SectionN& V, double tolerance) {
    require_vanishing(grid, u, "commutator_check");
    VerificationReport r = base_report("commutator", grid, tolerance);
    const double t_h = inner(grid, h_grad(grid, u), V);
    const double t_v = inner(grid, v_grad(grid, u), apply_X_section(grid, V));
    const double t_x = inner(grid, apply_X(grid, u), v_div(grid, V));
    r.lhs = t_h;
    r.rhs = t_v - t_x;
    r.terms["<Hu,V>"] = t_h;
    r.terms["<Vu,XV>"] = t_v;
    r.terms["<Xu,divV>"] = t_x;
    settle(r, std::max({std::abs(t_h), std::abs(t_v), std::abs(t_x)}));
    return r;
}

VerificationReport oneform_cancellation(const BundleGrid& grid, const OneFormTarget& h, double tolerance) {
    VerificationReport r = base_report("cancellation", grid, tolerance);
    ScalarField ht = grid.scalar([&](const Vec2& x, const Vec2& v, double) { return h(x).dot(v); });
    SectionN vh = v_grad(grid, ht);
    r.lhs = inner(grid, vh, vh);
    r.rhs = (grid.metric().dimension() - 1) * inner(grid, ht, ht);
    settle(r);
    if (r.lhs == 0.0 && r.rhs == 0.0) r.passed = true;
    return r;
}

VerificationReport santalo_check(const BundleGrid& grid, const RaySet& rays, const ScalarField& F, double tolerance) {
    VerificationReport r = base_report("santalo", grid, tolerance);
    r.lhs = integrate(grid, F);
    std::vector<double> per(rays.rays.size());
    parallel_for(per.size(), [&](std::size_t i) {
        const Ray& ray = rays.rays[i];
        per[i] = ray.sample.weight * ray_integral(ray.path, [&](const Vec2& x, const Vec2& v) {
                     return grid.interpolate(F.values, x, grid.angle_of(x, v));
                 });
    });
    KahanSum sum;
    for (double p : per) sum.add(p);
    r.rhs = sum.value();
    const std::size_t total = rays.rays.size() + rays.dropped.size();
    const double dropped = total ? static_cast<double>(rays.dropped.size()) / static_cast<double>(total) : 0.0;
    r.terms["dropped_fraction"] = dropped;
    if (dropped > 0.01) r.notes.push_back("warning: more than 1% of the rays did not exit");
    settle(r);
    if (r.lhs == 0.0 && r.rhs == 0.0) r.passed = true;
    return r;
}

const std::vector<SobolevNorm>& mollification_norms() {
    static const std::vector<SobolevNorm> n = {SobolevNorm::W22,         SobolevNorm::W1inf,
                                               SobolevNorm::W21_inverse, SobolevNorm::Linf_inverse,
                                               SobolevNorm::W11_christoffel, SobolevNorm::Linf_christoffel,
                                               SobolevNorm::L1_curvature};
    return n;
}

MollificationStudy mollification_report(const MetricField& metric, const std::vector<int>& alphas,
                                        const std::vector<SobolevNorm>& norms, double noise,
                                        const DiskQuadrature& quad) {
    if (alphas.size() < 2) throw UsageError("mollification_report: need at least two alphas");
    MollificationStudy s;
    s.metric = metric.id();
    s.alphas = alphas;
    s.norms = norms;
    s.noise = noise;
    for (int a : alphas) {
        MollifierSpec spec;
        spec.alpha = a;
        s.distance.push_back(sobolev_distances(mollify(metric, spec), metric, norms, quad));
    }
    s.passed = true;
    for (std::size_t k = 0; k < norms.size(); ++k) {
        bool dec = true, floor = false;
        for (std::size_t i = 1; i < alphas.size(); ++i) {
            const double prev = s.distance[i - 1][k], cur = s.distance[i][k];
            if (prev <= 1e-10 && cur <= 1e-10)
                floor = true;
            else if (!(cur < (1.0 + noise) * prev))
                dec = false;
        }
        if (floor) s.notes.push_back(to_string(norms[k]) + " sits at roundoff for some alphas");
        s.decreasing.push_back(dec);
        const auto& req = mollification_norms();
        if (!dec && std::find(req.begin(), req.end(), norms[k]) != req.end()) {
            s.passed = false;
            s.notes.push_back(to_string(norms[k]) + " does not decrease along alpha");
        }
    }
    return s;
}

std::string mollification_csv(const MollificationStudy& s) {
    std::ostringstream out;
    out << "alpha";
    for (SobolevNorm n : s.norms) out << ',' << to_string(n);
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < s.alphas.size(); ++i) {
        out << s.alphas[i];
        for (double d : s.distance[i]) {
            std::snprintf(buf, sizeof buf, ",%.10e", d);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace xrt
