#include "xrt/transform.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

namespace xrt {

std::vector<InflowSample> inflow_samples(const MetricField& metric, int n_boundary, int n_angles) {
    if (n_boundary < 4 || n_angles < 4) throw UsageError("inflow_samples: counts must be at least 4");
    const GaussRule rule = gauss_legendre(n_angles);
    const double dtheta = 2.0 * std::numbers::pi / n_boundary;
    std::vector<InflowSample> out;
    out.reserve(static_cast<std::size_t>(n_boundary) * n_angles);
    int id = 0;
    for (int b = 0; b < n_boundary; ++b) {
        const double th = (b + 0.5) * dtheta;
        const Vec2 x(std::cos(th), std::sin(th));
        const Mat2 g = metric.g(x);
        const Vec2 t(-std::sin(th), std::cos(th));
        const double dl = std::sqrt(t.dot(g * t)) * dtheta;
        const Vec2 nu = inward_normal(metric, x);
        const Vec2 T = rotate_quarter(g, nu);
        for (int a = 0; a < n_angles; ++a) {
            const double ang = 0.5 * std::numbers::pi * rule.nodes[a];
            InflowSample s;
            s.id = id++;
            s.x = x;
            s.v = std::cos(ang) * nu + std::sin(ang) * T;
            s.arclength = th;
            s.angle = ang;
            s.weight = std::cos(ang) * 0.5 * std::numbers::pi * rule.weights[a] * dl;
            out.push_back(s);
        }
    }
    return out;
}

RaySet trace_rays(const MetricField& metric, const std::vector<InflowSample>& samples, const GeodesicOptions& opts) {
    GeodesicOptions o = opts;
    o.record = true;
    std::vector<Ray> all(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        all[i].sample = samples[i];
        all[i].path = integrate_geodesic(metric, {samples[i].x, samples[i].v}, o);
    });
    RaySet out;
    for (auto& r : all) {
        if (r.path.status == PathStatus::exited && r.path.t.size() >= 2)
            out.rays.push_back(std::move(r));
        else
            out.dropped.push_back(r.sample.id);
    }
    return out;
}

double ray_integral(const GeodesicPath& path, const std::function<double(const Vec2& x, const Vec2& v)>& integrand) {
    KahanSum sum;
    if (path.t.size() < 2) return 0.0;
    double f0 = integrand(path.x[0], path.v[0]);
    for (std::size_t k = 0; k + 1 < path.t.size(); ++k) {
        const double dt = path.t[k + 1] - path.t[k];
        const Vec2 &x0 = path.x[k], &x1 = path.x[k + 1], &v0 = path.v[k], &v1 = path.v[k + 1];
        const Vec2 xm = 0.5 * (x0 + x1) + dt / 8.0 * (v0 - v1);
        const Vec2 vm = 1.5 / dt * (x1 - x0) - 0.25 * (v0 + v1);
        const double f1 = integrand(x1, v1);
        sum.add(dt / 6.0 * (f0 + 4.0 * integrand(xm, vm) + f1));
        f0 = f1;
    }
    return sum.value();
}

std::vector<double> xray(const RaySet& rays, const ScalarTarget& f) {
    std::vector<double> out(rays.rays.size());
    parallel_for(out.size(), [&](std::size_t i) {
        out[i] = ray_integral(rays.rays[i].path, [&](const Vec2& x, const Vec2&) { return f(x); });
    });
    return out;
}

std::vector<double> xray(const RaySet& rays, const OneFormTarget& h) {
    std::vector<double> out(rays.rays.size());
    parallel_for(out.size(), [&](std::size_t i) {
        out[i] = ray_integral(rays.rays[i].path, [&](const Vec2& x, const Vec2& v) { return h(x).dot(v); });
    });
    return out;
}

IntegralFunction integral_function(const BundleGrid& grid, const ScalarTarget& f, double step) {
    GeodesicOptions opts;
    opts.step = step > 0.0 ? step : 0.25 * grid.spacing();
    const int m = grid.n_psi();
    IntegralFunction out;
    out.u = grid.zeros_scalar();
    std::vector<char> bad(grid.size(), 0);
    parallel_for(grid.spatial_count(), [&](std::size_t s) {
        for (int k = 0; k < m; ++k) {
            GeodesicPath p = integrate_geodesic(grid.metric(), {grid.node(s).x, grid.v(s, k)}, opts);
            if (p.status != PathStatus::exited) {
                bad[s * m + k] = 1;
                continue;
            }
            out.u.values[s * m + k] = ray_integral(p, [&](const Vec2& x, const Vec2&) { return f(x); });
        }
    });
    for (std::size_t q = 0; q < bad.size(); ++q)
        if (bad[q]) out.masked.push_back(q);
    return out;
}

std::string to_string(TargetKind k) { return k == TargetKind::scalar ? "scalar" : "one_form"; }

NullspaceReport nullspace_analysis(const TransformMatrix& T, const Eigen::MatrixXd* gauge, double rel_tol) {
    if (T.A.rows() == 0 || T.A.cols() == 0) throw UsageError("nullspace_analysis: empty matrix");
    NullspaceReport rep;
    // exact duplicate rows carry no information; drop them first
    std::map<std::vector<double>, int> seen;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < T.A.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(T.A.cols()));
        for (Eigen::Index c = 0; c < T.A.cols(); ++c) row[static_cast<std::size_t>(c)] = T.A(r, c);
        if (seen.emplace(std::move(row), 1).second)
            keep.push_back(r);
        else
            ++rep.duplicate_rows;
    }
    Eigen::MatrixXd A(static_cast<Eigen::Index>(keep.size()), T.A.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) A.row(static_cast<Eigen::Index>(i)) = T.A.row(keep[i]);

    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
    Eigen::VectorXd sv = svd.singularValues();
    const Eigen::Index n = A.cols();
    if (sv.size() < n) {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
        full.head(sv.size()) = sv;
        sv = full;
    }
    rep.singular_values = sv;
    const double smax = sv(0);
    rep.sigma_ratio = smax > 0 ? sv(n - 1) / smax : 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (sv(i) < rel_tol * smax) ++rep.null_dimension;
    if (rep.null_dimension > 0) {
        if (svd.matrixV().cols() < n) {
            // fewer rows than columns: complete the basis from a full decomposition
            Eigen::JacobiSVD<Eigen::MatrixXd> full(A, Eigen::ComputeFullV);
            rep.null_basis = full.matrixV().rightCols(rep.null_dimension);
        } else {
            rep.null_basis = svd.matrixV().rightCols(rep.null_dimension);
        }
    }
    if (gauge) {
        Eigen::BDCSVD<Eigen::MatrixXd> gs(*gauge, Eigen::ComputeThinU);
        const Eigen::VectorXd gsv = gs.singularValues();
        int rank = 0;
        for (Eigen::Index i = 0; i < gsv.size(); ++i)
            if (gsv(i) > 1e-10 * gsv(0)) ++rank;
        rep.gauge_dimension = rank;
        if (rank > 0 && rep.null_dimension > 0) {
            Eigen::MatrixXd Qg = gs.matrixU().leftCols(rank);
            Eigen::JacobiSVD<Eigen::MatrixXd> cs(rep.null_basis.transpose() * Qg);
            const Eigen::VectorXd c = cs.singularValues();
            double smallest = c.size() ? c(c.size() - 1) : 0.0;
            rep.max_principal_angle_deg = std::acos(std::clamp(smallest, 0.0, 1.0)) * 180.0 / std::numbers::pi;
        } else {
            rep.max_principal_angle_deg = rank == rep.null_dimension ? 0.0 : 90.0;
        }
    }
    return rep;
}

Reconstruction reconstruct(const TransformMatrix& T, const Eigen::VectorXd& data, double lambda,
                           const Eigen::VectorXd* reference, const Eigen::VectorXd* mass) {
    if (!(lambda > 0.0)) throw UsageError("reconstruct: regularization must be positive");
    if (data.size() != T.A.rows()) throw UsageError("reconstruct: data length differs from the ray count");
    const Eigen::MatrixXd WA = T.weights.asDiagonal() * T.A;
    Eigen::MatrixXd N = T.A.transpose() * WA;
    N.diagonal().array() += lambda;
    Eigen::VectorXd rhs = WA.transpose() * data;
    Reconstruction out;
    out.coeffs = N.ldlt().solve(rhs);
    if (reference) {
        Eigen::VectorXd w = mass ? *mass : Eigen::VectorXd::Ones(reference->size());
        Eigen::VectorXd d = out.coeffs - *reference;
        double num = std::sqrt((w.array() * d.array().square()).sum());
        double den = std::sqrt((w.array() * reference->array().square()).sum());
        out.relative_error = den > 0 ? num / den : num;
    }
    return out;
}

double gauge_residual(const Eigen::VectorXd& c, const Eigen::MatrixXd& G) {
    const double nc = c.norm();
    if (nc == 0.0) return 0.0;
    Eigen::VectorXd coef = G.colPivHouseholderQr().solve(c);
    return (c - G * coef).norm() / nc;
}

void write_sinogram(const std::string& path, const RaySet& rays, const std::vector<double>& values,
                    const std::string& provenance) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path);
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << "ray_id,boundary_arclength,inward_angle,weight,value\n";
    char buf[160];
    for (std::size_t i = 0; i < rays.rays.size(); ++i) {
        const InflowSample& s = rays.rays[i].sample;
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", s.id, s.arclength, s.angle, s.weight, values[i]);
        out << buf;
    }
}

void save_matrix(const std::string& path, const TransformMatrix& T) {
    std::ofstream bin(path, std::ios::binary);
    if (!bin) throw UsageError("cannot write " + path);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = T.A;
    bin.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
    nlohmann::json side = {{"shape", {T.A.rows(), T.A.cols()}},
                           {"dtype", "float64"},
                           {"order", "row-major"},
                           {"kind", to_string(T.kind)},
                           {"basis", T.basis},
                           {"metric", T.metric_id},
                           {"ray_ids", T.ray_ids},
                           {"weights", std::vector<double>(T.weights.data(), T.weights.data() + T.weights.size())}};
    std::ofstream js(path + ".json");
    js << side.dump(1) << '\n';
}

TransformMatrix load_matrix(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw DataError("missing matrix sidecar " + path + ".json");
    TransformMatrix T;
    try {
        nlohmann::json side = nlohmann::json::parse(js);
        auto shape = side.at("shape").get<std::vector<Eigen::Index>>();
        if (shape.size() != 2) throw DataError(path + ": bad shape");
        T.kind = side.at("kind") == "scalar" ? TargetKind::scalar : TargetKind::one_form;
        T.basis = side.at("basis");
        T.metric_id = side.at("metric");
        T.ray_ids = side.at("ray_ids").get<std::vector<int>>();
        auto w = side.at("weights").get<std::vector<double>>();
        T.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(shape[0], shape[1]);
        std::ifstream bin(path, std::ios::binary);
        bin.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
        if (!bin || bin.gcount() != static_cast<std::streamsize>(sizeof(double) * rm.size()))
            throw DataError(path + ": matrix data shorter than its shape");
        T.A = rm;
        if (T.weights.size() != T.A.rows() || static_cast<Eigen::Index>(T.ray_ids.size()) != T.A.rows())
            throw DataError(path + ": sidecar row data does not match the shape");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad sidecar: " + e.what());
    }
    return T;
}

} // namespace xrt
