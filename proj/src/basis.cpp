#include "xrt/transform.hpp"

#include <algorithm>
#include <cmath>

namespace xrt {

namespace {

// Parameters in (0, 1) where the segment p -> q crosses the mesh lines of an n x n mesh on [-1, 1]^2.
std::vector<double> mesh_crossings(const Vec2& p, const Vec2& q, int n) {
    const double h = 2.0 / n;
    std::vector<double> cuts = {0.0, 1.0};
    for (int axis = 0; axis < 2; ++axis) {
        double a = p[axis], b = q[axis];
        if (a == b) continue;
        double lo = std::min(a, b), hi = std::max(a, b);
        for (int l = static_cast<int>(std::ceil((lo + 1.0) / h)); l * h - 1.0 < hi; ++l) {
            double s = (l * h - 1.0 - a) / (b - a);
            if (s > 0.0 && s < 1.0) cuts.push_back(s);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    return cuts;
}

int cell_of(double c, int n) { return std::clamp(static_cast<int>(std::floor((c + 1.0) * n / 2.0)), 0, n - 1); }

// Length of {y in [y0, y1] : x^2 + y^2 <= 1} integrated over x in [x0, x1].
double clipped_area(double x0, double x1, double y0, double y1) {
    const int N = 512;
    double dx = (x1 - x0) / N, sum = 0.0;
    for (int i = 0; i < N; ++i) {
        double x = x0 + (i + 0.5) * dx;
        if (std::abs(x) >= 1.0) continue;
        double c = std::sqrt(1.0 - x * x);
        sum += std::max(0.0, std::min(y1, c) - std::max(y0, -c));
    }
    return sum * dx;
}

} // namespace

PixelBasis PixelBasis::build(int n, double sliver) {
    if (n < 2) throw UsageError("pixel basis needs n >= 2");
    PixelBasis B;
    B.n = n;
    B.sliver = sliver;
    const double h = 2.0 / n;
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
            a[b * n + c] = clipped_area(-1 + c * h, -1 + (c + 1) * h, -1 + b * h, -1 + (b + 1) * h);
    B.owner.assign(a.size(), -1);
    const double full = h * h;
    for (std::size_t p = 0; p < a.size(); ++p)
        if (a[p] >= sliver * full) {
            B.owner[p] = B.size();
            B.area.push_back(a[p]);
        }
    // slivers join the largest kept 4-neighbour; chains resolve over repeated passes
    for (int pass = 0; pass < 4; ++pass) {
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
                const int p = b * n + c;
                if (B.owner[p] >= 0 || a[p] <= 0.0) continue;
                int best = -1;
                double best_area = -1;
                const int nb[4][2] = {{b - 1, c}, {b + 1, c}, {b, c - 1}, {b, c + 1}};
                for (auto [bb, cc] : nb) {
                    if (bb < 0 || bb >= n || cc < 0 || cc >= n) continue;
                    const int q = bb * n + cc;
                    if (B.owner[q] >= 0 && B.area[B.owner[q]] > best_area) {
                        best = B.owner[q];
                        best_area = B.area[best];
                    }
                }
                if (best >= 0) {
                    B.owner[p] = best;
                    B.area[best] += a[p];
                }
            }
    }
    return B;
}

Eigen::VectorXd PixelBasis::project(const ScalarTarget& f, int sub) const {
    Eigen::VectorXd num = Eigen::VectorXd::Zero(size()), den = Eigen::VectorXd::Zero(size());
    const double h = 2.0 / n, hs = h / sub;
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
            const int o = owner[b * n + c];
            if (o < 0) continue;
            for (int i = 0; i < sub; ++i)
                for (int j = 0; j < sub; ++j) {
                    Vec2 x(-1 + c * h + (j + 0.5) * hs, -1 + b * h + (i + 0.5) * hs);
                    if (x.squaredNorm() > 1.0) continue;
                    num[o] += f(x);
                    den[o] += 1.0;
                }
        }
    for (int o = 0; o < size(); ++o) num[o] = den[o] > 0 ? num[o] / den[o] : 0.0;
    return num;
}

double PixelBasis::evaluate(const Eigen::VectorXd& c, const Vec2& x) const {
    if (x.squaredNorm() > 1.0) return 0.0;
    const int o = owner[cell_of(x[1], n) * n + cell_of(x[0], n)];
    return o < 0 ? 0.0 : c[o];
}

std::string PixelBasis::descriptor() const {
    return "pixel(n=" + std::to_string(n) + ",elements=" + std::to_string(size()) + ")";
}

EdgeBasis EdgeBasis::build(int n) {
    if (n < 2) throw UsageError("edge basis needs n >= 2");
    EdgeBasis B;
    B.n = n;
    const double h = 2.0 / n;
    auto node_in = [&](int a, int b) { return Vec2(-1 + a * h, -1 + b * h).norm() <= 1.0 + 1e-12; };
    B.cell_inside.assign(static_cast<std::size_t>(n) * n, false);
    for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a)
            B.cell_inside[b * n + a] = node_in(a, b) && node_in(a + 1, b) && node_in(a, b + 1) && node_in(a + 1, b + 1);
    auto inside = [&](int a, int b) { return a >= 0 && a < n && b >= 0 && b < n && B.cell_inside[b * n + a]; };
    const int nx = n * (n + 1);   // x-edges (a, b): a < n, b <= n, id b n + a
    const int ny = (n + 1) * n;   // y-edges (a, b): a <= n, b < n, id nx + b (n + 1) + a
    B.edge_index.assign(nx + ny, -1);
    for (int b = 0; b <= n; ++b)
        for (int a = 0; a < n; ++a)
            if (inside(a, b - 1) || inside(a, b)) {
                B.edge_index[b * n + a] = B.size();
                B.edges.push_back({0, b * n + a});
            }
    for (int b = 0; b < n; ++b)
        for (int a = 0; a <= n; ++a)
            if (inside(a - 1, b) || inside(a, b)) {
                B.edge_index[nx + b * (n + 1) + a] = B.size();
                B.edges.push_back({1, nx + b * (n + 1) + a});
            }
    for (int b = 1; b < n; ++b)
        for (int a = 1; a < n; ++a)
            if (inside(a - 1, b - 1) && inside(a, b - 1) && inside(a - 1, b) && inside(a, b))
                B.gauge_nodes.push_back(b * (n + 1) + a);
    return B;
}

Eigen::MatrixXd EdgeBasis::gauge_matrix() const {
    const int nx = n * (n + 1);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(size(), static_cast<Eigen::Index>(gauge_nodes.size()));
    for (std::size_t k = 0; k < gauge_nodes.size(); ++k) {
        const int a = gauge_nodes[k] % (n + 1), b = gauge_nodes[k] / (n + 1);
        const auto col = static_cast<Eigen::Index>(k);
        // the edge coefficient of dp is p(head) - p(tail)
        G(edge_index[b * n + a], col) = -1.0;
        G(edge_index[b * n + a - 1], col) = 1.0;
        G(edge_index[nx + b * (n + 1) + a], col) = -1.0;
        G(edge_index[nx + (b - 1) * (n + 1) + a], col) = 1.0;
    }
    return G;
}

Eigen::VectorXd EdgeBasis::interpolate(const OneFormTarget& h1) const {
    const int nx = n * (n + 1);
    const double h = 2.0 / n;
    const GaussRule rule = gauss_legendre(4);
    Eigen::VectorXd c(size());
    for (int e = 0; e < size(); ++e) {
        const auto [dir, id] = edges[e];
        Vec2 tail, t;
        if (dir == 0) {
            tail = Vec2(-1 + (id % n) * h, -1 + (id / n) * h);
            t = Vec2(h, 0);
        } else {
            const int local = id - nx;
            tail = Vec2(-1 + (local % (n + 1)) * h, -1 + (local / (n + 1)) * h);
            t = Vec2(0, h);
        }
        double sum = 0.0;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q)
            sum += 0.5 * rule.weights[q] * h1(tail + 0.5 * (1 + rule.nodes[q]) * t).dot(t);
        c[e] = sum;
    }
    return c;
}

std::string EdgeBasis::descriptor() const {
    return "edge(n=" + std::to_string(n) + ",elements=" + std::to_string(size()) + ")";
}

TransformMatrix assemble_forward(const RaySet& rays, const PixelBasis& basis, const std::string& metric_id) {
    if (rays.rays.empty() || basis.size() == 0) throw UsageError("assemble_forward: empty rays or basis");
    TransformMatrix T;
    T.kind = TargetKind::scalar;
    T.basis = basis.descriptor();
    T.metric_id = metric_id;
    const auto R = static_cast<Eigen::Index>(rays.rays.size());
    T.A = Eigen::MatrixXd::Zero(R, basis.size());
    T.weights.resize(R);
    T.ray_ids.resize(rays.rays.size());
    const int n = basis.n;
    parallel_for(rays.rays.size(), [&](std::size_t r) {
        const Ray& ray = rays.rays[r];
        T.weights[static_cast<Eigen::Index>(r)] = ray.sample.weight;
        T.ray_ids[r] = ray.sample.id;
        const auto& P = ray.path;
        for (std::size_t k = 0; k + 1 < P.x.size(); ++k) {
            const Vec2 p = P.x[k], q = P.x[k + 1];
            const double dt = P.t[k + 1] - P.t[k];
            auto cuts = mesh_crossings(p, q, n);
            for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
                const double frac = cuts[c + 1] - cuts[c];
                if (frac <= 0.0) continue;
                Vec2 mid = p + 0.5 * (cuts[c] + cuts[c + 1]) * (q - p);
                int o = basis.owner[cell_of(mid[1], n) * n + cell_of(mid[0], n)];
                if (o >= 0) T.A(static_cast<Eigen::Index>(r), o) += dt * frac;
            }
        }
    });
    return T;
}

TransformMatrix assemble_forward(const RaySet& rays, const EdgeBasis& basis, const std::string& metric_id) {
    if (rays.rays.empty() || basis.size() == 0) throw UsageError("assemble_forward: empty rays or basis");
    TransformMatrix T;
    T.kind = TargetKind::one_form;
    T.basis = basis.descriptor();
    T.metric_id = metric_id;
    const auto R = static_cast<Eigen::Index>(rays.rays.size());
    T.A = Eigen::MatrixXd::Zero(R, basis.size());
    T.weights.resize(R);
    T.ray_ids.resize(rays.rays.size());
    const int n = basis.n, nx = n * (n + 1);
    const double h = 2.0 / n;
    parallel_for(rays.rays.size(), [&](std::size_t r) {
        const Ray& ray = rays.rays[r];
        T.weights[static_cast<Eigen::Index>(r)] = ray.sample.weight;
        T.ray_ids[r] = ray.sample.id;
        const auto row = static_cast<Eigen::Index>(r);
        const auto& P = ray.path;
        for (std::size_t k = 0; k + 1 < P.x.size(); ++k) {
            const Vec2 p = P.x[k], q = P.x[k + 1];
            auto cuts = mesh_crossings(p, q, n);
            for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
                const double frac = cuts[c + 1] - cuts[c];
                if (frac <= 0.0) continue;
                const Vec2 mid = p + 0.5 * (cuts[c] + cuts[c + 1]) * (q - p);
                const int a = cell_of(mid[0], n), b = cell_of(mid[1], n);
                if (!basis.cell_inside[b * n + a]) continue;
                const Vec2 d = frac * (q - p);
                const double sx = (mid[0] - (-1 + a * h)) / h, sy = (mid[1] - (-1 + b * h)) / h;
                auto add = [&](int id, double w) {
                    const int e = basis.edge_index[id];
                    if (e >= 0) T.A(row, e) += w;
                };
                // unit edge integrals: weights scale by 1/h
                add(b * n + a, d[0] * (1 - sy) / h);
                add((b + 1) * n + a, d[0] * sy / h);
                add(nx + b * (n + 1) + a, d[1] * (1 - sx) / h);
                add(nx + b * (n + 1) + a + 1, d[1] * sx / h);
            }
        }
    });
    return T;
}

} // namespace xrt
