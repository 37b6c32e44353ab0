#include "xrt/metric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace xrt {

namespace {

struct KernelNode {
    Vec2 y;
    double w;        // normalized weight including the profile value
    Vec2 dlog;       // grad(phi)/phi at y
};

std::vector<KernelNode> kernel_nodes(const MollifierSpec& spec) {
    if (spec.radial_nodes < 2 || spec.angular_nodes < 4) throw UsageError("mollifier: quadrature too coarse");
    GaussRule rule = gauss_legendre(spec.radial_nodes);
    std::vector<KernelNode> nodes;
    double total = 0.0;
    for (int a = 0; a < spec.radial_nodes; ++a) {
        double rho = 0.5 * (rule.nodes[a] + 1.0);
        double wr = 0.5 * rule.weights[a];
        double q = 1.0 - rho * rho;
        double prof = std::exp(-1.0 / q);
        for (int b = 0; b < spec.angular_nodes; ++b) {
            double th = 2.0 * std::numbers::pi * (b + 0.5) / spec.angular_nodes;
            Vec2 y(rho * std::cos(th), rho * std::sin(th));
            double w = prof * rho * wr * 2.0 * std::numbers::pi / spec.angular_nodes;
            nodes.push_back({y, w, -2.0 * y / (q * q)});
            total += w;
        }
    }
    for (auto& n : nodes) n.w /= total;
    return nodes;
}

class MollifiedSource : public MetricSource {
public:
    MollifiedSource(MetricField base, MollifierSpec spec)
        : base_(std::move(base)), spec_(spec), nodes_(kernel_nodes(spec)) {}

    Mat2 g(const Vec2& x) const override {
        Mat2 out = Mat2::Zero();
        for (const auto& k : nodes_) out += k.w * extended_jet_first(x - k.y / spec_.alpha).g;
        return out;
    }
    MetricDeriv dg(const Vec2& x) const override {
        Mat2 g0;
        MetricDeriv d;
        first_jet(x, g0, d);
        return d;
    }
    void first_jet(const Vec2& x, Mat2& g_out, MetricDeriv& dg_out) const override {
        g_out.setZero();
        dg_out = {Mat2::Zero(), Mat2::Zero()};
        for (const auto& k : nodes_) {
            MetricJet j = extended_jet_first(x - k.y / spec_.alpha);
            g_out += k.w * j.g;
            dg_out[0] += k.w * j.dg[0];
            dg_out[1] += k.w * j.dg[1];
        }
    }
    // d_k d_l g_alpha = alpha * sum w (d_l phi / phi)(y) d_k gbar(x - y/alpha), by parts in y.
    bool d2g(const Vec2& x, MetricHessian& out) const override {
        for (auto& row : out)
            for (auto& m : row) m.setZero();
        const double a = spec_.alpha;
        for (const auto& k : nodes_) {
            MetricJet j = extended_jet_first(x - k.y / a);
            for (int p = 0; p < 2; ++p)
                for (int l = 0; l < 2; ++l) out[p][l] += (a * k.w * k.dlog[l]) * j.dg[p];
        }
        Mat2 mixed = 0.5 * (out[0][1] + out[1][0]);
        out[0][1] = mixed;
        out[1][0] = mixed;
        return true;
    }
    bool covers(const Vec2&, double) const override { return true; }

private:
    MetricJet extended_jet_first(const Vec2& x) const { return extended_jet(base_, x, spec_.clamp_radius); }

    MetricField base_;
    MollifierSpec spec_;
    std::vector<KernelNode> nodes_;
};

} // namespace

double kernel_mass(const MollifierSpec& spec) {
    double s = 0.0;
    for (const auto& k : kernel_nodes(spec)) s += k.w;
    return s;
}

MetricJet extended_jet(const MetricField& metric, const Vec2& x, double clamp_radius) {
    MetricJet out;
    for (auto& row : out.d2g)
        for (auto& m : row) m.setZero();
    double rho = x.norm();
    if (rho <= 1.0) {
        metric.source().first_jet(x, out.g, out.dg);
        return out;
    }
    // gbar(1 + s) = 6 g(1 - s) - 8 g(1 - 2s) + 3 g(1 - 3s) along the ray, matching g up to second order.
    const double max_s = clamp_radius - 1.0;
    double s = std::min(rho - 1.0, max_s);
    bool clamped = rho - 1.0 >= max_s;
    const double coef[3] = {6.0, -8.0, 3.0};
    out.g.setZero();
    out.dg = {Mat2::Zero(), Mat2::Zero()};
    Vec2 u = x / rho;
    Mat2 P = Mat2::Identity() / rho - x * x.transpose() / (rho * rho * rho);
    for (int m = 0; m < 3; ++m) {
        int k = m + 1;
        double c = 1.0 - k * s;
        Vec2 p = c * u;
        Mat2 gp;
        MetricDeriv dgp;
        metric.source().first_jet(p, gp, dgp);
        // Jacobian of x -> c(|x|) x/|x|
        Mat2 J = c * P;
        if (!clamped) J += -k * u * u.transpose();
        out.g += coef[m] * gp;
        for (int j = 0; j < 2; ++j) {
            Mat2 d = J(0, j) * dgp[0] + J(1, j) * dgp[1];
            out.dg[j] += coef[m] * d;
        }
    }
    return out;
}

MetricField mollify(const MetricField& metric, const MollifierSpec& spec) {
    if (spec.alpha < 1) throw UsageError("mollify: alpha must be >= 1");
    if (!(spec.clamp_radius > 1.0 && spec.clamp_radius <= 4.0 / 3.0))
        throw UsageError("mollify: clamp radius must lie in (1, 4/3]");
    auto src = std::make_shared<MollifiedSource>(metric, spec);
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 16; ++i) {
        double r = i / 16.0;
        int na = i == 0 ? 1 : 32;
        for (int j = 0; j < na; ++j) {
            double phi = 2.0 * std::numbers::pi * j / 32.0;
            Mat2 g = src->g(Vec2(r * std::cos(phi), r * std::sin(phi)));
            double tr = g.trace(), det = g.determinant();
            double lo = 0.5 * tr - std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
            worst = std::min(worst, lo);
        }
    }
    if (!(worst > 0.0)) throw AlphaTooSmall(spec.alpha, worst);
    return MetricField(src, "mollified(" + metric.id() + ",alpha=" + std::to_string(spec.alpha) + ")",
                       Backing::mollified, 1e-4, 0.95 * worst);
}

DiskQuadrature DiskQuadrature::polar(int radial_panels, int order, int n_theta) {
    if (radial_panels < 1 || order < 1 || n_theta < 4) throw UsageError("disk quadrature: bad resolution");
    GaussRule rule = gauss_legendre(order);
    DiskQuadrature q;
    const double dr = 1.0 / radial_panels;
    const double dth = 2.0 * std::numbers::pi / n_theta;
    for (int p = 0; p < radial_panels; ++p)
        for (int a = 0; a < order; ++a) {
            double r = dr * (p + 0.5 * (rule.nodes[a] + 1.0));
            double wr = 0.5 * dr * rule.weights[a] * r;
            for (int b = 0; b < n_theta; ++b) {
                double th = dth * (b + 0.5);
                q.points.emplace_back(r * std::cos(th), r * std::sin(th));
                q.weights.push_back(wr * dth);
            }
        }
    return q;
}

std::string to_string(SobolevNorm n) {
    switch (n) {
    case SobolevNorm::W22: return "g_W22";
    case SobolevNorm::W1inf: return "g_W1inf";
    case SobolevNorm::Linf: return "g_Linf";
    case SobolevNorm::W21_inverse: return "ginv_W21";
    case SobolevNorm::Linf_inverse: return "ginv_Linf";
    case SobolevNorm::W11_christoffel: return "christoffel_W11";
    case SobolevNorm::Linf_christoffel: return "christoffel_Linf";
    case SobolevNorm::L1_curvature: return "curvature_L1";
    }
    return "unknown";
}

const std::vector<SobolevNorm>& all_sobolev_norms() {
    static const std::vector<SobolevNorm> all = {
        SobolevNorm::W22,          SobolevNorm::W1inf,           SobolevNorm::Linf,
        SobolevNorm::W21_inverse,  SobolevNorm::Linf_inverse,    SobolevNorm::W11_christoffel,
        SobolevNorm::Linf_christoffel, SobolevNorm::L1_curvature};
    return all;
}

SobolevNorm sobolev_norm_from_string(const std::string& s) {
    for (SobolevNorm n : all_sobolev_norms())
        if (to_string(n) == s) return n;
    throw UsageError("unknown norm '" + s + "'");
}

namespace {

// Everything the norms need at one point.
struct Derived {
    MetricJet jet;
    Mat2 gi;
    MetricDeriv dgi;
    MetricHessian d2gi;
    Christoffel G;
    ChristoffelDeriv dG;
    Riemann R;
};

Derived derive(const MetricField& m, const Vec2& x) {
    Derived d;
    d.jet = m.jet(x);
    d.gi = d.jet.g.inverse();
    for (int k = 0; k < 2; ++k) d.dgi[k] = -d.gi * d.jet.dg[k] * d.gi;
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) {
            const Mat2& a = d.jet.dg[k];
            const Mat2& b = d.jet.dg[l];
            d.d2gi[k][l] = d.gi * (b * d.gi * a + a * d.gi * b - d.jet.d2g[k][l]) * d.gi;
        }
    d.G = christoffel(d.gi, d.jet.dg);
    d.dG = christoffel_derivative(d.jet);
    d.R = riemann_from_jet(d.jet);
    return d;
}

double sum_abs(const Mat2& a, int p) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += p == 1 ? std::abs(a.data()[i]) : a.data()[i] * a.data()[i];
    return s;
}

} // namespace

std::vector<double> sobolev_distances(const MetricField& a, const MetricField& b, const std::vector<SobolevNorm>& norms,
                                      const DiskQuadrature& quad) {
    if (a.dimension() != b.dimension()) throw UsageError("sobolev_distance: dimension mismatch");
    const std::size_t n = quad.points.size();
    // per node, in SobolevNorm order: integrands of the integrated norms, pointwise values of the sup norms
    std::vector<std::array<double, 8>> per(n);
    parallel_for(n, [&](std::size_t q) {
        const Vec2& x = quad.points[q];
        Derived A = derive(a, x), B = derive(b, x);
        Mat2 dg0 = A.jet.g - B.jet.g;
        double w22 = sum_abs(dg0, 2), w1inf = dg0.cwiseAbs().maxCoeff();
        double linf = w1inf;
        for (int k = 0; k < 2; ++k) {
            Mat2 d = A.jet.dg[k] - B.jet.dg[k];
            w22 += sum_abs(d, 2);
            w1inf = std::max(w1inf, d.cwiseAbs().maxCoeff());
            for (int l = 0; l < 2; ++l) w22 += sum_abs(A.jet.d2g[k][l] - B.jet.d2g[k][l], 2);
        }
        double w21 = sum_abs(A.gi - B.gi, 1);
        double linf_inv = (A.gi - B.gi).cwiseAbs().maxCoeff();
        for (int k = 0; k < 2; ++k) {
            w21 += sum_abs(A.dgi[k] - B.dgi[k], 1);
            for (int l = 0; l < 2; ++l) w21 += sum_abs(A.d2gi[k][l] - B.d2gi[k][l], 1);
        }
        double w11 = 0.0, linf_g = 0.0;
        for (int i = 0; i < 2; ++i) {
            Mat2 d = A.G[i] - B.G[i];
            w11 += sum_abs(d, 1);
            linf_g = std::max(linf_g, d.cwiseAbs().maxCoeff());
            for (int m = 0; m < 2; ++m) w11 += sum_abs(A.dG[m][i] - B.dG[m][i], 1);
        }
        double l1r = 0.0;
        for (int l = 0; l < 2; ++l)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) l1r += std::abs(A.R[l][i][j][k] - B.R[l][i][j][k]);
        per[q] = {w22, w1inf, linf, w21, linf_inv, w11, linf_g, l1r};
    });
    std::vector<double> out;
    for (SobolevNorm nm : norms) {
        KahanSum s;
        double sup = 0.0;
        for (std::size_t q = 0; q < n; ++q) {
            const auto& v = per[q];
            switch (nm) {
            case SobolevNorm::W22: s.add(quad.weights[q] * v[0]); break;
            case SobolevNorm::W1inf: sup = std::max(sup, v[1]); break;
            case SobolevNorm::Linf: sup = std::max(sup, v[2]); break;
            case SobolevNorm::W21_inverse: s.add(quad.weights[q] * v[3]); break;
            case SobolevNorm::Linf_inverse: sup = std::max(sup, v[4]); break;
            case SobolevNorm::W11_christoffel: s.add(quad.weights[q] * v[5]); break;
            case SobolevNorm::Linf_christoffel: sup = std::max(sup, v[6]); break;
            case SobolevNorm::L1_curvature: s.add(quad.weights[q] * v[7]); break;
            }
        }
        switch (nm) {
        case SobolevNorm::W22: out.push_back(std::sqrt(s.value())); break;
        case SobolevNorm::W21_inverse:
        case SobolevNorm::W11_christoffel:
        case SobolevNorm::L1_curvature: out.push_back(s.value()); break;
        default: out.push_back(sup); break;
        }
    }
    return out;
}

double sobolev_distance(const MetricField& a, const MetricField& b, SobolevNorm norm, const DiskQuadrature& quad) {
    return sobolev_distances(a, b, {norm}, quad)[0];
}

} // namespace xrt
