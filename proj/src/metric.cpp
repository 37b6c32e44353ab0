#include "xrt/metric.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace xrt {

std::string to_string(Backing b) {
    switch (b) {
    case Backing::analytic: return "analytic";
    case Backing::grid: return "grid";
    case Backing::mollified: return "mollified";
    }
    return "unknown";
}

namespace {

double min_eigenvalue(const Mat2& g) {
    double tr = g(0, 0) + g(1, 1);
    double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
    double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    return 0.5 * tr - disc;
}

double sampled_lambda_min(const MetricSource& src) {
    double lo = min_eigenvalue(src.g(Vec2(0.0, 0.0)));
    for (int i = 1; i <= 12; ++i) {
        double r = i / 12.0;
        for (int j = 0; j < 24; ++j) {
            double phi = 2.0 * std::numbers::pi * j / 24.0;
            lo = std::min(lo, min_eigenvalue(src.g(Vec2(r * std::cos(phi), r * std::sin(phi)))));
        }
    }
    return lo;
}

double max_abs(const MetricDeriv& d) {
    return std::max(d[0].cwiseAbs().maxCoeff(), d[1].cwiseAbs().maxCoeff());
}

} // namespace

MetricField::MetricField(std::shared_ptr<const MetricSource> source, std::string id, Backing backing,
                         double fd_step, double lambda_min, double lip_bound)
    : source_(std::move(source)), id_(std::move(id)), backing_(backing), fd_step_(fd_step),
      lambda_min_(lambda_min), lip_bound_(lip_bound) {
    if (lambda_min_ <= 0.0) {
        double lo = sampled_lambda_min(*source_);
        if (!(lo > 0.0))
            throw DataError("metric " + id_ + " is not positive definite: min eigenvalue " + std::to_string(lo));
        lambda_min_ = 0.95 * lo;
    }
    if (lip_bound_ <= 0.0) lip_bound_ = 1.5 * sampled_dg_lipschitz(*this) + 1e-9;
}

bool MetricField::has_closed_form_second() const {
    MetricHessian tmp;
    return source_->d2g(Vec2::Zero(), tmp);
}

MetricHessian MetricField::d2g(const Vec2& x) const {
    MetricHessian out;
    if (source_->d2g(x, out)) return out;
    const double h = fd_step_;
    if (!source_->covers(x, h))
        throw DomainError("metric " + id_ + ": second-derivative stencil leaves the sampled region");
    for (int k = 0; k < 2; ++k) {
        Vec2 e = Vec2::Zero();
        e[k] = h;
        MetricDeriv p = source_->dg(x + e), m = source_->dg(x - e);
        for (int l = 0; l < 2; ++l) out[k][l] = (p[l] - m[l]) / (2.0 * h);
    }
    // d_k d_l g is symmetric in (k, l); average the two one-direction estimates.
    Mat2 mixed = 0.5 * (out[0][1] + out[1][0]);
    out[0][1] = mixed;
    out[1][0] = mixed;
    return out;
}

MetricJet MetricField::jet(const Vec2& x) const {
    MetricJet j;
    source_->first_jet(x, j.g, j.dg);
    j.d2g = d2g(x);
    return j;
}

Christoffel christoffel(const Mat2& g_inv, const MetricDeriv& dg) {
    // S[l](j,k) = d_j g_lk + d_k g_lj - d_l g_jk
    Christoffel gamma;
    std::array<Mat2, 2> S;
    for (int l = 0; l < 2; ++l)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) S[l](j, k) = dg[j](l, k) + dg[k](l, j) - dg[l](j, k);
    for (int i = 0; i < 2; ++i) gamma[i] = 0.5 * (g_inv(i, 0) * S[0] + g_inv(i, 1) * S[1]);
    return gamma;
}

Christoffel christoffel_at(const MetricField& metric, const Vec2& x) {
    Mat2 g;
    MetricDeriv dg;
    metric.source().first_jet(x, g, dg);
    return christoffel(g.inverse(), dg);
}

Mat2 orthonormal_frame(const Mat2& g) {
    Mat2 E;
    double n1 = std::sqrt(g(0, 0));
    Vec2 e1(1.0 / n1, 0.0);
    Vec2 e2(-g(0, 1) / g(0, 0), 1.0);
    e2 /= std::sqrt(e2.dot(g * e2));
    E.col(0) = e1;
    E.col(1) = e2;
    return E;
}

Geometry eval_geometry(const MetricField& metric, const Vec2& x) {
    if (!(x.norm() <= 1.0 + 1e-12)) {
        std::ostringstream os;
        os << "eval_geometry: point (" << x[0] << ", " << x[1] << ") outside the closed unit disk";
        throw DomainError(os.str());
    }
    Geometry out;
    MetricDeriv dg;
    metric.source().first_jet(x, out.g, dg);
    if (!out.g.allFinite()) throw DataError("metric " + metric.id() + ": non-finite sample");
    double lo = min_eigenvalue(out.g);
    if (!(lo > 0.0)) throw DataError("metric " + metric.id() + ": non-positive-definite sample, eigenvalue " +
                                     std::to_string(lo));
    out.g_inv = out.g.inverse();
    out.gamma = christoffel(out.g_inv, dg);
    out.density = std::sqrt(out.g.determinant());
    return out;
}

ChristoffelDeriv christoffel_derivative(const MetricJet& jet) {
    Mat2 gi = jet.g.inverse();
    ChristoffelDeriv out;
    std::array<Mat2, 2> S;
    for (int l = 0; l < 2; ++l)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) S[l](j, k) = jet.dg[j](l, k) + jet.dg[k](l, j) - jet.dg[l](j, k);
    for (int m = 0; m < 2; ++m) {
        Mat2 dgi = -gi * jet.dg[m] * gi;
        std::array<Mat2, 2> dS;
        for (int l = 0; l < 2; ++l)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    dS[l](j, k) = jet.d2g[m][j](l, k) + jet.d2g[m][k](l, j) - jet.d2g[m][l](j, k);
        for (int i = 0; i < 2; ++i)
            out[m][i] = 0.5 * (dgi(i, 0) * S[0] + dgi(i, 1) * S[1] + gi(i, 0) * dS[0] + gi(i, 1) * dS[1]);
    }
    return out;
}

Riemann riemann_from_jet(const MetricJet& jet) {
    Christoffel G = christoffel(jet.g.inverse(), jet.dg);
    ChristoffelDeriv dG = christoffel_derivative(jet);
    Riemann R{};
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    double v = dG[i][l](j, k) - dG[j][l](i, k);
                    for (int m = 0; m < 2; ++m) v += G[m](j, k) * G[l](i, m) - G[m](i, k) * G[l](j, m);
                    R[l][i][j][k] = v;
                }
    return R;
}

double gaussian_curvature_from_jet(const MetricJet& jet) {
    Riemann R = riemann_from_jet(jet);
    double r1212 = jet.g(0, 0) * R[0][0][1][1] + jet.g(0, 1) * R[1][0][1][1];
    return r1212 / jet.g.determinant();
}

Curvature curvature(const MetricField& metric, const Vec2& x) {
    if (!(x.norm() <= 1.0 + 1e-12)) throw DomainError("curvature: point outside the closed unit disk");
    MetricJet j = metric.jet(x);
    Curvature c;
    c.R = riemann_from_jet(j);
    double r1212 = j.g(0, 0) * c.R[0][0][1][1] + j.g(0, 1) * c.R[1][0][1][1];
    c.K = r1212 / j.g.determinant();
    return c;
}

double gaussian_curvature(const MetricField& metric, const Vec2& x) { return curvature(metric, x).K; }

double sampled_dg_lipschitz(const MetricField& metric, int n) {
    const double h = 1.8 / n;
    double worst = 0.0;
    std::vector<Vec2> pts;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
            Vec2 x(-0.9 + h * i, -0.9 + h * j);
            if (x.norm() <= 1.0) pts.push_back(x);
        }
    for (const Vec2& x : pts) {
        MetricDeriv a = metric.dg(x);
        for (int k = 0; k < 2; ++k) {
            Vec2 y = x;
            y[k] += h;
            if (y.norm() > 1.0) continue;
            MetricDeriv b = metric.dg(y);
            MetricDeriv d{b[0] - a[0], b[1] - a[1]};
            worst = std::max(worst, max_abs(d) / h);
        }
    }
    return worst;
}

namespace builtin {

namespace {

class ConstantSource : public MetricSource {
public:
    explicit ConstantSource(Mat2 g) : g_(g) {}
    Mat2 g(const Vec2&) const override { return g_; }
    MetricDeriv dg(const Vec2&) const override { return {Mat2::Zero(), Mat2::Zero()}; }
    bool d2g(const Vec2&, MetricHessian& out) const override {
        for (auto& row : out)
            for (auto& m : row) m.setZero();
        return true;
    }
    bool covers(const Vec2&, double) const override { return true; }

private:
    Mat2 g_;
};

class ConformalSource : public MetricSource {
public:
    explicit ConformalSource(ConformalFactor f) : f_(std::move(f)) {}
    Mat2 g(const Vec2& x) const override { return std::exp(2.0 * f_.lambda(x)) * Mat2::Identity(); }
    MetricDeriv dg(const Vec2& x) const override {
        Mat2 g0;
        MetricDeriv d;
        first_jet(x, g0, d);
        return d;
    }
    void first_jet(const Vec2& x, Mat2& g_out, MetricDeriv& dg_out) const override {
        double e = std::exp(2.0 * f_.lambda(x));
        Vec2 gr = f_.grad(x);
        g_out = e * Mat2::Identity();
        for (int k = 0; k < 2; ++k) dg_out[k] = 2.0 * gr[k] * e * Mat2::Identity();
    }
    bool d2g(const Vec2& x, MetricHessian& out) const override {
        if (!f_.hess) return false;
        double e = std::exp(2.0 * f_.lambda(x));
        Vec2 gr = f_.grad(x);
        Mat2 H = f_.hess(x);
        for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l)
                out[k][l] = e * (4.0 * gr[k] * gr[l] + 2.0 * H(k, l)) * Mat2::Identity();
        return true;
    }

private:
    ConformalFactor f_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

} // namespace

MetricField euclidean(double scale) {
    if (!(scale > 0.0)) throw UsageError("euclidean: scale must be positive");
    std::string id = scale == 1.0 ? "euclidean" : "euclidean(scale=" + fmt(scale) + ")";
    return MetricField(std::make_shared<ConstantSource>(scale * Mat2::Identity()), id, Backing::analytic, 1e-4,
                       scale, 1e-12);
}

MetricField conformal(const std::string& id, ConformalFactor factor) {
    if (!factor.lambda || !factor.grad) throw UsageError("conformal: lambda and its gradient are required");
    return MetricField(std::make_shared<ConformalSource>(std::move(factor)), id, Backing::analytic);
}

MetricField conformal_quadratic(double a) {
    ConformalFactor f;
    f.lambda = [a](const Vec2& x) { return a * x.squaredNorm(); };
    f.grad = [a](const Vec2& x) { return Vec2(2.0 * a * x); };
    f.hess = [a](const Vec2&) { return Mat2(2.0 * a * Mat2::Identity()); };
    return conformal("conformal_quadratic(a=" + fmt(a) + ")", std::move(f));
}

MetricField constant_curvature(double c) {
    if (!(c > 0.0)) throw UsageError("constant_curvature: c must be positive");
    const double c2 = c * c;
    ConformalFactor f;
    f.lambda = [c, c2](const Vec2& x) { return std::log(2.0 * c) - std::log1p(c2 * x.squaredNorm()); };
    f.grad = [c2](const Vec2& x) { return Vec2(-2.0 * c2 * x / (1.0 + c2 * x.squaredNorm())); };
    f.hess = [c2](const Vec2& x) {
        double q = 1.0 + c2 * x.squaredNorm();
        return Mat2(-2.0 * c2 * (Mat2::Identity() / q - 2.0 * c2 * x * x.transpose() / (q * q)));
    };
    return conformal("constant_curvature(c=" + fmt(c) + ")", std::move(f));
}

MetricField c11_test(double c, double r0) {
    ConformalFactor f;
    f.lambda = [c, r0](const Vec2& x) {
        double s = std::max(0.0, x.norm() - r0);
        return c * s * s;
    };
    f.grad = [c, r0](const Vec2& x) {
        double r = x.norm();
        double s = std::max(0.0, r - r0);
        if (s == 0.0) return Vec2(Vec2::Zero());
        return Vec2(2.0 * c * s * x / r);
    };
    return conformal("c11_test(c=" + fmt(c) + ",r0=" + fmt(r0) + ")", std::move(f));
}

MetricField bump_perturbed(double eps, double freq) {
    const Vec2 x0(0.2, 0.1);
    const double beta = 8.0;
    // b = G C with G a Gaussian envelope and C = cos(freq (x1 + x2))
    auto parts = [=](const Vec2& x, double& b, Vec2& db, Mat2& hb) {
        Vec2 d = x - x0;
        double G = std::exp(-beta * d.squaredNorm());
        Vec2 dG = -2.0 * beta * d * G;
        Mat2 hG = G * (4.0 * beta * beta * d * d.transpose() - 2.0 * beta * Mat2::Identity());
        double ph = freq * (x[0] + x[1]);
        double C = std::cos(ph);
        Vec2 dC = -freq * std::sin(ph) * Vec2(1.0, 1.0);
        Mat2 hC = -freq * freq * C * Mat2::Ones();
        b = G * C;
        db = C * dG + G * dC;
        hb = C * hG + G * hC + dG * dC.transpose() + dC * dG.transpose();
    };
    ConformalFactor f;
    f.lambda = [=](const Vec2& x) {
        double b;
        Vec2 db;
        Mat2 hb;
        parts(x, b, db, hb);
        return 0.5 * std::log1p(eps * b);
    };
    f.grad = [=](const Vec2& x) {
        double b;
        Vec2 db;
        Mat2 hb;
        parts(x, b, db, hb);
        return Vec2(0.5 * eps * db / (1.0 + eps * b));
    };
    f.hess = [=](const Vec2& x) {
        double b;
        Vec2 db;
        Mat2 hb;
        parts(x, b, db, hb);
        double q = 1.0 + eps * b;
        return Mat2(0.5 * (eps * hb / q - eps * eps * db * db.transpose() / (q * q)));
    };
    return conformal("bump_perturbed(eps=" + fmt(eps) + ",freq=" + fmt(freq) + ")", std::move(f));
}

} // namespace builtin

} // namespace xrt
