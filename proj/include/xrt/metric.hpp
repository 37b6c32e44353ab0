#pragma once

#include "xrt/errors.hpp"
#include "xrt/numerics.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace xrt {

using MetricDeriv = std::array<Mat2, 2>;                    // dg[k] = d_k g
using MetricHessian = std::array<std::array<Mat2, 2>, 2>;   // d2g[k][l] = d_k d_l g
using Christoffel = std::array<Mat2, 2>;                    // gamma[i](j, k) = Gamma^i_jk
using ChristoffelDeriv = std::array<Christoffel, 2>;        // dgamma[m][i](j, k) = d_m Gamma^i_jk
using Riemann = std::array<std::array<std::array<std::array<double, 2>, 2>, 2>, 2>; // R[l][i][j][k] = R^l_ijk

struct MetricJet {
    Mat2 g;
    MetricDeriv dg;
    MetricHessian d2g;
};

// Raw component evaluator behind a MetricField.
class MetricSource {
public:
    virtual ~MetricSource() = default;
    virtual Mat2 g(const Vec2& x) const = 0;
    virtual MetricDeriv dg(const Vec2& x) const = 0;
    // Closed-form second derivatives; returns false when the source has none.
    virtual bool d2g(const Vec2& x, MetricHessian& out) const {
        (void)x;
        (void)out;
        return false;
    }
    // g and dg together; sources with shared work override this.
    virtual void first_jet(const Vec2& x, Mat2& g_out, MetricDeriv& dg_out) const {
        g_out = g(x);
        dg_out = dg(x);
    }
    // Whether x +- margin in every coordinate direction can be evaluated.
    virtual bool covers(const Vec2& x, double margin) const { return x.norm() + margin <= 1.25; }
};

enum class Backing { analytic, grid, mollified };

std::string to_string(Backing b);

class MetricField {
public:
    // lambda_min <= 0 or lip_bound <= 0 are estimated by sampling the disk.
    MetricField(std::shared_ptr<const MetricSource> source, std::string id, Backing backing,
                double fd_step = 1e-4, double lambda_min = 0.0, double lip_bound = 0.0);

    const std::string& id() const { return id_; }
    Backing backing() const { return backing_; }
    int dimension() const { return 2; }
    double lambda_min() const { return lambda_min_; }
    double lip_bound() const { return lip_bound_; }
    double second_derivative_step() const { return fd_step_; }
    const MetricSource& source() const { return *source_; }
    std::shared_ptr<const MetricSource> source_ptr() const { return source_; }

    Mat2 g(const Vec2& x) const { return source_->g(x); }
    MetricDeriv dg(const Vec2& x) const { return source_->dg(x); }
    // Closed form when available, centered differences of dg otherwise.
    MetricHessian d2g(const Vec2& x) const;
    MetricJet jet(const Vec2& x) const;
    bool has_closed_form_second() const;

private:
    std::shared_ptr<const MetricSource> source_;
    std::string id_;
    Backing backing_;
    double fd_step_;
    double lambda_min_;
    double lip_bound_;
};

struct Geometry {
    Mat2 g;
    Mat2 g_inv;
    Christoffel gamma;
    double density;
};

// Checked evaluation: x must lie in the closed disk and g(x) must be positive definite.
Geometry eval_geometry(const MetricField& metric, const Vec2& x);

Christoffel christoffel(const Mat2& g_inv, const MetricDeriv& dg);
// Unchecked fast path used by the integrators, valid within the source's collar.
Christoffel christoffel_at(const MetricField& metric, const Vec2& x);
inline Vec2 contract(const Christoffel& gamma, const Vec2& a, const Vec2& b) {
    return Vec2(a.dot(gamma[0] * b), a.dot(gamma[1] * b));
}

// Gram-Schmidt on the coordinate fields: columns e1 = d1/|d1|_g and e2, g-orthonormal.
Mat2 orthonormal_frame(const Mat2& g);
// Rotation by +90 degrees in the metric: g-unit, g-orthogonal to v when v is g-unit.
inline Vec2 rotate_quarter(const Mat2& g, const Vec2& v) {
    Mat2 R;
    R << 0.0, -1.0, 1.0, 0.0;
    return std::sqrt(g.determinant()) * (g.inverse() * (R * v));
}

ChristoffelDeriv christoffel_derivative(const MetricJet& jet);
Riemann riemann_from_jet(const MetricJet& jet);
double gaussian_curvature_from_jet(const MetricJet& jet);

struct Curvature {
    Riemann R;
    double K;
};

// Requires the second-derivative stencil to fit inside the source's sampled region.
Curvature curvature(const MetricField& metric, const Vec2& x);
double gaussian_curvature(const MetricField& metric, const Vec2& x);

// Empirical Lipschitz constant of dg from differences over a sample of the disk.
double sampled_dg_lipschitz(const MetricField& metric, int n = 24);

namespace builtin {

MetricField euclidean(double scale = 1.0);

// g = exp(2 lambda) * identity. hess may be empty, then second derivatives come from differences.
struct ConformalFactor {
    std::function<double(const Vec2&)> lambda;
    std::function<Vec2(const Vec2&)> grad;
    std::function<Mat2(const Vec2&)> hess;
};
MetricField conformal(const std::string& id, ConformalFactor factor);

// lambda = a |x|^2
MetricField conformal_quadratic(double a);
// 4c^2 (1 + c^2 |x|^2)^-2 identity: the round sphere seen through a stereographic chart, K = 1.
MetricField constant_curvature(double c);
// lambda = c max(0, |x| - r0)^2: C^{1,1} but not C^2 across |x| = r0.
MetricField c11_test(double c = 0.5, double r0 = 0.5);
// Euclidean times (1 + eps * bump), the bump oscillating at the given frequency.
MetricField bump_perturbed(double eps = 0.05, double freq = 6.0);

} // namespace builtin

// Grid-backed metric: bicubic Hermite over a uniform square grid, node derivatives by differences.
MetricField grid_metric(const std::string& id, int n, double lo, double hi, const std::vector<Mat2>& samples);
MetricField resample_to_grid(const MetricField& metric, int n, double lo = -1.0, double hi = 1.0);
MetricField load_grid_metric(const std::string& path);
void save_grid_metric(const std::string& path, const MetricField& metric, int n, double lo = -1.0,
                      double hi = 1.0);

struct MollifierSpec {
    int alpha = 16;
    int radial_nodes = 24;
    int angular_nodes = 48;
    double clamp_radius = 1.25;
};

// Sum of the discrete kernel weights; 1 up to roundoff by construction.
double kernel_mass(const MollifierSpec& spec);

// Components of g extended across |x| = 1 by C^2-matching reflection along rays.
MetricJet extended_jet(const MetricField& metric, const Vec2& x, double clamp_radius = 1.25);

MetricField mollify(const MetricField& metric, const MollifierSpec& spec);

struct DiskQuadrature {
    std::vector<Vec2> points;
    std::vector<double> weights;
    static DiskQuadrature polar(int radial_panels = 48, int order = 4, int n_theta = 96);
};

enum class SobolevNorm {
    W22,
    W1inf,
    Linf,
    W21_inverse,
    Linf_inverse,
    W11_christoffel,
    Linf_christoffel,
    L1_curvature
};

std::string to_string(SobolevNorm n);
SobolevNorm sobolev_norm_from_string(const std::string& s);
const std::vector<SobolevNorm>& all_sobolev_norms();

double sobolev_distance(const MetricField& a, const MetricField& b, SobolevNorm norm,
                        const DiskQuadrature& quad = DiskQuadrature::polar());
// Several norms from one pass over the quadrature nodes.
std::vector<double> sobolev_distances(const MetricField& a, const MetricField& b,
                                      const std::vector<SobolevNorm>& norms,
                                      const DiskQuadrature& quad = DiskQuadrature::polar());

} // namespace xrt
