#pragma once

#include "xrt/geodesic.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace xrt {

struct GridSpec {
    int n_r = 64;
    int n_phi = 64;
    int n_psi = 128;
};

// Radial stencil used at a spatial node: fourth order centered, second order centered
// (or Dirichlet closure), one-sided (or Dirichlet closure) at the outermost ring.
// Derivatives in phi and psi are trigonometric everywhere.
enum class Quality : std::uint8_t { interior = 0, reduced = 1, one_sided = 2 };

struct NodeGeometry {
    Vec2 x;
    double r;
    double phi;
    Mat2 g;
    Mat2 frame;          // columns e1, e2
    double density;      // sqrt det g
    Christoffel gamma;
    Vec2 omega_frame;    // connection form on e1, e2: omega(e_i) = <nabla_{e_i} e1, e2>
    double K;
};

class BundleGrid;

struct ScalarField {
    std::uint64_t grid_uid = 0;
    std::vector<double> values;
    bool vanishes_on_boundary = false;
    std::vector<Quality> quality;   // per spatial node, filled by derivative operators

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::size_t size() const { return values.size(); }
};

// Section of N stored as the coefficient a with V = a v_perp.
struct SectionN {
    std::uint64_t grid_uid = 0;
    std::vector<double> coeff;
    bool vanishes_on_boundary = false;
    std::vector<Quality> quality;
    double projection_defect = 0.0;   // max |<XV, v>_g| reported by apply_X_section

    double& operator[](std::size_t i) { return coeff[i]; }
    double operator[](std::size_t i) const { return coeff[i]; }
    std::size_t size() const { return coeff.size(); }
};

using BundleFunction = std::function<double(const Vec2& x, const Vec2& v, double psi)>;

class BundleGrid {
public:
    BundleGrid(MetricField metric, GridSpec spec = {});

    const MetricField& metric() const { return metric_; }
    const GridSpec& spec() const { return spec_; }
    std::uint64_t uid() const { return uid_; }
    int n_r() const { return spec_.n_r; }
    int n_phi() const { return spec_.n_phi; }
    int n_psi() const { return spec_.n_psi; }
    double dr() const { return 1.0 / spec_.n_r; }
    double dphi() const;
    double dpsi() const;
    double spacing() const { return dr(); }
    std::size_t spatial_count() const { return geom_.size(); }
    std::size_t size() const { return geom_.size() * spec_.n_psi; }
    std::string descriptor() const;

    std::size_t spatial_index(int i, int j) const { return static_cast<std::size_t>(i) * spec_.n_phi + j; }
    std::size_t index(int i, int j, int k) const { return spatial_index(i, j) * spec_.n_psi + k; }
    const NodeGeometry& node(std::size_t s) const { return geom_[s]; }
    double psi(int k) const { return k * dpsi(); }
    Vec2 v(std::size_t s, int k) const;
    Vec2 v_perp(std::size_t s, int k) const;
    double weight(std::size_t s) const { return weights_[s]; }   // per bundle node with spatial index s
    Quality quality(std::size_t s) const;
    std::vector<Quality> quality_mask() const;

    // Sum of bundle weights; 2 pi Area_g up to the radial midpoint rule.
    double volume() const;

    ScalarField scalar(const BundleFunction& f, bool vanishes_on_boundary = false) const;
    SectionN section(const BundleFunction& a, bool vanishes_on_boundary = false) const;
    ScalarField zeros_scalar(bool vanishes_on_boundary = false) const;
    SectionN zeros_section(bool vanishes_on_boundary = false) const;

    // Fiber angle of the g-unit vector v at x in the frame of x.
    double angle_of(const Vec2& x, const Vec2& v) const;
    // Tricubic interpolation of node values at (x, psi); x may sit slightly outside the last ring.
    double interpolate(const std::vector<double>& values, const Vec2& x, double psi) const;

    const std::vector<double>& phi_pairs() const { return phi_pairs_; }
    const std::vector<double>& psi_pairs() const { return psi_pairs_; }

    // Emits (column, weight) for the lifted derivative along v (horizontal=false) or v_perp
    // (horizontal=true) at bundle node (i, j, k). Dirichlet closures apply when vanishing is set.
    void lift_stencil(int i, int j, int k, bool horizontal, bool vanishing,
                      const std::function<void(std::size_t, double)>& emit) const;
    // d/dr at fixed (phi, psi) for every fiber angle of spatial node (i, j).
    void radial_derivative(int i, int j, bool vanishing, const std::vector<double>& u, std::vector<double>& out) const;
    void fiber_stencil(int i, int j, int k, const std::function<void(std::size_t, double)>& emit) const;

    // Sparse matrix of X (or H) on node values.
    Eigen::SparseMatrix<double, Eigen::RowMajor> lift_matrix(bool horizontal, bool vanishing) const;
    // Plain transpose of the lift applied to node values (no quadrature weights).
    std::vector<double> lift_adjoint(const std::vector<double>& y, bool horizontal, bool vanishing) const;

private:
    struct RadialTap {
        int ring;
        bool flipped;   // ghost ring across the origin, phi shifted by pi
        double weight;
    };
    const std::vector<RadialTap>& radial_taps(int i, bool vanishing) const;

    MetricField metric_;
    GridSpec spec_;
    std::uint64_t uid_;
    std::vector<NodeGeometry> geom_;
    std::vector<double> weights_;
    std::vector<std::vector<RadialTap>> taps_plain_;
    std::vector<std::vector<RadialTap>> taps_dirichlet_;
    std::vector<double> cos_psi_;
    std::vector<double> sin_psi_;
    std::vector<double> phi_pairs_;   // trigonometric differentiation weights in phi and psi
    std::vector<double> psi_pairs_;
};

// Throws DataError when values extrapolated to r = 1 exceed 5% of max |u|.
void assert_vanishing(const BundleGrid& grid, const std::vector<double>& values, const std::string& what);

enum class XMethod { stencil, flow };

ScalarField apply_X(const BundleGrid& grid, const ScalarField& u, XMethod method = XMethod::stencil,
                    double dt = 0.0);
// Covariant derivative of V = a v_perp along the flow, computed from the coordinate components of V.
SectionN apply_X_section(const BundleGrid& grid, const SectionN& V);
ScalarField apply_H(const BundleGrid& grid, const ScalarField& u);
ScalarField fiber_derivative(const BundleGrid& grid, const ScalarField& u);

SectionN v_grad(const BundleGrid& grid, const ScalarField& u);
ScalarField v_div(const BundleGrid& grid, const SectionN& V);
SectionN h_grad(const BundleGrid& grid, const ScalarField& u);
ScalarField h_div(const BundleGrid& grid, const SectionN& V);
SectionN curvature_op(const BundleGrid& grid, const SectionN& V);

double inner(const BundleGrid& grid, const ScalarField& a, const ScalarField& b);
double inner(const BundleGrid& grid, const SectionN& a, const SectionN& b);
double integrate(const BundleGrid& grid, const ScalarField& u);

enum class NormKind { L2SM, L2N, H1SM, H1N, H1NX, K2 };
std::string to_string(NormKind k);

double norm(const BundleGrid& grid, const ScalarField& u, NormKind which);
double norm(const BundleGrid& grid, const SectionN& V, NormKind which);

enum class BoundaryPart { inward, outward, tangential };
BoundaryPart classify_boundary(const MetricField& metric, const Vec2& x, const Vec2& v);

// Fiber jacobian and transfer along s(x, v) = (x, v / |v|_to) between bundles of two metrics on
// grids of equal shape. jacobian satisfies int_from F dSigma_from = int_to (F o s^-1) J dSigma_to.
struct Transfer {
    ScalarField values;
    std::vector<double> jacobian;   // per bundle node of the target grid
};
Transfer radial_transfer(const BundleGrid& from, const BundleGrid& to, const ScalarField& u);
Transfer radial_transfer(const BundleGrid& from, const BundleGrid& to, const SectionN& V);
// d psi_from / d psi_to at one node, closed form.
double fiber_jacobian(const Mat2& frame_from, const Mat2& frame_to, double psi_to);

// Snapshot: one JSON header line, then one CSV row of fiber values per spatial node.
void save_field(const std::string& path, const BundleGrid& grid, const ScalarField& u);
void save_field(const std::string& path, const BundleGrid& grid, const SectionN& V);
ScalarField load_scalar_field(const std::string& path, const BundleGrid& grid);
SectionN load_section(const std::string& path, const BundleGrid& grid);

} // namespace xrt
