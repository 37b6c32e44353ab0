#pragma once

#include "xrt/bundle.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace xrt {

struct InflowSample {
    int id;
    Vec2 x;             // on |x| = 1
    Vec2 v;             // g-unit, pointing inward
    double arclength;   // Euclidean boundary angle of x
    double angle;       // angle of v from the inward normal, in (-pi/2, pi/2)
    double weight;      // <nu, v>_g times the product quadrature weight
};

// Midpoint rule along the boundary (g-arclength), Gauss-Legendre in the inward angle.
std::vector<InflowSample> inflow_samples(const MetricField& metric, int n_boundary, int n_angles);

struct Ray {
    InflowSample sample;
    GeodesicPath path;
};

struct RaySet {
    std::vector<Ray> rays;        // exited rays
    std::vector<int> dropped;     // sample ids whose geodesic did not exit
};

RaySet trace_rays(const MetricField& metric, const std::vector<InflowSample>& samples, const GeodesicOptions& opts = {});

using ScalarTarget = std::function<double(const Vec2&)>;
// h_x(v) = h(x) . v with h given by its coordinate components.
using OneFormTarget = std::function<Vec2(const Vec2&)>;

// Composite Simpson over each path step, midpoints from the cubic Hermite interpolant of the path.
double ray_integral(const GeodesicPath& path, const std::function<double(const Vec2& x, const Vec2& v)>& integrand);

std::vector<double> xray(const RaySet& rays, const ScalarTarget& f);
std::vector<double> xray(const RaySet& rays, const OneFormTarget& h);

struct IntegralFunction {
    ScalarField u;
    std::vector<std::size_t> masked;   // bundle nodes whose geodesic did not exit
};
// u^f(z) = int_0^tau(z) f(phi_t z) dt at every bundle node.
IntegralFunction integral_function(const BundleGrid& grid, const ScalarTarget& f, double step = 0.0);

// Spatial bases on a uniform square mesh over [-1, 1]^2, restricted to the disk.
struct PixelBasis {
    int n = 24;
    double sliver = 0.25;                 // clipped pixels below this area fraction join a neighbour
    std::vector<int> owner;               // per pixel: basis index or -1
    std::vector<double> area;             // per basis element, Euclidean area inside the disk
    int size() const { return static_cast<int>(area.size()); }
    static PixelBasis build(int n, double sliver = 0.25);
    // Coefficients of the L2 projection of f (pixel averages over the clipped support).
    Eigen::VectorXd project(const ScalarTarget& f, int sub = 8) const;
    double evaluate(const Eigen::VectorXd& c, const Vec2& x) const;
    std::string descriptor() const;
};

// Lowest-order edge elements on the cells of an n x n mesh that lie inside the closed disk.
struct EdgeBasis {
    int n = 12;
    std::vector<std::array<int, 2>> edges;   // (direction 0 = x / 1 = y, mesh edge id)
    std::vector<int> edge_index;             // mesh edge id -> basis index or -1
    std::vector<bool> cell_inside;
    std::vector<int> gauge_nodes;            // mesh nodes whose hat function vanishes on the boundary
    int size() const { return static_cast<int>(edges.size()); }
    static EdgeBasis build(int n);
    // Columns: edge coefficients of d(hat_k) for each gauge node.
    Eigen::MatrixXd gauge_matrix() const;
    // Edge coefficients of the interpolant of a one-form (line integrals over edges, Simpson).
    Eigen::VectorXd interpolate(const OneFormTarget& h) const;
    std::string descriptor() const;
};

enum class TargetKind { scalar, one_form };
std::string to_string(TargetKind k);

struct TransformMatrix {
    TargetKind kind;
    Eigen::MatrixXd A;               // rays x coefficients
    Eigen::VectorXd weights;         // Santalo weights per row
    std::vector<int> ray_ids;
    std::string basis;
    std::string metric_id;
};

// Polyline quadrature over the recorded path vertices; exact for straight paths.
TransformMatrix assemble_forward(const RaySet& rays, const PixelBasis& basis, const std::string& metric_id);
TransformMatrix assemble_forward(const RaySet& rays, const EdgeBasis& basis, const std::string& metric_id);

struct NullspaceReport {
    Eigen::VectorXd singular_values;   // descending
    double sigma_ratio = 0.0;          // sigma_min / sigma_max
    int null_dimension = 0;            // sigma < 1e-8 sigma_max
    Eigen::MatrixXd null_basis;
    int duplicate_rows = 0;            // removed before the SVD
    // one-form kind
    int gauge_dimension = 0;
    double max_principal_angle_deg = 0.0;
};

NullspaceReport nullspace_analysis(const TransformMatrix& A, const Eigen::MatrixXd* gauge = nullptr,
                                   double rel_tol = 1e-8);

struct Reconstruction {
    Eigen::VectorXd coeffs;
    std::optional<double> relative_error;   // against the supplied reference coefficients
};
// Minimizes sum_r w_r (A c - d)_r^2 + lambda |c|^2.
Reconstruction reconstruct(const TransformMatrix& A, const Eigen::VectorXd& data, double lambda,
                           const Eigen::VectorXd* reference = nullptr, const Eigen::VectorXd* mass = nullptr);

// |c - P_G c| / |c| with P_G the orthogonal projector onto span(G); 0 for c = 0.
double gauge_residual(const Eigen::VectorXd& c, const Eigen::MatrixXd& G);

void write_sinogram(const std::string& path, const RaySet& rays, const std::vector<double>& values,
                    const std::string& provenance = "");
void save_matrix(const std::string& path, const TransformMatrix& A);
TransformMatrix load_matrix(const std::string& path);

} // namespace xrt
