#pragma once

#include "xrt/metric.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace xrt {

struct PhasePoint {
    Vec2 x;
    Vec2 v;
};

enum class PathStatus { exited, step_limit, tangential_start };
std::string to_string(PathStatus s);

struct GeodesicOptions {
    double step = 1.0 / 256.0;
    double max_length = 20.0;   // trapping declared past this arclength
    bool record = true;
    double boundary_tol = 1e-12;
};

// Default step for a grid of the given spacing: min(1/256, spacing/4).
double default_step(double spacing);

struct GeodesicPath {
    PhasePoint start;
    double step = 0.0;
    std::vector<double> t;
    std::vector<Vec2> x;
    std::vector<Vec2> v;
    std::vector<double> drift;   // |v|_g - 1 before each renormalization
    double tau_plus = 0.0;
    double tau_minus = 0.0;
    PathStatus status = PathStatus::exited;
    double max_drift = 0.0;
    Vec2 endpoint = Vec2::Zero();
    Vec2 end_velocity = Vec2::Zero();
};

double boundary_defining(const Vec2& x);   // 1 - |x|^2
// g-unit inward normal at a boundary point.
Vec2 inward_normal(const MetricField& metric, const Vec2& x);
double g_norm(const MetricField& metric, const Vec2& x, const Vec2& v);
Vec2 normalize(const MetricField& metric, const Vec2& x, const Vec2& v);

// One classical RK4 step of (x, v)' = (v, -Gamma(v, v)), without renormalization.
PhasePoint rk4_step(const MetricField& metric, const PhasePoint& z, double h);
// Flows z by time t (either sign) with fixed steps and renormalization; does not stop at the boundary.
PhasePoint flow(const MetricField& metric, const PhasePoint& z, double t, double step = 1.0 / 256.0);

GeodesicPath integrate_geodesic(const MetricField& metric, const PhasePoint& z, const GeodesicOptions& opts = {});

struct ExitTimes {
    double tau_plus;
    double tau_minus;
    PathStatus forward;
    PathStatus backward;
};
ExitTimes exit_time(const MetricField& metric, const PhasePoint& z, const GeodesicOptions& opts = {});

// Exit time through a disk for a straight line: -<x,v> + sqrt(1 - |x|^2 + <x,v>^2) for |v| = 1.
double chord_exit_time(const Vec2& x, const Vec2& v);

struct FlowProbe {
    double max_ratio = 0.0;
    std::vector<double> ratios;   // per pair, max over the probed times
};
FlowProbe flow_lipschitz_probe(const MetricField& metric, const std::vector<std::pair<PhasePoint, PhasePoint>>& pairs,
                               const std::vector<double>& times, const GeodesicOptions& opts = {});

struct JacobiZero {
    double t;
    bool endpoint;   // |j(tau)| below the endpoint threshold rather than a sign change
};

struct JacobiData {
    std::vector<double> t;
    std::vector<double> j;
    std::vector<double> jp;
    std::vector<double> K;
    std::vector<JacobiZero> zeros;
    std::optional<double> index_form;
    double residual = 0.0;   // max |j'' + K j| with j'' from differences of j'
    double length = 0.0;
};

// Normal Jacobi field j'' + K j = 0, j(0) = 0, j'(0) = 1 along the path's geodesic up to its exit.
JacobiData jacobi_index(const MetricField& metric, const GeodesicPath& path,
                        const std::function<std::pair<double, double>(double t, double L)>& variation = {},
                        double step = 0.0);

struct SecondFundamentalForm {
    double value;
    double delta;        // offset used by the difference stencil
    bool widened;        // stencil widened because the signal hit roundoff
};
SecondFundamentalForm second_fundamental_form(const MetricField& metric, const Vec2& xb, const Vec2& w);

struct TauProbeRow {
    double h;
    double tau;
    double distance;
    double ratio;
    PathStatus status;
};
struct TauProbe {
    std::vector<TauProbeRow> rows;
    double slope;        // least-squares slope of log2(ratio) against log2(1/h)
    double max_ratio;
};
// Probe points x_h are offset by h along the inward normal geodesic from xb, carrying the parallel
// transport of the tangential direction w; compared against the tangential start (xb, w).
TauProbe tau_squared_lipschitz_probe(const MetricField& metric, const Vec2& xb, const Vec2& w,
                                     const std::vector<double>& scales, const GeodesicOptions& opts = {});

struct Connection {
    double angle;        // initial direction angle in the g-orthonormal frame at x
    double length;
    double miss;         // Euclidean distance of the closest approach to y
    GeodesicPath path;
};
struct ConnectResult {
    std::vector<Connection> solutions;   // distinct, sorted by length
    bool converged = false;
    bool unique() const { return solutions.size() == 1; }
};
ConnectResult connect_points(const MetricField& metric, const Vec2& x, const Vec2& y, int starts = 16,
                             const GeodesicOptions& opts = {});

// Ray dump: CSV rows (t, x1, x2, v1, v2, drift).
void write_ray_csv(const std::string& path, const GeodesicPath& ray);

} // namespace xrt
