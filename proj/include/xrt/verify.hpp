#pragma once

#include "xrt/transform.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace xrt {

struct TrendEntry {
    std::string grid;
    double residual;
};

struct VerificationReport {
    std::string check;
    std::string metric;
    std::string grid;
    double lhs = 0.0;
    double rhs = 0.0;
    double abs_residual = 0.0;
    double rel_residual = 0.0;
    double tolerance = 0.0;
    std::vector<TrendEntry> trend;        // coarse to fine
    std::map<std::string, double> terms;  // named intermediate quantities
    std::vector<std::string> notes;
    bool passed = false;
};

// |L - R| / max(|L|, |R|, floor)
double relative_residual(double lhs, double rhs, double floor = 1e-14);
// Fills the residual fields from lhs/rhs (and an optional scale) and sets passed.
void settle(VerificationReport& r, double scale = 0.0);

nlohmann::json to_json(const VerificationReport& r);
VerificationReport report_from_json(const nlohmann::json& j);
std::string format_reports(const std::vector<VerificationReport>& reports);

struct GoldenMismatch {
    std::string check;
    std::string field;
    double expected;
    double actual;
};
// golden: {"checks": {"<id>": {"rel_residual": x, "lhs": y, ..., "tolerance": t}}}; missing ids are mismatches.
std::vector<GoldenMismatch> compare_golden(const std::vector<VerificationReport>& reports, const nlohmann::json& golden,
                                           double default_tolerance = 1e-6);

// Runs the check on each grid (coarse to fine) and returns the finest report with the trend attached.
// A coarser residual must exceed the next finer one by `growth`, unless both sit below `floor`.
VerificationReport refinement_study(const std::function<VerificationReport(const GridSpec&)>& run,
                                    const std::vector<GridSpec>& coarse_to_fine, double growth = 1.5,
                                    double floor = 1e-12);

// ||V X u||^2 against Q(V u) + ||X u||^2.
VerificationReport pestov_residual(const BundleGrid& grid, const ScalarField& u, double tolerance = 0.02);

// ||X W||^2 - <K W, W>
double q_form(const BundleGrid& grid, const SectionN& W);

// <H u, V> against <V u, X V> - <X u, div_v V>, relative to the largest of the three terms.
VerificationReport commutator_check(const BundleGrid& grid, const ScalarField& u, const SectionN& V,
                                    double tolerance = 0.02);

// ||V h||^2 against (n - 1) ||h||^2 for h(x, v) = h_x(v).
VerificationReport oneform_cancellation(const BundleGrid& grid, const OneFormTarget& h, double tolerance = 0.005);

// int_SM F against sum_rays weight * int_0^tau F along the ray, F interpolated from the grid.
VerificationReport santalo_check(const BundleGrid& grid, const RaySet& rays, const ScalarField& F,
                                 double tolerance = 0.005);

struct MollificationStudy {
    std::string metric;
    std::vector<int> alphas;
    std::vector<SobolevNorm> norms;
    std::vector<std::vector<double>> distance;   // [alpha][norm]
    std::vector<bool> decreasing;                // per norm, each step below (1 + noise) times the previous or both below 1e-10
    double noise = 0.05;
    bool passed = false;
    std::vector<std::string> notes;
};
// The seven norms used for the pass verdict; the study also reports any extra norms requested.
const std::vector<SobolevNorm>& mollification_norms();
MollificationStudy mollification_report(const MetricField& metric, const std::vector<int>& alphas = {4, 8, 16, 32},
                                        const std::vector<SobolevNorm>& norms = all_sobolev_norms(),
                                        double noise = 0.05, const DiskQuadrature& quad = DiskQuadrature::polar(24, 4, 64));
std::string mollification_csv(const MollificationStudy& s);

struct B1Options {
    int radial_modes = 8;     // cos((n + 1/2) pi r) and sin((n + 1) pi r), n < radial_modes
    int phi_modes = 10;       // Fourier modes |l| <= phi_modes
    int psi_modes = 10;
    int block = 8;
    int max_iterations = 400;
    double tolerance = 1e-3;  // relative residual of the lowest Ritz pair
    int stall_window = 20;    // or: lowest Ritz value moved less than stall_tolerance over this many iterations
    double stall_tolerance = 1e-5;
    std::uint64_t seed = 1;
    double threshold = 0.05;  // epsilon above this passes
};

struct B1Estimate {
    double epsilon = 0.0;                 // lowest Ritz value (an upper bound on the discrete minimum)
    std::vector<double> ritz;             // block Ritz values, ascending
    SectionN minimizer;
    double q_check = 0.0;                 // Q(W)/|W|^2 of the minimizer through the section route
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;
    std::vector<double> history;          // lowest Ritz value per iteration
};

// Minimizes Q(W)/|W|^2 over boundary-vanishing sections in a band-limited subspace of the grid.
B1Estimate b1_estimate(const BundleGrid& grid, const B1Options& opts = {});

// Min over inflow rays of the lowest Dirichlet eigenvalue of -d^2/dt^2 - K(gamma(t)) on [0, tau].
double ray_dirichlet_epsilon(const MetricField& metric, int n_boundary = 64, int n_angles = 32, int points = 400);

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict v);

struct ConditionResult {
    Verdict verdict = Verdict::inconclusive;
    double value = 0.0;
    std::string detail;
};

struct SimplicityOptions {
    GridSpec b1_grid{32, 32, 64};
    B1Options b1;
    int pairs = 200;
    int connect_starts = 16;
    double pair_radius = 0.95;
    std::vector<double> tau_scales = {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
    int boundary_points = 8;
    double b3_slope_limit = 0.25;
    int jacobi_boundary = 32;
    int jacobi_angles = 16;
    std::uint64_t seed = 1;
};

struct SimplicityReport {
    std::string metric;
    ConditionResult b1, b2, b3;
    double ray_epsilon = 0.0;
    int b2_multiple = 0;
    int b2_unconverged = 0;
    std::vector<TauProbeRow> b3_rows;     // probe at the first boundary point
    double b3_slope = 0.0;                // largest slope over the boundary points
    std::optional<double> first_conjugate;   // shortest distance to an interior Jacobi zero
    int endpoint_zeros = 0;               // rays whose Jacobi field vanishes at the exit point
    double min_sff = 0.0;
    bool all_pass() const;
};

SimplicityReport simplicity_report(const MetricField& metric, const SimplicityOptions& opts = {});
nlohmann::json to_json(const SimplicityReport& r);
std::string format_simplicity(const SimplicityReport& r);

} // namespace xrt
