#include "xrt/verify.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace xrt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Band-limited coefficients c -> node values: radial profiles vanishing at r = 1 times Fourier modes in phi and psi.
class SmoothSpace {
public:
    SmoothSpace(const BundleGrid& grid, const B1Options& o) : grid_(grid) {
        const int nr = grid.n_r(), nphi = grid.n_phi(), m = grid.n_psi();
        if (2 * o.phi_modes >= nphi || 2 * o.psi_modes >= m || 2 * o.radial_modes > nr)
            throw UsageError("b1_estimate: subspace modes exceed the grid resolution");
        nb_ = 2 * o.radial_modes;
        nf_ = 2 * o.phi_modes + 1;
        ng_ = 2 * o.psi_modes + 1;
        R_.resize(nr, nb_);
        for (int i = 0; i < nr; ++i) {
            const double r = (i + 0.5) * grid.dr();
            for (int n = 0; n < o.radial_modes; ++n) {
                R_(i, 2 * n) = std::cos((n + 0.5) * std::numbers::pi * r);
                R_(i, 2 * n + 1) = std::sin((n + 1) * std::numbers::pi * r);
            }
        }
        F_ = fourier(nphi, o.phi_modes, grid.dphi());
        G_ = fourier(m, o.psi_modes, grid.dpsi());
    }

    Eigen::Index size() const { return static_cast<Eigen::Index>(nb_) * nf_ * ng_; }

    // Inverse of a rough stiffness per coefficient: radial wavenumber squared plus the phi mode over a mean radius.
    Eigen::VectorXd preconditioner() const {
        Eigen::VectorXd t(size());
        for (int i = 0; i < nb_; ++i)
            for (int l = 0; l < nf_; ++l)
                for (int q = 0; q < ng_; ++q) {
                    const double kr = (i / 2 + 0.5 + 0.5 * (i % 2)) * std::numbers::pi;
                    const double kl = 2.0 * ((l + 1) / 2);
                    const double kq = (q + 1) / 2;
                    t((static_cast<Eigen::Index>(i) * nf_ + l) * ng_ + q) = 1.0 / (1.0 + kr * kr + kl * kl + kq * kq);
                }
        return t;
    }

    std::vector<double> lift(const Eigen::VectorXd& c) const {
        const int nphi = grid_.n_phi(), m = grid_.n_psi();
        Eigen::Map<const RowMat> C(c.data(), nb_ * nf_, ng_);
        RowMat T1 = C * G_.transpose();   // (nb nf) x m
        RowMat T2(nb_, nphi * m);
        for (int i = 0; i < nb_; ++i) {
            RowMat block = F_ * T1.middleRows(i * nf_, nf_);   // nphi x m
            T2.row(i) = Eigen::Map<const Eigen::RowVectorXd>(block.data(), nphi * m);
        }
        std::vector<double> out(grid_.size());
        Eigen::Map<RowMat> U(out.data(), grid_.n_r(), nphi * m);
        U.noalias() = R_ * T2;
        return out;
    }

    Eigen::VectorXd restrict(const std::vector<double>& y) const {
        const int nphi = grid_.n_phi(), m = grid_.n_psi();
        Eigen::Map<const RowMat> Y(y.data(), grid_.n_r(), nphi * m);
        RowMat T2 = R_.transpose() * Y;
        RowMat T1(nb_ * nf_, m);
        for (int i = 0; i < nb_; ++i) {
            RowMat block = Eigen::Map<const RowMat>(T2.row(i).data(), nphi, m);
            T1.middleRows(i * nf_, nf_) = F_.transpose() * block;
        }
        Eigen::VectorXd c(size());
        Eigen::Map<RowMat> C(c.data(), nb_ * nf_, ng_);
        C.noalias() = T1 * G_;
        return c;
    }

private:
    static Eigen::MatrixXd fourier(int n, int modes, double h) {
        Eigen::MatrixXd F(n, 2 * modes + 1);
        for (int j = 0; j < n; ++j) {
            F(j, 0) = 1.0;
            for (int l = 1; l <= modes; ++l) {
                F(j, 2 * l - 1) = std::cos(l * j * h);
                F(j, 2 * l) = std::sin(l * j * h);
            }
        }
        return F;
    }

    const BundleGrid& grid_;
    int nb_ = 0, nf_ = 0, ng_ = 0;
    Eigen::MatrixXd R_, F_, G_;
};

struct RayleighOps {
    const BundleGrid& grid;
    const SmoothSpace& space;
    std::vector<double> w;   // quadrature weight per bundle node
    std::vector<double> K;

    RayleighOps(const BundleGrid& g, const SmoothSpace& s) : grid(g), space(s), w(g.size()), K(g.size()) {
        const int m = g.n_psi();
        for (std::size_t q = 0; q < g.size(); ++q) {
            w[q] = g.weight(q / m);
            K[q] = g.node(q / m).K;
        }
    }

    std::vector<double> X(const std::vector<double>& a) const {
        ScalarField u = grid.zeros_scalar(true);
        u.values = a;
        return apply_X(grid, u).values;
    }

    // A c = P^T (X^T W X - W K) P c and B c = P^T W P c
    void apply(const Eigen::MatrixXd& C, Eigen::MatrixXd& AC, Eigen::MatrixXd& BC) const {
        AC.resize(C.rows(), C.cols());
        BC.resize(C.rows(), C.cols());
        for (Eigen::Index j = 0; j < C.cols(); ++j) {
            std::vector<double> a = space.lift(C.col(j));
            std::vector<double> xa = X(a);
            std::vector<double> wa(a.size()), wka(a.size());
            for (std::size_t q = 0; q < a.size(); ++q) {
                xa[q] *= w[q];
                wa[q] = w[q] * a[q];
                wka[q] = K[q] * wa[q];
            }
            std::vector<double> t = grid.lift_adjoint(xa, false, true);
            for (std::size_t q = 0; q < t.size(); ++q) t[q] -= wka[q];
            AC.col(j) = space.restrict(t);
            BC.col(j) = space.restrict(wa);
        }
    }
};

struct RitzResult {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;   // coefficients in the supplied basis
};

// Generalized Rayleigh-Ritz with directions of tiny B-norm dropped.
RitzResult rayleigh_ritz(const Eigen::MatrixXd& GA, const Eigen::MatrixXd& GB) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(0.5 * (GB + GB.transpose()));
    const Eigen::VectorXd d = eb.eigenvalues();
    const double dmax = d.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (d(i) > 1e-12 * dmax) keep.push_back(i);
    Eigen::MatrixXd Z(GB.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i)
        Z.col(static_cast<Eigen::Index>(i)) = eb.eigenvectors().col(keep[i]) / std::sqrt(d(keep[i]));
    Eigen::MatrixXd H = Z.transpose() * GA * Z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eh(0.5 * (H + H.transpose()));
    return {eh.eigenvalues(), Z * eh.eigenvectors()};
}

} // namespace

B1Estimate b1_estimate(const BundleGrid& grid, const B1Options& opts) {
    if (opts.block < 1) throw UsageError("b1_estimate: block must be positive");
    SmoothSpace space(grid, opts);
    RayleighOps ops(grid, space);
    const Eigen::Index n = space.size(), b = opts.block;
    const Eigen::VectorXd precond = space.preconditioner();

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> N(0.0, 1.0);
    Eigen::MatrixXd X(n, b);
    for (Eigen::Index j = 0; j < b; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = N(rng);

    Eigen::MatrixXd AX, BX, AW, BW;
    Eigen::MatrixXd P(n, 0), AP(n, 0), BP(n, 0);
    ops.apply(X, AX, BX);
    RitzResult rr = rayleigh_ritz(X.transpose() * AX, X.transpose() * BX);
    X = X * rr.vectors.leftCols(b);
    AX = AX * rr.vectors.leftCols(b);
    BX = BX * rr.vectors.leftCols(b);
    Eigen::VectorXd theta = rr.values.head(b);

    B1Estimate out;
    for (int it = 0; it < opts.max_iterations; ++it) {
        out.iterations = it + 1;
        Eigen::MatrixXd R = AX - BX * theta.asDiagonal();
        const double res0 = R.col(0).norm() / (AX.col(0).norm() + std::abs(theta(0)) * BX.col(0).norm());
        out.residual = res0;
        out.history.push_back(theta(0));
        const std::size_t h = out.history.size();
        const bool stalled = h > static_cast<std::size_t>(opts.stall_window) &&
                             std::abs(out.history[h - 1 - opts.stall_window] - theta(0)) <=
                                 opts.stall_tolerance * std::max(1.0, std::abs(theta(0)));
        if (res0 <= opts.tolerance || stalled) {
            out.converged = true;
            break;
        }
        Eigen::MatrixXd W = precond.asDiagonal() * R;
        for (Eigen::Index j = 0; j < b; ++j) W.col(j).normalize();
        ops.apply(W, AW, BW);

        const Eigen::Index np = P.cols();
        Eigen::MatrixXd S(n, 2 * b + np), AS(n, 2 * b + np), BS(n, 2 * b + np);
        S << X, W, P;
        AS << AX, AW, AP;
        BS << BX, BW, BP;
        rr = rayleigh_ritz(S.transpose() * AS, S.transpose() * BS);
        const Eigen::Index kept = rr.vectors.cols();
        if (kept < b) break;
        Eigen::MatrixXd Y = rr.vectors.leftCols(b);
        theta = rr.values.head(b);
        // search direction: the part of the new iterate outside the old X
        Eigen::MatrixXd Yp = Y;
        Yp.topRows(b).setZero();
        P = S * Yp;
        AP = AS * Yp;
        BP = BS * Yp;
        for (Eigen::Index j = 0; j < b; ++j) {
            const double s = P.col(j).norm();
            if (s > 0) {
                P.col(j) /= s;
                AP.col(j) /= s;
                BP.col(j) /= s;
            }
        }
        X = S * Y;
        AX = AS * Y;
        BX = BS * Y;
    }

    out.epsilon = theta(0);
    out.ritz.assign(theta.data(), theta.data() + theta.size());
    out.minimizer = grid.zeros_section(true);
    out.minimizer.coeff = space.lift(X.col(0));
    const double nW = inner(grid, out.minimizer, out.minimizer);
    out.q_check = nW > 0 ? q_form(grid, out.minimizer) / nW : 0.0;
    return out;
}

double ray_dirichlet_epsilon(const MetricField& metric, int n_boundary, int n_angles, int points) {
    RaySet rays = trace_rays(metric, inflow_samples(metric, n_boundary, n_angles));
    if (rays.rays.empty()) throw DataError("ray_dirichlet_epsilon: no ray exited");
    std::vector<double> lowest(rays.rays.size());
    parallel_for(rays.rays.size(), [&](std::size_t r) {
        const GeodesicPath& p = rays.rays[r].path;
        const double tau = p.t.back(), h = tau / (points + 1);
        Eigen::VectorXd diag(points), off(points - 1);
        std::size_t seg = 0;
        for (int i = 0; i < points; ++i) {
            const double t = (i + 1) * h;
            while (seg + 2 < p.t.size() && p.t[seg + 1] < t) ++seg;
            const double s = (t - p.t[seg]) / (p.t[seg + 1] - p.t[seg]);
            const Vec2 x = (1 - s) * p.x[seg] + s * p.x[seg + 1];
            diag(i) = 2.0 / (h * h) - gaussian_curvature(metric, x);
        }
        off.setConstant(-1.0 / (h * h));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
        lowest[r] = es.eigenvalues()(0);
    });
    return *std::min_element(lowest.begin(), lowest.end());
}

} // namespace xrt
