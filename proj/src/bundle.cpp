#include "xrt/bundle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

namespace xrt {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

std::atomic<std::uint64_t> next_uid{1};

double wrap_angle(double a) {
    a = std::fmod(a, two_pi);
    return a < 0 ? a + two_pi : a;
}

int wrap(int j, int n) {
    j %= n;
    return j < 0 ? j + n : j;
}

// Fourth-order centered first derivative on offsets +-1, +-2, unit spacing.
constexpr double c1 = 8.0 / 12.0;
constexpr double c2 = -1.0 / 12.0;

// Periodic trigonometric differentiation on n even points: u'_k = sum_d w_d (u_{k-d} - u_{k+d}).
std::vector<double> spectral_pairs(int n) {
    std::vector<double> w(n / 2, 0.0);
    const double h = two_pi / n;
    for (int d = 1; d < n / 2; ++d) w[d] = 0.5 * (d % 2 ? -1.0 : 1.0) / std::tan(0.5 * d * h);
    return w;
}

// Trigonometric interpolant through n even equispaced samples at angle a.
double trig_interpolate(const double* u, int n, double a) {
    const double h = two_pi / n;
    const double t = a / h;
    const double nearest = std::round(t);
    if (std::abs(t - nearest) < 1e-12) return u[wrap(static_cast<int>(nearest), n)];
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        double d = 0.5 * (a - j * h);
        sum += u[j] * std::sin(n * d) / (n * std::tan(d));
    }
    return sum;
}

void check_same(const BundleGrid& grid, std::uint64_t uid, std::size_t n) {
    if (uid != grid.uid() || n != grid.size()) throw UsageError("field does not belong to this bundle grid");
}

} // namespace

BundleGrid::BundleGrid(MetricField metric, GridSpec spec)
    : metric_(std::move(metric)), spec_(spec), uid_(next_uid++) {
    if (spec.n_r < 4 || spec.n_phi < 8 || spec.n_psi < 8 || spec.n_phi % 2 != 0 || spec.n_psi % 2 != 0)
        throw UsageError("bundle grid needs n_r >= 4 and even n_phi, n_psi >= 8");
    const int nr = spec.n_r, nphi = spec.n_phi, m = spec.n_psi;
    geom_.resize(static_cast<std::size_t>(nr) * nphi);
    weights_.resize(geom_.size());
    parallel_for(geom_.size(), [&](std::size_t s) {
        int i = static_cast<int>(s) / nphi, j = static_cast<int>(s) % nphi;
        NodeGeometry& n = geom_[s];
        n.r = (i + 0.5) * dr();
        n.phi = j * dphi();
        n.x = n.r * Vec2(std::cos(n.phi), std::sin(n.phi));
        Geometry geo = eval_geometry(metric_, n.x);
        MetricDeriv dg = metric_.dg(n.x);
        n.g = geo.g;
        n.density = geo.density;
        n.gamma = geo.gamma;
        n.frame = orthonormal_frame(n.g);
        const Vec2 e1 = n.frame.col(0), e2 = n.frame.col(1);
        Vec2 omega;
        for (int a = 0; a < 2; ++a) {
            // e1 = d_1 / sqrt(g11)
            Vec2 de1(-0.5 * std::pow(n.g(0, 0), -1.5) * dg[a](0, 0), 0.0);
            Vec2 cov = de1 + Vec2(n.gamma[0].row(a).dot(e1), n.gamma[1].row(a).dot(e1));
            omega[a] = cov.dot(n.g * e2);
        }
        n.omega_frame = n.frame.transpose() * omega;
        n.K = gaussian_curvature(metric_, n.x);
        weights_[s] = n.density * n.r * dr() * dphi() * dpsi();
    });
    phi_pairs_ = spectral_pairs(nphi);
    psi_pairs_ = spectral_pairs(m);
    cos_psi_.resize(m);
    sin_psi_.resize(m);
    for (int k = 0; k < m; ++k) {
        cos_psi_[k] = std::cos(psi(k));
        sin_psi_[k] = std::sin(psi(k));
    }

    taps_plain_.resize(nr);
    taps_dirichlet_.resize(nr);
    auto ghost = [](int q) { return q < 0 ? RadialTap{-1 - q, true, 0.0} : RadialTap{q, false, 0.0}; };
    auto from_offsets = [&](int i, const std::vector<double>& offs, const std::vector<double>& w) {
        std::vector<RadialTap> taps;
        for (std::size_t t = 0; t < offs.size(); ++t) {
            if (w[t] == 0.0 || offs[t] != std::floor(offs[t])) continue;
            RadialTap tap = ghost(i + static_cast<int>(offs[t]));
            tap.weight = w[t] / dr();
            taps.push_back(tap);
        }
        return taps;
    };
    for (int i = 0; i < nr; ++i) {
        std::vector<double> offs, w;
        if (i <= nr - 3) {
            offs = {-2, -1, 1, 2};
            w = {-c2, -c1, c1, c2};
            taps_plain_[i] = taps_dirichlet_[i] = from_offsets(i, offs, w);
            continue;
        }
        if (i == nr - 2) {
            taps_plain_[i] = from_offsets(i, {-1, 1}, {-0.5, 0.5});
            offs = {-2, -1, 0, 1, 1.5};
        } else {
            taps_plain_[i] = from_offsets(i, {0, -1, -2}, {1.5, -2.0, 0.5});
            offs = {-2, -1, 0, 0.5};
        }
        // the boundary sample is zero, so its weight drops out
        taps_dirichlet_[i] = from_offsets(i, offs, fd_weights(0.0, offs, 1));
    }
}

double BundleGrid::dphi() const { return two_pi / spec_.n_phi; }
double BundleGrid::dpsi() const { return two_pi / spec_.n_psi; }

std::string BundleGrid::descriptor() const {
    return std::to_string(spec_.n_r) + "x" + std::to_string(spec_.n_phi) + "x" + std::to_string(spec_.n_psi);
}

Vec2 BundleGrid::v(std::size_t s, int k) const { return geom_[s].frame * Vec2(cos_psi_[k], sin_psi_[k]); }

Vec2 BundleGrid::v_perp(std::size_t s, int k) const { return geom_[s].frame * Vec2(-sin_psi_[k], cos_psi_[k]); }

Quality BundleGrid::quality(std::size_t s) const {
    int i = static_cast<int>(s) / spec_.n_phi;
    if (i <= spec_.n_r - 3) return Quality::interior;
    return i == spec_.n_r - 2 ? Quality::reduced : Quality::one_sided;
}

std::vector<Quality> BundleGrid::quality_mask() const {
    std::vector<Quality> q(geom_.size());
    for (std::size_t s = 0; s < q.size(); ++s) q[s] = quality(s);
    return q;
}

double BundleGrid::volume() const {
    KahanSum sum;
    for (double w : weights_) sum.add(w * spec_.n_psi);
    return sum.value();
}

ScalarField BundleGrid::scalar(const BundleFunction& f, bool vanishes_on_boundary) const {
    ScalarField u = zeros_scalar(vanishes_on_boundary);
    const int m = spec_.n_psi;
    parallel_for(geom_.size(), [&](std::size_t s) {
        for (int k = 0; k < m; ++k) u.values[s * m + k] = f(geom_[s].x, v(s, k), psi(k));
    });
    for (double x : u.values)
        if (!std::isfinite(x)) throw DataError("non-finite sample in bundle field");
    if (vanishes_on_boundary) assert_vanishing(*this, u.values, "scalar field");
    return u;
}

SectionN BundleGrid::section(const BundleFunction& a, bool vanishes_on_boundary) const {
    ScalarField tmp = scalar(a, vanishes_on_boundary);
    SectionN V = zeros_section(vanishes_on_boundary);
    V.coeff = std::move(tmp.values);
    return V;
}

ScalarField BundleGrid::zeros_scalar(bool vanishes_on_boundary) const {
    ScalarField u;
    u.grid_uid = uid_;
    u.values.assign(size(), 0.0);
    u.vanishes_on_boundary = vanishes_on_boundary;
    return u;
}

SectionN BundleGrid::zeros_section(bool vanishes_on_boundary) const {
    SectionN V;
    V.grid_uid = uid_;
    V.coeff.assign(size(), 0.0);
    V.vanishes_on_boundary = vanishes_on_boundary;
    return V;
}

double BundleGrid::angle_of(const Vec2& x, const Vec2& v) const {
    Mat2 E = orthonormal_frame(metric_.g(x));
    Vec2 c = E.inverse() * v;
    return wrap_angle(std::atan2(c[1], c[0]));
}

double BundleGrid::interpolate(const std::vector<double>& values, const Vec2& x, double psi_) const {
    const int nr = spec_.n_r, nphi = spec_.n_phi, m = spec_.n_psi;
    const double r = x.norm();
    const double phi = wrap_angle(std::atan2(x[1], x[0]));
    const double psi_w = wrap_angle(psi_);

    double s = r / dr() - 0.5;
    int i0 = std::min(static_cast<int>(std::floor(s)) - 1, nr - 4);
    double rn[4], wr[4];
    for (int t = 0; t < 4; ++t) rn[t] = i0 + t;
    lagrange_weights(s, rn, 4, wr);

    auto periodic = [](double a, double h, int n, int* idx, double* w) {
        double t = a / h;
        int j0 = static_cast<int>(std::floor(t)) - 1;
        double nodes[4];
        for (int q = 0; q < 4; ++q) {
            nodes[q] = j0 + q;
            idx[q] = ((j0 + q) % n + n) % n;
        }
        lagrange_weights(t, nodes, 4, w);
    };
    int kk[4];
    double wk[4];
    periodic(psi_w, dpsi(), m, kk, wk);

    double total = 0.0;
    for (int t = 0; t < 4; ++t) {
        int q = i0 + t;
        bool flipped = q < 0;
        int ring = flipped ? -1 - q : q;
        double ph = flipped ? phi + std::numbers::pi : phi;
        int jj[4];
        double wj[4];
        periodic(wrap_angle(ph), dphi(), nphi, jj, wj);
        double ring_sum = 0.0;
        for (int a = 0; a < 4; ++a) {
            const double* row = &values[index(ring, jj[a], 0)];
            double fib = 0.0;
            for (int b = 0; b < 4; ++b) fib += wk[b] * row[kk[b]];
            ring_sum += wj[a] * fib;
        }
        total += wr[t] * ring_sum;
    }
    return total;
}

const std::vector<BundleGrid::RadialTap>& BundleGrid::radial_taps(int i, bool vanishing) const {
    return vanishing ? taps_dirichlet_[i] : taps_plain_[i];
}

void BundleGrid::lift_stencil(int i, int j, int k, bool horizontal, bool vanishing,
                              const std::function<void(std::size_t, double)>& emit) const {
    const std::size_t s = spatial_index(i, j);
    const NodeGeometry& n = geom_[s];
    const double c = cos_psi_[k], sn = sin_psi_[k];
    Vec2 dir = horizontal ? n.frame * Vec2(-sn, c) : n.frame * Vec2(c, sn);
    double omega = horizontal ? -sn * n.omega_frame[0] + c * n.omega_frame[1]
                              : c * n.omega_frame[0] + sn * n.omega_frame[1];
    const double cp = std::cos(n.phi), sp = std::sin(n.phi);
    const double a_r = dir[0] * cp + dir[1] * sp;
    const double a_phi = (-dir[0] * sp + dir[1] * cp) / n.r;
    const int nphi = spec_.n_phi, m = spec_.n_psi;

    for (const RadialTap& t : radial_taps(i, vanishing)) {
        int jj = t.flipped ? (j + nphi / 2) % nphi : j;
        emit(index(t.ring, jj, k), a_r * t.weight);
    }
    for (int d = 1; d < nphi / 2; ++d) {
        emit(index(i, wrap(j - d, nphi), k), a_phi * phi_pairs_[d]);
        emit(index(i, wrap(j + d, nphi), k), -a_phi * phi_pairs_[d]);
    }
    for (int d = 1; d < m / 2; ++d) {
        emit(index(i, j, wrap(k - d, m)), -omega * psi_pairs_[d]);
        emit(index(i, j, wrap(k + d, m)), omega * psi_pairs_[d]);
    }
}

void BundleGrid::radial_derivative(int i, int j, bool vanishing, const std::vector<double>& u,
                                   std::vector<double>& out) const {
    const int nphi = spec_.n_phi, m = spec_.n_psi;
    std::fill(out.begin(), out.end(), 0.0);
    for (const RadialTap& t : radial_taps(i, vanishing)) {
        const double* row = &u[index(t.ring, t.flipped ? (j + nphi / 2) % nphi : j, 0)];
        for (int k = 0; k < m; ++k) out[k] += t.weight * row[k];
    }
}

void BundleGrid::fiber_stencil(int i, int j, int k, const std::function<void(std::size_t, double)>& emit) const {
    const int m = spec_.n_psi;
    for (int d = 1; d < m / 2; ++d) {
        emit(index(i, j, wrap(k - d, m)), psi_pairs_[d]);
        emit(index(i, j, wrap(k + d, m)), -psi_pairs_[d]);
    }
}

Eigen::SparseMatrix<double, Eigen::RowMajor> BundleGrid::lift_matrix(bool horizontal, bool vanishing) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(size() * (5 + spec_.n_phi + spec_.n_psi));
    for (int i = 0; i < spec_.n_r; ++i)
        for (int j = 0; j < spec_.n_phi; ++j)
            for (int k = 0; k < spec_.n_psi; ++k) {
                const auto row = static_cast<int>(index(i, j, k));
                lift_stencil(i, j, k, horizontal, vanishing,
                             [&](std::size_t col, double w) { trip.emplace_back(row, static_cast<int>(col), w); });
            }
    Eigen::SparseMatrix<double, Eigen::RowMajor> A(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

std::vector<double> BundleGrid::lift_adjoint(const std::vector<double>& y, bool horizontal, bool vanishing) const {
    const int nr = spec_.n_r, nphi = spec_.n_phi, m = spec_.n_psi;
    std::vector<double> yr(y.size()), yphi(y.size()), ypsi(y.size()), out(y.size(), 0.0);
    for (std::size_t s = 0; s < geom_.size(); ++s) {
        const NodeGeometry& n = geom_[s];
        const double cp = std::cos(n.phi), sp = std::sin(n.phi);
        for (int k = 0; k < m; ++k) {
            const double c = cos_psi_[k], sn = sin_psi_[k];
            Vec2 dir = horizontal ? n.frame * Vec2(-sn, c) : n.frame * Vec2(c, sn);
            double omega = horizontal ? -sn * n.omega_frame[0] + c * n.omega_frame[1]
                                      : c * n.omega_frame[0] + sn * n.omega_frame[1];
            const std::size_t q = s * m + k;
            yr[q] = (dir[0] * cp + dir[1] * sp) * y[q];
            yphi[q] = (-dir[0] * sp + dir[1] * cp) / n.r * y[q];
            ypsi[q] = -omega * y[q];
        }
    }
    // the periodic pair operators are antisymmetric
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nphi; ++j)
            for (int k = 0; k < m; ++k) {
                double acc = 0.0;
                for (int d = 1; d < nphi / 2; ++d)
                    acc += phi_pairs_[d] * (yphi[index(i, wrap(j + d, nphi), k)] - yphi[index(i, wrap(j - d, nphi), k)]);
                const double* row = &ypsi[index(i, j, 0)];
                for (int d = 1; d < m / 2; ++d) acc += psi_pairs_[d] * (row[wrap(k + d, m)] - row[wrap(k - d, m)]);
                out[index(i, j, k)] = acc;
            }
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nphi; ++j)
            for (const RadialTap& t : radial_taps(i, vanishing)) {
                double* dst = &out[index(t.ring, t.flipped ? (j + nphi / 2) % nphi : j, 0)];
                const double* src = &yr[index(i, j, 0)];
                for (int k = 0; k < m; ++k) dst[k] += t.weight * src[k];
            }
    return out;
}

void assert_vanishing(const BundleGrid& grid, const std::vector<double>& values, const std::string& what) {
    double top = 0.0;
    for (double x : values) top = std::max(top, std::abs(x));
    if (top == 0.0) return;
    const int nr = grid.n_r(), m = grid.n_psi();
    double worst = 0.0;
    for (int j = 0; j < grid.n_phi(); ++j)
        for (int k = 0; k < m; ++k) {
            double ext = 1.5 * values[grid.index(nr - 1, j, k)] - 0.5 * values[grid.index(nr - 2, j, k)];
            worst = std::max(worst, std::abs(ext));
        }
    if (worst > 0.05 * top)
        throw DataError(what + " is flagged as vanishing on the boundary but extrapolates to " +
                        std::to_string(worst) + " at r = 1 (max " + std::to_string(top) + ")");
}

namespace {

std::vector<double> apply_lift(const BundleGrid& grid, const std::vector<double>& u, bool horizontal, bool vanishing) {
    std::vector<double> out(u.size());
    const int nphi = grid.n_phi(), m = grid.n_psi();
    const auto& wp = grid.phi_pairs();
    const auto& wq = grid.psi_pairs();
    parallel_for(grid.spatial_count(), [&](std::size_t s) {
        const int i = static_cast<int>(s) / nphi, j = static_cast<int>(s) % nphi;
        const NodeGeometry& n = grid.node(s);
        const double cp = std::cos(n.phi), sp = std::sin(n.phi);
        std::vector<double> d_r(m, 0.0), d_phi(m, 0.0);
        for (int k = 0; k < m; ++k) {
            double acc = 0.0;
            for (int d = 1; d < nphi / 2; ++d)
                acc += wp[d] * (u[grid.index(i, wrap(j - d, nphi), k)] - u[grid.index(i, wrap(j + d, nphi), k)]);
            d_phi[k] = acc;
        }
        grid.radial_derivative(i, j, vanishing, u, d_r);
        const double* row = &u[s * m];
        for (int k = 0; k < m; ++k) {
            const double c = std::cos(grid.psi(k)), sn = std::sin(grid.psi(k));
            Vec2 dir = horizontal ? n.frame * Vec2(-sn, c) : n.frame * Vec2(c, sn);
            double omega = horizontal ? -sn * n.omega_frame[0] + c * n.omega_frame[1]
                                      : c * n.omega_frame[0] + sn * n.omega_frame[1];
            double d_psi = 0.0;
            for (int d = 1; d < m / 2; ++d) d_psi += wq[d] * (row[wrap(k - d, m)] - row[wrap(k + d, m)]);
            const double a_r = dir[0] * cp + dir[1] * sp;
            const double a_phi = (-dir[0] * sp + dir[1] * cp) / n.r;
            out[s * m + k] = a_r * d_r[k] + a_phi * d_phi[k] - omega * d_psi;
        }
    });
    return out;
}

std::vector<double> apply_fiber(const BundleGrid& grid, const std::vector<double>& u) {
    std::vector<double> out(u.size());
    const int m = grid.n_psi();
    const auto& wq = grid.psi_pairs();
    parallel_for(grid.spatial_count(), [&](std::size_t s) {
        const double* row = &u[s * m];
        for (int k = 0; k < m; ++k) {
            double acc = 0.0;
            for (int d = 1; d < m / 2; ++d) acc += wq[d] * (row[wrap(k - d, m)] - row[wrap(k + d, m)]);
            out[s * m + k] = acc;
        }
    });
    return out;
}

} // namespace

ScalarField apply_X(const BundleGrid& grid, const ScalarField& u, XMethod method, double dt) {
    check_same(grid, u.grid_uid, u.size());
    ScalarField out = grid.zeros_scalar();
    if (method == XMethod::stencil) {
        out.values = apply_lift(grid, u.values, false, u.vanishes_on_boundary);
        out.quality = grid.quality_mask();
        return out;
    }
    if (dt <= 0.0) dt = grid.spacing();
    const int m = grid.n_psi();
    const double r_last = 1.0 - 0.5 * grid.dr();
    out.quality.assign(grid.spatial_count(), Quality::interior);
    parallel_for(grid.spatial_count(), [&](std::size_t s) {
        const Vec2 x = grid.node(s).x;
        bool clamped = false;
        for (int k = 0; k < m; ++k) {
            PhasePoint z{x, grid.v(s, k)};
            double val[2];
            for (int side = 0; side < 2; ++side) {
                double t = side == 0 ? dt : -dt;
                PhasePoint w = rk4_step(grid.metric(), z, t);
                w.v /= std::sqrt(w.v.dot(grid.metric().g(w.x) * w.v));
                clamped = clamped || w.x.norm() > r_last - grid.dr();
                val[side] = grid.interpolate(u.values, w.x, grid.angle_of(w.x, w.v));
            }
            out.values[s * m + k] = (val[0] - val[1]) / (2.0 * dt);
        }
        if (clamped) out.quality[s] = Quality::one_sided;
    });
    return out;
}

SectionN apply_X_section(const BundleGrid& grid, const SectionN& V) {
    check_same(grid, V.grid_uid, V.size());
    const int m = grid.n_psi();
    const std::size_t n = grid.size();
    std::vector<double> comp[2] = {std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t s = 0; s < grid.spatial_count(); ++s)
        for (int k = 0; k < m; ++k) {
            Vec2 vp = grid.v_perp(s, k);
            comp[0][s * m + k] = V.coeff[s * m + k] * vp[0];
            comp[1][s * m + k] = V.coeff[s * m + k] * vp[1];
        }
    std::vector<double> d[2] = {apply_lift(grid, comp[0], false, V.vanishes_on_boundary),
                                apply_lift(grid, comp[1], false, V.vanishes_on_boundary)};
    SectionN out = grid.zeros_section();
    out.quality = grid.quality_mask();
    std::vector<double> defect(grid.spatial_count(), 0.0);
    parallel_for(grid.spatial_count(), [&](std::size_t s) {
        const NodeGeometry& node = grid.node(s);
        for (int k = 0; k < m; ++k) {
            const std::size_t q = s * m + k;
            Vec2 v = grid.v(s, k), vp = grid.v_perp(s, k);
            Vec2 Vc(comp[0][q], comp[1][q]);
            Vec2 xv = Vec2(d[0][q], d[1][q]) + contract(node.gamma, v, Vc);
            out.coeff[q] = xv.dot(node.g * vp);
            defect[s] = std::max(defect[s], std::abs(xv.dot(node.g * v)));
        }
    });
    out.projection_defect = *std::max_element(defect.begin(), defect.end());
    return out;
}

ScalarField apply_H(const BundleGrid& grid, const ScalarField& u) {
    check_same(grid, u.grid_uid, u.size());
    ScalarField out = grid.zeros_scalar();
    out.values = apply_lift(grid, u.values, true, u.vanishes_on_boundary);
    out.quality = grid.quality_mask();
    return out;
}

ScalarField fiber_derivative(const BundleGrid& grid, const ScalarField& u) {
    check_same(grid, u.grid_uid, u.size());
    ScalarField out = grid.zeros_scalar(u.vanishes_on_boundary);
    out.values = apply_fiber(grid, u.values);
    return out;
}

SectionN v_grad(const BundleGrid& grid, const ScalarField& u) {
    check_same(grid, u.grid_uid, u.size());
    SectionN out = grid.zeros_section(u.vanishes_on_boundary);
    out.coeff = apply_fiber(grid, u.values);
    return out;
}

ScalarField v_div(const BundleGrid& grid, const SectionN& V) {
    check_same(grid, V.grid_uid, V.size());
    ScalarField out = grid.zeros_scalar(V.vanishes_on_boundary);
    out.values = apply_fiber(grid, V.coeff);
    return out;
}

SectionN h_grad(const BundleGrid& grid, const ScalarField& u) {
    check_same(grid, u.grid_uid, u.size());
    SectionN out = grid.zeros_section();
    out.coeff = apply_lift(grid, u.values, true, u.vanishes_on_boundary);
    out.quality = grid.quality_mask();
    return out;
}

ScalarField h_div(const BundleGrid& grid, const SectionN& V) {
    check_same(grid, V.grid_uid, V.size());
    ScalarField out = grid.zeros_scalar();
    out.values = apply_lift(grid, V.coeff, true, V.vanishes_on_boundary);
    out.quality = grid.quality_mask();
    return out;
}

SectionN curvature_op(const BundleGrid& grid, const SectionN& V) {
    check_same(grid, V.grid_uid, V.size());
    SectionN out = grid.zeros_section(V.vanishes_on_boundary);
    const int m = grid.n_psi();
    for (std::size_t s = 0; s < grid.spatial_count(); ++s)
        for (int k = 0; k < m; ++k) out.coeff[s * m + k] = grid.node(s).K * V.coeff[s * m + k];
    return out;
}

namespace {

double weighted_dot(const BundleGrid& grid, const std::vector<double>& a, const std::vector<double>& b) {
    const int m = grid.n_psi();
    KahanSum sum;
    for (std::size_t s = 0; s < grid.spatial_count(); ++s) {
        double fiber = 0.0;
        for (int k = 0; k < m; ++k) fiber += a[s * m + k] * b[s * m + k];
        sum.add(grid.weight(s) * fiber);
    }
    return sum.value();
}

double sq(const BundleGrid& grid, const std::vector<double>& a) { return weighted_dot(grid, a, a); }

} // namespace

double inner(const BundleGrid& grid, const ScalarField& a, const ScalarField& b) {
    check_same(grid, a.grid_uid, a.size());
    check_same(grid, b.grid_uid, b.size());
    return weighted_dot(grid, a.values, b.values);
}

double inner(const BundleGrid& grid, const SectionN& a, const SectionN& b) {
    check_same(grid, a.grid_uid, a.size());
    check_same(grid, b.grid_uid, b.size());
    return weighted_dot(grid, a.coeff, b.coeff);
}

double integrate(const BundleGrid& grid, const ScalarField& u) {
    check_same(grid, u.grid_uid, u.size());
    std::vector<double> ones(u.size(), 1.0);
    return weighted_dot(grid, u.values, ones);
}

std::string to_string(NormKind k) {
    switch (k) {
    case NormKind::L2SM: return "L2SM";
    case NormKind::L2N: return "L2N";
    case NormKind::H1SM: return "H1SM";
    case NormKind::H1N: return "H1N";
    case NormKind::H1NX: return "H1NX";
    case NormKind::K2: return "K2";
    }
    return "?";
}

namespace {

double h1sm_sq(const BundleGrid& grid, const ScalarField& u) {
    return sq(grid, u.values) + sq(grid, apply_X(grid, u).values) + sq(grid, v_grad(grid, u).coeff) +
           sq(grid, h_grad(grid, u).coeff);
}

double h1nx_sq(const BundleGrid& grid, const SectionN& V) {
    return sq(grid, V.coeff) + sq(grid, apply_X_section(grid, V).coeff);
}

} // namespace

double norm(const BundleGrid& grid, const ScalarField& u, NormKind which) {
    check_same(grid, u.grid_uid, u.size());
    switch (which) {
    case NormKind::L2SM: return std::sqrt(sq(grid, u.values));
    case NormKind::H1SM: return std::sqrt(h1sm_sq(grid, u));
    case NormKind::K2:
        return std::sqrt(h1sm_sq(grid, u) + h1sm_sq(grid, apply_X(grid, u)) + h1nx_sq(grid, v_grad(grid, u)));
    default: throw UsageError("norm " + to_string(which) + " applies to sections, not scalar fields");
    }
}

double norm(const BundleGrid& grid, const SectionN& V, NormKind which) {
    check_same(grid, V.grid_uid, V.size());
    switch (which) {
    case NormKind::L2N: return std::sqrt(sq(grid, V.coeff));
    case NormKind::H1N:
        return std::sqrt(sq(grid, V.coeff) + sq(grid, v_div(grid, V).values) + sq(grid, h_div(grid, V).values));
    case NormKind::H1NX: return std::sqrt(h1nx_sq(grid, V));
    default: throw UsageError("norm " + to_string(which) + " applies to scalar fields, not sections");
    }
}

BoundaryPart classify_boundary(const MetricField& metric, const Vec2& x, const Vec2& v) {
    if (std::abs(x.norm() - 1.0) > 1e-9) throw DomainError("classify_boundary: point is not on the boundary circle");
    Mat2 g = metric.g(x);
    Vec2 grad = g.inverse() * (-2.0 * x);
    Vec2 nu = grad / std::sqrt(grad.dot(g * grad));
    double c = v.dot(g * nu);
    if (std::abs(c) < 1e-10) return BoundaryPart::tangential;
    return c > 0 ? BoundaryPart::inward : BoundaryPart::outward;
}

double fiber_jacobian(const Mat2& frame_from, const Mat2& frame_to, double psi_to) {
    Mat2 A = frame_from.inverse() * frame_to;
    Vec2 w = A * Vec2(std::cos(psi_to), std::sin(psi_to));
    return A.determinant() / w.squaredNorm();
}

namespace {

Transfer transfer_values(const BundleGrid& from, const BundleGrid& to, const std::vector<double>& u) {
    if (from.n_r() != to.n_r() || from.n_phi() != to.n_phi() || from.n_psi() != to.n_psi())
        throw UsageError("radial_transfer: grids differ in shape");
    const int m = to.n_psi();
    Transfer out;
    out.values = to.zeros_scalar();
    out.jacobian.assign(to.size(), 0.0);
    parallel_for(to.spatial_count(), [&](std::size_t s) {
        const Mat2 Ef = from.node(s).frame, Et = to.node(s).frame;
        const Mat2 A = Ef.inverse() * Et;
        const double dens = from.node(s).density / to.node(s).density;
        for (int k = 0; k < m; ++k) {
            Vec2 w = A * Vec2(std::cos(to.psi(k)), std::sin(to.psi(k)));
            out.values.values[s * m + k] = trig_interpolate(&u[s * m], m, wrap_angle(std::atan2(w[1], w[0])));
            out.jacobian[s * m + k] = dens * A.determinant() / w.squaredNorm();
        }
    });
    return out;
}

} // namespace

Transfer radial_transfer(const BundleGrid& from, const BundleGrid& to, const ScalarField& u) {
    check_same(from, u.grid_uid, u.size());
    Transfer t = transfer_values(from, to, u.values);
    t.values.vanishes_on_boundary = u.vanishes_on_boundary;
    return t;
}

Transfer radial_transfer(const BundleGrid& from, const BundleGrid& to, const SectionN& V) {
    check_same(from, V.grid_uid, V.size());
    Transfer t = transfer_values(from, to, V.coeff);
    t.values.vanishes_on_boundary = V.vanishes_on_boundary;
    return t;
}

} // namespace xrt
