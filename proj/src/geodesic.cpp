#include "xrt/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

namespace xrt {

std::string to_string(PathStatus s) {
    switch (s) {
    case PathStatus::exited: return "exited";
    case PathStatus::step_limit: return "step_limit";
    case PathStatus::tangential_start: return "tangential_start";
    }
    return "unknown";
}

double default_step(double spacing) { return std::min(1.0 / 256.0, spacing / 4.0); }

double boundary_defining(const Vec2& x) { return 1.0 - x.squaredNorm(); }

Vec2 inward_normal(const MetricField& metric, const Vec2& x) {
    Mat2 gi = metric.g(x).inverse();
    // gradient of 1 - |x|^2 is -2x; raise the index and normalize
    Vec2 n = -(gi * x);
    return n / std::sqrt(x.dot(gi * x));
}

double g_norm(const MetricField& metric, const Vec2& x, const Vec2& v) { return std::sqrt(v.dot(metric.g(x) * v)); }

Vec2 normalize(const MetricField& metric, const Vec2& x, const Vec2& v) { return v / g_norm(metric, x, v); }

namespace {

inline void rhs(const MetricField& metric, const Vec2& x, const Vec2& v, Vec2& dx, Vec2& dv) {
    Christoffel G = christoffel_at(metric, x);
    dx = v;
    dv = -contract(G, v, v);
}

} // namespace

PhasePoint rk4_step(const MetricField& metric, const PhasePoint& z, double h) {
    Vec2 k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v;
    rhs(metric, z.x, z.v, k1x, k1v);
    rhs(metric, z.x + 0.5 * h * k1x, z.v + 0.5 * h * k1v, k2x, k2v);
    rhs(metric, z.x + 0.5 * h * k2x, z.v + 0.5 * h * k2v, k3x, k3v);
    rhs(metric, z.x + h * k3x, z.v + h * k3v, k4x, k4v);
    return {z.x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x), z.v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)};
}

PhasePoint flow(const MetricField& metric, const PhasePoint& z, double t, double step) {
    if (t == 0.0) return z;
    int n = std::max(1, static_cast<int>(std::ceil(std::abs(t) / step - 1e-9)));
    double h = t / n;
    PhasePoint s = z;
    for (int i = 0; i < n; ++i) {
        s = rk4_step(metric, s, h);
        s.v = normalize(metric, s.x, s.v);
    }
    return s;
}

GeodesicPath integrate_geodesic(const MetricField& metric, const PhasePoint& z, const GeodesicOptions& opts) {
    GeodesicPath p;
    p.start = z;
    p.step = opts.step;
    auto record = [&](double t, const PhasePoint& s, double drift) {
        if (!opts.record) return;
        p.t.push_back(t);
        p.x.push_back(s.x);
        p.v.push_back(s.v);
        p.drift.push_back(drift);
    };
    auto finish = [&](double tau, const PhasePoint& s, PathStatus st) {
        p.tau_plus = tau;
        p.status = st;
        p.endpoint = s.x;
        p.end_velocity = s.v;
    };

    PhasePoint state = z;
    const bool on_boundary = boundary_defining(z.x) <= opts.boundary_tol;
    if (on_boundary) {
        double s = z.v.dot(metric.g(z.x) * inward_normal(metric, z.x));
        if (std::abs(s) < 1e-10) {
            record(0.0, state, 0.0);
            finish(0.0, state, PathStatus::tangential_start);
            return p;
        }
        if (s < 0.0) {
            record(0.0, state, 0.0);
            finish(0.0, state, PathStatus::exited);
            return p;
        }
    }
    record(0.0, state, 0.0);
    double t = 0.0;
    bool first = true;
    while (true) {
        if (t >= opts.max_length - 1e-12) {
            finish(t, state, PathStatus::step_limit);
            return p;
        }
        const double h = std::min(opts.step, opts.max_length - t);
        PhasePoint next = rk4_step(metric, state, h);
        double nv = g_norm(metric, next.x, next.v);
        double drift = nv - 1.0;
        p.max_drift = std::max(p.max_drift, std::abs(drift));
        next.v /= nv;
        if (boundary_defining(next.x) < 0.0) {
            double lo = 0.0, hi = h;
            if (first && on_boundary) {
                // find an interior point after leaving the boundary
                lo = -1.0;
                for (double a = 0.5 * h; a > 1e-18; a *= 0.5) {
                    if (boundary_defining(rk4_step(metric, state, a).x) > 0.0) {
                        lo = a;
                        break;
                    }
                }
                if (lo < 0.0) {
                    finish(0.0, state, PathStatus::exited);
                    return p;
                }
            }
            for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                double mid = 0.5 * (lo + hi);
                double rho = boundary_defining(rk4_step(metric, state, mid).x);
                if (std::abs(rho) <= opts.boundary_tol) {
                    lo = hi = mid;
                    break;
                }
                if (rho > 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
            double s = 0.5 * (lo + hi);
            PhasePoint end = rk4_step(metric, state, s);
            end.v = normalize(metric, end.x, end.v);
            record(t + s, end, drift);
            finish(t + s, end, PathStatus::exited);
            return p;
        }
        t += h;
        state = next;
        first = false;
        record(t, state, drift);
    }
}

ExitTimes exit_time(const MetricField& metric, const PhasePoint& z, const GeodesicOptions& opts) {
    GeodesicOptions o = opts;
    o.record = false;
    GeodesicPath f = integrate_geodesic(metric, z, o);
    GeodesicPath b = integrate_geodesic(metric, {z.x, -z.v}, o);
    return {f.tau_plus, -b.tau_plus, f.status, b.status};
}

double chord_exit_time(const Vec2& x, const Vec2& v) {
    double b = x.dot(v);
    double disc = 1.0 - x.squaredNorm() + b * b;
    return -b + std::sqrt(std::max(0.0, disc));
}

FlowProbe flow_lipschitz_probe(const MetricField& metric, const std::vector<std::pair<PhasePoint, PhasePoint>>& pairs,
                               const std::vector<double>& times, const GeodesicOptions& opts) {
    FlowProbe out;
    out.ratios.assign(pairs.size(), 0.0);
    parallel_for(pairs.size(), [&](std::size_t i) {
        const auto& [a, b] = pairs[i];
        double d0 = std::sqrt((a.x - b.x).squaredNorm() + (a.v - b.v).squaredNorm());
        if (d0 == 0.0) return;
        double T = std::min(exit_time(metric, a, opts).tau_plus, exit_time(metric, b, opts).tau_plus);
        double best = 0.0;
        for (double t : times) {
            if (t <= 0.0 || t > T) continue;
            PhasePoint fa = flow(metric, a, t, opts.step), fb = flow(metric, b, t, opts.step);
            double d = std::sqrt((fa.x - fb.x).squaredNorm() + (fa.v - fb.v).squaredNorm());
            best = std::max(best, d / d0);
        }
        out.ratios[i] = best;
    });
    for (double r : out.ratios) out.max_ratio = std::max(out.max_ratio, r);
    return out;
}

JacobiData jacobi_index(const MetricField& metric, const GeodesicPath& path,
                        const std::function<std::pair<double, double>(double, double)>& variation, double step) {
    JacobiData out;
    const double L = path.tau_plus;
    out.length = L;
    if (path.status != PathStatus::exited) throw UsageError("jacobi_index: path did not exit");
    if (step <= 0.0) step = path.step > 0.0 ? path.step : 1.0 / 256.0;
    int n = std::max(2, static_cast<int>(std::ceil(L / step)));
    if (n % 2) ++n;
    const double h = L / n;
    struct State {
        Vec2 x, v;
        double j, jp;
    };
    auto K_at = [&](const Vec2& x) { return gaussian_curvature_from_jet(metric.jet(x)); };
    auto deriv = [&](const State& s, State& d) {
        Christoffel G = christoffel_at(metric, s.x);
        d.x = s.v;
        d.v = -contract(G, s.v, s.v);
        d.j = s.jp;
        d.jp = -K_at(s.x) * s.j;
    };
    auto axpy = [](const State& s, double a, const State& d) {
        return State{s.x + a * d.x, s.v + a * d.v, s.j + a * d.j, s.jp + a * d.jp};
    };
    State s{path.start.x, path.start.v, 0.0, 1.0};
    out.t.push_back(0.0);
    out.j.push_back(0.0);
    out.jp.push_back(1.0);
    out.K.push_back(K_at(s.x));
    for (int k = 0; k < n; ++k) {
        State k1, k2, k3, k4;
        deriv(s, k1);
        deriv(axpy(s, 0.5 * h, k1), k2);
        deriv(axpy(s, 0.5 * h, k2), k3);
        deriv(axpy(s, h, k3), k4);
        s.x += h / 6.0 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
        s.v += h / 6.0 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v);
        s.j += h / 6.0 * (k1.j + 2 * k2.j + 2 * k3.j + k4.j);
        s.jp += h / 6.0 * (k1.jp + 2 * k2.jp + 2 * k3.jp + k4.jp);
        s.v = normalize(metric, s.x, s.v);
        out.t.push_back((k + 1) * h);
        out.j.push_back(s.j);
        out.jp.push_back(s.jp);
        out.K.push_back(K_at(s.x));
    }
    double jmax = 0.0;
    for (double v : out.j) jmax = std::max(jmax, std::abs(v));
    // sign changes, refined on the cubic Hermite interpolant
    for (int k = 1; k < n; ++k) {
        double a = out.j[k], b = out.j[k + 1];
        if (a == 0.0) {
            out.zeros.push_back({out.t[k], false});
            continue;
        }
        if (a * b >= 0.0) continue;
        double da = out.jp[k] * h, db = out.jp[k + 1] * h;
        auto herm = [&](double u) {
            double u2 = u * u, u3 = u2 * u;
            return (2 * u3 - 3 * u2 + 1) * a + (u3 - 2 * u2 + u) * da + (-2 * u3 + 3 * u2) * b + (u3 - u2) * db;
        };
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (lo + hi);
            if ((herm(mid) > 0) == (a > 0))
                lo = mid;
            else
                hi = mid;
        }
        out.zeros.push_back({out.t[k] + 0.5 * (lo + hi) * h, false});
    }
    if (std::abs(out.j.back()) < 1e-6 * std::max(jmax, 1e-300)) {
        bool near = !out.zeros.empty() && std::abs(out.zeros.back().t - L) < 1e-6;
        if (!near) out.zeros.push_back({L, true});
    }
    double res = 0.0;
    for (int k = 1; k < n; ++k) {
        double jpp = (out.jp[k + 1] - out.jp[k - 1]) / (2 * h);
        res = std::max(res, std::abs(jpp + out.K[k] * out.j[k]));
    }
    out.residual = res;
    if (variation) {
        // composite Simpson for int (V'^2 - K V^2) dt
        KahanSum sum;
        for (int k = 0; k <= n; ++k) {
            auto [V, dV] = variation(out.t[k], L);
            double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
            sum.add(w * (dV * dV - out.K[k] * V * V));
        }
        out.index_form = sum.value() * h / 3.0;
    }
    return out;
}

SecondFundamentalForm second_fundamental_form(const MetricField& metric, const Vec2& xb, const Vec2& w) {
    if (std::abs(xb.norm() - 1.0) > 1e-10) throw DomainError("second_fundamental_form: point is not on the boundary");
    Mat2 g = metric.g(xb);
    if (std::abs(w.dot(g * inward_normal(metric, xb))) > 1e-10)
        throw UsageError("second_fundamental_form: direction is not tangent to the boundary");
    if (std::abs(std::sqrt(w.dot(g * w)) - 1.0) > 1e-8)
        throw UsageError("second_fundamental_form: direction is not g-unit");
    // z = rho / |d rho|_g approximates the signed g-distance to the boundary
    auto z = [&](const Vec2& y) {
        Vec2 drho = -2.0 * y;
        return boundary_defining(y) / std::sqrt(drho.dot(metric.g(y).inverse() * drho));
    };
    auto estimate = [&](double t, double& scale) {
        PhasePoint start{xb, w};
        PhasePoint fwd = flow(metric, start, t, t / 64.0);
        PhasePoint bwd = flow(metric, start, -t, t / 64.0);
        double zs = z(fwd.x) + z(bwd.x);
        scale = std::max(std::abs(z(fwd.x)), std::abs(z(bwd.x)));
        return -zs / (t * t);
    };
    SecondFundamentalForm out{0.0, 0.02, false};
    for (int widen = 0; widen < 5; ++widen) {
        double s1, s2;
        double a = estimate(out.delta, s1);
        double b = estimate(0.5 * out.delta, s2);
        out.value = (4.0 * b - a) / 3.0;
        if (std::max(s1, s2) > 1e-12) break;
        // signal at roundoff level: widen and accept the lower order
        out.widened = true;
        out.delta *= 2.0;
    }
    return out;
}

TauProbe tau_squared_lipschitz_probe(const MetricField& metric, const Vec2& xb, const Vec2& w,
                                     const std::vector<double>& scales, const GeodesicOptions& opts) {
    Vec2 nu = inward_normal(metric, xb);
    Mat2 gb = metric.g(xb);
    double orient = w.dot(gb * rotate_quarter(gb, nu)) >= 0.0 ? 1.0 : -1.0;
    TauProbe out;
    GeodesicOptions o = opts;
    o.record = false;
    std::vector<double> lx, ly;
    out.max_ratio = 0.0;
    for (double h : scales) {
        PhasePoint along = flow(metric, {xb, nu}, h, std::min(opts.step, h / 8.0));
        Mat2 gh = metric.g(along.x);
        Vec2 wh = orient * rotate_quarter(gh, along.v);
        GeodesicPath p = integrate_geodesic(metric, {along.x, wh}, o);
        double d = std::sqrt((along.x - xb).squaredNorm() + (wh - w).squaredNorm());
        double tau = p.tau_plus;
        double ratio = d > 0.0 ? tau * tau / d : 0.0;
        out.rows.push_back({h, tau, d, ratio, p.status});
        out.max_ratio = std::max(out.max_ratio, ratio);
        lx.push_back(std::log2(1.0 / h));
        ly.push_back(std::log2(std::max(ratio, 1e-300)));
    }
    out.slope = lx.size() >= 2 ? fit_slope(lx, ly) : 0.0;
    return out;
}

namespace {

struct ShotResult {
    bool valid = false;
    double signed_miss = 0.0;
    double miss = 0.0;
    double t = 0.0;
};

double cross(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }

ShotResult shoot(const MetricField& metric, const Vec2& x, const Mat2& frame, double angle, const Vec2& y,
                 const GeodesicOptions& opts, GeodesicPath* keep = nullptr) {
    ShotResult r;
    Vec2 v = frame * Vec2(std::cos(angle), std::sin(angle));
    GeodesicOptions o = opts;
    o.record = true;
    GeodesicPath p = integrate_geodesic(metric, {x, v}, o);
    const std::size_t n = p.x.size();
    if (n < 3) return r;
    std::size_t k = 0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        double d = (p.x[i] - y).squaredNorm();
        if (d <= (p.x[i - 1] - y).squaredNorm() && d <= (p.x[i + 1] - y).squaredNorm()) {
            k = i;
            break;
        }
    }
    if (k == 0) return r;
    // closest approach lies on the side where (x - y).v changes sign
    std::size_t a = (p.x[k] - y).dot(p.v[k]) > 0.0 ? k - 1 : k;
    std::size_t b = a + 1;
    double ta = p.t[a], tb = p.t[b], L = tb - ta;
    auto herm = [&](double u, Vec2& pos, Vec2& vel) {
        double u2 = u * u, u3 = u2 * u;
        pos = (2 * u3 - 3 * u2 + 1) * p.x[a] + (u3 - 2 * u2 + u) * L * p.v[a] + (-2 * u3 + 3 * u2) * p.x[b] +
              (u3 - u2) * L * p.v[b];
        vel = ((6 * u2 - 6 * u) * p.x[a] + (3 * u2 - 4 * u + 1) * L * p.v[a] + (-6 * u2 + 6 * u) * p.x[b] +
               (3 * u2 - 2 * u) * L * p.v[b]) /
              L;
    };
    double lo = 0.0, hi = 1.0;
    Vec2 pos, vel;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        herm(mid, pos, vel);
        if ((pos - y).dot(vel) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    herm(0.5 * (lo + hi), pos, vel);
    r.valid = true;
    r.t = ta + 0.5 * (lo + hi) * L;
    r.miss = (pos - y).norm();
    r.signed_miss = cross(vel, pos - y) / vel.norm();
    if (keep) *keep = std::move(p);
    return r;
}

} // namespace

ConnectResult connect_points(const MetricField& metric, const Vec2& x, const Vec2& y, int starts,
                             const GeodesicOptions& opts) {
    if ((x - y).norm() < 1e-12) throw UsageError("connect_points: endpoints coincide");
    if (x.norm() > 1.0 || y.norm() > 1.0) throw DomainError("connect_points: endpoints must lie in the disk");
    ConnectResult out;
    const Mat2 frame = orthonormal_frame(metric.g(x));
    const int per = 8;
    const int n = starts * per;
    std::vector<double> ang(n);
    std::vector<ShotResult> shots(n);
    for (int i = 0; i < n; ++i) ang[i] = 2.0 * std::numbers::pi * i / n;
    parallel_for(n, [&](std::size_t i) { shots[i] = shoot(metric, x, frame, ang[i], y, opts); });
    std::vector<Connection> found;
    for (int i = 0; i < n; ++i) {
        int j = (i + 1) % n;
        const ShotResult &A = shots[i], &B = shots[j];
        if (!A.valid || !B.valid) continue;
        if ((A.signed_miss > 0) == (B.signed_miss > 0)) continue;
        if (std::abs(A.t - B.t) > 0.25 * (A.t + B.t) + 0.05) continue;   // different branch of closest approach
        double a = ang[i], b = j == 0 ? 2.0 * std::numbers::pi : ang[j];
        double fa = A.signed_miss, fb = B.signed_miss;
        ShotResult best = std::abs(fa) < std::abs(fb) ? A : B;
        double best_ang = std::abs(fa) < std::abs(fb) ? a : b;
        int side = 0;
        // Illinois false position, falling back to bisection when the update stalls
        for (int it = 0; it < 100 && std::abs(b - a) > 1e-15; ++it) {
            double c = (a * fb - b * fa) / (fb - fa);
            if (!(c > std::min(a, b) && c < std::max(a, b))) c = 0.5 * (a + b);
            ShotResult C = shoot(metric, x, frame, c, y, opts);
            if (!C.valid) {
                c = 0.5 * (a + b);
                C = shoot(metric, x, frame, c, y, opts);
                if (!C.valid) break;
            }
            if (std::abs(C.signed_miss) < std::abs(best.signed_miss)) {
                best = C;
                best_ang = c;
            }
            if (std::abs(C.signed_miss) < 1e-13) break;
            if ((C.signed_miss > 0) == (fb > 0)) {
                b = c;
                fb = C.signed_miss;
                if (side == -1) fa *= 0.5;
                side = -1;
            } else {
                a = c;
                fa = C.signed_miss;
                if (side == 1) fb *= 0.5;
                side = 1;
            }
        }
        if (best.miss < 1e-8) {
            Connection con;
            con.angle = std::fmod(best_ang, 2.0 * std::numbers::pi);
            GeodesicPath p;
            ShotResult again = shoot(metric, x, frame, con.angle, y, opts, &p);
            con.length = again.t;
            con.miss = again.miss;
            con.path = std::move(p);
            found.push_back(std::move(con));
        }
    }
    std::sort(found.begin(), found.end(), [](const Connection& a, const Connection& b) { return a.length < b.length; });
    for (auto& c : found) {
        bool dup = false;
        for (const auto& s : out.solutions) {
            double d = std::abs(std::remainder(c.angle - s.angle, 2.0 * std::numbers::pi));
            if (d < 1e-6) dup = true;
        }
        if (!dup) out.solutions.push_back(std::move(c));
    }
    out.converged = !out.solutions.empty();
    return out;
}

void write_ray_csv(const std::string& path, const GeodesicPath& ray) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path);
    out << "t,x1,x2,v1,v2,drift\n" << std::setprecision(17);
    for (std::size_t k = 0; k < ray.t.size(); ++k)
        out << ray.t[k] << "," << ray.x[k][0] << "," << ray.x[k][1] << "," << ray.v[k][0] << "," << ray.v[k][1] << ","
            << ray.drift[k] << "\n";
}

} // namespace xrt
