#include "xrt/metric.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace xrt {

namespace {

// One scalar field on the square with node values and derivative estimates for Hermite patches.
struct HermitePlane {
    int n = 0;
    double lo = -1.0, h = 1.0;
    std::vector<double> f, fx, fy, fxy;

    double at(const std::vector<double>& a, int i, int j) const { return a[static_cast<std::size_t>(j) * n + i]; }

    static std::vector<double> derivative(const std::vector<double>& a, int n, double h, bool along_x) {
        std::vector<double> out(a.size());
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                int p = along_x ? i : j;
                // widest centered 5-point stencil that fits, shifted near the edges
                int start = std::clamp(p - 2, 0, n - 5);
                std::vector<double> xs;
                for (int q = start; q < start + 5; ++q) xs.push_back((q - p) * h);
                auto w = fd_weights(0.0, xs, 1);
                double s = 0.0;
                for (int q = 0; q < 5; ++q) {
                    int ii = along_x ? start + q : i;
                    int jj = along_x ? j : start + q;
                    s += w[q] * a[static_cast<std::size_t>(jj) * n + ii];
                }
                out[static_cast<std::size_t>(j) * n + i] = s;
            }
        return out;
    }

    void build(std::vector<double> values, int n_, double lo_, double h_) {
        n = n_;
        lo = lo_;
        h = h_;
        f = std::move(values);
        fx = derivative(f, n, h, true);
        fy = derivative(f, n, h, false);
        fxy = derivative(fx, n, h, false);
    }

    // value and gradient at x
    void eval(const Vec2& x, double& val, Vec2& grad) const {
        double sx = (x[0] - lo) / h, sy = (x[1] - lo) / h;
        int i = std::clamp(static_cast<int>(std::floor(sx)), 0, n - 2);
        int j = std::clamp(static_cast<int>(std::floor(sy)), 0, n - 2);
        double u = sx - i, t = sy - j;
        auto basis = [](double s, double* b, double* db) {
            double s2 = s * s, s3 = s2 * s;
            b[0] = 2 * s3 - 3 * s2 + 1;
            b[1] = s3 - 2 * s2 + s;
            b[2] = -2 * s3 + 3 * s2;
            b[3] = s3 - s2;
            db[0] = 6 * s2 - 6 * s;
            db[1] = 3 * s2 - 4 * s + 1;
            db[2] = -6 * s2 + 6 * s;
            db[3] = 3 * s2 - 2 * s;
        };
        double bu[4], dbu[4], bt[4], dbt[4];
        basis(u, bu, dbu);
        basis(t, bt, dbt);
        // corner data: (value, d/du, d/dt, d2/dudt) in cell-local units
        double v = 0, vu = 0, vt = 0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                int ii = i + a, jj = j + b;
                double F = at(f, ii, jj), Fu = at(fx, ii, jj) * h, Ft = at(fy, ii, jj) * h,
                       Fut = at(fxy, ii, jj) * h * h;
                // Hermite basis indices: value at end a uses slot 2a, slope uses slot 2a+1
                double pu = bu[2 * a], su = bu[2 * a + 1], dpu = dbu[2 * a], dsu = dbu[2 * a + 1];
                double pt = bt[2 * b], st = bt[2 * b + 1], dpt = dbt[2 * b], dst = dbt[2 * b + 1];
                v += F * pu * pt + Fu * su * pt + Ft * pu * st + Fut * su * st;
                vu += F * dpu * pt + Fu * dsu * pt + Ft * dpu * st + Fut * dsu * st;
                vt += F * pu * dpt + Fu * su * dpt + Ft * pu * dst + Fut * su * dst;
            }
        val = v;
        grad = Vec2(vu / h, vt / h);
    }
};

class GridSource : public MetricSource {
public:
    GridSource(int n, double lo, double hi, const std::vector<Mat2>& samples) : n_(n), lo_(lo), hi_(hi) {
        if (n < 5) throw DataError("grid metric: need at least 5 samples per side");
        if (samples.size() != static_cast<std::size_t>(n) * n) throw DataError("grid metric: sample count mismatch");
        double h = (hi - lo) / (n - 1);
        std::array<std::vector<double>, 3> comp;
        for (auto& c : comp) c.resize(samples.size());
        for (std::size_t q = 0; q < samples.size(); ++q) {
            const Mat2& g = samples[q];
            if (!g.allFinite()) throw DataError("grid metric: non-finite sample");
            comp[0][q] = g(0, 0);
            comp[1][q] = 0.5 * (g(0, 1) + g(1, 0));
            comp[2][q] = g(1, 1);
        }
        for (int c = 0; c < 3; ++c) planes_[c].build(comp[c], n, lo, h);
        samples_ = samples;
    }

    Mat2 g(const Vec2& x) const override {
        Mat2 g0;
        MetricDeriv d;
        first_jet(x, g0, d);
        return g0;
    }
    MetricDeriv dg(const Vec2& x) const override {
        Mat2 g0;
        MetricDeriv d;
        first_jet(x, g0, d);
        return d;
    }
    void first_jet(const Vec2& x, Mat2& g_out, MetricDeriv& dg_out) const override {
        double v[3];
        Vec2 gr[3];
        for (int c = 0; c < 3; ++c) planes_[c].eval(x, v[c], gr[c]);
        g_out << v[0], v[1], v[1], v[2];
        for (int k = 0; k < 2; ++k) dg_out[k] << gr[0][k], gr[1][k], gr[1][k], gr[2][k];
    }
    bool covers(const Vec2& x, double margin) const override {
        const double eps = 1e-12;
        return x[0] - margin >= lo_ - eps && x[0] + margin <= hi_ + eps && x[1] - margin >= lo_ - eps &&
               x[1] + margin <= hi_ + eps;
    }

    int n() const { return n_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const std::vector<Mat2>& samples() const { return samples_; }

private:
    int n_;
    double lo_, hi_;
    std::array<HermitePlane, 3> planes_;
    std::vector<Mat2> samples_;
};

} // namespace

MetricField grid_metric(const std::string& id, int n, double lo, double hi, const std::vector<Mat2>& samples) {
    if (!(hi > lo)) throw DataError("grid metric: empty extent");
    if (lo > -1.0 + 1e-12 || hi < 1.0 - 1e-12) throw DataError("grid metric: samples must cover [-1, 1]^2");
    for (const Mat2& g : samples) {
        double tr = g.trace(), det = g.determinant();
        if (!(det > 0.0 && tr > 0.0)) throw DataError("grid metric: non-positive-definite sample");
    }
    double h = (hi - lo) / (n - 1);
    return MetricField(std::make_shared<GridSource>(n, lo, hi, samples), id, Backing::grid, std::max(1e-4, h));
}

MetricField resample_to_grid(const MetricField& metric, int n, double lo, double hi) {
    std::vector<Mat2> samples(static_cast<std::size_t>(n) * n);
    double h = (hi - lo) / (n - 1);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) samples[static_cast<std::size_t>(j) * n + i] = metric.g(Vec2(lo + i * h, lo + j * h));
    return grid_metric("grid(" + metric.id() + ",n=" + std::to_string(n) + ")", n, lo, hi, samples);
}

void save_grid_metric(const std::string& path, const MetricField& metric, int n, double lo, double hi) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write grid metric file " + path);
    double h = (hi - lo) / (n - 1);
    nlohmann::json header = {{"format", "xrt-grid-metric"}, {"dimension", 2},         {"shape", {n, n}},
                             {"spacing", h},                {"lower", lo},            {"upper", hi},
                             {"lambda_min", metric.lambda_min()}, {"encoding", "csv"}, {"id", metric.id()}};
    out << header.dump() << "\n";
    const char* names[3] = {"g11", "g12", "g22"};
    const int idx[3][2] = {{0, 0}, {0, 1}, {1, 1}};
    out << std::setprecision(17);
    for (int c = 0; c < 3; ++c) {
        out << "# " << names[c] << "\n";
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                Mat2 g = metric.g(Vec2(lo + i * h, lo + j * h));
                if (i) out << ",";
                out << g(idx[c][0], idx[c][1]);
            }
            out << "\n";
        }
    }
}

MetricField load_grid_metric(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open grid metric file " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("grid metric file " + path + " is empty");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw DataError("grid metric header is not valid JSON: " + std::string(e.what()));
    }
    int n = 0;
    double lo = -1.0, hi = 1.0, lambda_min = 0.0;
    try {
        if (header.value("dimension", 2) != 2) throw DataError("grid metric: only dimension 2 is supported");
        auto shape = header.at("shape");
        if (!shape.is_array() || shape.size() != 2 || shape[0] != shape[1])
            throw DataError("grid metric: shape must be [n, n]");
        n = shape[0].get<int>();
        lo = header.value("lower", -1.0);
        hi = header.value("upper", lo + header.at("spacing").get<double>() * (n - 1));
        lambda_min = header.value("lambda_min", 0.0);
        if (header.value("encoding", std::string("csv")) != "csv") throw DataError("grid metric: unsupported encoding");
    } catch (const nlohmann::json::exception& e) {
        throw DataError("grid metric header: " + std::string(e.what()));
    }
    if (n < 5) throw DataError("grid metric: shape too small");
    std::array<std::vector<double>, 3> comp;
    for (int c = 0; c < 3; ++c) {
        if (!std::getline(in, line) || line.rfind("#", 0) != 0) throw DataError("grid metric: missing block marker");
        for (int j = 0; j < n; ++j) {
            if (!std::getline(in, line)) throw DataError("grid metric: truncated block");
            std::stringstream ss(line);
            std::string cell;
            int count = 0;
            while (std::getline(ss, cell, ',')) {
                try {
                    std::size_t used = 0;
                    double v = std::stod(cell, &used);
                    comp[c].push_back(v);
                } catch (const std::exception&) {
                    throw DataError("grid metric: bad number '" + cell + "'");
                }
                ++count;
            }
            if (count != n) throw DataError("grid metric: row has " + std::to_string(count) + " values");
        }
    }
    std::vector<Mat2> samples(static_cast<std::size_t>(n) * n);
    for (std::size_t q = 0; q < samples.size(); ++q) samples[q] << comp[0][q], comp[1][q], comp[1][q], comp[2][q];
    std::string id = header.value("id", std::string("grid"));
    MetricField m = grid_metric("file:" + id, n, lo, hi, samples);
    if (lambda_min > 0.0 && m.lambda_min() < 0.9 * lambda_min)
        throw DataError("grid metric: sampled eigenvalues fall below the declared lambda_min");
    return m;
}

} // namespace xrt
