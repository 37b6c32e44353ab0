#include "xrt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

namespace xrt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string artifact_version() { return "0.1.0"; }

namespace {

double bowl(const Vec2& x) { return 1.0 - x.squaredNorm(); }

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw UsageError("config field '" + key + "' has the wrong type: " + j.dump());
    }
}

GridSpec grid_from(const json& j, const std::string& key) {
    if (j.is_string()) return parse_grid(j.get<std::string>());
    auto v = get_as<std::vector<int>>(j, key);
    if (v.size() != 3) throw UsageError("config field '" + key + "' needs three resolutions");
    return {v[0], v[1], v[2]};
}

std::string grid_string(const GridSpec& g) {
    return std::to_string(g.n_r) + "x" + std::to_string(g.n_phi) + "x" + std::to_string(g.n_psi);
}

// Output directory with the provenance stamp every file carries.
class Outputs {
public:
    explicit Outputs(const ExperimentConfig& c)
        : dir_(c.out), hash_(config_hash(c)), deterministic_(c.deterministic), start_(std::chrono::steady_clock::now()) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw UsageError("cannot create output directory " + c.out + ": " + ec.message());
        config_ = to_json(c);
        config_.erase("out");
    }
    std::string stamp() const { return "xrt " + artifact_version() + " config " + hash_; }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write_json(const std::string& name, json body) const {
        body["version"] = artifact_version();
        body["config_hash"] = hash_;
        body["config"] = config_;
        if (!deterministic_) {
            const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
            body["run"] = {{"elapsed_seconds", dt}, {"workers", worker_count()}};
        }
        put(name, body.dump(2) + "\n");
    }
    // CSV and text files open with a comment line carrying the stamp.
    void write_stamped(const std::string& name, const std::string& body) const { put(name, "# " + stamp() + "\n" + body); }

private:
    void put(const std::string& name, const std::string& text) const {
        std::ofstream out(path(name), std::ios::binary);
        if (!out) throw UsageError("cannot write " + path(name));
        out << text;
    }
    fs::path dir_;
    std::string hash_;
    bool deterministic_;
    std::chrono::steady_clock::time_point start_;
    json config_;
};

std::string csv_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

BundleFunction seeded_section(std::uint64_t seed) {
    auto rng = make_stream(seed, 1);
    std::normal_distribution<double> N(0, 1);
    std::array<double, 6> c;
    for (double& x : c) x = N(rng);
    return [c](const Vec2& x, const Vec2&, double psi) {
        return c[0] + c[1] * x[0] + c[2] * x[1] * std::cos(psi) + c[3] * std::sin(2 * psi) + c[4] * x[0] * x[1] +
               c[5] * std::cos(psi) * std::sin(psi);
    };
}

RaySet traced(const MetricField& m, const ExperimentConfig& c) {
    RaySet rays = trace_rays(m, inflow_samples(m, c.rays_boundary, c.rays_angles));
    if (rays.rays.empty()) throw std::runtime_error("no inflow geodesic exited the disk");
    return rays;
}

json mollification_json(const MollificationStudy& s) {
    json norms = json::array();
    for (auto n : s.norms) norms.push_back(to_string(n));
    return {{"metric", s.metric},   {"alphas", s.alphas},         {"norms", norms}, {"distance", s.distance},
            {"decreasing", s.decreasing}, {"noise", s.noise}, {"passed", s.passed}, {"notes", s.notes}};
}

} // namespace

GridSpec parse_grid(const std::string& s) {
    GridSpec g;
    char a = 0, b = 0, tail = 0;
    if (std::sscanf(s.c_str(), "%d%c%d%c%d%c", &g.n_r, &a, &g.n_phi, &b, &g.n_psi, &tail) != 5 || a != 'x' || b != 'x')
        throw UsageError("grid must look like 64x64x128, got '" + s + "'");
    return g;
}

std::pair<int, int> parse_rays(const std::string& s) {
    int nb = 0, na = 0;
    char a = 0, tail = 0;
    if (std::sscanf(s.c_str(), "%d%c%d%c", &nb, &a, &na, &tail) != 3 || a != 'x')
        throw UsageError("rays must look like 64x32 (boundary x angles), got '" + s + "'");
    return {nb, na};
}

ExperimentConfig parse_config(const json& j) {
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    ExperimentConfig c;
    for (const auto& [key, val] : j.items()) {
        if (key == "metric") {
            c.metric = val;
        } else if (key == "grid") {
            c.grid = grid_from(val, key);
        } else if (key == "rays") {
            if (val.is_string()) {
                std::tie(c.rays_boundary, c.rays_angles) = parse_rays(val.get<std::string>());
            } else {
                auto v = get_as<std::vector<int>>(val, key);
                if (v.size() != 2) throw UsageError("config field 'rays' needs [boundary, angles]");
                c.rays_boundary = v[0];
                c.rays_angles = v[1];
            }
        } else if (key == "basis") {
            c.basis = get_as<std::string>(val, key);
        } else if (key == "basis_n") {
            c.basis_n = get_as<int>(val, key);
        } else if (key == "target") {
            c.target = get_as<std::string>(val, key);
        } else if (key == "lambda") {
            c.lambda = get_as<double>(val, key);
        } else if (key == "invert_bound") {
            c.invert_bound = get_as<double>(val, key);
        } else if (key == "checks") {
            c.checks = get_as<std::vector<std::string>>(val, key);
        } else if (key == "conditions") {
            c.conditions = get_as<std::vector<std::string>>(val, key);
        } else if (key == "alphas") {
            c.alphas = get_as<std::vector<int>>(val, key);
        } else if (key == "tolerances") {
            for (const auto& [name, tol] : get_as<std::map<std::string, double>>(val, key)) {
                if (!c.tolerances.count(name)) throw UsageError("unknown tolerance '" + name + "'");
                c.tolerances[name] = tol;
            }
        } else if (key == "b1_grid") {
            c.b1_grid = grid_from(val, key);
        } else if (key == "pairs") {
            c.pairs = get_as<int>(val, key);
        } else if (key == "save_matrix") {
            c.save_matrix = get_as<bool>(val, key);
        } else if (key == "seed") {
            c.seed = get_as<std::uint64_t>(val, key);
        } else if (key == "deterministic") {
            c.deterministic = get_as<bool>(val, key);
        } else if (key == "out") {
            c.out = get_as<std::string>(val, key);
        } else if (key == "golden") {
            c.golden = get_as<std::string>(val, key);
        } else {
            throw UsageError("unknown config field '" + key + "'");
        }
    }
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
    return {{"metric", c.metric},
            {"grid", {c.grid.n_r, c.grid.n_phi, c.grid.n_psi}},
            {"rays", {c.rays_boundary, c.rays_angles}},
            {"basis", c.basis},
            {"basis_n", c.basis_n},
            {"target", c.target},
            {"lambda", c.lambda},
            {"invert_bound", c.invert_bound},
            {"checks", c.checks},
            {"conditions", c.conditions},
            {"alphas", c.alphas},
            {"tolerances", c.tolerances},
            {"b1_grid", {c.b1_grid.n_r, c.b1_grid.n_phi, c.b1_grid.n_psi}},
            {"pairs", c.pairs},
            {"save_matrix", c.save_matrix},
            {"seed", c.seed},
            {"deterministic", c.deterministic},
            {"out", c.out},
            {"golden", c.golden}};
}

void validate(const ExperimentConfig& c) {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw UsageError(what);
    };
    for (const GridSpec& g : {c.grid, c.b1_grid})
        need(g.n_r >= 8 && g.n_phi >= 8 && g.n_psi >= 8, "grid resolutions must be at least 8, got " + grid_string(g));
    need(c.rays_boundary >= 8 && c.rays_angles >= 8, "ray counts must be at least 8");
    need(c.basis == "pixel" || c.basis == "edge", "basis must be pixel or edge, got '" + c.basis + "'");
    need(c.basis_n >= 8, "basis_n must be at least 8");
    const std::set<std::string> scalars = {"one", "bowl", "bump"}, forms = {"dx1", "dp", "poly"};
    need(scalars.count(c.target) || forms.count(c.target), "unknown target '" + c.target + "'");
    need(c.lambda > 0.0, "lambda must be positive");
    need(c.invert_bound > 0.0, "invert_bound must be positive");
    const std::set<std::string> known = {"pestov", "commutator", "cancellation", "santalo", "mollify"};
    for (const auto& k : c.checks) need(known.count(k) > 0, "unknown check '" + k + "'");
    for (const auto& k : c.conditions) need(k == "B1" || k == "B2" || k == "B3", "unknown condition '" + k + "'");
    need(c.alphas.size() >= 2, "alphas needs at least two entries");
    for (std::size_t i = 0; i < c.alphas.size(); ++i)
        need(c.alphas[i] > 0 && (i == 0 || c.alphas[i] > c.alphas[i - 1]), "alphas must be positive and increasing");
    for (const auto& [name, tol] : c.tolerances) need(tol > 0.0, "tolerance '" + name + "' must be positive");
    need(c.pairs >= 1, "pairs must be positive");
    need(c.metric.is_object() && (c.metric.contains("builtin") != c.metric.contains("file")),
         "metric needs exactly one of 'builtin' or 'file'");
}

std::string config_hash(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("out");
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

MetricField make_metric(const json& spec) {
    if (!spec.is_object()) throw UsageError("metric spec must be an object");
    for (const auto& [key, val] : spec.items())
        if (key != "builtin" && key != "params" && key != "file" && key != "mollify")
            throw UsageError("unknown metric field '" + key + "'");
    MetricField m = [&] {
        if (spec.contains("file")) {
            const std::string path = get_as<std::string>(spec["file"], "metric.file");
            try {
                return load_grid_metric(path);
            } catch (const std::exception& e) {
                throw UsageError("malformed metric file " + path + ": " + e.what());
            }
        }
        const std::string name = get_as<std::string>(spec.at("builtin"), "metric.builtin");
        const json params = spec.value("params", json::object());
        if (!params.is_object()) throw UsageError("metric params must be an object");
        std::set<std::string> used;
        auto p = [&](const std::string& k, double d) {
            used.insert(k);
            return params.contains(k) ? get_as<double>(params[k], "metric.params." + k) : d;
        };
        MetricField out = [&] {
            if (name == "euclidean") return builtin::euclidean(p("scale", 1.0));
            if (name == "conformal_quadratic") return builtin::conformal_quadratic(p("a", 0.5));
            if (name == "constant_curvature") return builtin::constant_curvature(p("c", 1.0));
            if (name == "c11_test") {
                const double cc = p("c", 0.5);
                return builtin::c11_test(cc, p("r0", 0.5));
            }
            if (name == "bump_perturbed") {
                const double eps = p("eps", 0.05);
                return builtin::bump_perturbed(eps, p("freq", 6.0));
            }
            throw UsageError("unknown builtin metric '" + name + "'");
        }();
        for (const auto& [k, v] : params.items())
            if (!used.count(k)) throw UsageError("unknown parameter '" + k + "' for metric " + name);
        return out;
    }();
    if (spec.contains("mollify")) {
        MollifierSpec ms;
        ms.alpha = get_as<int>(spec["mollify"], "metric.mollify");
        if (ms.alpha < 1) throw UsageError("mollify alpha must be positive");
        m = mollify(m, ms);
    }
    return m;
}

bool is_one_form_target(const std::string& name) { return name == "dx1" || name == "dp" || name == "poly"; }

ScalarTarget scalar_target(const std::string& name) {
    if (name == "one") return [](const Vec2&) { return 1.0; };
    if (name == "bowl") return bowl;
    if (name == "bump") return [](const Vec2& x) { return std::exp(-(x - Vec2(0.3, -0.2)).squaredNorm() / 0.08); };
    throw UsageError("'" + name + "' is not a scalar target");
}

// dp and poly vanish outside |x| = 0.7, inside the cells the edge basis covers at n >= 8.
OneFormTarget one_form_target(const std::string& name) {
    static constexpr double R2 = 0.49;
    auto cut = [](const Vec2& x) { return std::max(0.0, 1.0 - x.squaredNorm() / R2); };
    if (name == "dx1") return [](const Vec2&) { return Vec2(1.0, 0.0); };
    if (name == "dp") {
        // p = chi^4 (1/2 + x1 - x1 x2) with chi = (1 - |x|^2 / 0.49)_+
        return [cut](const Vec2& x) {
            const double chi = cut(x), q = 0.5 + x[0] - x[0] * x[1];
            const Vec2 dq(1.0 - x[1], -x[0]);
            return Vec2(-8.0 * chi * chi * chi * q / R2 * x + chi * chi * chi * chi * dq);
        };
    }
    if (name == "poly")
        return [cut](const Vec2& x) {
            const double chi = cut(x);
            return Vec2(chi * chi * Vec2(0.3 + x[0] * x[1] - x[1] * x[1], -1.2 * x[0] + 0.5 * x[0] * x[0] * x[1]));
        };
    throw UsageError("'" + name + "' is not a one-form target");
}

int cmd_simplicity(const ExperimentConfig& c, std::ostream& log) {
    validate(c);
    const MetricField m = make_metric(c.metric);
    Outputs out(c);
    SimplicityOptions o;
    o.b1_grid = c.b1_grid;
    o.b1.seed = c.seed;
    // keep the B1 subspace two modes below the grid's Nyquist limits
    o.b1.radial_modes = std::min(o.b1.radial_modes, c.b1_grid.n_r / 2 - 2);
    o.b1.phi_modes = std::min(o.b1.phi_modes, c.b1_grid.n_phi / 2 - 2);
    o.b1.psi_modes = std::min(o.b1.psi_modes, c.b1_grid.n_psi / 2 - 2);
    o.pairs = c.pairs;
    o.seed = c.seed;
    const SimplicityReport r = simplicity_report(m, o);

    bool ok = true;
    for (const auto& k : c.conditions) {
        const ConditionResult& cr = k == "B1" ? r.b1 : k == "B2" ? r.b2 : r.b3;
        ok = ok && cr.verdict == Verdict::pass;
    }
    json body = to_json(r);
    body["requested"] = c.conditions;
    body["b1_modes"] = {o.b1.radial_modes, o.b1.phi_modes, o.b1.psi_modes};
    body["passed"] = ok;
    out.write_json("simplicity.json", body);
    out.write_stamped("simplicity.txt", format_simplicity(r));
    std::string csv = "h,tau,distance,ratio,status\n";
    for (const auto& row : r.b3_rows)
        csv += csv_number(row.h) + "," + csv_number(row.tau) + "," + csv_number(row.distance) + "," +
               csv_number(row.ratio) + "," + to_string(row.status) + "\n";
    out.write_stamped("b3_probe.csv", csv);
    log << format_simplicity(r);
    return ok ? exit_pass : exit_fail;
}

int cmd_verify(const ExperimentConfig& c, std::ostream& log) {
    validate(c);
    const MetricField m = make_metric(c.metric);
    Outputs out(c);
    const auto tol = [&](const std::string& k) { return c.tolerances.at(k); };
    const auto wants = [&](const std::string& k) {
        return std::find(c.checks.begin(), c.checks.end(), k) != c.checks.end();
    };

    std::unique_ptr<BundleGrid> grid;
    auto full = [&]() -> const BundleGrid& {
        if (!grid) grid = std::make_unique<BundleGrid>(m, c.grid);
        return *grid;
    };

    std::vector<VerificationReport> reports;
    if (wants("pestov")) {
        auto u = [](const Vec2& x, const Vec2&, double psi) { return bowl(x) * std::sin(psi); };
        auto run = [&](const GridSpec& g) {
            if (g.n_r == c.grid.n_r && g.n_phi == c.grid.n_phi && g.n_psi == c.grid.n_psi)
                return pestov_residual(full(), full().scalar(u, true), tol("pestov"));
            BundleGrid coarse(m, g);
            return pestov_residual(coarse, coarse.scalar(u, true), tol("pestov"));
        };
        const GridSpec half{c.grid.n_r / 2, c.grid.n_phi / 2, c.grid.n_psi / 2};
        if (half.n_r >= 8 && half.n_phi >= 8 && half.n_psi >= 8) {
            reports.push_back(refinement_study(run, {half, c.grid}));
        } else {
            reports.push_back(run(c.grid));
            reports.back().notes.push_back("grid too coarse for a refinement study");
        }
    }
    if (wants("commutator")) {
        const BundleGrid& g = full();
        ScalarField u = g.scalar([](const Vec2& x, const Vec2&, double psi) { return bowl(x) * std::cos(psi + x[1]); }, true);
        reports.push_back(commutator_check(g, u, g.section(seeded_section(c.seed)), tol("commutator")));
    }
    if (wants("cancellation")) {
        const std::string form = is_one_form_target(c.target) ? c.target : "dx1";
        VerificationReport r = oneform_cancellation(full(), one_form_target(form), tol("cancellation"));
        r.notes.push_back("one-form " + form);
        reports.push_back(std::move(r));
    }
    if (wants("santalo")) {
        const BundleGrid& g = full();
        RaySet rays = traced(m, c);
        reports.push_back(santalo_check(g, rays, g.scalar([](const Vec2&, const Vec2&, double) { return 1.0; }),
                                        tol("santalo")));
        VerificationReport b = santalo_check(g, rays,
                                             g.scalar([](const Vec2& x, const Vec2&, double psi) {
                                                 const double d = (x.norm() - 0.85) / 0.08;
                                                 return std::exp(-d * d) * (1.0 + 0.5 * std::cos(psi));
                                             }),
                                             tol("santalo_bump"));
        b.check = "santalo_bump";
        reports.push_back(std::move(b));
    }
    json body;
    bool ok = true;
    if (wants("mollify")) {
        MollificationStudy s = mollification_report(m, c.alphas, all_sobolev_norms(), tol("mollify_noise"));
        out.write_stamped("mollify.csv", mollification_csv(s));
        body["mollification"] = mollification_json(s);
        ok = ok && s.passed;
        log << "mollification study " << (s.passed ? "PASS" : "FAIL") << '\n';
    }

    json arr = json::array();
    std::string trend = "check,metric,grid,residual\n";
    for (const auto& r : reports) {
        arr.push_back(to_json(r));
        ok = ok && r.passed;
        for (const auto& t : r.trend) trend += r.check + "," + r.metric + "," + t.grid + "," + csv_number(t.residual) + "\n";
        if (r.trend.empty()) trend += r.check + "," + r.metric + "," + r.grid + "," + csv_number(r.rel_residual) + "\n";
    }
    body["reports"] = arr;

    if (!c.golden.empty()) {
        std::ifstream in(c.golden);
        if (!in) throw UsageError("cannot open golden file " + c.golden);
        json golden;
        try {
            golden = json::parse(in);
        } catch (const json::exception& e) {
            throw UsageError("golden file is not valid JSON: " + std::string(e.what()));
        }
        std::vector<GoldenMismatch> mism;
        try {
            mism = compare_golden(reports, golden);
        } catch (const DataError& e) {
            throw UsageError(e.what());
        }
        json mj = json::array();
        for (const auto& g : mism)
            mj.push_back({{"check", g.check}, {"field", g.field}, {"expected", g.expected}, {"actual", g.actual}});
        body["golden"] = {{"file", c.golden}, {"mismatches", mj}};
        ok = ok && mism.empty();
        log << mism.size() << " golden mismatches\n";
    }
    body["passed"] = ok;
    out.write_json("verify.json", body);
    out.write_stamped("verify.txt", format_reports(reports));
    out.write_stamped("trend.csv", trend);
    log << format_reports(reports);
    return ok ? exit_pass : exit_fail;
}

int cmd_mollify_study(const ExperimentConfig& c, std::ostream& log) {
    validate(c);
    const MetricField m = make_metric(c.metric);
    Outputs out(c);
    MollificationStudy s = mollification_report(m, c.alphas, all_sobolev_norms(), c.tolerances.at("mollify_noise"));
    out.write_stamped("mollify.csv", mollification_csv(s));
    out.write_json("mollify.json", mollification_json(s));
    log << mollification_csv(s);
    return s.passed ? exit_pass : exit_fail;
}

int cmd_transform(const ExperimentConfig& c, std::ostream& log) {
    validate(c);
    const MetricField m = make_metric(c.metric);
    Outputs out(c);
    const bool form = is_one_form_target(c.target);
    RaySet rays = traced(m, c);
    const std::vector<double> values =
        form ? xray(rays, one_form_target(c.target)) : xray(rays, scalar_target(c.target));
    write_sinogram(out.path("sinogram.csv"), rays, values, out.stamp() + " metric " + m.id() + " target " + c.target);

    json body = {{"metric", m.id()},
                 {"target", c.target},
                 {"kind", form ? "one_form" : "scalar"},
                 {"rays", rays.rays.size()},
                 {"dropped", rays.dropped}};
    bool ok = true;
    if (c.target == "one") {
        double dev = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) dev = std::max(dev, std::abs(values[i] - rays.rays[i].path.tau_plus));
        body["max_chord_deviation"] = dev;
        ok = dev <= 1e-8;
    }
    if (c.save_matrix) {
        TransformMatrix T = c.basis == "edge" ? assemble_forward(rays, EdgeBasis::build(c.basis_n), m.id())
                                              : assemble_forward(rays, PixelBasis::build(c.basis_n), m.id());
        const std::string mp = out.path("matrix.bin");
        save_matrix(mp, T);
        std::ifstream in(mp + ".json");
        json side = json::parse(in);
        in.close();
        side["version"] = artifact_version();
        side["config_hash"] = config_hash(c);
        std::ofstream(mp + ".json") << side.dump(1) << '\n';
        body["matrix"] = {{"file", "matrix.bin"}, {"shape", {T.A.rows(), T.A.cols()}}, {"basis", T.basis}};
    }
    body["passed"] = ok;
    out.write_json("transform.json", body);
    log << rays.rays.size() << " rays, " << rays.dropped.size() << " dropped\n";
    return ok ? exit_pass : exit_fail;
}

int cmd_invert(const ExperimentConfig& c, std::ostream& log) {
    validate(c);
    const bool form = is_one_form_target(c.target);
    if (form != (c.basis == "edge")) throw UsageError("one-form targets need the edge basis, scalar targets the pixel basis");
    const MetricField m = make_metric(c.metric);
    Outputs out(c);
    RaySet rays = traced(m, c);
    json body = {{"metric", m.id()}, {"target", c.target}, {"rays", rays.rays.size()}, {"dropped", rays.dropped}};
    bool ok = false;
    std::string coeffs = "element,coefficient,reference\n";
    std::string svals = "index,singular_value\n";
    auto dump_sv = [&](const NullspaceReport& rep) {
        for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i)
            svals += std::to_string(i) + "," + csv_number(rep.singular_values[i]) + "\n";
    };

    if (!form) {
        const PixelBasis B = PixelBasis::build(c.basis_n);
        TransformMatrix T = assemble_forward(rays, B, m.id());
        NullspaceReport rep = nullspace_analysis(T);
        dump_sv(rep);
        const ScalarTarget f = scalar_target(c.target);
        const std::vector<double> data = xray(rays, f);
        Eigen::Map<const Eigen::VectorXd> dv(data.data(), static_cast<Eigen::Index>(data.size()));
        const Eigen::VectorXd ref = B.project(f);
        const Eigen::VectorXd mass = Eigen::Map<const Eigen::VectorXd>(B.area.data(), B.size());
        Reconstruction rec = reconstruct(T, dv, c.lambda, &ref, &mass);
        // against the continuous phantom, for information
        const DiskQuadrature q = DiskQuadrature::polar();
        KahanSum num, den;
        for (std::size_t i = 0; i < q.points.size(); ++i) {
            const double fx = f(q.points[i]);
            const double e = B.evaluate(rec.coeffs, q.points[i]) - fx;
            num.add(q.weights[i] * e * e);
            den.add(q.weights[i] * fx * fx);
        }
        for (int e = 0; e < B.size(); ++e)
            coeffs += std::to_string(e) + "," + csv_number(rec.coeffs[e]) + "," + csv_number(ref[e]) + "\n";
        const double err = *rec.relative_error;
        ok = err <= c.invert_bound;
        body["basis"] = B.descriptor();
        body["null_dimension"] = rep.null_dimension;
        body["sigma_ratio"] = rep.sigma_ratio;
        body["duplicate_rows"] = rep.duplicate_rows;
        body["relative_error"] = err;
        body["continuous_relative_error"] = std::sqrt(num.value() / std::max(den.value(), 1e-300));
        log << "null dimension " << rep.null_dimension << ", relative error " << err << '\n';
    } else {
        const EdgeBasis E = EdgeBasis::build(c.basis_n);
        const Eigen::MatrixXd G = E.gauge_matrix();
        TransformMatrix T = assemble_forward(rays, E, m.id());
        NullspaceReport rep = nullspace_analysis(T, &G);
        dump_sv(rep);
        const OneFormTarget h = one_form_target(c.target);
        const std::vector<double> data = xray(rays, h);
        Eigen::Map<const Eigen::VectorXd> dv(data.data(), static_cast<Eigen::Index>(data.size()));
        const Eigen::VectorXd truth = E.interpolate(h);
        Reconstruction rec = reconstruct(T, dv, c.lambda);
        // compare modulo the gauge: a pure-gauge truth must reconstruct to zero
        const double truth_solenoidal = gauge_residual(truth, G) * truth.norm();
        const bool gauge_truth = truth_solenoidal <= 1e-3 * truth.norm();
        const Eigen::VectorXd diff = rec.coeffs - truth;
        const double err = gauge_truth ? rec.coeffs.norm() / std::max(truth.norm(), 1e-300)
                                       : gauge_residual(diff, G) * diff.norm() / truth_solenoidal;
        const double data_max = dv.size() ? dv.cwiseAbs().maxCoeff() : 0.0;
        const bool pure = rec.coeffs.norm() <= c.invert_bound * std::max(truth.norm(), 1e-300);
        for (int e = 0; e < E.size(); ++e)
            coeffs += std::to_string(e) + "," + csv_number(rec.coeffs[e]) + "," + csv_number(truth[e]) + "\n";
        ok = err <= c.invert_bound;
        body["basis"] = E.descriptor();
        body["null_dimension"] = rep.null_dimension;
        body["gauge_dimension"] = rep.gauge_dimension;
        body["max_principal_angle_deg"] = rep.max_principal_angle_deg;
        body["relative_error_modulo_gauge"] = err;
        body["truth_is_gauge"] = gauge_truth;
        body["truth_non_gauge_fraction"] = truth_solenoidal / std::max(truth.norm(), 1e-300);
        body["max_abs_data"] = data_max;
        body["pure_gauge"] = pure;
        log << "null dimension " << rep.null_dimension << " (gauge " << rep.gauge_dimension << "), residual modulo gauge "
            << err << (pure ? ", reconstruction is pure gauge" : "") << '\n';
    }
    body["bound"] = c.invert_bound;
    body["passed"] = ok;
    out.write_json("invert.json", body);
    out.write_stamped("reconstruction.csv", coeffs);
    out.write_stamped("singular_values.csv", svals);
    return ok ? exit_pass : exit_fail;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        err << "numeric failure: " << e.what() << '\n';
        return exit_internal;
    }
}

} // namespace xrt
