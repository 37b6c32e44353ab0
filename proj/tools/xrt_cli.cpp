#include "xrt/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace xrt;

namespace {

struct Overrides {
    std::string config;
    std::string grid;
    std::string rays;
    std::optional<std::uint64_t> seed;
    std::string golden;
    bool deterministic = false;
    bool save_matrix = false;
    std::string out;
    std::string metric;
    std::string metric_file;
    std::string target;
    std::string basis;
    std::optional<int> basis_n;
    std::optional<double> lambda;
    std::vector<std::string> checks;
};

ExperimentConfig build_config(const Overrides& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (!o.grid.empty()) c.grid = parse_grid(o.grid);
    if (!o.rays.empty()) std::tie(c.rays_boundary, c.rays_angles) = parse_rays(o.rays);
    if (o.seed) c.seed = *o.seed;
    if (!o.golden.empty()) c.golden = o.golden;
    if (o.deterministic) c.deterministic = true;
    if (o.save_matrix) c.save_matrix = true;
    if (!o.out.empty()) c.out = o.out;
    if (!o.metric.empty()) {
        if (o.metric.front() == '{') {
            try {
                c.metric = nlohmann::json::parse(o.metric);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError(std::string("--metric is not valid JSON: ") + e.what());
            }
        } else {
            c.metric = {{"builtin", o.metric}};
        }
    }
    if (!o.metric_file.empty()) c.metric = {{"file", o.metric_file}};
    if (!o.target.empty()) c.target = o.target;
    if (!o.basis.empty()) c.basis = o.basis;
    if (o.basis_n) c.basis_n = *o.basis_n;
    if (o.lambda) c.lambda = *o.lambda;
    if (!o.checks.empty()) c.checks = o.checks;
    validate(c);
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Geodesic X-ray transform and sphere-bundle verification on the unit disk"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config, "JSON experiment config");
    app.add_option("--grid", o.grid, "bundle grid, e.g. 64x64x128");
    app.add_option("--rays", o.rays, "inflow rays as boundary x angles, e.g. 64x64");
    app.add_option("--seed", o.seed, "seed for every random stream");
    app.add_option("--golden", o.golden, "golden reports to compare against (verify)");
    app.add_flag("--deterministic", o.deterministic, "omit run timing so repeated runs are byte-identical");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--metric", o.metric, "builtin metric name or JSON metric spec");
    app.add_option("--metric-file", o.metric_file, "grid metric file");
    app.add_option("--target", o.target, "one, bowl, bump | dx1, dp, poly");
    app.add_option("--basis", o.basis, "pixel or edge");
    app.add_option("--basis-n", o.basis_n, "mesh cells per side");
    app.add_option("--lambda", o.lambda, "Tikhonov weight");

    using Command = int (*)(const ExperimentConfig&, std::ostream&);
    Command chosen = nullptr;
    auto add = [&](const char* name, const char* help, Command cmd) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->fallthrough();
        sub->callback([&chosen, cmd] { chosen = cmd; });
        return sub;
    };
    add("simplicity", "B1/B2/B3 report", cmd_simplicity);
    CLI::App* verify = add("verify", "Pestov, commutator, cancellation, Santalo and mollification checks", cmd_verify);
    verify->add_option("--checks", o.checks, "subset of pestov commutator cancellation santalo mollify");
    CLI::App* transform = add("transform", "sinogram of the target", cmd_transform);
    transform->add_flag("--save-matrix", o.save_matrix, "also write the forward matrix for the configured basis");
    add("invert", "injectivity analysis and reconstruction", cmd_invert);
    add("mollify-study", "Sobolev distances of mollified metrics", cmd_mollify_study);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_pass : exit_usage;
    }
    return run_guarded([&] { return chosen(build_config(o), std::cout); }, std::cerr);
}
