#include "xrt/bundle.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace xrt {

namespace {

void write_values(const std::string& path, const BundleGrid& grid, const std::vector<double>& values,
                  const std::string& kind, bool vanishes) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path);
    nlohmann::json header = {{"format", "xrt-bundle-field"},
                             {"kind", kind},
                             {"metric", grid.metric().id()},
                             {"shape", {grid.n_r(), grid.n_phi(), grid.n_psi()}},
                             {"order", "r,phi,psi"},
                             {"vanishes_on_boundary", vanishes}};
    out << header.dump() << '\n';
    char buf[32];
    const int m = grid.n_psi();
    for (std::size_t s = 0; s < grid.spatial_count(); ++s) {
        for (int k = 0; k < m; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", values[s * m + k]);
            if (k) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

std::vector<double> read_values(const std::string& path, const BundleGrid& grid, const std::string& kind,
                                bool& vanishes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open field file " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty field file");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
        if (header.at("format") != "xrt-bundle-field") throw DataError(path + ": not a bundle field file");
        if (header.at("kind") != kind) throw UsageError(path + ": holds a " + header.at("kind").get<std::string>());
        auto shape = header.at("shape").get<std::vector<int>>();
        if (shape != std::vector<int>{grid.n_r(), grid.n_phi(), grid.n_psi()})
            throw UsageError(path + ": grid shape differs from the target grid");
        if (header.at("metric").get<std::string>() != grid.metric().id())
            throw UsageError(path + ": sampled on metric " + header.at("metric").get<std::string>());
        vanishes = header.value("vanishes_on_boundary", false);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad header: " + e.what());
    }
    const int m = grid.n_psi();
    std::vector<double> values;
    values.reserve(grid.size());
    for (std::size_t s = 0; s < grid.spatial_count(); ++s) {
        if (!std::getline(in, line)) throw DataError(path + ": truncated at spatial node " + std::to_string(s));
        std::stringstream row(line);
        std::string cell;
        int count = 0;
        while (std::getline(row, cell, ',')) {
            char* end = nullptr;
            double x = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(x))
                throw DataError(path + ": bad value '" + cell + "'");
            values.push_back(x);
            ++count;
        }
        if (count != m) throw DataError(path + ": row " + std::to_string(s) + " has " + std::to_string(count) + " values");
    }
    if (vanishes) assert_vanishing(grid, values, path);
    return values;
}

} // namespace

void save_field(const std::string& path, const BundleGrid& grid, const ScalarField& u) {
    if (u.grid_uid != grid.uid()) throw UsageError("field does not belong to this bundle grid");
    write_values(path, grid, u.values, "scalar", u.vanishes_on_boundary);
}

void save_field(const std::string& path, const BundleGrid& grid, const SectionN& V) {
    if (V.grid_uid != grid.uid()) throw UsageError("section does not belong to this bundle grid");
    write_values(path, grid, V.coeff, "section", V.vanishes_on_boundary);
}

ScalarField load_scalar_field(const std::string& path, const BundleGrid& grid) {
    bool vanishes = false;
    auto values = read_values(path, grid, "scalar", vanishes);
    ScalarField u = grid.zeros_scalar(vanishes);
    u.values = std::move(values);
    return u;
}

SectionN load_section(const std::string& path, const BundleGrid& grid) {
    bool vanishes = false;
    auto values = read_values(path, grid, "section", vanishes);
    SectionN V = grid.zeros_section(vanishes);
    V.coeff = std::move(values);
    return V;
}

} // namespace xrt
