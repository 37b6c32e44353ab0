#include "xrt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace xrt {

nlohmann::json to_json(const VerificationReport& r) {
    nlohmann::json trend = nlohmann::json::array();
    for (const auto& t : r.trend) trend.push_back({{"grid", t.grid}, {"residual", t.residual}});
    return {{"check", r.check},
            {"metric", r.metric},
            {"grid", r.grid},
            {"lhs", r.lhs},
            {"rhs", r.rhs},
            {"abs_residual", r.abs_residual},
            {"rel_residual", r.rel_residual},
            {"tolerance", r.tolerance},
            {"trend", trend},
            {"terms", r.terms},
            {"notes", r.notes},
            {"passed", r.passed}};
}

VerificationReport report_from_json(const nlohmann::json& j) {
    VerificationReport r;
    try {
        r.check = j.at("check");
        r.metric = j.at("metric");
        r.grid = j.at("grid");
        r.lhs = j.at("lhs");
        r.rhs = j.at("rhs");
        r.abs_residual = j.at("abs_residual");
        r.rel_residual = j.at("rel_residual");
        r.tolerance = j.at("tolerance");
        for (const auto& t : j.at("trend")) r.trend.push_back({t.at("grid"), t.at("residual")});
        r.terms = j.value("terms", std::map<std::string, double>{});
        r.notes = j.value("notes", std::vector<std::string>{});
        r.passed = j.at("passed");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string format_reports(const std::vector<VerificationReport>& reports) {
    std::ostringstream out;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-14s %-28s %-30s %16s %16s %11s %9s %s\n", "check", "metric", "grid", "lhs", "rhs",
                  "rel_resid", "tol", "result");
    out << buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%-14s %-28s %-30s %16.9e %16.9e %11.3e %9.2e %s\n", r.check.c_str(),
                      r.metric.c_str(), r.grid.c_str(), r.lhs, r.rhs, r.rel_residual, r.tolerance,
                      r.passed ? "PASS" : "FAIL");
        out << buf;
        for (const auto& t : r.trend) {
            std::snprintf(buf, sizeof buf, "    trend %-30s %11.3e\n", t.grid.c_str(), t.residual);
            out << buf;
        }
        for (const auto& n : r.notes) out << "    note: " << n << '\n';
    }
    return out.str();
}

std::vector<GoldenMismatch> compare_golden(const std::vector<VerificationReport>& reports, const nlohmann::json& golden,
                                           double default_tolerance) {
    std::vector<GoldenMismatch> out;
    if (!golden.contains("checks") || !golden["checks"].is_object()) throw DataError("golden file lacks a checks object");
    const auto& checks = golden["checks"];
    for (const auto& r : reports) {
        const std::string id = r.check + "/" + r.metric;
        if (!checks.contains(id)) {
            out.push_back({id, "missing", 0.0, r.rel_residual});
            continue;
        }
        const auto& g = checks[id];
        const double tol = g.value("tolerance", default_tolerance);
        const std::pair<const char*, double> fields[] = {{"lhs", r.lhs}, {"rhs", r.rhs}, {"rel_residual", r.rel_residual}};
        for (const auto& [name, actual] : fields) {
            if (!g.contains(name)) continue;
            const double expected = g[name];
            if (std::abs(actual - expected) > tol * std::max(1.0, std::abs(expected)))
                out.push_back({id, name, expected, actual});
        }
    }
    return out;
}

std::string to_string(Verdict v) {
    switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    default: return "inconclusive";
    }
}

bool SimplicityReport::all_pass() const {
    return b1.verdict == Verdict::pass && b2.verdict == Verdict::pass && b3.verdict == Verdict::pass;
}

nlohmann::json to_json(const SimplicityReport& r) {
    auto cond = [](const ConditionResult& c) {
        return nlohmann::json{{"verdict", to_string(c.verdict)}, {"value", c.value}, {"detail", c.detail}};
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.b3_rows)
        rows.push_back({{"h", row.h}, {"tau", row.tau}, {"distance", row.distance}, {"ratio", row.ratio},
                        {"status", to_string(row.status)}});
    nlohmann::json j = {{"metric", r.metric},
                        {"B1", cond(r.b1)},
                        {"B2", cond(r.b2)},
                        {"B3", cond(r.b3)},
                        {"ray_epsilon", r.ray_epsilon},
                        {"b2_multiple", r.b2_multiple},
                        {"b2_unconverged", r.b2_unconverged},
                        {"b3_slope", r.b3_slope},
                        {"b3_rows", rows},
                        {"endpoint_zeros", r.endpoint_zeros},
                        {"min_second_fundamental_form", r.min_sff},
                        {"simple", r.all_pass()}};
    j["first_conjugate"] = r.first_conjugate ? nlohmann::json(*r.first_conjugate) : nlohmann::json(nullptr);
    return j;
}

std::string format_simplicity(const SimplicityReport& r) {
    std::ostringstream out;
    char buf[512];
    out << "metric " << r.metric << '\n';
    const std::pair<const char*, const ConditionResult*> conds[] = {{"B1", &r.b1}, {"B2", &r.b2}, {"B3", &r.b3}};
    for (const auto& [name, c] : conds) {
        std::snprintf(buf, sizeof buf, "  %-3s %-13s %14.6e  %s\n", name, to_string(c->verdict).c_str(), c->value,
                      c->detail.c_str());
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "  ray epsilon %.6e, min second fundamental form %.6e, endpoint Jacobi zeros %d\n",
                  r.ray_epsilon, r.min_sff, r.endpoint_zeros);
    out << buf;
    if (r.first_conjugate) {
        std::snprintf(buf, sizeof buf, "  first conjugate point at distance %.6f\n", *r.first_conjugate);
        out << buf;
    }
    return out.str();
}

} // namespace xrt
