#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace xrt {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Neumaier compensated sum; callers feed terms in a fixed order so results are bit-stable.
class KahanSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            c_ += (sum_ - t) + x;
        else
            c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

struct GaussRule {
    std::vector<double> nodes;   // on [-1, 1]
    std::vector<double> weights;
};

GaussRule gauss_legendre(int n);

// Finite-difference weights for the m-th derivative at x0 from samples at xs (Fornberg).
std::vector<double> fd_weights(double x0, const std::vector<double>& xs, int m);

// Lagrange basis values at x for nodes xs.
void lagrange_weights(double x, const double* xs, int n, double* out);

// Runs body(i) for i in [0, n). Each index writes its own slot, so the schedule
// does not affect results.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

unsigned worker_count();

// Independent stream derived from a base seed; used to keep parallel and serial
// schedules identical.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

// Least-squares slope of ys against xs.
double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys);

std::uint64_t fnv1a(const std::string& text);

} // namespace xrt
