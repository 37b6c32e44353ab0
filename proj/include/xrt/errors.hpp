#pragma once

#include <stdexcept>
#include <string>

namespace xrt {

// Point outside the disk, or too close to its edge for the requested stencil.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data: non-positive-definite samples, malformed files, non-finite values.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller error: wrong norm for the field kind, mismatched grids, bad parameters.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AlphaTooSmall : public DataError {
public:
    AlphaTooSmall(int alpha, double min_eig)
        : DataError("alpha too small: mollified metric at alpha=" + std::to_string(alpha) +
                    " has min eigenvalue " + std::to_string(min_eig)),
          alpha_(alpha), min_eigenvalue_(min_eig) {}
    int alpha() const { return alpha_; }
    double min_eigenvalue() const { return min_eigenvalue_; }

private:
    int alpha_;
    double min_eigenvalue_;
};

} // namespace xrt
