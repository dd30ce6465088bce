#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace morsedef {

/// Working type for flows that must resolve points extremely close to the
/// singular set (about 166 bits of mantissa).
using Extended = boost::multiprecision::cpp_bin_float_50;

using Point = std::vector<double>;
using ExtPoint = std::vector<Extended>;

/// Default on-singular-set threshold for double evaluation, in distance units.
inline constexpr double kSigmaTol = 1e-9;
/// Threshold used by the extended-precision evaluation path.
inline constexpr double kSigmaTolExtended = 1e-45;

template <class Real>
constexpr double sigma_tolerance(double configured) {
    if constexpr (std::is_same_v<Real, double>) {
        return configured;
    } else {
        return configured * (kSigmaTolExtended / kSigmaTol);
    }
}

// Error hierarchy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class OnSingularSet : public Error {
  public:
    using Error::Error;
};

class InvalidProfile : public Error {
  public:
    using Error::Error;
};

class OutOfRange : public Error {
  public:
    using Error::Error;
};

class GradientTooSmall : public Error {
  public:
    GradientTooSmall(const std::string& what, Point where, double gradient_norm)
        : Error(what), where_(std::move(where)), gradient_norm_(gradient_norm) {}
    const Point& where() const { return where_; }
    double gradient_norm() const { return gradient_norm_; }

  private:
    Point where_;
    double gradient_norm_;
};

class StepLimit : public Error {
  public:
    using Error::Error;
};

class PreconditionViolation : public Error {
  public:
    using Error::Error;
};

class GridTooSmall : public Error {
  public:
    using Error::Error;
};

class ResolutionTooCoarse : public Error {
  public:
    using Error::Error;
};

class EmptyRegion : public Error {
  public:
    using Error::Error;
};

class DimensionMismatch : public Error {
  public:
    using Error::Error;
};

template <class Real>
Real squared_norm(std::span<const Real> v) {
    Real s = 0;
    for (const Real& c : v) s += c * c;
    return s;
}

template <class Real>
Real norm(std::span<const Real> v) {
    using std::sqrt;
    return sqrt(squared_norm(v));
}

inline double norm(const Point& v) { return norm(std::span<const double>(v)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline ExtPoint to_extended(std::span<const double> x) {
    return ExtPoint(x.begin(), x.end());
}

inline Point to_double(std::span<const double> x) { return Point(x.begin(), x.end()); }

inline Point to_double(std::span<const Extended> x) {
    Point out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(x[i]);
    return out;
}

/// Throws DimensionMismatch unless x has the expected length.
inline void require_dimension(std::size_t got, std::size_t expected, const char* what) {
    if (got != expected) {
        throw DimensionMismatch(std::string(what) + ": expected dimension " +
                                std::to_string(expected) + ", got " + std::to_string(got));
    }
}

}  // namespace morsedef
