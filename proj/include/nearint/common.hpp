#ifndef NEARINT_COMMON_HPP
#define NEARINT_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nearint {

// Stack-allocated dynamic sizes: no heap traffic in the map iterations.
// Limits the number of degrees of freedom to max_dof.
inline constexpr int max_dof = 8;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2 * max_dof, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2 * max_dof, 2 * max_dof>;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Error categories map onto CLI exit codes (2 = configuration, 3 = numerical).
enum class ErrorKind {
    configuration,
    transversality,
    lift_failure,
    amplitude_too_large,
    closedness,
    foliation_overlap,
    gluing,
    no_crossing,
    step_size,
    dimension_mismatch,
    missing_stage,
    numerical,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    bool is_configuration() const noexcept
    {
        return kind_ == ErrorKind::configuration || kind_ == ErrorKind::missing_stage;
    }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind);

/// Reduce an angle into [0, 1).
inline double wrap_unit(double x)
{
    double r = x - std::floor(x);
    return r >= 1.0 ? 0.0 : r;
}

/// Signed representative of x mod 1 in [-0.5, 0.5).
inline double wrap_centered(double x)
{
    return x - std::floor(x + 0.5);
}

/// Distance on the unit circle.
inline double angle_distance(double a, double b)
{
    return std::abs(wrap_centered(a - b));
}

// Deterministic uniform stream. The 53-bit conversion is spelled out so that
// draws do not depend on the standard library's distribution implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next()
    {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform point in the disk of radius r around (cx, cy).
    Vec2 in_disk(double cx, double cy, double r)
    {
        const double rad = r * std::sqrt(uniform());
        const double th = 2.0 * M_PI * uniform();
        return {cx + rad * std::cos(th), cy + rad * std::sin(th)};
    }

private:
    std::uint64_t state_;
};

/// Independent sub-seed for chunk `index` of a run seeded with `seed`.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index);

/// Runs body(i) for i in [0, count) on `workers` threads. Each index is
/// processed exactly once; callers write results into per-index slots.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body);

} // namespace nearint

#endif
