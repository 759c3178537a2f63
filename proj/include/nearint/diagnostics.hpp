#ifndef NEARINT_DIAGNOSTICS_HPP
#define NEARINT_DIAGNOSTICS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "perturbation.hpp"

namespace nearint {

/// ||M^T J M - J||_inf. Throws dimension_mismatch unless M and J are square,
/// of the same even size.
double symplecticity_defect(const Mat& m, const Mat& j);

/// A map on the section with its level-slice tangent. Returning false (or
/// throwing nearint::Error) marks the orbit as having left the working chart.
using TangentStep = std::function<bool(SectionPoint& x, Mat& slice_jac)>;

/// R o Psi with the exact slice Jacobian.
TangentStep perturbed_return_step(const IntegrableHamiltonian& sys, const SectionPerturbation& psi);

struct LyapunovReport {
    std::vector<double> exponents; ///< descending
    long iterations = 0;           ///< completed iterations
    std::vector<long> history_iter;
    std::vector<double> history;   ///< running largest exponent
    SectionPoint initial;
    double mean_return_time = 0.0; ///< along the orbit
    bool truncated = false;
    std::string reason;
};

struct LyapunovSettings {
    long iterations = 10000;
    int history_every = 100; ///< 0 disables the history
    int reorthonormalize = 1;
};

/// QR-based spectrum of the slice tangent cocycle from a random frame drawn from `seed`.
LyapunovReport lyapunov_spectrum(const TangentStep& step, const SectionPoint& x0,
                                 const LyapunovSettings& cfg, std::uint64_t seed,
                                 const IntegrableHamiltonian* sys = nullptr);

enum class LevelSampling { uniform, bump };

struct EntropySettings {
    std::size_t samples = 1000;
    long iterations = 10000;
    double threshold = 0.05;
    std::vector<double> threshold_table{0.01, 0.05, 0.1};
    int levels = 1;                 ///< h-slices
    LevelSampling level_sampling = LevelSampling::uniform;
    double level_center = 0.5;
    double level_halfwidth = 0.0;   ///< 0: single slice at the center
    Vec2 disk_center = Vec2(0.5, 0.0);
    double disk_radius = 0.01;
    int bootstrap = 1000;
    std::uint64_t seed = 1;
    int workers = 1;
    int history_every = 0;
};

struct EntropySample {
    std::size_t id = 0;
    int level = 0;
    double h = 0.0;
    double q1 = 0.0, p1 = 0.0;
    std::vector<double> exponents;
    double return_time = 0.0;
    bool truncated = false;
};

struct EntropyEstimate {
    std::size_t samples = 0;
    std::size_t truncated = 0;
    double threshold = 0.0;
    double chaotic_fraction = 0.0;
    double fraction_lo = 0.0, fraction_hi = 0.0; ///< bootstrap 95% interval
    double mean_positive_sum = 0.0;  ///< over chaotic samples
    double mean_max_lambda = 0.0;    ///< mean of max(lambda_1, 0) over all samples
    double map_proxy = 0.0;          ///< chaotic_fraction * mean_positive_sum
    double mean_return_time = 0.0;
    double flow_proxy = 0.0;         ///< map_proxy / mean_return_time
    std::vector<double> level_h, level_weight;
    std::vector<std::pair<double, double>> threshold_table; ///< (threshold, fraction)
    std::uint64_t seed = 0;
    std::vector<EntropySample> rows;
};

/// Finite-time Lyapunov sampling over a disk in the slice plane on one or
/// more levels, aggregated with slice weights.
EntropyEstimate entropy_estimate(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                                 const EntropySettings& cfg);

/// Aggregation step alone (used for the accounting checks).
EntropyEstimate aggregate_entropy(std::vector<EntropySample> rows, const std::vector<double>& level_h,
                                  const std::vector<double>& level_weight, const EntropySettings& cfg);

struct FrequencyRow {
    SectionPoint initial;
    std::vector<double> rotation; ///< per section angle, in [0,1)
    double window_gap = 0.0;      ///< max disagreement between the two half windows
    bool converged = false;
};

struct FrequencyScan {
    long iterations = 0;
    std::vector<FrequencyRow> rows;
};

/// Weighted Birkhoff rotation numbers of R o Psi (Psi may be the identity).
FrequencyScan frequency_scan(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                             const std::vector<SectionPoint>& initial, long iterations,
                             double tol = 1e-9, int workers = 1);

/// Initial conditions on a line in p: p_1 from lo to hi, level h, q_bar = q0.
std::vector<SectionPoint> frequency_line(const IntegrableHamiltonian& sys, const Vec& p_star,
                                         double p1_lo, double p1_hi, int count, double h,
                                         double q0);

struct TubeSettings {
    double eps = 0.02;
    long horizon = 100000;
    std::size_t samples = 1000;
    double sample_radius = 0.01; ///< initial conditions uniform in this disk around the center
    std::vector<double> levels;  ///< empty: the torus level only
    std::uint64_t seed = 1;
    int workers = 1;
};

struct TubeReport {
    double eps = 0.0;
    long horizon = 0;
    std::size_t samples = 0;
    std::vector<double> max_deviation;
    std::vector<long> escape_iterate; ///< -1 when the orbit stayed inside
    std::size_t escapes = 0;
    double worst = 0.0;
};

/// Iterates R o Psi and records the distance (angle distance on q_bar,
/// Euclidean on p) to the base point (center q_1, p_star).
TubeReport tube_confinement(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                            const TubeSettings& cfg);

/// Section-scatter orbits: rows (sample, iterate, q_1, p_1, h).
struct ScatterRow {
    std::size_t sample;
    long iterate;
    double q1, p1, h;
};
std::vector<ScatterRow> section_scatter(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                                        const std::vector<SectionPoint>& initial, long iterations);

void write_entropy_csv(std::ostream& out, const EntropyEstimate& e);
void write_frequency_csv(std::ostream& out, const FrequencyScan& f);
void write_tube_csv(std::ostream& out, const TubeReport& t);
void write_scatter_csv(std::ostream& out, const std::vector<ScatterRow>& rows);
void write_lyapunov_history_csv(std::ostream& out, const std::vector<LyapunovReport>& reps);

} // namespace nearint

#endif
