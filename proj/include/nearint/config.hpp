#ifndef NEARINT_CONFIG_HPP
#define NEARINT_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "diagnostics.hpp"
#include "flow.hpp"
#include "realization.hpp"

namespace nearint {

// INI-style experiment description. Sections and keys are listed in the
// README; unknown sections or keys are a configuration error.

struct SystemConfig {
    std::string kind = "quadratic"; ///< quadratic | canonical | polynomial
    int n = 2;
    std::vector<std::vector<double>> coeffs; ///< polynomial rows, "a,b;c,d"
    std::vector<double> p_star{0.0, 1.0};
    bool operator==(const SystemConfig&) const = default;
};

struct PerturbationConfig {
    double center_q = 0.5;
    double center_p = 0.0;
    double r_supp = 0.1;
    double kick = 0.1;
    double h0 = 0.5;
    double delta_h = 0.05;
    bool compensator = false;
    bool operator==(const PerturbationConfig&) const = default;
};

struct RealizationConfig {
    double eps_u = 0.1;
    int h_grid = 9;
    std::size_t samples = 1000;        ///< fidelity samples on the section
    double margin = 0.02;              ///< sample box enlargement
    double tolerance = 1e-6;           ///< fidelity assertion
    std::size_t localization = 10000;  ///< phase-space samples for the bitwise check
    std::size_t zone_samples = 1000;
    bool operator==(const RealizationConfig&) const = default;
};

struct IntegratorConfig {
    int order = 4;
    double step = 0.004;
    double newton_tol = 1e-12;
    double crossing_tol = 1e-10;
    bool operator==(const IntegratorConfig&) const = default;
};

/// Map used by the entropy, frequency, tube and scatter stages; same center
/// and envelope as [perturbation], its own kick and support.
struct DiagnosticsConfig {
    double kick = 4.0;
    bool compensator = true;
    double r_supp = 0.01;
    bool operator==(const DiagnosticsConfig&) const = default;
};

struct EntropyConfig {
    std::size_t samples = 1000;
    long iterations = 10000;
    double threshold = 0.05;
    double disk_radius = 0.01;
    int levels = 1;
    std::string level_sampling = "bump"; ///< uniform | bump
    double level_halfwidth = 0.0;
    int bootstrap = 1000;
    double min_fraction = 0.2; ///< assertion; 0 disables
    int history_samples = 8;   ///< samples whose running lambda_1 is kept
    bool operator==(const EntropyConfig&) const = default;
};

struct FrequencyConfig {
    double p1_lo = 0.2;
    double p1_hi = 0.4;
    int count = 11;
    long iterations = 20000;
    double tol = 1e-9;
    double level = 1.0; ///< h of the scan line
    double q0 = 0.0;
    bool operator==(const FrequencyConfig&) const = default;
};

struct TubeConfig {
    double eps = 0.02;
    long horizon = 100000;
    std::size_t samples = 1000;
    double sample_radius = 0.01;
    bool operator==(const TubeConfig&) const = default;
};

struct ScatterConfig {
    std::size_t samples = 20;
    long iterations = 500;
    double radius = 0.01;
    bool operator==(const ScatterConfig&) const = default;
};

struct StagesConfig {
    bool structure = true;
    bool realization = true;
    bool entropy = true;
    bool frequency = true;
    bool tube = false;
    bool scatter = true;
    bool operator==(const StagesConfig&) const = default;
};

struct RunConfig {
    std::string name = "run";
    std::uint64_t seed = 1;
    int workers = 1;
    std::string output_dir = "out";
    bool operator==(const RunConfig&) const = default;
};

struct ExperimentConfig {
    RunConfig run;
    StagesConfig stages;
    SystemConfig system;
    PerturbationConfig perturbation;
    RealizationConfig realization;
    IntegratorConfig integrator;
    DiagnosticsConfig diagnostics;
    EntropyConfig entropy;
    FrequencyConfig frequency;
    TubeConfig tube;
    ScatterConfig scatter;
    bool operator==(const ExperimentConfig&) const = default;

    /// Throws configuration errors for nonpositive radii, widths or
    /// tolerances and for supports that leave the chart.
    void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical form: every key in a fixed order, doubles as %.17g.
std::string serialize_config(const ExperimentConfig& cfg);
/// SHA-256 of the canonical form, hex.
std::string config_hash(const ExperimentConfig& cfg);

/// Sets "section.key" from its text value (used by sweeps).
void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);

// Builders from a config.
IntegrableHamiltonian build_system(const ExperimentConfig& cfg);
Vec build_p_star(const ExperimentConfig& cfg);
/// The realization map (kick from [perturbation]).
SectionPerturbation build_perturbation(const ExperimentConfig& cfg, const IntegrableHamiltonian& sys);
/// The map used by the dynamical diagnostics (kick from [diagnostics]).
SectionPerturbation build_diagnostic_perturbation(const ExperimentConfig& cfg,
                                                  const IntegrableHamiltonian& sys);
IntegratorSettings build_integrator(const ExperimentConfig& cfg);
RealizationSettings build_realization_settings(const ExperimentConfig& cfg);

} // namespace nearint

#endif
