#ifndef NEARINT_HARNESS_HPP
#define NEARINT_HARNESS_HPP

#include <string>
#include <vector>

#include "config.hpp"

namespace nearint {

inline constexpr const char* version_string = "nearint 0.1.0";

/// Exit codes shared by the harness and the CLI.
enum ExitCode { exit_pass = 0, exit_assertion = 1, exit_configuration = 2, exit_numerical = 3 };

int exit_code_for(const Error& e);

struct Metric {
    std::string name;
    double value = 0.0;
};

struct StageResult {
    std::string name;
    bool passed = true;
    double seconds = 0.0;
    std::vector<Metric> metrics;
    std::vector<std::string> failures; ///< failed assertions, human readable
};

struct RunArtifact {
    std::string dir;
    std::string config_hash;
    std::string version = version_string;
    bool complete = false;
    int exit_code = exit_pass;
    std::string error; ///< set when a stage aborted
    std::vector<StageResult> stages;

    const StageResult* stage(const std::string& name) const;
};

/// Effective output root: NEARINT_OUTPUT_DIR if set, else run.output_dir.
std::string output_root(const ExperimentConfig& cfg);

/// Runs the enabled stages in order (structure, realization, entropy,
/// frequency, tube, scatter) and writes the artifact into `dir`
/// (default: output_root/run.name). Errors inside a stage abort the run;
/// the artifact is then written with status "incomplete".
RunArtifact run_experiment(const ExperimentConfig& cfg, const std::string& dir = {});

struct SweepPoint {
    std::string value;
    int exit_code = exit_pass;
    std::string error;
    std::vector<Metric> metrics; ///< "stage.metric"
};

struct SweepResult {
    std::string dir;
    std::string axis;
    std::vector<SweepPoint> points;
    int exit_code = exit_pass; ///< worst point
};

/// One run per value of `axis` ("section.key"); points that fail are recorded
/// and the sweep continues. Writes sweep.csv with rows (value, metric, value).
SweepResult parameter_sweep(const ExperimentConfig& cfg, const std::string& axis,
                            const std::vector<std::string>& values);

/// Plot-ready CSV from an artifact directory. Kinds: section-scatter,
/// lyapunov-history, sweep-curve. Returns the written path; a missing stage
/// throws missing_stage.
std::string emit_plot_data(const std::string& artifact_dir, const std::string& kind,
                           const std::string& out_path = {});

/// Write-to-temporary then rename.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace nearint

#endif
