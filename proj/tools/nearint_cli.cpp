// nearint: run, sweep and plot-data front end.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "nearint/harness.hpp"

using namespace nearint;

namespace {

void print_run(const RunArtifact& art)
{
    std::cout << "artifact " << art.dir << "\n";
    for (const auto& s : art.stages) {
        std::cout << "  " << s.name << ": " << (s.passed ? "pass" : "FAIL") << "\n";
        for (const auto& f : s.failures)
            std::cout << "    " << f << "\n";
    }
    if (!art.error.empty())
        std::cout << "  aborted: " << art.error << "\n";
}

std::vector<std::string> split_values(const std::string& list)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : list) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty())
        out.push_back(cur);
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Near-integrable Hamiltonian realization and diagnostics"};
    app.set_version_flag("--version", std::string(version_string));
    app.require_subcommand(1);

    std::string config_path, axis, values, artifact, kind, out;
    auto* run = app.add_subcommand("run", "run the enabled stages of a config");
    run->add_option("config", config_path, "config file")->required();

    auto* sweep = app.add_subcommand("sweep", "one run per value of a config key");
    sweep->add_option("config", config_path, "config file")->required();
    sweep->add_option("--axis", axis, "section.key to vary")->required();
    sweep->add_option("--values", values, "comma-separated values")->required();

    auto* plot = app.add_subcommand("plotdata", "plot-ready CSV from an artifact directory");
    plot->add_option("artifact", artifact, "artifact (or sweep) directory")->required();
    plot->add_option("--kind", kind, "section-scatter | lyapunov-history | sweep-curve")->required();
    plot->add_option("--out", out, "output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_pass : exit_configuration;
    }

    try {
        if (*run) {
            const RunArtifact art = run_experiment(load_config(config_path));
            print_run(art);
            return art.exit_code;
        }
        if (*sweep) {
            const SweepResult res = parameter_sweep(load_config(config_path), axis, split_values(values));
            std::cout << "sweep " << res.dir << "\n";
            for (const auto& p : res.points)
                std::cout << "  " << axis << "=" << p.value << ": exit " << p.exit_code
                          << (p.error.empty() ? "" : " (" + p.error + ")") << "\n";
            return res.exit_code;
        }
        if (*plot) {
            std::cout << emit_plot_data(artifact, kind, out) << "\n";
            return exit_pass;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_configuration;
    }
    return exit_configuration;
}
