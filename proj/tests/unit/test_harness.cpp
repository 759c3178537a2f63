#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>
#include <sys/wait.h>

#include <json.hpp>

#include "nearint/harness.hpp"

using namespace nearint;
namespace fs = std::filesystem;

namespace {

fs::path scratch()
{
    static const fs::path root = [] {
        const fs::path p = fs::temp_directory_path() / ("nearint-harness-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t lines(const fs::path& p)
{
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

double metric(const RunArtifact& a, const std::string& stage, const std::string& name)
{
    const StageResult* s = a.stage(stage);
    REQUIRE(s != nullptr);
    for (const auto& m : s->metrics)
        if (m.name == name)
            return m.value;
    FAIL("no metric " << stage << "." << name);
    return 0.0;
}

ExperimentConfig small(const std::string& name)
{
    ExperimentConfig c;
    c.run.name = name;
    c.run.output_dir = scratch().string();
    c.realization.samples = 12;
    c.realization.localization = 400;
    c.realization.zone_samples = 20;
    c.entropy.samples = 24;
    c.entropy.iterations = 400;
    c.entropy.bootstrap = 50;
    c.entropy.min_fraction = 0.0;
    c.entropy.history_samples = 3;
    c.frequency.count = 3;
    c.frequency.iterations = 2000;
    c.scatter.samples = 3;
    c.scatter.iterations = 15;
    return c;
}

int shell(const std::string& cmd)
{
    const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_CASE("config text round-trips")
{
    const ExperimentConfig a = small("rt");
    const std::string text = serialize_config(a);
    const ExperimentConfig b = parse_config(text);
    CHECK(b == a);
    CHECK(serialize_config(b) == text);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 64);

    ExperimentConfig c = a;
    set_config_value(c, "perturbation.kick", "0.2");
    CHECK(c.perturbation.kick == 0.2);
    CHECK(config_hash(c) != config_hash(a));
}

TEST_CASE("config errors")
{
    auto code = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const Error& e) {
            return exit_code_for(e);
        }
        return 0;
    };
    CHECK(code("[perturbation]\nkick = 0.1\n") == 0);
    CHECK(code("[perturbation]\nkik = 0.1\n") == exit_configuration);
    CHECK(code("[nosuch]\nx = 1\n") == exit_configuration);
    CHECK(code("[perturbation]\nkick = abc\n") == exit_configuration);
    CHECK(code("[perturbation]\nr_supp = -1\n") == exit_configuration);
    CHECK(code("[system]\nkind = cubic\n") == exit_configuration);
    ExperimentConfig c;
    CHECK_THROWS_AS(set_config_value(c, "entropy.nope", "1"), Error);
    CHECK_THROWS_AS(load_config((scratch() / "absent.ini").string()), Error);
}

TEST_CASE("unperturbed run")
{
    ExperimentConfig c = small("flat");
    c.perturbation.kick = 0.0;
    c.diagnostics.kick = 0.0;
    const RunArtifact a = run_experiment(c);
    CHECK(a.complete);
    CHECK(a.exit_code == exit_pass);
    CHECK(metric(a, "realization", "fidelity_sup_error") < 1e-9);
    CHECK(metric(a, "realization", "sup_dH") == 0.0);
    CHECK(metric(a, "entropy", "chaotic_fraction") == 0.0);

    // scatter: one row per sample and iterate, p1 frozen
    const fs::path dir(a.dir);
    CHECK(lines(dir / "scatter.csv") == 1 + 3 * 15);
    std::ifstream in(dir / "scatter.csv");
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::string> p1;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');)
            f.push_back(x);
        REQUIRE(f.size() == 5);
        if (!p1.count(f[0]))
            p1[f[0]] = f[3];
        CHECK(p1[f[0]] == f[3]);
    }

    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(summary["status"] == "complete");
    CHECK(summary["config_hash"] == config_hash(c));
    CHECK(summary["exit_code"] == 0);
    CHECK(fs::exists(dir / "config.ini"));
    CHECK(parse_config(slurp(dir / "config.ini")) == c);
    CHECK(fs::exists(dir / "metadata.json"));
}

TEST_CASE("runs are reproducible")
{
    const ExperimentConfig c = small("rep");
    const RunArtifact a = run_experiment(c, (scratch() / "rep-a").string());
    const RunArtifact b = run_experiment(c, (scratch() / "rep-b").string());
    CHECK(a.exit_code == exit_pass);
    for (const char* f : {"fidelity.csv", "entropy.csv", "lyapunov_history.csv", "frequency.csv", "scatter.csv",
                          "summary.json", "realization.json", "config.ini"})
        CHECK_MESSAGE(slurp(fs::path(a.dir) / f) == slurp(fs::path(b.dir) / f), f);

    // the history is a running mean sampled at increasing iterates
    std::ifstream in(fs::path(a.dir) / "lyapunov_history.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample,iterate,lambda1");
    long last_iter = -1;
    std::string last_sample;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto x = line.find(','), y = line.find(',', x + 1);
        const std::string s = line.substr(0, x);
        const long it = std::stol(line.substr(x + 1, y - x - 1));
        if (s == last_sample)
            CHECK(it > last_iter);
        last_sample = s;
        last_iter = it;
        ++rows;
    }
    CHECK(rows > 0);
}

TEST_CASE("assertion failures and aborted stages")
{
    SUBCASE("impossible chaotic fraction")
    {
        ExperimentConfig c = small("assert");
        c.stages.realization = false;
        c.entropy.min_fraction = 1.0;
        const RunArtifact a = run_experiment(c);
        CHECK(a.complete);
        CHECK(a.exit_code == exit_assertion);
        CHECK_FALSE(a.stage("entropy")->passed);
    }
    SUBCASE("folding realization map")
    {
        ExperimentConfig c = small("fold");
        c.perturbation.kick = 3.0;
        const RunArtifact a = run_experiment(c);
        CHECK_FALSE(a.complete);
        CHECK(a.exit_code == exit_numerical);
        const auto summary = nlohmann::json::parse(slurp(fs::path(a.dir) / "summary.json"));
        CHECK(summary["status"] == "incomplete");
    }
}

TEST_CASE("sweeps and plot data")
{
    ExperimentConfig c = small("sw");
    c.stages.realization = false;
    c.stages.structure = false;

    SUBCASE("single value")
    {
        const SweepResult r = parameter_sweep(c, "diagnostics.kick", {"0"});
        REQUIRE(r.points.size() == 1);
        CHECK(r.exit_code == exit_pass);
        const std::string curve = emit_plot_data(r.dir, "sweep-curve");
        CHECK(lines(curve) == 2);
        CHECK(slurp(curve).rfind("value,", 0) == 0);
    }
    SUBCASE("several values")
    {
        const SweepResult r = parameter_sweep(c, "diagnostics.kick", {"0", "4"});
        REQUIRE(r.points.size() == 2);
        const std::string curve = emit_plot_data(r.dir, "sweep-curve");
        CHECK(lines(curve) == 3);
        CHECK_THROWS_AS(parameter_sweep(c, "diagnostics.nokey", {"1"}), Error);
    }
    SUBCASE("kinds")
    {
        const RunArtifact a = run_experiment(c);
        CHECK(lines(emit_plot_data(a.dir, "section-scatter")) == 1 + 3 * 15);
        CHECK(lines(emit_plot_data(a.dir, "lyapunov-history")) > 1);
        try {
            emit_plot_data(a.dir, "sweep-curve");
            FAIL("expected missing_stage");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::missing_stage);
        }
        CHECK_THROWS_AS(emit_plot_data(a.dir, "histogram"), Error);

        ExperimentConfig d = c;
        d.run.name = "noscatter";
        d.stages.scatter = false;
        const RunArtifact b = run_experiment(d);
        try {
            emit_plot_data(b.dir, "section-scatter");
            FAIL("expected missing_stage");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::missing_stage);
            CHECK(exit_code_for(e) == exit_configuration);
        }
    }
}

TEST_CASE("command line exit codes")
{
    const std::string cli = NEARINT_CLI;
    const fs::path dir = scratch() / "cli";
    fs::create_directories(dir);
    ExperimentConfig c = small("cli");
    c.run.output_dir = dir.string();
    c.stages.realization = false;
    {
        std::ofstream(dir / "ok.ini") << serialize_config(c);
        ExperimentConfig bad = c;
        bad.entropy.min_fraction = 1.0;
        std::ofstream(dir / "assert.ini") << serialize_config(bad);
        std::ofstream(dir / "typo.ini") << "[perturbation]\nkik = 1\n";
        ExperimentConfig fold = c;
        fold.stages.realization = true;
        fold.perturbation.kick = 3.0;
        std::ofstream(dir / "fold.ini") << serialize_config(fold);
    }
    const std::string d = dir.string();
    CHECK(shell(cli + " --version") == 0);
    CHECK(shell(cli + " run " + d + "/ok.ini") == 0);
    CHECK(shell(cli + " run " + d + "/assert.ini") == 1);
    CHECK(shell(cli + " run " + d + "/typo.ini") == 2);
    CHECK(shell(cli + " run " + d + "/missing.ini") == 2);
    CHECK(shell(cli + " run " + d + "/fold.ini") == 3);
    CHECK(shell(cli) == 2);
    CHECK(shell(cli + " sweep " + d + "/ok.ini --axis diagnostics.kick --values 0") == 0);
    CHECK(shell(cli + " sweep " + d + "/ok.ini --axis run.bogus --values 0") == 2);
    CHECK(shell(cli + " plotdata " + d + "/cli --kind section-scatter") == 0);
    CHECK(shell(cli + " plotdata " + d + "/cli --kind sweep-curve") == 2);
    CHECK(shell(cli + " plotdata " + d + "/cli --kind pie") == 2);
}

TEST_CASE("output root from the environment")
{
    ExperimentConfig c = small("env");
    ::setenv("NEARINT_OUTPUT_DIR", (scratch() / "env-root").c_str(), 1);
    CHECK(output_root(c) == (scratch() / "env-root").string());
    ::unsetenv("NEARINT_OUTPUT_DIR");
    CHECK(output_root(c) == c.run.output_dir);
}
