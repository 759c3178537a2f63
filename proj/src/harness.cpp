#include "nearint/harness.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace nearint {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int artifact_schema = 1;
constexpr int realization_schema = 1;

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::missing_stage, "cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

class Stage {
public:
    explicit Stage(std::string name) { res_.name = std::move(name); }
    void metric(const std::string& name, double v) { res_.metrics.push_back({name, v}); }
    void check(bool ok, const std::string& what)
    {
        if (!ok) {
            res_.passed = false;
            res_.failures.push_back(what);
        }
    }
    StageResult& result() { return res_; }

private:
    StageResult res_;
};

struct Context {
    const ExperimentConfig& cfg;
    fs::path dir;
    IntegrableHamiltonian sys;
    Vec p_star;
    std::uint64_t seed;
    int workers;
};

void write_csv(const fs::path& path, const std::function<void(std::ostream&)>& body)
{
    std::ostringstream os;
    body(os);
    write_file_atomic(path.string(), os.str());
}

void stage_structure(Context& ctx, Stage& st)
{
    const auto& cfg = ctx.cfg;
    const int n = ctx.sys.dimension();
    const Mat J = standard_skew(n - 1);
    auto measure = [&](const SectionPerturbation& psi, const std::string& tag) {
        const auto pts = section_samples(ctx.sys, psi, cfg.realization.samples, cfg.realization.margin,
                                         sub_seed(ctx.seed, 11));
        double level = 0.0, symp = 0.0;
        std::size_t active = 0;
        for (const auto& x : pts) {
            const SectionPoint y = psi.apply(ctx.sys, x);
            level = std::max(level, std::abs(ctx.sys.eval(y.p) - ctx.sys.eval(x.p)));
            symp = std::max(symp, symplecticity_defect(psi.slice_derivative(ctx.sys, x), J));
            active += psi.active(ctx.sys, x) ? 1 : 0;
        }
        st.metric(tag + "samples", static_cast<double>(pts.size()));
        st.metric(tag + "active", static_cast<double>(active));
        st.metric(tag + "level_defect", level);
        st.metric(tag + "slice_symplecticity_defect", symp);
        st.check(level < 1e-12, tag + "level defect " + num(level) + " >= 1e-12");
        st.check(symp < 1e-10, tag + "slice symplecticity defect " + num(symp) + " >= 1e-10");
    };
    measure(build_perturbation(cfg, ctx.sys), "");
    measure(build_diagnostic_perturbation(cfg, ctx.sys), "diagnostic_");
}

json realization_json(const RealizedHamiltonian& ht, const ExperimentConfig& cfg)
{
    json j;
    j["schema"] = "nearint.realization";
    j["schema_version"] = realization_schema;
    j["system"] = ht.base().name();
    std::vector<double> ps(ht.p_star().data(), ht.p_star().data() + ht.p_star().size());
    j["p_star"] = ps;
    const auto& plane = ht.perturbation().plane();
    json tw = json::array();
    for (const auto& t : plane.disk().twists())
        tw.push_back({{"center", {t.center()[0], t.center()[1]}}, {"rho", t.rho()}, {"amplitude", t.amplitude()}});
    j["template"] = {{"center", {plane.disk().center()[0], plane.disk().center()[1]}},
                     {"r_supp", plane.disk().support_radius()},
                     {"twists", tw}};
    j["envelope"] = {{"h0", plane.envelope().center()}, {"delta_h", plane.envelope().radius()}};
    j["compensator"] = plane.compensator().has_value();
    j["eps_u"] = ht.settings().eps_u;
    j["h_grid"] = cfg.realization.h_grid;
    j["zone_center"] = ht.zone_center();
    j["glue_halfwidth"] = ht.glue_halfwidth();
    j["support_box"] = {{"q_half_width", plane.q_half_width()}, {"p_half_width", plane.p_half_width()}};
    return j;
}

void stage_realization(Context& ctx, Stage& st)
{
    const auto& cfg = ctx.cfg;
    const SectionPerturbation psi = build_perturbation(cfg, ctx.sys);
    const auto ht = realize(ctx.sys, ctx.p_star, psi, build_realization_settings(cfg));
    write_file_atomic((ctx.dir / "realization.json").string(), realization_json(*ht, cfg).dump(2) + "\n");

    const IntegratorSettings icfg = build_integrator(cfg);
    const auto pts = section_samples(ctx.sys, psi, cfg.realization.samples, cfg.realization.margin,
                                     sub_seed(ctx.seed, 21));
    const FidelityReport fid = verify_realization(ctx.sys, *ht, psi, pts, icfg, ctx.workers);
    st.metric("fidelity_samples", static_cast<double>(fid.samples));
    st.metric("fidelity_active", static_cast<double>(fid.active));
    st.metric("fidelity_sup_error", fid.sup_error);
    st.metric("fidelity_mean_error", fid.mean_error);
    st.metric("sup_energy_drift", fid.sup_energy_drift);
    st.check(fid.sup_error < cfg.realization.tolerance,
             "fidelity sup error " + num(fid.sup_error) + " >= " + num(cfg.realization.tolerance));
    write_csv(ctx.dir / "fidelity.csv", [&](std::ostream& os) {
        os << "sample,q1,p1,h,error\n";
        for (std::size_t i = 0; i < pts.size(); ++i)
            os << i << ',' << num(pts[i].q_bar[0]) << ',' << num(pts[i].p[0]) << ','
               << num(ctx.sys.eval(pts[i].p)) << ',' << num(fid.errors[i]) << '\n';
    });

    const LocalizationReport loc =
        localization_scan(*ht, cfg.realization.localization, cfg.realization.zone_samples, sub_seed(ctx.seed, 22));
    st.metric("localization_samples", static_cast<double>(loc.samples));
    st.metric("localization_outside", static_cast<double>(loc.outside));
    st.metric("localization_mismatch", static_cast<double>(loc.outside_mismatch));
    st.metric("sup_dH", loc.sup_inside);
    st.metric("sup_dH_gradient", loc.sup_gradient);
    st.check(loc.outside_mismatch == 0,
             std::to_string(loc.outside_mismatch) + " fast-path points with H~ != H");

    // monodromy of the realized flow on a few active samples
    const int n = ctx.sys.dimension();
    const Mat J = standard_skew(n - 1);
    double mono_symp = 0.0, mono_gap = 0.0;
    int taken = 0;
    for (const auto& x : pts) {
        if (taken >= 4)
            break;
        if (!psi.active(ctx.sys, x))
            continue;
        const Monodromy m = integrated_monodromy(*ht, x, icfg);
        mono_symp = std::max(mono_symp, symplecticity_defect(m.slice, J));
        mono_gap = std::max(mono_gap, (m.slice - tangent_return_slice(ctx.sys, psi, x)).cwiseAbs().maxCoeff());
        ++taken;
    }
    st.metric("monodromy_samples", taken);
    st.metric("monodromy_symplecticity_defect", mono_symp);
    st.metric("monodromy_vs_analytic", mono_gap);
    st.check(mono_symp < 1e-6, "integrated monodromy defect " + num(mono_symp) + " >= 1e-6");
}

EntropySettings entropy_settings(const ExperimentConfig& cfg, std::uint64_t seed, int workers)
{
    EntropySettings e;
    e.samples = cfg.entropy.samples;
    e.iterations = cfg.entropy.iterations;
    e.threshold = cfg.entropy.threshold;
    e.levels = cfg.entropy.levels;
    e.level_sampling = cfg.entropy.level_sampling == "bump" ? LevelSampling::bump : LevelSampling::uniform;
    e.level_center = cfg.perturbation.h0;
    e.level_halfwidth = cfg.entropy.level_halfwidth;
    e.disk_center = Vec2(cfg.perturbation.center_q, cfg.perturbation.center_p);
    e.disk_radius = cfg.entropy.disk_radius;
    e.bootstrap = cfg.entropy.bootstrap;
    e.seed = seed;
    e.workers = workers;
    return e;
}

void stage_entropy(Context& ctx, Stage& st)
{
    const auto& cfg = ctx.cfg;
    const SectionPerturbation psi = build_diagnostic_perturbation(cfg, ctx.sys);
    const EntropySettings es = entropy_settings(cfg, sub_seed(ctx.seed, 31), ctx.workers);
    const EntropyEstimate est = entropy_estimate(ctx.sys, psi, es);
    st.metric("samples", static_cast<double>(est.samples));
    st.metric("truncated", static_cast<double>(est.truncated));
    st.metric("threshold", est.threshold);
    st.metric("chaotic_fraction", est.chaotic_fraction);
    st.metric("fraction_lo", est.fraction_lo);
    st.metric("fraction_hi", est.fraction_hi);
    st.metric("mean_positive_sum", est.mean_positive_sum);
    st.metric("mean_max_lambda", est.mean_max_lambda);
    st.metric("map_proxy", est.map_proxy);
    st.metric("mean_return_time", est.mean_return_time);
    st.metric("flow_proxy", est.flow_proxy);
    for (const auto& [t, f] : est.threshold_table)
    {
        char tag[32];
        std::snprintf(tag, sizeof tag, "fraction_at_%g", t);
        st.metric(tag, f);
    }
    if (cfg.entropy.min_fraction > 0.0) {
        st.check(est.chaotic_fraction >= cfg.entropy.min_fraction,
                 "chaotic fraction " + num(est.chaotic_fraction) + " < " + num(cfg.entropy.min_fraction));
        st.check(est.fraction_lo > 0.0, "bootstrap interval of the chaotic fraction includes 0");
    }
    write_csv(ctx.dir / "entropy.csv", [&](std::ostream& os) { write_entropy_csv(os, est); });

    // running lambda_1 for the first few samples
    std::vector<LyapunovReport> hist;
    LyapunovSettings ls;
    ls.iterations = cfg.entropy.iterations;
    ls.history_every = 100;
    const TangentStep step = perturbed_return_step(ctx.sys, psi);
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.entropy.history_samples, 0)),
                                             est.rows.size());
    for (std::size_t i = 0; i < count; ++i) {
        const auto& r = est.rows[i];
        if (r.truncated)
            continue;
        Vec qb = Vec::Zero(ctx.sys.dimension() - 1);
        qb[0] = wrap_unit(r.q1);
        Vec p = ctx.p_star;
        p[0] = r.p1;
        p[p.size() - 1] = solve_level(ctx.sys, r.h, p.head(p.size() - 1), ctx.p_star[p.size() - 1]);
        hist.push_back(lyapunov_spectrum(step, SectionPoint(qb, p), ls, sub_seed(ctx.seed, 1000 + i), &ctx.sys));
    }
    write_csv(ctx.dir / "lyapunov_history.csv", [&](std::ostream& os) { write_lyapunov_history_csv(os, hist); });
}

void stage_frequency(Context& ctx, Stage& st)
{
    const auto& cfg = ctx.cfg;
    const auto& fc = cfg.frequency;
    const SectionPerturbation psi = build_diagnostic_perturbation(cfg, ctx.sys);
    const SectionPerturbation none = SectionPerturbation::identity(ctx.p_star);
    const auto line = frequency_line(ctx.sys, ctx.p_star, fc.p1_lo, fc.p1_hi, fc.count, fc.level, fc.q0);
    const FrequencyScan with = frequency_scan(ctx.sys, psi, line, fc.iterations, fc.tol, ctx.workers);
    const FrequencyScan without = frequency_scan(ctx.sys, none, line, fc.iterations, fc.tol, ctx.workers);
    std::size_t identical = 0, converged = 0;
    double closed_form_gap = 0.0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const auto& a = with.rows[i];
        const auto& b = without.rows[i];
        identical += a.rotation == b.rotation && a.window_gap == b.window_gap ? 1 : 0;
        if (b.converged) {
            ++converged;
            const Vec shift = return_shift(ctx.sys, line[i].p);
            for (std::size_t j = 0; j < b.rotation.size(); ++j)
                closed_form_gap = std::max(
                    closed_form_gap, angle_distance(b.rotation[j], shift[static_cast<Eigen::Index>(j)]));
        }
    }
    const bool off_support = !psi.plane().envelope().inside(fc.level);
    st.metric("lines", static_cast<double>(line.size()));
    st.metric("off_envelope", off_support ? 1.0 : 0.0);
    st.metric("identical_rows", static_cast<double>(identical));
    st.metric("converged_rows", static_cast<double>(converged));
    st.metric("closed_form_gap", closed_form_gap);
    if (off_support)
        st.check(identical == line.size(), "scan off the envelope differs from the unperturbed scan");
    st.check(closed_form_gap < 1e-9, "unperturbed rotation numbers off the closed form by " + num(closed_form_gap));
    write_csv(ctx.dir / "frequency.csv", [&](std::ostream& os) { write_frequency_csv(os, with); });
}

void stage_tube(Context& ctx, Stage& st)
{
    const auto& cfg = ctx.cfg;
    const SectionPerturbation psi = build_diagnostic_perturbation(cfg, ctx.sys);
    TubeSettings ts;
    ts.eps = cfg.tube.eps;
    ts.horizon = cfg.tube.horizon;
    ts.samples = cfg.tube.samples;
    ts.sample_radius = cfg.tube.sample_radius;
    ts.seed = sub_seed(ctx.seed, 41);
    ts.workers = ctx.workers;
    const TubeReport rep = tube_confinement(ctx.sys, psi, ts);
    st.metric("eps", rep.eps);
    st.metric("horizon", static_cast<double>(rep.horizon));
    st.metric("samples", static_cast<double>(rep.samples));
    st.metric("escapes", static_cast<double>(rep.escapes));
    st.metric("worst_deviation", rep.worst);
    st.check(rep.escapes == 0, std::to_string(rep.escapes) + " orbits left the tube");
    write_csv(ctx.dir / "tube.csv", [&](std::ostream& os) { write_tube_csv(os, rep); });
}

void stage_scatter(Context& ctx, Stage& st)
{
    const auto& cfg = ctx.cfg;
    const SectionPerturbation psi = build_diagnostic_perturbation(cfg, ctx.sys);
    const int n = ctx.sys.dimension();
    std::vector<SectionPoint> init;
    Rng rng(sub_seed(ctx.seed, 51));
    for (std::size_t i = 0; i < cfg.scatter.samples; ++i) {
        const Vec2 z = rng.in_disk(cfg.perturbation.center_q, cfg.perturbation.center_p, cfg.scatter.radius);
        Vec qb = Vec::Zero(n - 1);
        qb[0] = wrap_unit(z[0]);
        Vec p = ctx.p_star;
        p[0] = z[1];
        p[n - 1] = solve_level(ctx.sys, cfg.perturbation.h0, p.head(n - 1), ctx.p_star[n - 1]);
        init.emplace_back(qb, p);
    }
    const auto rows = section_scatter(ctx.sys, psi, init, cfg.scatter.iterations);
    st.metric("rows", static_cast<double>(rows.size()));
    write_csv(ctx.dir / "scatter.csv", [&](std::ostream& os) { write_scatter_csv(os, rows); });
}

json summary_json(const RunArtifact& art, const ExperimentConfig& cfg)
{
    json j;
    j["schema_version"] = artifact_schema;
    j["version"] = art.version;
    j["name"] = cfg.run.name;
    j["config_hash"] = art.config_hash;
    j["seed"] = cfg.run.seed;
    j["status"] = art.complete ? "complete" : "incomplete";
    j["exit_code"] = art.exit_code;
    if (!art.error.empty())
        j["error"] = art.error;
    json stages = json::object();
    for (const auto& s : art.stages) {
        json m = json::object();
        for (const auto& x : s.metrics)
            m[x.name] = x.value;
        stages[s.name] = {{"passed", s.passed}, {"failures", s.failures}, {"metrics", m}};
    }
    j["stages"] = stages;
    return j;
}

} // namespace

int exit_code_for(const Error& e)
{
    return e.is_configuration() ? exit_configuration : exit_numerical;
}

const StageResult* RunArtifact::stage(const std::string& name) const
{
    for (const auto& s : stages)
        if (s.name == name)
            return &s;
    return nullptr;
}

std::string output_root(const ExperimentConfig& cfg)
{
    if (const char* env = std::getenv("NEARINT_OUTPUT_DIR"); env && *env)
        return env;
    return cfg.run.output_dir;
}

void write_file_atomic(const std::string& path, const std::string& content)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorKind::configuration, "cannot write '" + tmp + "'");
        out << content;
        out.flush();
        if (!out)
            throw Error(ErrorKind::configuration, "write failed for '" + tmp + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw Error(ErrorKind::configuration, "cannot move '" + tmp + "' into place: " + ec.message());
}

RunArtifact run_experiment(const ExperimentConfig& cfg, const std::string& dir)
{
    cfg.validate();
    RunArtifact art;
    art.dir = dir.empty() ? (fs::path(output_root(cfg)) / cfg.run.name).string() : dir;
    art.config_hash = config_hash(cfg);
    std::error_code ec;
    fs::create_directories(art.dir, ec);
    if (ec)
        throw Error(ErrorKind::configuration, "cannot create output directory '" + art.dir + "'");
    write_file_atomic((fs::path(art.dir) / "config.ini").string(), serialize_config(cfg));

    json meta;
    meta["started"] = utc_now();
    json timing = json::object();

    using Fn = void (*)(Context&, Stage&);
    const std::vector<std::tuple<const char*, bool, Fn>> plan = {
        {"structure", cfg.stages.structure, stage_structure},
        {"realization", cfg.stages.realization, stage_realization},
        {"entropy", cfg.stages.entropy, stage_entropy},
        {"frequency", cfg.stages.frequency, stage_frequency},
        {"tube", cfg.stages.tube, stage_tube},
        {"scatter", cfg.stages.scatter, stage_scatter},
    };
    art.complete = true;
    try {
        Context ctx{cfg, fs::path(art.dir), build_system(cfg), build_p_star(cfg), cfg.run.seed, cfg.run.workers};
        make_torus(ctx.sys, ctx.p_star);
        for (const auto& [name, enabled, fn] : plan) {
            if (!enabled)
                continue;
            Stage st(name);
            const auto t0 = std::chrono::steady_clock::now();
            try {
                fn(ctx, st);
            } catch (const Error& e) {
                throw Error(e.kind(), std::string(name) + " stage: " + e.what());
            }
            st.result().seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            timing[name] = st.result().seconds;
            art.stages.push_back(st.result());
            if (!st.result().passed)
                art.exit_code = exit_assertion;
        }
    } catch (const Error& e) {
        art.complete = false;
        art.error = e.what();
        art.exit_code = exit_code_for(e);
    }
    meta["finished"] = utc_now();
    meta["stage_seconds"] = timing;
    meta["output_dir"] = art.dir;
    write_file_atomic((fs::path(art.dir) / "summary.json").string(), summary_json(art, cfg).dump(2) + "\n");
    write_file_atomic((fs::path(art.dir) / "metadata.json").string(), meta.dump(2) + "\n");
    return art;
}

SweepResult parameter_sweep(const ExperimentConfig& cfg, const std::string& axis,
                            const std::vector<std::string>& values)
{
    if (values.empty())
        throw Error(ErrorKind::configuration, "sweep needs at least one value");
    SweepResult res;
    res.axis = axis;
    res.dir = (fs::path(output_root(cfg)) / (cfg.run.name + "-sweep")).string();
    // resolve every point first so a bad axis fails before any work
    std::vector<ExperimentConfig> configs;
    for (const auto& v : values) {
        ExperimentConfig c = cfg;
        set_config_value(c, axis, v);
        c.run.workers = 1;
        configs.push_back(c);
    }
    fs::create_directories(res.dir);
    res.points.resize(values.size());
    parallel_for(values.size(), cfg.run.workers, [&](std::size_t i) {
        SweepPoint& pt = res.points[i];
        pt.value = values[i];
        try {
            configs[i].validate();
            const RunArtifact art =
                run_experiment(configs[i], (fs::path(res.dir) / ("point-" + std::to_string(i))).string());
            pt.exit_code = art.exit_code;
            pt.error = art.error;
            for (const auto& s : art.stages)
                for (const auto& m : s.metrics)
                    pt.metrics.push_back({s.name + "." + m.name, m.value});
        } catch (const Error& e) {
            pt.exit_code = exit_code_for(e);
            pt.error = e.what();
        }
    });
    std::ostringstream os;
    os << "value,metric,metric_value\n";
    for (const auto& pt : res.points) {
        os << pt.value << ",exit_code," << pt.exit_code << '\n';
        for (const auto& m : pt.metrics)
            os << pt.value << ',' << m.name << ',' << num(m.value) << '\n';
        res.exit_code = std::max(res.exit_code, pt.exit_code);
    }
    write_file_atomic((fs::path(res.dir) / "sweep.csv").string(), os.str());
    json j;
    j["axis"] = axis;
    j["values"] = values;
    j["config_hash"] = config_hash(cfg);
    j["version"] = version_string;
    json pts = json::array();
    for (const auto& pt : res.points)
        pts.push_back({{"value", pt.value}, {"exit_code", pt.exit_code}, {"error", pt.error}});
    j["points"] = pts;
    write_file_atomic((fs::path(res.dir) / "sweep.json").string(), j.dump(2) + "\n");
    return res;
}

std::string emit_plot_data(const std::string& artifact_dir, const std::string& kind,
                           const std::string& out_path)
{
    const fs::path dir(artifact_dir);
    const fs::path out = out_path.empty() ? dir / ("plot-" + kind + ".csv") : fs::path(out_path);
    auto need = [&](const char* file, const char* stage) {
        const fs::path p = dir / file;
        if (!fs::exists(p))
            throw Error(ErrorKind::missing_stage,
                        "artifact '" + artifact_dir + "' has no " + stage + " stage (" + file + " missing)");
        return read_file(p.string());
    };
    if (kind == "section-scatter") {
        write_file_atomic(out.string(), need("scatter.csv", "scatter"));
    } else if (kind == "lyapunov-history") {
        write_file_atomic(out.string(), need("lyapunov_history.csv", "entropy"));
    } else if (kind == "sweep-curve") {
        // long table to one row per value, one column per metric
        std::istringstream is(need("sweep.csv", "sweep"));
        std::string line;
        std::getline(is, line);
        std::vector<std::string> order, metrics;
        std::map<std::string, std::map<std::string, std::string>> table;
        while (std::getline(is, line)) {
            const auto a = line.find(',');
            const auto b = line.find(',', a + 1);
            if (a == std::string::npos || b == std::string::npos)
                throw Error(ErrorKind::configuration, "malformed sweep.csv line: " + line);
            const std::string v = line.substr(0, a), m = line.substr(a + 1, b - a - 1);
            if (!table.count(v))
                order.push_back(v);
            if (std::find(metrics.begin(), metrics.end(), m) == metrics.end())
                metrics.push_back(m);
            table[v][m] = line.substr(b + 1);
        }
        std::ostringstream os;
        os << "value";
        for (const auto& m : metrics)
            os << ',' << m;
        os << '\n';
        for (const auto& v : order) {
            os << v;
            for (const auto& m : metrics) {
                const auto it = table[v].find(m);
                os << ',' << (it == table[v].end() ? "" : it->second);
            }
            os << '\n';
        }
        write_file_atomic(out.string(), os.str());
    } else {
        throw Error(ErrorKind::configuration,
                    "unknown plot kind '" + kind + "' (section-scatter, lyapunov-history, sweep-curve)");
    }
    return out.string();
}

} // namespace nearint
