#include "nearint/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace nearint {

namespace {

[[noreturn]] void bad(const std::string& msg)
{
    throw Error(ErrorKind::configuration, msg);
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep)
        out.emplace_back();
    return out;
}

double to_double(const std::string& key, const std::string& v)
{
    const std::string t = trim(v);
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(x))
        bad(key + ": not a finite number: '" + v + "'");
    return x;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v)
{
    const std::string t = trim(v);
    Int x = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        bad(key + ": not an integer: '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v)
{
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on")
        return true;
    if (t == "false" || t == "0" || t == "no" || t == "off")
        return false;
    bad(key + ": not a boolean: '" + v + "'");
}

std::string fmt(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string fmt_list(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + fmt(v[i]);
    return s;
}

std::vector<double> to_list(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    if (trim(v).empty())
        return out;
    for (const auto& part : split(v, ','))
        out.push_back(to_double(key, part));
    return out;
}

struct Field {
    std::string section, key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define NI_DOUBLE(sec, name)                                                                       \
    Field{#sec, #name, [](const ExperimentConfig& c) { return fmt(c.sec.name); },                  \
          [](ExperimentConfig& c, const std::string& v) { c.sec.name = to_double(#sec "." #name, v); }}
#define NI_INT(sec, name)                                                                          \
    Field{#sec, #name, [](const ExperimentConfig& c) { return std::to_string(c.sec.name); },       \
          [](ExperimentConfig& c, const std::string& v) {                                          \
              c.sec.name = to_int<decltype(c.sec.name)>(#sec "." #name, v);                        \
          }}
#define NI_BOOL(sec, name)                                                                         \
    Field{#sec, #name, [](const ExperimentConfig& c) { return std::string(c.sec.name ? "true" : "false"); }, \
          [](ExperimentConfig& c, const std::string& v) { c.sec.name = to_bool(#sec "." #name, v); }}
#define NI_STRING(sec, name)                                                                       \
    Field{#sec, #name, [](const ExperimentConfig& c) { return c.sec.name; },                       \
          [](ExperimentConfig& c, const std::string& v) { c.sec.name = trim(v); }}

const std::vector<Field>& fields()
{
    static const std::vector<Field> table = {
        NI_STRING(run, name),
        NI_INT(run, seed),
        NI_INT(run, workers),
        NI_STRING(run, output_dir),

        NI_BOOL(stages, structure),
        NI_BOOL(stages, realization),
        NI_BOOL(stages, entropy),
        NI_BOOL(stages, frequency),
        NI_BOOL(stages, tube),
        NI_BOOL(stages, scatter),

        NI_STRING(system, kind),
        NI_INT(system, n),
        Field{"system", "coeffs",
              [](const ExperimentConfig& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.system.coeffs.size(); ++i)
                      s += (i ? ";" : "") + fmt_list(c.system.coeffs[i]);
                  return s;
              },
              [](ExperimentConfig& c, const std::string& v) {
                  c.system.coeffs.clear();
                  if (trim(v).empty())
                      return;
                  for (const auto& row : split(v, ';'))
                      c.system.coeffs.push_back(to_list("system.coeffs", row));
              }},
        Field{"system", "p_star", [](const ExperimentConfig& c) { return fmt_list(c.system.p_star); },
              [](ExperimentConfig& c, const std::string& v) { c.system.p_star = to_list("system.p_star", v); }},

        NI_DOUBLE(perturbation, center_q),
        NI_DOUBLE(perturbation, center_p),
        NI_DOUBLE(perturbation, r_supp),
        NI_DOUBLE(perturbation, kick),
        NI_DOUBLE(perturbation, h0),
        NI_DOUBLE(perturbation, delta_h),
        NI_BOOL(perturbation, compensator),

        NI_DOUBLE(realization, eps_u),
        NI_INT(realization, h_grid),
        NI_INT(realization, samples),
        NI_DOUBLE(realization, margin),
        NI_DOUBLE(realization, tolerance),
        NI_INT(realization, localization),
        NI_INT(realization, zone_samples),

        NI_INT(integrator, order),
        NI_DOUBLE(integrator, step),
        NI_DOUBLE(integrator, newton_tol),
        NI_DOUBLE(integrator, crossing_tol),

        NI_DOUBLE(diagnostics, kick),
        NI_BOOL(diagnostics, compensator),
        NI_DOUBLE(diagnostics, r_supp),

        NI_INT(entropy, samples),
        NI_INT(entropy, iterations),
        NI_DOUBLE(entropy, threshold),
        NI_DOUBLE(entropy, disk_radius),
        NI_INT(entropy, levels),
        NI_STRING(entropy, level_sampling),
        NI_DOUBLE(entropy, level_halfwidth),
        NI_INT(entropy, bootstrap),
        NI_DOUBLE(entropy, min_fraction),
        NI_INT(entropy, history_samples),

        NI_DOUBLE(frequency, p1_lo),
        NI_DOUBLE(frequency, p1_hi),
        NI_INT(frequency, count),
        NI_INT(frequency, iterations),
        NI_DOUBLE(frequency, tol),
        NI_DOUBLE(frequency, level),
        NI_DOUBLE(frequency, q0),

        NI_DOUBLE(tube, eps),
        NI_INT(tube, horizon),
        NI_INT(tube, samples),
        NI_DOUBLE(tube, sample_radius),

        NI_INT(scatter, samples),
        NI_INT(scatter, iterations),
        NI_DOUBLE(scatter, radius),
    };
    return table;
}

#undef NI_DOUBLE
#undef NI_INT
#undef NI_BOOL
#undef NI_STRING

const Field& find_field(const std::string& section, const std::string& key)
{
    for (const auto& f : fields())
        if (f.section == section && f.key == key)
            return f;
    bad("unknown config key '" + section + "." + key + "'");
}

void positive(double x, const char* what)
{
    if (!(x > 0.0))
        bad(std::string(what) + " must be positive");
}

} // namespace

void ExperimentConfig::validate() const
{
    if (run.workers < 1)
        bad("run.workers must be at least 1");
    if (run.name.empty() || run.name.find('/') != std::string::npos)
        bad("run.name must be a plain, nonempty file name");
    if (system.kind != "quadratic" && system.kind != "canonical" && system.kind != "polynomial")
        bad("system.kind must be quadratic, canonical or polynomial");
    if (system.n < 2 || system.n > max_dof)
        bad("system.n must lie in [2, " + std::to_string(max_dof) + "]");
    if (static_cast<int>(system.p_star.size()) != system.n)
        bad("system.p_star needs n entries");
    if (system.kind == "polynomial" && static_cast<int>(system.coeffs.size()) != system.n)
        bad("system.coeffs needs one row per degree of freedom");
    positive(perturbation.r_supp, "perturbation.r_supp");
    positive(perturbation.delta_h, "perturbation.delta_h");
    if (perturbation.kick < 0.0 || diagnostics.kick < 0.0)
        bad("kicks must be nonnegative");
    if (perturbation.r_supp >= 0.25 || diagnostics.r_supp >= 0.25)
        bad("template support must stay well inside one angle period (r_supp < 0.25)");
    positive(diagnostics.r_supp, "diagnostics.r_supp");
    positive(realization.eps_u, "realization.eps_u");
    positive(realization.tolerance, "realization.tolerance");
    positive(realization.margin, "realization.margin");
    if (realization.h_grid < 2)
        bad("realization.h_grid must be at least 2");
    if (integrator.order != 2 && integrator.order != 4 && integrator.order != 6)
        bad("integrator.order must be 2, 4 or 6");
    positive(integrator.step, "integrator.step");
    positive(integrator.newton_tol, "integrator.newton_tol");
    positive(integrator.crossing_tol, "integrator.crossing_tol");
    positive(entropy.disk_radius, "entropy.disk_radius");
    if (entropy.level_halfwidth < 0.0)
        bad("entropy.level_halfwidth must be nonnegative");
    if (entropy.level_sampling != "uniform" && entropy.level_sampling != "bump")
        bad("entropy.level_sampling must be uniform or bump");
    if (entropy.levels < 1 || entropy.iterations < 1 || entropy.samples < 1)
        bad("entropy.levels, samples and iterations must be positive");
    if (entropy.min_fraction < 0.0 || entropy.min_fraction > 1.0)
        bad("entropy.min_fraction must lie in [0, 1]");
    if (frequency.count < 1 || frequency.iterations < 2)
        bad("frequency.count and iterations must be positive");
    positive(frequency.tol, "frequency.tol");
    positive(tube.eps, "tube.eps");
    positive(tube.sample_radius, "tube.sample_radius");
    if (tube.horizon < 1 || tube.samples < 1)
        bad("tube.horizon and samples must be positive");
    positive(scatter.radius, "scatter.radius");
}

ExperimentConfig parse_config(const std::string& text)
{
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        bad(std::string("config syntax: ") + e.what());
    }
    ExperimentConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty())
            bad("config entry '" + section + "' outside a section");
        for (const auto& [key, val] : body)
            find_field(section, key).set(cfg, val.data());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        bad("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg)
{
    std::string out, section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            out += (section.empty() ? "" : "\n") + std::string("[") + f.section + "]\n";
            section = f.section;
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

std::string config_hash(const ExperimentConfig& cfg)
{
    const std::string text = serialize_config(cfg);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::numerical, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value)
{
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos)
        bad("sweep axis must look like section.key, got '" + dotted_key + "'");
    find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1)).set(cfg, value);
}

IntegrableHamiltonian build_system(const ExperimentConfig& cfg)
{
    if (cfg.system.kind == "quadratic")
        return IntegrableHamiltonian::quadratic(cfg.system.n);
    if (cfg.system.kind == "canonical")
        return IntegrableHamiltonian::canonical(cfg.system.n);
    return IntegrableHamiltonian::polynomial(cfg.system.coeffs);
}

Vec build_p_star(const ExperimentConfig& cfg)
{
    Vec p(cfg.system.n);
    for (int i = 0; i < cfg.system.n; ++i)
        p[i] = cfg.system.p_star[static_cast<std::size_t>(i)];
    return p;
}

namespace {

SectionPerturbation make_map(const ExperimentConfig& cfg, const IntegrableHamiltonian& sys, double kick,
                             double r_supp, bool compensate)
{
    const Vec ps = build_p_star(cfg);
    const auto& pc = cfg.perturbation;
    const Vec2 c(pc.center_q, pc.center_p);
    const BumpProfile env(pc.h0, pc.delta_h);
    std::optional<DriftCompensator> comp;
    if (compensate)
        comp.emplace(sys, ps, pc.center_q, r_supp, pc.h0);
    return SectionPerturbation(SlicePlaneMap(DiskTemplate::linked_twist(c, r_supp, kick), env, comp), ps);
}

} // namespace

SectionPerturbation build_perturbation(const ExperimentConfig& cfg, const IntegrableHamiltonian& sys)
{
    return make_map(cfg, sys, cfg.perturbation.kick, cfg.perturbation.r_supp, cfg.perturbation.compensator);
}

SectionPerturbation build_diagnostic_perturbation(const ExperimentConfig& cfg,
                                                  const IntegrableHamiltonian& sys)
{
    return make_map(cfg, sys, cfg.diagnostics.kick, cfg.diagnostics.r_supp, cfg.diagnostics.compensator);
}

IntegratorSettings build_integrator(const ExperimentConfig& cfg)
{
    IntegratorSettings s;
    s.order = cfg.integrator.order;
    s.step = cfg.integrator.step;
    s.newton_tol = cfg.integrator.newton_tol;
    s.crossing_tol = cfg.integrator.crossing_tol;
    s.validate();
    return s;
}

RealizationSettings build_realization_settings(const ExperimentConfig& cfg)
{
    RealizationSettings s;
    s.eps_u = cfg.realization.eps_u;
    s.check_levels = cfg.realization.h_grid;
    s.validate();
    return s;
}

} // namespace nearint
