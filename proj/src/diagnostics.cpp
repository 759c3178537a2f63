#include "nearint/diagnostics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

namespace nearint {

namespace {

std::string num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Modified Gram-Schmidt in place; returns the diagonal of R.
Vec orthonormalize(Mat& m)
{
    const auto d = m.cols();
    Vec r(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index j = 0; j < k; ++j)
            m.col(k) -= m.col(j).dot(m.col(k)) * m.col(j);
        r[k] = m.col(k).norm();
        m.col(k) /= r[k];
    }
    return r;
}

// Bump weights exp(-1/(t(1-t))) at window midpoints.
std::vector<double> birkhoff_weights(long n)
{
    std::vector<double> w(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (long k = 0; k < n; ++k) {
        const double t = (k + 0.5) / static_cast<double>(n);
        w[static_cast<std::size_t>(k)] = std::exp(-1.0 / (t * (1.0 - t)));
        sum += w[static_cast<std::size_t>(k)];
    }
    for (auto& x : w)
        x /= sum;
    return w;
}

} // namespace

double symplecticity_defect(const Mat& m, const Mat& j)
{
    if (m.rows() != m.cols() || j.rows() != j.cols() || m.rows() != j.rows() || m.rows() % 2 != 0) {
        std::ostringstream os;
        os << "symplecticity defect needs square matrices of equal even size (got " << m.rows() << "x"
           << m.cols() << " and " << j.rows() << "x" << j.cols() << ")";
        throw Error(ErrorKind::dimension_mismatch, os.str());
    }
    return (m.transpose() * j * m - j).cwiseAbs().maxCoeff();
}

TangentStep perturbed_return_step(const IntegrableHamiltonian& sys, const SectionPerturbation& psi)
{
    return [&sys, &psi](SectionPoint& x, Mat& jac) {
        x = perturbed_return(sys, psi, x, jac);
        return true;
    };
}

LyapunovReport lyapunov_spectrum(const TangentStep& step, const SectionPoint& x0,
                                 const LyapunovSettings& cfg, std::uint64_t seed,
                                 const IntegrableHamiltonian* sys)
{
    LyapunovReport rep;
    rep.initial = x0;
    const int d = 2 * (x0.dimension() - 1);
    Rng rng(seed);
    Mat frame(d, d);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k)
            frame(i, k) = rng.uniform(-1.0, 1.0);
    orthonormalize(frame);

    Vec sums = Vec::Zero(d);
    SectionPoint x = x0;
    Mat jac;
    double tsum = 0.0;
    const int every = std::max(1, cfg.reorthonormalize);
    long k = 0;
    try {
        for (; k < cfg.iterations; ++k) {
            if (sys)
                tsum += return_time(*sys, x);
            if (!step(x, jac)) {
                rep.truncated = true;
                rep.reason = "orbit left the working chart";
                break;
            }
            frame = jac * frame;
            if ((k + 1) % every == 0 || k + 1 == cfg.iterations) {
                const Vec r = orthonormalize(frame);
                for (int i = 0; i < d; ++i)
                    sums[i] += std::log(r[i]);
            }
            if (cfg.history_every > 0 && (k + 1) % cfg.history_every == 0) {
                rep.history_iter.push_back(k + 1);
                rep.history.push_back(sums[0] / static_cast<double>(k + 1));
            }
        }
    } catch (const Error& e) {
        rep.truncated = true;
        rep.reason = e.what();
    }
    rep.iterations = k;
    rep.exponents.assign(static_cast<std::size_t>(d), 0.0);
    if (k > 0) {
        for (int i = 0; i < d; ++i)
            rep.exponents[static_cast<std::size_t>(i)] = sums[i] / static_cast<double>(k);
        rep.mean_return_time = tsum / static_cast<double>(k);
    }
    std::sort(rep.exponents.begin(), rep.exponents.end(), std::greater<>());
    return rep;
}

EntropyEstimate aggregate_entropy(std::vector<EntropySample> rows, const std::vector<double>& level_h,
                                  const std::vector<double>& level_weight, const EntropySettings& cfg)
{
    EntropyEstimate est;
    est.samples = rows.size();
    est.threshold = cfg.threshold;
    est.seed = cfg.seed;
    est.level_h = level_h;
    est.level_weight = level_weight;
    const std::size_t levels = level_h.size();
    std::vector<std::size_t> per_level(levels, 0);
    for (const auto& r : rows)
        ++per_level[static_cast<std::size_t>(r.level)];
    std::vector<double> wt(rows.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto l = static_cast<std::size_t>(rows[i].level);
        wt[i] = level_weight[l] / static_cast<double>(per_level[l]);
        est.truncated += rows[i].truncated ? 1 : 0;
    }
    auto lambda1 = [](const EntropySample& r) { return r.exponents.empty() ? 0.0 : r.exponents[0]; };
    auto positive_sum = [](const EntropySample& r) {
        double s = 0.0;
        for (double l : r.exponents)
            s += std::max(l, 0.0);
        return s;
    };

    double chaotic_w = 0.0, pos_w = 0.0, maxl = 0.0, tr = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double l1 = lambda1(rows[i]);
        if (l1 > cfg.threshold) {
            chaotic_w += wt[i];
            pos_w += wt[i] * positive_sum(rows[i]);
        }
        maxl += wt[i] * std::max(l1, 0.0);
        tr += wt[i] * rows[i].return_time;
    }
    est.chaotic_fraction = chaotic_w;
    est.mean_positive_sum = chaotic_w > 0.0 ? pos_w / chaotic_w : 0.0;
    est.mean_max_lambda = maxl;
    est.map_proxy = est.chaotic_fraction * est.mean_positive_sum;
    est.mean_return_time = tr;
    est.flow_proxy = tr > 0.0 ? est.map_proxy / tr : 0.0;

    for (double t : cfg.threshold_table) {
        double f = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (lambda1(rows[i]) > t)
                f += wt[i];
        est.threshold_table.emplace_back(t, f);
    }

    // stratified bootstrap of the weighted chaotic fraction
    if (cfg.bootstrap > 0 && !rows.empty()) {
        std::vector<std::vector<std::size_t>> members(levels);
        for (std::size_t i = 0; i < rows.size(); ++i)
            members[static_cast<std::size_t>(rows[i].level)].push_back(i);
        Rng rng(sub_seed(cfg.seed, 0xb0075ULL));
        std::vector<double> fr(static_cast<std::size_t>(cfg.bootstrap));
        for (auto& f : fr) {
            f = 0.0;
            for (std::size_t l = 0; l < levels; ++l) {
                const auto& mem = members[l];
                if (mem.empty())
                    continue;
                std::size_t hits = 0;
                for (std::size_t k = 0; k < mem.size(); ++k) {
                    const auto pick = mem[static_cast<std::size_t>(rng.uniform() * mem.size()) % mem.size()];
                    hits += lambda1(rows[pick]) > cfg.threshold ? 1 : 0;
                }
                f += level_weight[l] * static_cast<double>(hits) / static_cast<double>(mem.size());
            }
        }
        std::sort(fr.begin(), fr.end());
        const auto at = [&](double q) {
            const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(fr.size() - 1)));
            return fr[idx];
        };
        est.fraction_lo = at(0.025);
        est.fraction_hi = at(0.975);
    }
    est.rows = std::move(rows);
    return est;
}

EntropyEstimate entropy_estimate(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                                 const EntropySettings& cfg)
{
    if (cfg.levels < 1 || cfg.samples == 0 || cfg.iterations < 1)
        throw Error(ErrorKind::configuration, "entropy: levels, samples and iterations must be positive");
    const int n = sys.dimension();
    std::vector<double> level_h, level_w;
    if (cfg.levels == 1 || cfg.level_halfwidth == 0.0) {
        level_h = {cfg.level_center};
        level_w = {1.0};
    } else {
        const BumpProfile bump(cfg.level_center, cfg.level_halfwidth);
        for (int k = 0; k < cfg.levels; ++k) {
            const double h = cfg.level_center - cfg.level_halfwidth +
                             cfg.level_halfwidth * (2.0 * k + 1.0) / cfg.levels;
            level_h.push_back(h);
            level_w.push_back(cfg.level_sampling == LevelSampling::bump ? bump(h) : 1.0);
        }
        const double tot = std::accumulate(level_w.begin(), level_w.end(), 0.0);
        for (auto& w : level_w)
            w /= tot;
    }
    const auto levels = static_cast<int>(level_h.size());
    const Vec& ps = psi.p_star();
    std::vector<EntropySample> rows(cfg.samples);
    LyapunovSettings ls;
    ls.iterations = cfg.iterations;
    ls.history_every = cfg.history_every;
    const TangentStep step = perturbed_return_step(sys, psi);

    parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
        EntropySample& row = rows[i];
        row.id = i;
        row.level = static_cast<int>(i % static_cast<std::size_t>(levels));
        row.h = level_h[static_cast<std::size_t>(row.level)];
        Rng rng(sub_seed(cfg.seed, i));
        const Vec2 z = rng.in_disk(cfg.disk_center[0], cfg.disk_center[1], cfg.disk_radius);
        row.q1 = z[0];
        row.p1 = z[1];
        Vec qb = Vec::Zero(n - 1);
        qb[0] = wrap_unit(z[0]);
        Vec p = ps;
        p[0] = z[1];
        try {
            p[n - 1] = solve_level(sys, row.h, p.head(n - 1), ps[n - 1], psi.settings());
        } catch (const Error&) {
            row.truncated = true;
            row.exponents.assign(static_cast<std::size_t>(2 * n - 2), 0.0);
            return;
        }
        const LyapunovReport rep =
            lyapunov_spectrum(step, SectionPoint(qb, p), ls, sub_seed(cfg.seed ^ 0x1f2e3d4cULL, i), &sys);
        row.exponents = rep.exponents;
        row.return_time = rep.mean_return_time;
        row.truncated = rep.truncated;
    });
    return aggregate_entropy(std::move(rows), level_h, level_w, cfg);
}

std::vector<SectionPoint> frequency_line(const IntegrableHamiltonian& sys, const Vec& p_star,
                                         double p1_lo, double p1_hi, int count, double h, double q0)
{
    const int n = sys.dimension();
    std::vector<SectionPoint> out;
    for (int k = 0; k < count; ++k) {
        Vec p = p_star;
        p[0] = count == 1 ? p1_lo : p1_lo + (p1_hi - p1_lo) * k / (count - 1);
        p[n - 1] = solve_level(sys, h, p.head(n - 1), p_star[n - 1]);
        Vec qb = Vec::Constant(n - 1, wrap_unit(q0));
        out.emplace_back(qb, p);
    }
    return out;
}

FrequencyScan frequency_scan(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                             const std::vector<SectionPoint>& initial, long iterations, double tol,
                             int workers)
{
    if (iterations < 2)
        throw Error(ErrorKind::configuration, "frequency scan needs at least two iterations");
    FrequencyScan scan;
    scan.iterations = iterations;
    scan.rows.resize(initial.size());
    const long half = iterations / 2;
    const auto w_full = birkhoff_weights(iterations);
    const auto w_a = birkhoff_weights(half);
    const auto w_b = birkhoff_weights(iterations - half);
    parallel_for(initial.size(), workers, [&](std::size_t i) {
        FrequencyRow& row = scan.rows[i];
        row.initial = initial[i];
        const auto m = static_cast<std::size_t>(initial[i].dimension() - 1);
        std::vector<double> full(m, 0.0), a(m, 0.0), b(m, 0.0);
        SectionPoint x = initial[i];
        for (long k = 0; k < iterations; ++k) {
            const SectionPoint mid = psi.apply(sys, x);
            const Vec shift = return_shift(sys, mid.p, psi.settings());
            for (std::size_t j = 0; j < m; ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                const double inc = wrap_centered(mid.q_bar[jj] - x.q_bar[jj]) + shift[jj];
                full[j] += w_full[static_cast<std::size_t>(k)] * inc;
                if (k < half)
                    a[j] += w_a[static_cast<std::size_t>(k)] * inc;
                else
                    b[j] += w_b[static_cast<std::size_t>(k - half)] * inc;
            }
            x = return_map(sys, mid, psi.settings());
        }
        row.rotation.resize(m);
        row.window_gap = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            row.rotation[j] = wrap_unit(full[j]);
            row.window_gap = std::max(row.window_gap, angle_distance(a[j], b[j]));
        }
        row.converged = row.window_gap < tol;
    });
    return scan;
}

TubeReport tube_confinement(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                            const TubeSettings& cfg)
{
    if (!(cfg.eps > 0.0) || cfg.horizon < 1)
        throw Error(ErrorKind::configuration, "tube: eps and horizon must be positive");
    const int n = sys.dimension();
    const Vec& ps = psi.p_star();
    const double cq = psi.center_q();
    std::vector<double> levels = cfg.levels;
    if (levels.empty())
        levels.push_back(sys.eval(ps));
    TubeReport rep;
    rep.eps = cfg.eps;
    rep.horizon = cfg.horizon;
    rep.samples = cfg.samples;
    rep.max_deviation.assign(cfg.samples, 0.0);
    rep.escape_iterate.assign(cfg.samples, -1);
    parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
        Rng rng(sub_seed(cfg.seed, i));
        const Vec2 z = rng.in_disk(cq, ps[0], cfg.sample_radius);
        const double h = levels[i % levels.size()];
        Vec qb = Vec::Zero(n - 1);
        qb[0] = wrap_unit(z[0]);
        Vec p = ps;
        p[0] = z[1];
        p[n - 1] = solve_level(sys, h, p.head(n - 1), ps[n - 1], psi.settings());
        SectionPoint x(qb, p);
        const Vec base_q = qb;
        auto dist = [&](const SectionPoint& y) {
            double d2 = (y.p - ps).squaredNorm();
            const double a = angle_distance(y.q_bar[0], cq);
            d2 += a * a;
            for (int j = 1; j < n - 1; ++j) {
                const double b = angle_distance(y.q_bar[j], base_q[j]);
                d2 += b * b;
            }
            return std::sqrt(d2);
        };
        double worst = dist(x);
        for (long k = 0; k < cfg.horizon; ++k) {
            x = perturbed_return(sys, psi, x);
            const double d = dist(x);
            worst = std::max(worst, d);
            if (d > cfg.eps && rep.escape_iterate[i] < 0)
                rep.escape_iterate[i] = k + 1;
        }
        rep.max_deviation[i] = worst;
    });
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        rep.escapes += rep.escape_iterate[i] >= 0 ? 1 : 0;
        rep.worst = std::max(rep.worst, rep.max_deviation[i]);
    }
    return rep;
}

std::vector<ScatterRow> section_scatter(const IntegrableHamiltonian& sys, const SectionPerturbation& psi,
                                        const std::vector<SectionPoint>& initial, long iterations)
{
    std::vector<ScatterRow> rows;
    rows.reserve(initial.size() * static_cast<std::size_t>(std::max(iterations, 0L)));
    for (std::size_t i = 0; i < initial.size(); ++i) {
        SectionPoint x = initial[i];
        for (long k = 0; k < iterations; ++k) {
            rows.push_back({i, k, x.q_bar[0], x.p[0], sys.eval(x.p)});
            x = perturbed_return(sys, psi, x);
        }
    }
    return rows;
}

void write_entropy_csv(std::ostream& out, const EntropyEstimate& e)
{
    out << "sample,level,h,q1,p1,lambda1,lambda2,return_time,chaotic,truncated\n";
    for (const auto& r : e.rows) {
        const double l1 = r.exponents.empty() ? 0.0 : r.exponents.front();
        const double l2 = r.exponents.empty() ? 0.0 : r.exponents.back();
        out << r.id << ',' << r.level << ',' << num(r.h) << ',' << num(r.q1) << ',' << num(r.p1) << ','
            << num(l1) << ',' << num(l2) << ',' << num(r.return_time) << ','
            << (l1 > e.threshold ? 1 : 0) << ',' << (r.truncated ? 1 : 0) << '\n';
    }
}

void write_frequency_csv(std::ostream& out, const FrequencyScan& f)
{
    out << "sample,q1,p1,h_index,rotation1,window_gap,converged\n";
    for (std::size_t i = 0; i < f.rows.size(); ++i) {
        const auto& r = f.rows[i];
        out << i << ',' << num(r.initial.q_bar[0]) << ',' << num(r.initial.p[0]) << ',' << 0 << ','
            << num(r.rotation.empty() ? 0.0 : r.rotation[0]) << ',' << num(r.window_gap) << ','
            << (r.converged ? 1 : 0) << '\n';
    }
}

void write_tube_csv(std::ostream& out, const TubeReport& t)
{
    out << "sample,max_deviation,escape_iterate\n";
    for (std::size_t i = 0; i < t.max_deviation.size(); ++i)
        out << i << ',' << num(t.max_deviation[i]) << ',' << t.escape_iterate[i] << '\n';
}

void write_scatter_csv(std::ostream& out, const std::vector<ScatterRow>& rows)
{
    out << "sample,iterate,q1,p1,h\n";
    for (const auto& r : rows)
        out << r.sample << ',' << r.iterate << ',' << num(r.q1) << ',' << num(r.p1) << ',' << num(r.h)
            << '\n';
}

void write_lyapunov_history_csv(std::ostream& out, const std::vector<LyapunovReport>& reps)
{
    out << "sample,iterate,lambda1\n";
    for (std::size_t i = 0; i < reps.size(); ++i)
        for (std::size_t k = 0; k < reps[i].history.size(); ++k)
            out << i << ',' << reps[i].history_iter[k] << ',' << num(reps[i].history[k]) << '\n';
}

} // namespace nearint
