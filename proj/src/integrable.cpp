#include "nearint/integrable.hpp"

#include <thread>
#include <vector>

namespace nearint {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::transversality: return "transversality";
    case ErrorKind::lift_failure: return "lift_failure";
    case ErrorKind::amplitude_too_large: return "amplitude_too_large";
    case ErrorKind::closedness: return "closedness";
    case ErrorKind::foliation_overlap: return "foliation_overlap";
    case ErrorKind::gluing: return "gluing";
    case ErrorKind::no_crossing: return "no_crossing";
    case ErrorKind::step_size: return "step_size";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::missing_stage: return "missing_stage";
    case ErrorKind::numerical: return "numerical";
    }
    return "unknown";
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index)
{
    Rng mix(seed ^ (0x632be59bd9b4e019ULL * (index + 1)));
    mix.next();
    return mix.next();
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body)
{
    if (workers <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nthreads);
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            try {
                // static striding keeps the work assignment independent of timing
                for (std::size_t i = t; i < count; i += nthreads)
                    body(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

ActionAngleState::ActionAngleState(Vec q_, Vec p_) : q(std::move(q_)), p(std::move(p_))
{
    if (q.size() != p.size())
        throw Error(ErrorKind::dimension_mismatch, "angle and action vectors differ in length");
    if (q.size() < 2)
        throw Error(ErrorKind::dimension_mismatch, "action-angle state needs n >= 2");
    if (q.size() > max_dof)
        throw Error(ErrorKind::dimension_mismatch, "too many degrees of freedom");
    normalize();
}

void ActionAngleState::normalize()
{
    for (Eigen::Index i = 0; i < q.size(); ++i)
        q[i] = wrap_unit(q[i]);
}

IntegrableHamiltonian::IntegrableHamiltonian(std::string name, int n, Scalar eval, Vector grad,
                                             Matrix hess)
    : name_(std::move(name)), n_(n), eval_(std::move(eval)), grad_(std::move(grad)),
      hess_(std::move(hess))
{
    if (n_ < 2 || n_ > max_dof)
        throw Error(ErrorKind::configuration,
                    "integrable system needs 2 <= n <= " + std::to_string(max_dof));
}

IntegrableHamiltonian IntegrableHamiltonian::quadratic(int n)
{
    return IntegrableHamiltonian(
        "quadratic", n, [](const Vec& p) { return 0.5 * p.squaredNorm(); },
        [](const Vec& p) { return Vec(p); },
        [n](const Vec&) { return Mat(Mat::Identity(n, n)); });
}

IntegrableHamiltonian IntegrableHamiltonian::canonical(int n)
{
    return IntegrableHamiltonian(
        "canonical", n, [n](const Vec& p) { return p[n - 1]; },
        [n](const Vec&) {
            Vec g = Vec::Zero(n);
            g[n - 1] = 1.0;
            return g;
        },
        [n](const Vec&) { return Mat(Mat::Zero(n, n)); });
}

IntegrableHamiltonian IntegrableHamiltonian::polynomial(const std::vector<std::vector<double>>& coeffs)
{
    const int n = static_cast<int>(coeffs.size());
    auto c = coeffs;
    auto eval = [c](const Vec& p) {
        double h = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            double pk = 1.0;
            for (double ck : c[i]) {
                pk *= p[i];
                h += ck * pk;
            }
        }
        return h;
    };
    auto grad = [c](const Vec& p) {
        Vec g = Vec::Zero(static_cast<Eigen::Index>(c.size()));
        for (std::size_t i = 0; i < c.size(); ++i) {
            double pk = 1.0; // p^(k)
            for (std::size_t k = 0; k < c[i].size(); ++k) {
                g[i] += static_cast<double>(k + 1) * c[i][k] * pk;
                pk *= p[i];
            }
        }
        return g;
    };
    auto hess = [c](const Vec& p) {
        const auto m = static_cast<Eigen::Index>(c.size());
        Mat h = Mat::Zero(m, m);
        for (std::size_t i = 0; i < c.size(); ++i) {
            double pk = 1.0;
            for (std::size_t k = 1; k < c[i].size(); ++k) {
                h(i, i) += static_cast<double>((k + 1) * k) * c[i][k] * pk;
                pk *= p[i];
            }
        }
        return h;
    };
    return IntegrableHamiltonian("polynomial", n, eval, grad, hess);
}

Vec frequency(const IntegrableHamiltonian& sys, const Vec& p)
{
    return sys.grad(p);
}

ActionAngleState flow_exact(const IntegrableHamiltonian& sys, const ActionAngleState& s, double t)
{
    ActionAngleState out = s;
    out.q = s.q + t * sys.grad(s.p);
    out.normalize();
    return out;
}

double kam_nondegeneracy(const IntegrableHamiltonian& sys, const Vec& p)
{
    return sys.hess(p).determinant();
}

std::optional<double> periodic_torus_check(const IntegrableHamiltonian& sys, const Vec& p_star,
                                           double tol_rat)
{
    const Vec w = sys.grad(p_star);
    if (w.cwiseAbs().maxCoeff() == 0.0)
        throw Error(ErrorKind::transversality, "zero frequency vector: the flow vanishes on the torus");
    const auto n = w.size();
    for (Eigen::Index i = 0; i + 1 < n; ++i)
        if (std::abs(w[i]) >= tol_rat)
            return std::nullopt;
    if (w[n - 1] == 0.0)
        return std::nullopt;
    return 1.0 / std::abs(w[n - 1]);
}

LiouvilleTorus make_torus(const IntegrableHamiltonian& sys, const Vec& p_star, double tol_rat)
{
    return LiouvilleTorus{p_star, periodic_torus_check(sys, p_star, tol_rat)};
}

} // namespace nearint
