// Small helpers shared by the unit tests.
#ifndef NEARINT_TEST_SUPPORT_HPP
#define NEARINT_TEST_SUPPORT_HPP

#include <initializer_list>

#include "nearint/common.hpp"

namespace nt {

inline nearint::Vec vec(std::initializer_list<double> xs)
{
    nearint::Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs)
        v[i++] = x;
    return v;
}

inline double max_abs(const nearint::Mat& m) { return m.cwiseAbs().maxCoeff(); }

} // namespace nt

#endif
