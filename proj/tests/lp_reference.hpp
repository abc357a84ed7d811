#ifndef MVB_TESTS_LP_REFERENCE_HPP
#define MVB_TESTS_LP_REFERENCE_HPP

#include "mvb/trans_bounds.hpp"

#include <algorithm>
#include <vector>

namespace mvb::testing {

// Greedy LP over the strictly positive levels plus the free mass at vote 0.
// A zero budget admits gamma = 0 with an empty interval, which gives 0.
inline double lp_reference(const VoteLevelProfile& p, Eigen::Index i) {
  if (p.gibbs_budget(i) <= 0.0) return 0.0;
  double zero_mass = 0.0;
  std::vector<double> levels, caps;
  for (Eigen::Index t = 0; t < p.levels.size(); ++t) {
    if (p.levels(t) > 0.0) {
      levels.push_back(p.levels(t));
      caps.push_back(p.caps(t, i));
    } else {
      zero_mass += p.caps(t, i);
    }
  }
  const Eigen::Map<Eigen::VectorXd> lv(levels.data(), static_cast<Eigen::Index>(levels.size()));
  const Eigen::Map<Eigen::VectorXd> cv(caps.data(), static_cast<Eigen::Index>(caps.size()));
  return std::min(1.0, zero_mass + lp_oracle_bound(lv, cv, 0, p.gibbs_budget(i)));
}

}  // namespace mvb::testing

#endif  // MVB_TESTS_LP_REFERENCE_HPP
