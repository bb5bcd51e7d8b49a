#ifndef OTSEP_LP_HPP
#define OTSEP_LP_HPP

#include <Eigen/Dense>
#include <vector>

namespace otsep {

struct LpResult {
    Eigen::VectorXd x;
    double objective = 0.0;
};

// min c'x  s.t.  Ax = b, x >= 0, solved with a dense two-phase primal
// simplex using Bland's rule. Intended for the small per-frequency
// transport programs; throws on infeasible or unbounded problems.
LpResult solve_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  const Eigen::VectorXd& c);

// Exact solve of one frequency's coupled transport program:
//   min sum_{k,l} <costs[k][l], M[k][l]>
//   s.t. shared row marginals across l per source,
//        sum_k row marginals      = a       (reference receiver),
//        sum_k column marginals   = b[l]    (receiver l+1),
//        all plans nonnegative.
// costs are indexed [k * (L-1) + l]; all plans are T x T.
struct CoupledPlans {
    std::vector<Eigen::MatrixXd> plans;  // k * (L-1) + l
    double objective = 0.0;
};
CoupledPlans solve_coupled_transport(const std::vector<Eigen::MatrixXd>& costs,
                                     const Eigen::VectorXd& a,
                                     const std::vector<Eigen::VectorXd>& b,
                                     int num_sources);

}  // namespace otsep

#endif
