#include "otsep/lp.hpp"

#include <cmath>
#include <stdexcept>

namespace otsep {

namespace {

constexpr double kPivotTol = 1e-11;

struct Tableau {
    Eigen::MatrixXd body;  // m x n
    Eigen::VectorXd rhs;   // m
    Eigen::VectorXd red;   // reduced costs, n
    double objval = 0.0;
    std::vector<int> basis;

    int rows() const { return static_cast<int>(body.rows()); }
    int cols() const { return static_cast<int>(body.cols()); }

    void pivot(int row, int col) {
        const double p = body(row, col);
        body.row(row) /= p;
        rhs(row) /= p;
        for (int i = 0; i < rows(); ++i) {
            if (i == row) continue;
            const double f = body(i, col);
            if (f == 0.0) continue;
            body.row(i) -= f * body.row(row);
            rhs(i) -= f * rhs(row);
        }
        const double f = red(col);
        if (f != 0.0) {
            red -= f * body.row(row).transpose();
            objval -= f * rhs(row);
        }
        basis[row] = col;
    }

    // Bland's rule; `allowed` masks out retired artificial columns.
    // Returns false when no reduced cost is negative (optimal).
    bool step(const std::vector<bool>& allowed) {
        int enter = -1;
        for (int j = 0; j < cols(); ++j) {
            if (allowed[j] && red(j) < -kPivotTol) {
                enter = j;
                break;
            }
        }
        if (enter < 0) return false;
        int leave = -1;
        double best = 0.0;
        for (int i = 0; i < rows(); ++i) {
            if (body(i, enter) > kPivotTol) {
                const double ratio = rhs(i) / body(i, enter);
                if (leave < 0 || ratio < best - kPivotTol ||
                    (ratio < best + kPivotTol && basis[i] < basis[leave])) {
                    leave = i;
                    best = ratio;
                }
            }
        }
        if (leave < 0) throw std::runtime_error("lp solve: unbounded problem");
        pivot(leave, enter);
        return true;
    }
};

}  // namespace

LpResult solve_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  const Eigen::VectorXd& c) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    if (b.size() != m || c.size() != n)
        throw std::invalid_argument("lp solve: shape mismatch");

    Tableau t;
    t.body.resize(m, n + m);
    t.rhs.resize(m);
    t.basis.resize(m);
    for (int i = 0; i < m; ++i) {
        const double s = b(i) < 0.0 ? -1.0 : 1.0;
        t.body.row(i).head(n) = s * A.row(i);
        t.body.row(i).tail(m).setZero();
        t.body(i, n + i) = 1.0;
        t.rhs(i) = s * b(i);
        t.basis[i] = n + i;
    }

    // Phase 1: minimize the sum of artificials.
    t.red.setZero(n + m);
    for (int j = 0; j < n; ++j) t.red(j) = -t.body.col(j).sum();
    t.objval = t.rhs.sum();
    std::vector<bool> allowed(n + m, true);
    const long max_iters = 2000L * (n + m + 1);
    long iters = 0;
    while (t.step(allowed))
        if (++iters > max_iters) throw std::runtime_error("lp solve: phase 1 stalled");
    if (t.objval > 1e-7 * std::max(1.0, t.rhs.cwiseAbs().maxCoeff() + 1.0) &&
        t.objval > 1e-7)
        throw std::runtime_error("lp solve: infeasible constraints");

    // Drive any remaining artificials out of the basis; a row with no
    // eligible pivot is a redundant constraint and stays harmless.
    for (int i = 0; i < m; ++i) {
        if (t.basis[i] < n) continue;
        for (int j = 0; j < n; ++j) {
            if (std::abs(t.body(i, j)) > kPivotTol) {
                t.pivot(i, j);
                break;
            }
        }
    }
    for (int j = n; j < n + m; ++j) allowed[j] = false;

    // Phase 2: recompute reduced costs for the real objective.
    t.red.setZero(n + m);
    t.objval = 0.0;
    for (int j = 0; j < n; ++j) t.red(j) = c(j);
    for (int i = 0; i < m; ++i) {
        if (t.basis[i] >= n) continue;
        const double cb = c(t.basis[i]);
        if (cb == 0.0) continue;
        t.red.head(n) -= cb * t.body.row(i).head(n).transpose();
        t.objval += cb * t.rhs(i);
    }
    iters = 0;
    while (t.step(allowed))
        if (++iters > max_iters) throw std::runtime_error("lp solve: phase 2 stalled");

    LpResult res;
    res.x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i)
        if (t.basis[i] < n) res.x(t.basis[i]) = std::max(0.0, t.rhs(i));
    res.objective = c.dot(res.x);
    return res;
}

CoupledPlans solve_coupled_transport(const std::vector<Eigen::MatrixXd>& costs,
                                     const Eigen::VectorXd& a,
                                     const std::vector<Eigen::VectorXd>& b,
                                     int num_sources) {
    const int K = num_sources;
    const int Lm1 = static_cast<int>(b.size());
    const int T = static_cast<int>(a.size());
    if (K < 1 || Lm1 < 1) throw std::invalid_argument("coupled lp: empty problem");
    if (static_cast<int>(costs.size()) != K * Lm1)
        throw std::invalid_argument("coupled lp: cost count mismatch");

    const double mass = a.sum();
    CoupledPlans out;
    out.plans.assign(K * Lm1, Eigen::MatrixXd::Zero(T, T));
    if (mass <= 0.0) return out;
    for (const Eigen::VectorXd& bl : b)
        if (std::abs(bl.sum() - mass) > 1e-9 * mass)
            throw std::invalid_argument("coupled lp: unbalanced marginals");

    // Variable layout: x[((k*Lm1 + l)*T + i)*T + j] = M[k][l](i, j).
    const int nvar = K * Lm1 * T * T;
    auto idx = [&](int k, int l, int i, int j) {
        return ((k * Lm1 + l) * T + i) * T + j;
    };

    const int nrow = T + Lm1 * T + K * (Lm1 - 1) * T;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nrow, nvar);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nrow);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(nvar);

    for (int k = 0; k < K; ++k)
        for (int l = 0; l < Lm1; ++l)
            for (int i = 0; i < T; ++i)
                for (int j = 0; j < T; ++j)
                    c(idx(k, l, i, j)) = costs[k * Lm1 + l](i, j);

    int row = 0;
    // sum_k (row sums of anchor plan) = a
    for (int i = 0; i < T; ++i, ++row) {
        for (int k = 0; k < K; ++k)
            for (int j = 0; j < T; ++j) A(row, idx(k, 0, i, j)) = 1.0;
        rhs(row) = a(i) / mass;
    }
    // sum_k (column sums of plan l) = b[l]
    for (int l = 0; l < Lm1; ++l)
        for (int j = 0; j < T; ++j, ++row) {
            for (int k = 0; k < K; ++k)
                for (int i = 0; i < T; ++i) A(row, idx(k, l, i, j)) = 1.0;
            rhs(row) = b[l](j) / mass;
        }
    // row sums equal across receivers within each source
    for (int k = 0; k < K; ++k)
        for (int l = 1; l < Lm1; ++l)
            for (int i = 0; i < T; ++i, ++row)
                for (int j = 0; j < T; ++j) {
                    A(row, idx(k, l, i, j)) = 1.0;
                    A(row, idx(k, 0, i, j)) = -1.0;
                }

    const LpResult lp = solve_lp(A, rhs, c);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < Lm1; ++l)
            for (int i = 0; i < T; ++i)
                for (int j = 0; j < T; ++j)
                    out.plans[k * Lm1 + l](i, j) = mass * lp.x(idx(k, l, i, j));
    out.objective = mass * lp.objective;
    return out;
}

}  // namespace otsep
