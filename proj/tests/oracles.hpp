// Independent reference implementations used only by tests: a naive DFT,
// a time-domain cross-correlation, and a vertex-enumeration LP solver.
// Deliberately simple and slow; they must not share code with the library.

#ifndef OTSEP_TESTS_ORACLES_HPP
#define OTSEP_TESTS_ORACLES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

namespace oracles {

// O(N^2) DFT of a real frame.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<std::complex<double>> out(n);
    for (int k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * i / n);
        out[k] = acc;
    }
    return out;
}

// argmax over integer lags of sum_i x[i] * y[i + lag], lags in [-max, max].
inline int xcorr_peak_lag(const std::vector<double>& x,
                          const std::vector<double>& y, int max_lag) {
    const int n = static_cast<int>(x.size());
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const int j = i + lag;
            if (j >= 0 && j < n) acc += x[i] * y[j];
        }
        if (acc > best_val) {
            best_val = acc;
            best = lag;
        }
    }
    return best;
}

// Exhaustive minimum of c'x over {x >= 0 : Ax = b} by enumerating basic
// solutions. Exponential; fine for the tiny transport polytopes in tests.
inline double brute_force_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                             const Eigen::VectorXd& c) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    const int rank = Eigen::FullPivLU<Eigen::MatrixXd>(A).rank();
    double best = std::numeric_limits<double>::infinity();

    std::vector<int> pick(rank);
    std::vector<int> stack;
    stack.reserve(rank);

    // iterative combination enumeration
    std::vector<int> idx(rank);
    for (int i = 0; i < rank; ++i) idx[i] = i;
    while (true) {
        Eigen::MatrixXd As(m, rank);
        for (int i = 0; i < rank; ++i) As.col(i) = A.col(idx[i]);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(As);
        if (lu.rank() == rank) {
            const Eigen::VectorXd xs = lu.solve(b);
            if ((As * xs - b).norm() <= 1e-8 && (xs.array() >= -1e-9).all()) {
                double obj = 0.0;
                for (int i = 0; i < rank; ++i) obj += c(idx[i]) * std::max(0.0, xs(i));
                best = std::min(best, obj);
            }
        }
        int i = rank - 1;
        while (i >= 0 && idx[i] == n - rank + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < rank; ++j) idx[j] = idx[j - 1] + 1;
    }
    return best;
}

// Exact optimum of the single-plan transportation problem min <C, M>
// s.t. M 1 = a, M' 1 = b, M >= 0, via brute_force_lp.
inline double brute_force_transport(const Eigen::VectorXd& a,
                                    const Eigen::VectorXd& b,
                                    const Eigen::MatrixXd& C) {
    const int T = static_cast<int>(a.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * T, T * T);
    Eigen::VectorXd rhs(2 * T);
    Eigen::VectorXd c(T * T);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            A(i, i * T + j) = 1.0;
            A(T + j, i * T + j) = 1.0;
            c(i * T + j) = C(i, j);
        }
    rhs.head(T) = a;
    rhs.tail(T) = b;
    return brute_force_lp(A, rhs, c);
}

}  // namespace oracles

#endif
