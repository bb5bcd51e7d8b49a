#include "otsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace otsep {

namespace {

// Minimizes total_cost(e -> perm[e]) over bijections by exhaustive search.
Permutation best_permutation(int K, const Eigen::MatrixXd& cost) {
    if (K > 8) throw std::invalid_argument("permutation search too large");
    Permutation perm(K), best(K);
    std::iota(perm.begin(), perm.end(), 0);
    best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (int e = 0; e < K; ++e) c += cost(e, perm[e]);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

Permutation align_permutation(const std::vector<PowerSpectrogram>& true_specs,
                              const std::vector<PowerSpectrogram>& est_specs) {
    const int K = static_cast<int>(true_specs.size());
    if (static_cast<int>(est_specs.size()) != K)
        throw std::invalid_argument("source count mismatch");
    Eigen::MatrixXd cost(K, K);
    for (int e = 0; e < K; ++e)
        for (int t = 0; t < K; ++t) {
            const double denom = true_specs[t].mass.squaredNorm();
            if (!(denom > 0.0))
                throw std::invalid_argument("true source spectrogram has zero norm");
            cost(e, t) = (true_specs[t].mass - est_specs[e].mass).squaredNorm() / denom;
        }
    return best_permutation(K, cost);
}

Permutation align_permutation_delays(const DelayMatrix& true_delays,
                                     const DelayMatrix& est_delays) {
    const int K = true_delays.sources();
    if (est_delays.sources() != K ||
        est_delays.receivers() != true_delays.receivers())
        throw std::invalid_argument("delay matrix shape mismatch");
    Eigen::MatrixXd cost(K, K);
    for (int e = 0; e < K; ++e)
        for (int t = 0; t < K; ++t) {
            double c = 0.0;
            for (int l = 1; l < true_delays.receivers(); ++l) {
                const double d = est_delays.at(e, l) - true_delays.at(t, l);
                c += d * d;
            }
            cost(e, t) = c;
        }
    return best_permutation(K, cost);
}

double tdoa_rmse(const DelayMatrix& true_delays, const DelayMatrix& est_delays,
                 const Permutation& perm) {
    const int K = true_delays.sources();
    const int L = true_delays.receivers();
    if (est_delays.sources() != K || est_delays.receivers() != L)
        throw std::invalid_argument("delay matrix shape mismatch");
    if (static_cast<int>(perm.size()) != K)
        throw std::invalid_argument("permutation size mismatch");
    double acc = 0.0;
    int count = 0;
    for (int e = 0; e < K; ++e)
        for (int l = 1; l < L; ++l) {
            const double d = est_delays.at(e, l) - true_delays.at(perm[e], l);
            acc += d * d;
            ++count;
        }
    return std::sqrt(acc / count);
}

double spectrogram_error(const std::vector<PowerSpectrogram>& true_specs,
                         const std::vector<PowerSpectrogram>& est_specs,
                         const Permutation& perm) {
    const int K = static_cast<int>(true_specs.size());
    if (static_cast<int>(est_specs.size()) != K ||
        static_cast<int>(perm.size()) != K)
        throw std::invalid_argument("source count mismatch");
    double acc = 0.0;
    for (int e = 0; e < K; ++e) {
        const Eigen::MatrixXd& st = true_specs[perm[e]].mass;
        const Eigen::MatrixXd& se = est_specs[e].mass;
        if (st.rows() != se.rows() || st.cols() != se.cols())
            throw std::invalid_argument("spectrogram shape mismatch");
        const double denom = st.squaredNorm();
        if (!(denom > 0.0))
            throw std::invalid_argument("true source spectrogram has zero norm");
        acc += (st - se).squaredNorm() / denom;
    }
    return acc / K;
}

double delta_sdr(const std::vector<TimeSignal>& true_sources,
                 const std::vector<TimeSignal>& est_sources,
                 const TimeSignal& mixture, const Permutation& perm) {
    const int K = static_cast<int>(true_sources.size());
    if (static_cast<int>(est_sources.size()) != K ||
        static_cast<int>(perm.size()) != K)
        throw std::invalid_argument("source count mismatch");
    double acc = 0.0;
    for (int e = 0; e < K; ++e) {
        const TimeSignal& s = true_sources[perm[e]];
        const TimeSignal& sh = est_sources[e];
        if (s.samples.size() != sh.samples.size() ||
            s.samples.size() != mixture.samples.size())
            throw std::invalid_argument("signal length mismatch");
        double mse_est = 0.0, mse_mix = 0.0;
        for (size_t i = 0; i < s.samples.size(); ++i) {
            const double de = sh.samples[i] - s.samples[i];
            const double dm = mixture.samples[i] - s.samples[i];
            mse_est += de * de;
            mse_mix += dm * dm;
        }
        if (mse_est == 0.0) return std::numeric_limits<double>::infinity();
        acc += 10.0 * std::log10(mse_mix / mse_est);
    }
    return acc / K;
}

}  // namespace otsep
