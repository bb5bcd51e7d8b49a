#ifndef OTSEP_METRICS_HPP
#define OTSEP_METRICS_HPP

#include "otsep/delays.hpp"
#include "otsep/dsp.hpp"

#include <vector>

namespace otsep {

// perm[e] = index of the true source matched to estimate e.
using Permutation = std::vector<int>;

struct EvalReport {
    double tdoa_rmse_s = 0.0;
    double spec_err = 0.0;
    double delta_sdr_db = 0.0;
    Permutation permutation;
};

// Exhaustive search over source orderings minimizing the total normalized
// spectrogram error. Unordered separation outputs are aligned with this
// before any metric is computed. Throws for more than 8 sources.
Permutation align_permutation(const std::vector<PowerSpectrogram>& true_specs,
                              const std::vector<PowerSpectrogram>& est_specs);

// Same search on squared delay errors, for delay-only estimators.
Permutation align_permutation_delays(const DelayMatrix& true_delays,
                                     const DelayMatrix& est_delays);

// sqrt of the mean squared delay error over sources and receivers >= 1,
// after applying the permutation.
double tdoa_rmse(const DelayMatrix& true_delays, const DelayMatrix& est_delays,
                 const Permutation& perm);

// Mean over sources of ||S_true - S_est||_F^2 / ||S_true||_F^2.
// Throws when a true source has zero norm.
double spectrogram_error(const std::vector<PowerSpectrogram>& true_specs,
                         const std::vector<PowerSpectrogram>& est_specs,
                         const Permutation& perm);

// Mean over sources of the SDR improvement of the estimates over the
// reference mixture: 10*log10(mse(s, mix) / mse(s, s_hat)). Zero estimate
// distortion yields +inf.
double delta_sdr(const std::vector<TimeSignal>& true_sources,
                 const std::vector<TimeSignal>& est_sources,
                 const TimeSignal& mixture, const Permutation& perm);

}  // namespace otsep

#endif
