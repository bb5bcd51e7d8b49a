#ifndef OTSEP_BASELINES_HPP
#define OTSEP_BASELINES_HPP

#include "otsep/dsp.hpp"

#include <vector>

namespace otsep {

struct GccConfig {
    double max_delay = 0.1;  // seconds, peak search limit
    int interp_factor = 4;   // correlation upsampling; 1 = integer lags only
};

// Generalized cross-correlation with phase transform. Returns the delay of
// y relative to x in seconds (positive when y lags x). The cross-power
// spectrum is magnitude-normalized with a 1e-12 floor, the correlation is
// upsampled by interp_factor and the peak refined parabolically when
// interp_factor > 1. Throws "degenerate signal" on all-zero input.
double gcc_phat(const TimeSignal& x, const TimeSignal& y, const GccConfig& cfg);

// Top num_peaks correlation peaks separated by at least min_separation
// seconds, in decreasing peak order. Used when several sources share a pair.
std::vector<double> gcc_phat_multi(const TimeSignal& x, const TimeSignal& y,
                                   const GccConfig& cfg, int num_peaks,
                                   double min_separation);

// Advances each receiver by its delay and averages.
TimeSignal delay_and_sum(const std::vector<TimeSignal>& receivers,
                         const std::vector<double>& delays);

}  // namespace otsep

#endif
