#ifndef OTSEP_RECONSTRUCT_HPP
#define OTSEP_RECONSTRUCT_HPP

#include "otsep/delays.hpp"
#include "otsep/dsp.hpp"

#include <Eigen/Dense>
#include <vector>

namespace otsep {

// Per-(source, receiver) power-ratio masks in [0, 1].
struct WienerMaskSet {
    int num_sources = 0;
    int num_receivers = 0;
    std::vector<Eigen::MatrixXd> masks;  // [k * L + l], each T x F

    Eigen::MatrixXd& mask(int k, int l) { return masks[k * num_receivers + l]; }
    const Eigen::MatrixXd& mask(int k, int l) const {
        return masks[k * num_receivers + l];
    }
};

// mask_k^l = shift(S_k, delay l) / (sum_j shift(S_j, delay l) + noise_floor),
// with spectrogram rows shifted by the delay rounded to whole frames and
// zero masks where the denominator vanishes.
WienerMaskSet build_masks(const std::vector<PowerSpectrogram>& est_source_specs,
                          const DelayMatrix& est_delays, double noise_floor);

// Masks each receiver STFT, inverts, advances by the estimated delay and
// averages across receivers; one signal per source, scenario length.
std::vector<TimeSignal> reconstruct_sources(
    const std::vector<ComplexSpectrogram>& receiver_cplx,
    const WienerMaskSet& masks, const DelayMatrix& est_delays);

}  // namespace otsep

#endif
