#include "otsep/reconstruct.hpp"

#include <cmath>
#include <stdexcept>

namespace otsep {

namespace {

// Rows shifted down by r frames (content moves later in time), zero fill.
Eigen::MatrixXd shift_rows(const Eigen::MatrixXd& m, int r) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
    const int T = static_cast<int>(m.rows());
    for (int t = 0; t < T; ++t) {
        const int src = t - r;
        if (src >= 0 && src < T) out.row(t) = m.row(src);
    }
    return out;
}

}  // namespace

WienerMaskSet build_masks(const std::vector<PowerSpectrogram>& est_source_specs,
                          const DelayMatrix& est_delays, double noise_floor) {
    const int K = static_cast<int>(est_source_specs.size());
    if (K < 1) throw std::invalid_argument("no source spectrograms");
    if (est_delays.sources() != K)
        throw std::invalid_argument("delay matrix source count mismatch");
    if (noise_floor < 0.0) throw std::invalid_argument("noise_floor must be >= 0");
    const int L = est_delays.receivers();
    const int T = est_source_specs[0].frames();
    const int F = est_source_specs[0].bins();
    const double spacing = est_source_specs[0].frame_spacing();
    for (const PowerSpectrogram& s : est_source_specs)
        if (s.frames() != T || s.bins() != F)
            throw std::invalid_argument("source spectrograms must share shape");

    WienerMaskSet set;
    set.num_sources = K;
    set.num_receivers = L;
    set.masks.assign(static_cast<size_t>(K) * L, Eigen::MatrixXd::Zero(T, F));

    for (int l = 0; l < L; ++l) {
        std::vector<Eigen::MatrixXd> shifted(K);
        Eigen::MatrixXd denom = Eigen::MatrixXd::Constant(T, F, noise_floor);
        for (int k = 0; k < K; ++k) {
            const int r = static_cast<int>(std::lround(est_delays.at(k, l) / spacing));
            shifted[k] = shift_rows(est_source_specs[k].mass, r);
            denom += shifted[k];
        }
        for (int k = 0; k < K; ++k) {
            Eigen::MatrixXd& m = set.mask(k, l);
            for (int t = 0; t < T; ++t)
                for (int f = 0; f < F; ++f)
                    m(t, f) = denom(t, f) > 0.0 ? shifted[k](t, f) / denom(t, f) : 0.0;
        }
    }
    return set;
}

std::vector<TimeSignal> reconstruct_sources(
    const std::vector<ComplexSpectrogram>& receiver_cplx,
    const WienerMaskSet& masks, const DelayMatrix& est_delays) {
    const int L = static_cast<int>(receiver_cplx.size());
    if (L < 1) throw std::invalid_argument("no receiver spectrograms");
    if (masks.num_receivers != L || est_delays.receivers() != L)
        throw std::invalid_argument("receiver count mismatch");
    const int K = masks.num_sources;

    std::vector<TimeSignal> out;
    out.reserve(K);
    for (int k = 0; k < K; ++k) {
        TimeSignal acc;
        for (int l = 0; l < L; ++l) {
            ComplexSpectrogram masked = receiver_cplx[l];
            masked.values.array() *= masks.mask(k, l).array();
            TimeSignal sig = istft(masked);
            const double tau = est_delays.at(k, l);
            if (tau != 0.0) sig = fractional_delay(sig, -tau);
            if (l == 0) {
                acc = std::move(sig);
            } else {
                if (sig.samples.size() != acc.samples.size())
                    throw std::invalid_argument("receiver spectrogram shape mismatch");
                for (size_t i = 0; i < acc.samples.size(); ++i)
                    acc.samples[i] += sig.samples[i];
            }
        }
        const double scale = 1.0 / L;
        for (double& v : acc.samples) v *= scale;
        out.push_back(std::move(acc));
    }
    return out;
}

}  // namespace otsep
