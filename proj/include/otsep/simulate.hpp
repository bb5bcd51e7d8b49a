#ifndef OTSEP_SIMULATE_HPP
#define OTSEP_SIMULATE_HPP

#include "otsep/delays.hpp"
#include "otsep/dsp.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace otsep {

// Full description of one synthetic multichannel recording.
struct Scenario {
    std::vector<TimeSignal> sources;  // shared sample rate; length <= duration
    DelayMatrix true_delays;          // seconds
    double snr_db = 20.0;             // per receiver, against the clean mixture
    bool noiseless = false;           // explicit no-noise switch
    StftConfig stft;
    double duration = 2.0;  // seconds; sources are zero-padded up to this
    std::uint64_t seed = 0;
};

struct MixtureData {
    std::vector<TimeSignal> receiver_signals;        // noisy, length = duration
    std::vector<ComplexSpectrogram> receiver_cplx;   // STFTs of the above
    std::vector<PowerSpectrogram> receiver_specs;    // power of the above
    std::vector<TimeSignal> padded_sources;          // clean, undelayed
    std::vector<PowerSpectrogram> source_specs_ref;  // ground truth at receiver 0
    Scenario scenario;
};

// Builds receiver signals as the sum over sources of fractionally delayed
// copies plus white Gaussian noise scaled to snr_db per receiver, then
// derives all spectrograms. Deterministic given the scenario seed.
// Throws if a delay pushes a source's support outside [0, duration).
MixtureData simulate(const Scenario& scenario);

// 10*log10(sum clean^2 / sum (noisy-clean)^2); +inf when noisy == clean.
double snr_of(const TimeSignal& clean, const TimeSignal& noisy);

// Places a shorter signal centered inside a zero signal of the given
// duration. Used to keep delayed copies inside the analysis span.
TimeSignal place_centered(const TimeSignal& sig, double duration);

// Deterministic voice-like test source: an amplitude-modulated harmonic
// stack with vibrato and formant-shaped envelope. Stands in for speech in
// experiments; any mono WAV can be used instead.
TimeSignal synth_voice(double f0_hz, double duration, double sample_rate,
                       std::uint64_t seed);

}  // namespace otsep

#endif
