#include "otsep/simulate.hpp"

#include "otsep/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace otsep {

namespace {

// Nonzero support [first, last] of a signal, or {-1, -1} if silent.
std::pair<int, int> support(const std::vector<double>& x) {
    int first = -1, last = -1;
    for (int i = 0; i < static_cast<int>(x.size()); ++i) {
        if (x[i] != 0.0) {
            if (first < 0) first = i;
            last = i;
        }
    }
    return {first, last};
}

}  // namespace

MixtureData simulate(const Scenario& scenario) {
    const int K = static_cast<int>(scenario.sources.size());
    if (K < 1) throw std::invalid_argument("scenario needs at least one source");
    const int L = scenario.true_delays.receivers();
    if (L < 2) throw std::invalid_argument("scenario needs at least two receivers");
    if (scenario.true_delays.sources() != K)
        throw std::invalid_argument("delay matrix source count mismatch");
    validate(scenario.true_delays, scenario.duration);
    validate(scenario.stft);

    const double fs = scenario.sources[0].sample_rate;
    for (const TimeSignal& s : scenario.sources) {
        validate(s);
        if (s.sample_rate != fs)
            throw std::invalid_argument("sources must share one sample rate");
    }
    const int n = static_cast<int>(std::llround(scenario.duration * fs));

    MixtureData mix;
    mix.scenario = scenario;

    // Zero-pad every source to the uniform duration.
    mix.padded_sources.reserve(K);
    for (const TimeSignal& s : scenario.sources) {
        if (s.length() > n)
            throw std::invalid_argument("source longer than scenario duration");
        TimeSignal p = s;
        p.samples.resize(n, 0.0);
        mix.padded_sources.push_back(std::move(p));
    }

    // Check that each delayed copy stays inside the analysis span.
    for (int k = 0; k < K; ++k) {
        const auto [first, last] = support(mix.padded_sources[k].samples);
        if (first < 0) continue;
        for (int l = 0; l < L; ++l) {
            const double shift = scenario.true_delays.at(k, l) * fs;
            if (first + shift < -0.5 || last + shift > n - 0.5)
                throw std::invalid_argument("delay pushes a source outside duration");
        }
    }

    mix.receiver_signals.reserve(L);
    for (int l = 0; l < L; ++l) {
        TimeSignal rx;
        rx.sample_rate = fs;
        rx.samples.assign(n, 0.0);
        for (int k = 0; k < K; ++k) {
            const double tau = scenario.true_delays.at(k, l);
            TimeSignal delayed = tau == 0.0 ? mix.padded_sources[k]
                                            : fractional_delay(mix.padded_sources[k], tau);
            for (int i = 0; i < n; ++i) rx.samples[i] += delayed.samples[i];
        }
        if (!scenario.noiseless) {
            double power = 0.0;
            for (double v : rx.samples) power += v * v;
            power /= n;
            const double sigma = std::sqrt(power * std::pow(10.0, -scenario.snr_db / 10.0));
            Rng rng(mix_seed(scenario.seed, 0x5e15u + l));
            for (int i = 0; i < n; ++i) rx.samples[i] += sigma * rng.next_gauss();
        }
        mix.receiver_signals.push_back(std::move(rx));
    }

    mix.receiver_cplx.reserve(L);
    mix.receiver_specs.reserve(L);
    for (int l = 0; l < L; ++l) {
        mix.receiver_cplx.push_back(stft(mix.receiver_signals[l], scenario.stft));
        mix.receiver_specs.push_back(power_spectrogram(mix.receiver_cplx[l]));
    }
    mix.source_specs_ref.reserve(K);
    for (int k = 0; k < K; ++k)
        mix.source_specs_ref.push_back(
            power_spectrogram(stft(mix.padded_sources[k], scenario.stft)));
    return mix;
}

double snr_of(const TimeSignal& clean, const TimeSignal& noisy) {
    if (clean.samples.size() != noisy.samples.size())
        throw std::invalid_argument("snr_of needs equal lengths");
    double sig = 0.0, err = 0.0;
    for (size_t i = 0; i < clean.samples.size(); ++i) {
        sig += clean.samples[i] * clean.samples[i];
        const double d = noisy.samples[i] - clean.samples[i];
        err += d * d;
    }
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(sig / err);
}

TimeSignal place_centered(const TimeSignal& sig, double duration) {
    validate(sig);
    const int n = static_cast<int>(std::llround(duration * sig.sample_rate));
    if (sig.length() > n)
        throw std::invalid_argument("signal longer than target duration");
    TimeSignal out;
    out.sample_rate = sig.sample_rate;
    out.samples.assign(n, 0.0);
    const int off = (n - sig.length()) / 2;
    std::copy(sig.samples.begin(), sig.samples.end(), out.samples.begin() + off);
    return out;
}

TimeSignal synth_voice(double f0_hz, double duration, double sample_rate,
                       std::uint64_t seed) {
    if (!(f0_hz > 0.0) || !(duration > 0.0) || !(sample_rate > 0.0))
        throw std::invalid_argument("synth_voice parameters must be positive");
    const int n = static_cast<int>(std::llround(duration * sample_rate));
    Rng rng(mix_seed(seed, 0x501ce));
    TimeSignal out;
    out.sample_rate = sample_rate;
    out.samples.assign(n, 0.0);

    // Syllable-rate amplitude envelope: a few raised-cosine bursts.
    const int bursts = 3 + static_cast<int>(rng.next_below(3));
    std::vector<double> env(n, 0.0);
    for (int b = 0; b < bursts; ++b) {
        const double center = (b + 0.5 + 0.4 * (rng.next_double() - 0.5)) / bursts;
        const double width = (0.35 + 0.25 * rng.next_double()) / bursts;
        const int lo = std::max(0, static_cast<int>((center - width) * n));
        const int hi = std::min(n - 1, static_cast<int>((center + width) * n));
        for (int i = lo; i <= hi; ++i) {
            const double u = (i - lo) / double(hi - lo);
            env[i] += 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u);
        }
    }

    // Harmonic stack under two formant-like spectral bumps, slight vibrato.
    const double f1 = 600.0 + 200.0 * rng.next_double();
    const double f2 = 1500.0 + 600.0 * rng.next_double();
    const double vib_rate = 4.0 + 2.0 * rng.next_double();
    const double vib_depth = 0.015;
    const double nyquist = sample_rate / 2.0;
    const int harmonics = static_cast<int>(std::min(3600.0, 0.9 * nyquist) / f0_hz);
    std::vector<double> amp(harmonics + 1, 0.0), phase(harmonics + 1, 0.0);
    for (int h = 1; h <= harmonics; ++h) {
        const double f = h * f0_hz;
        const double formant = std::exp(-0.5 * std::pow((f - f1) / 250.0, 2)) +
                               0.7 * std::exp(-0.5 * std::pow((f - f2) / 400.0, 2)) + 0.12;
        amp[h] = formant / std::pow(h, 0.7);
        phase[h] = 2.0 * std::numbers::pi * rng.next_double();
    }

    double theta = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = i / sample_rate;
        const double f0 = f0_hz * (1.0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * t));
        theta += 2.0 * std::numbers::pi * f0 / sample_rate;
        double v = 0.0;
        for (int h = 1; h <= harmonics; ++h)
            v += amp[h] * std::sin(h * theta + phase[h]);
        out.samples[i] = env[i] * v;
    }

    double peak = 0.0;
    for (double v : out.samples) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : out.samples) v *= 0.5 / peak;
    return out;
}

}  // namespace otsep
