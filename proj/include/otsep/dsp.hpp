#ifndef OTSEP_DSP_HPP
#define OTSEP_DSP_HPP

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace otsep {

// Mono time-domain signal. Samples are dimensionless amplitudes.
struct TimeSignal {
    std::vector<double> samples;
    double sample_rate = 0.0;  // Hz

    int length() const { return static_cast<int>(samples.size()); }
    double duration() const { return samples.size() / sample_rate; }
};

// Throws std::invalid_argument if empty, non-finite, or sample_rate <= 0.
void validate(const TimeSignal& sig);

enum class WindowKind { Hann };

struct StftConfig {
    int window_length = 256;
    int hop = 200;
    int fft_size = 256;
    WindowKind window = WindowKind::Hann;

    int bins() const { return fft_size / 2 + 1; }  // one-sided
};

// Requires 0 < hop <= window_length <= fft_size.
void validate(const StftConfig& cfg);

// Complex STFT, frames x bins (one-sided). frame_times are frame left
// edges in seconds; only differences between them are ever meaningful.
struct ComplexSpectrogram {
    Eigen::MatrixXcd values;  // T x F
    std::vector<double> frame_times;
    std::vector<double> bin_freqs;
    StftConfig config;
    double sample_rate = 0.0;
    int signal_length = 0;  // sample count of the analyzed signal

    int frames() const { return static_cast<int>(values.rows()); }
    int bins() const { return static_cast<int>(values.cols()); }
};

// Squared-magnitude spectrogram; a nonnegative mass distribution on the
// time-frequency plane.
struct PowerSpectrogram {
    Eigen::MatrixXd mass;  // T x F
    std::vector<double> frame_times;
    std::vector<double> bin_freqs;

    int frames() const { return static_cast<int>(mass.rows()); }
    int bins() const { return static_cast<int>(mass.cols()); }
    double frame_spacing() const;
};

// Periodic Hann of length window_length (w[0] = 0 for length > 1).
std::vector<double> make_window(const StftConfig& cfg);

// T = floor((len - window_length) / hop) + 1 frames, each windowed,
// zero-padded to fft_size and transformed; one-sided bins kept.
// Throws std::invalid_argument("signal too short") if len < window_length.
ComplexSpectrogram stft(const TimeSignal& sig, const StftConfig& cfg);

// Weighted overlap-add inverse with squared-window normalization.
// Samples whose window-energy falls below 1e-8 of its maximum are zeroed.
// Output length is spec.signal_length.
TimeSignal istft(const ComplexSpectrogram& spec);

PowerSpectrogram power_spectrogram(const ComplexSpectrogram& spec);

// Delays a signal by an arbitrary (fractional) number of seconds using a
// linear-phase multiplication of a zero-padded FFT. Exact for band-limited
// content; output keeps the input length, content shifted past either end
// is discarded. Requires |delay| < duration.
TimeSignal fractional_delay(const TimeSignal& sig, double delay_seconds);

}  // namespace otsep

#endif
