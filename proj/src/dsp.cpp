#include "otsep/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace otsep {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

void validate(const TimeSignal& sig) {
    if (sig.samples.empty())
        throw std::invalid_argument("time signal is empty");
    if (!(sig.sample_rate > 0.0))
        throw std::invalid_argument("sample_rate must be positive");
    for (double v : sig.samples)
        if (!std::isfinite(v))
            throw std::invalid_argument("time signal contains non-finite samples");
}

void validate(const StftConfig& cfg) {
    if (cfg.hop < 1 || cfg.window_length < 1 || cfg.fft_size < 1)
        throw std::invalid_argument("stft sizes must be positive");
    if (cfg.hop > cfg.window_length || cfg.window_length > cfg.fft_size)
        throw std::invalid_argument("need hop <= window_length <= fft_size");
}

double PowerSpectrogram::frame_spacing() const {
    if (frame_times.size() < 2)
        throw std::logic_error("frame spacing undefined for fewer than 2 frames");
    return frame_times[1] - frame_times[0];
}

std::vector<double> make_window(const StftConfig& cfg) {
    validate(cfg);
    const int n = cfg.window_length;
    if (n == 1) return {1.0};
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    return w;
}

ComplexSpectrogram stft(const TimeSignal& sig, const StftConfig& cfg) {
    validate(sig);
    validate(cfg);
    const int len = sig.length();
    if (len < cfg.window_length)
        throw std::invalid_argument("signal too short");

    const std::vector<double> win = make_window(cfg);
    const int frames = (len - cfg.window_length) / cfg.hop + 1;
    const int bins = cfg.bins();

    ComplexSpectrogram out;
    out.values.resize(frames, bins);
    out.config = cfg;
    out.sample_rate = sig.sample_rate;
    out.signal_length = len;
    out.frame_times.resize(frames);
    out.bin_freqs.resize(bins);
    for (int m = 0; m < frames; ++m)
        out.frame_times[m] = static_cast<double>(m) * cfg.hop / sig.sample_rate;
    for (int k = 0; k < bins; ++k)
        out.bin_freqs[k] = static_cast<double>(k) * sig.sample_rate / cfg.fft_size;

    Eigen::FFT<double> fft;
    std::vector<double> frame(cfg.fft_size);
    std::vector<std::complex<double>> spec(cfg.fft_size);
    for (int m = 0; m < frames; ++m) {
        const int off = m * cfg.hop;
        for (int i = 0; i < cfg.window_length; ++i)
            frame[i] = sig.samples[off + i] * win[i];
        std::fill(frame.begin() + cfg.window_length, frame.end(), 0.0);
        fft.fwd(spec, frame);
        for (int k = 0; k < bins; ++k)
            out.values(m, k) = spec[k];
    }
    return out;
}

TimeSignal istft(const ComplexSpectrogram& spec) {
    validate(spec.config);
    const StftConfig& cfg = spec.config;
    const int frames = spec.frames();
    if (frames < 1 || spec.bins() != cfg.bins())
        throw std::invalid_argument("inconsistent spectrogram shape");
    if (!(spec.sample_rate > 0.0))
        throw std::invalid_argument("spectrogram missing sample rate");
    const int len = spec.signal_length > 0
                        ? spec.signal_length
                        : (frames - 1) * cfg.hop + cfg.window_length;
    if (len < (frames - 1) * cfg.hop + cfg.window_length)
        throw std::invalid_argument("signal_length shorter than frame span");

    const std::vector<double> win = make_window(cfg);
    std::vector<double> acc(len, 0.0), wsq(len, 0.0);

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> full(cfg.fft_size);
    std::vector<double> frame(cfg.fft_size);
    const int bins = cfg.bins();
    for (int m = 0; m < frames; ++m) {
        for (int k = 0; k < bins; ++k)
            full[k] = spec.values(m, k);
        for (int k = bins; k < cfg.fft_size; ++k)
            full[k] = std::conj(full[cfg.fft_size - k]);
        fft.inv(frame, full);
        const int off = m * cfg.hop;
        for (int i = 0; i < cfg.window_length; ++i) {
            acc[off + i] += win[i] * frame[i];
            wsq[off + i] += win[i] * win[i];
        }
    }

    double wmax = 0.0;
    for (double v : wsq) wmax = std::max(wmax, v);
    const double floor = 1e-8 * wmax;

    TimeSignal out;
    out.sample_rate = spec.sample_rate;
    out.samples.resize(len);
    for (int i = 0; i < len; ++i)
        out.samples[i] = wsq[i] > floor ? acc[i] / wsq[i] : 0.0;
    return out;
}

PowerSpectrogram power_spectrogram(const ComplexSpectrogram& spec) {
    PowerSpectrogram out;
    out.mass = spec.values.cwiseAbs2();
    out.frame_times = spec.frame_times;
    out.bin_freqs = spec.bin_freqs;
    return out;
}

TimeSignal fractional_delay(const TimeSignal& sig, double delay_seconds) {
    validate(sig);
    if (std::abs(delay_seconds) >= sig.duration())
        throw std::invalid_argument("delay exceeds signal duration");
    if (delay_seconds == 0.0) return sig;

    const int len = sig.length();
    const double shift = delay_seconds * sig.sample_rate;  // samples
    const int n = next_pow2(len + static_cast<int>(std::ceil(std::abs(shift))) + 1);

    std::vector<std::complex<double>> buf(n);
    for (int i = 0; i < len; ++i) buf[i] = sig.samples[i];
    for (int i = len; i < n; ++i) buf[i] = 0.0;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec(n);
    fft.fwd(spec, buf);

    const double step = 2.0 * std::numbers::pi * shift / n;
    for (int k = 0; k < n; ++k) {
        if (2 * k == n) {
            // Nyquist: keep the spectrum Hermitian so the output stays real.
            spec[k] *= std::cos(std::numbers::pi * shift);
        } else {
            const int kf = 2 * k < n ? k : k - n;
            spec[k] *= std::polar(1.0, -step * kf);
        }
    }
    fft.inv(buf, spec);

    TimeSignal out;
    out.sample_rate = sig.sample_rate;
    out.samples.resize(len);
    for (int i = 0; i < len; ++i) out.samples[i] = buf[i].real();
    return out;
}

}  // namespace otsep
