#include "otsep/dsp.hpp"
#include "otsep/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace otsep;

namespace {

TimeSignal tapered_noise(int n, double fs, std::uint64_t seed) {
    Rng rng(seed);
    TimeSignal sig;
    sig.sample_rate = fs;
    sig.samples.resize(n);
    for (int i = 0; i < n; ++i) sig.samples[i] = rng.next_gauss();
    // Hann taper keeps the ends smooth so band-limited interpolation applies.
    for (int i = 0; i < n; ++i)
        sig.samples[i] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    return sig;
}

// Band-limit by zeroing the top bins of a full-length DFT (test-only helper).
TimeSignal band_limit(const TimeSignal& sig, double keep_fraction) {
    auto spec = oracles::naive_dft(sig.samples);
    const int n = static_cast<int>(spec.size());
    const int keep = static_cast<int>(keep_fraction * (n / 2));
    for (int k = 0; k < n; ++k) {
        const int kf = k <= n / 2 ? k : n - k;
        if (kf > keep) spec[k] = 0.0;
    }
    TimeSignal out = sig;
    for (int i = 0; i < n; ++i) {
        std::complex<double> acc = 0.0;
        for (int k = 0; k < n; ++k)
            acc += spec[k] * std::polar(1.0, 2.0 * std::numbers::pi * k * i / n);
        out.samples[i] = acc.real() / n;
    }
    return out;
}

}  // namespace

TEST_CASE("make_window: degenerate single point") {
    StftConfig cfg;
    cfg.window_length = 1;
    cfg.hop = 1;
    cfg.fft_size = 1;
    const auto w = make_window(cfg);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == 1.0);
}

TEST_CASE("make_window: periodic Hann of length 4") {
    StftConfig cfg;
    cfg.window_length = 4;
    cfg.hop = 4;
    cfg.fft_size = 4;
    const auto w = make_window(cfg);
    // 0.5 - 0.5 cos(2 pi n / 4)
    CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w[2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w[3] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("make_window: length 256 peaks at the midpoint") {
    StftConfig cfg;
    const auto w = make_window(cfg);
    REQUIRE(w.size() == 256);
    CHECK(w[128] == doctest::Approx(1.0).epsilon(1e-15));
    for (double v : w) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("stft: all-zero signal gives an all-zero spectrogram") {
    TimeSignal sig;
    sig.sample_rate = 8000.0;
    sig.samples.assign(1000, 0.0);
    const auto spec = stft(sig, StftConfig{});
    CHECK(spec.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(spec.frames() == (1000 - 256) / 200 + 1);
    CHECK(spec.bins() == 129);
}

TEST_CASE("stft: impulse at sample 0 sees only window[0]") {
    StftConfig cfg;
    cfg.window_length = 64;
    cfg.hop = 64;
    cfg.fft_size = 64;
    TimeSignal sig;
    sig.sample_rate = 8000.0;
    sig.samples.assign(64, 0.0);
    sig.samples[0] = 1.0;
    const auto w = make_window(cfg);
    const auto spec = stft(sig, cfg);
    REQUIRE(spec.frames() == 1);
    for (int k = 0; k < spec.bins(); ++k)
        CHECK(std::abs(spec.values(0, k)) == doctest::Approx(w[0]).epsilon(1e-12));
}

TEST_CASE("stft: matches a naive DFT and exact-bin sinusoid stays confined") {
    StftConfig cfg;
    cfg.window_length = 256;
    cfg.hop = 256;
    cfg.fft_size = 256;
    const double fs = 8000.0;
    const int bin = 32;
    const double f = bin * fs / cfg.fft_size;
    TimeSignal sig;
    sig.sample_rate = fs;
    sig.samples.resize(512);
    for (size_t i = 0; i < sig.samples.size(); ++i)
        sig.samples[i] = std::sin(2.0 * std::numbers::pi * f * i / fs);

    const auto spec = stft(sig, cfg);
    const auto w = make_window(cfg);

    // Frame 0 against the oracle DFT of the windowed frame.
    std::vector<double> frame(cfg.fft_size);
    for (int i = 0; i < cfg.window_length; ++i) frame[i] = sig.samples[i] * w[i];
    const auto ref = oracles::naive_dft(frame);
    for (int k = 0; k < spec.bins(); ++k)
        CHECK(std::abs(spec.values(0, k) - ref[k]) < 1e-9);

    // Energy confined to the main lobe: everything two or more bins away
    // sits below -30 dB of the peak.
    const double peak = std::abs(spec.values(0, bin));
    REQUIRE(peak > 0.0);
    for (int k = 0; k < spec.bins(); ++k) {
        if (std::abs(k - bin) <= 1) continue;
        CHECK(std::abs(spec.values(0, k)) < peak * std::pow(10.0, -30.0 / 20.0));
    }
}

TEST_CASE("stft: rejects signals shorter than one window") {
    TimeSignal sig;
    sig.sample_rate = 8000.0;
    sig.samples.assign(100, 0.0);
    CHECK_THROWS_WITH_AS(stft(sig, StftConfig{}), "signal too short",
                         std::invalid_argument);
}

TEST_CASE("stft is linear") {
    const auto x = tapered_noise(1200, 8000.0, 11);
    const auto y = tapered_noise(1200, 8000.0, 12);
    TimeSignal sum = x;
    for (size_t i = 0; i < sum.samples.size(); ++i) sum.samples[i] += y.samples[i];
    const StftConfig cfg;
    const auto sx = stft(x, cfg), sy = stft(y, cfg), ss = stft(sum, cfg);
    const double scale = sx.values.cwiseAbs().maxCoeff();
    CHECK((ss.values - sx.values - sy.values).cwiseAbs().maxCoeff() <
          1e-10 * std::max(1.0, scale));
}

TEST_CASE("istft: round trip is exact on the interior") {
    const StftConfig cfg;  // 256 / 200 / 256
    const auto sig = tapered_noise(16000, 8000.0, 42);
    const auto rec = istft(stft(sig, cfg));
    REQUIRE(rec.samples.size() == sig.samples.size());

    const int t_frames = (16000 - 256) / 200 + 1;
    const int covered = (t_frames - 1) * 200 + 256;
    double num = 0.0, den = 0.0;
    for (int i = cfg.window_length; i < covered - cfg.window_length; ++i) {
        const double d = rec.samples[i] - sig.samples[i];
        num += d * d;
        den += sig.samples[i] * sig.samples[i];
    }
    CHECK(std::sqrt(num / den) < 1e-8);
}

TEST_CASE("istft: zero spectrogram reconstructs silence") {
    const auto spec0 = stft(tapered_noise(2000, 8000.0, 3), StftConfig{});
    ComplexSpectrogram spec = spec0;
    spec.values.setZero();
    const auto rec = istft(spec);
    for (double v : rec.samples) CHECK(v == 0.0);
}

TEST_CASE("istft: rejects inconsistent shapes") {
    auto spec = stft(tapered_noise(2000, 8000.0, 4), StftConfig{});
    spec.values.conservativeResize(spec.values.rows(), 17);
    CHECK_THROWS_AS(istft(spec), std::invalid_argument);
}

TEST_CASE("power_spectrogram: squared magnitudes and metadata") {
    ComplexSpectrogram spec;
    spec.values.resize(1, 2);
    spec.values(0, 0) = std::complex<double>(3.0, 4.0);
    spec.values(0, 1) = 0.0;
    spec.frame_times = {0.0};
    spec.bin_freqs = {0.0, 1.0};
    const auto p = power_spectrogram(spec);
    CHECK(p.mass(0, 0) == doctest::Approx(25.0).epsilon(1e-15));
    CHECK(p.mass(0, 1) == 0.0);
    CHECK(p.bin_freqs == spec.bin_freqs);
}

TEST_CASE("power_spectrogram: one-sided Parseval per frame") {
    StftConfig cfg;
    cfg.window_length = 256;
    cfg.hop = 256;
    cfg.fft_size = 256;
    const auto sig = tapered_noise(1024, 8000.0, 5);
    const auto w = make_window(cfg);
    const auto p = power_spectrogram(stft(sig, cfg));

    for (int m = 0; m < p.frames(); ++m) {
        std::vector<double> frame(cfg.fft_size);
        double energy = 0.0;
        for (int i = 0; i < cfg.window_length; ++i) {
            frame[i] = sig.samples[m * cfg.hop + i] * w[i];
            energy += frame[i] * frame[i];
        }
        // real DC and Nyquist terms computed directly
        double x0 = 0.0, xn = 0.0;
        for (int i = 0; i < cfg.fft_size; ++i) {
            x0 += frame[i];
            xn += (i % 2 == 0 ? frame[i] : -frame[i]);
        }
        const double expected =
            0.5 * (cfg.fft_size * energy + x0 * x0 + xn * xn);
        CHECK(p.mass.row(m).sum() == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("power_spectrogram is invariant to a global phase rotation") {
    auto spec = stft(tapered_noise(2000, 8000.0, 6), StftConfig{});
    const auto p0 = power_spectrogram(spec);
    spec.values *= std::polar(1.0, 1.234);
    const auto p1 = power_spectrogram(spec);
    CHECK((p0.mass - p1.mass).cwiseAbs().maxCoeff() <
          1e-12 * p0.mass.maxCoeff());
}

TEST_CASE("fractional_delay: zero delay returns the signal unchanged") {
    const auto sig = tapered_noise(1000, 8000.0, 7);
    const auto out = fractional_delay(sig, 0.0);
    CHECK(out.samples == sig.samples);
}

TEST_CASE("fractional_delay: integer delays are index shifts") {
    const double fs = 8000.0;
    TimeSignal sig;
    sig.sample_rate = fs;
    sig.samples.assign(512, 0.0);
    sig.samples[100] = 1.0;
    const auto out = fractional_delay(sig, 10.0 / fs);
    for (int i = 0; i < 512; ++i) {
        const double expected = i == 110 ? 1.0 : 0.0;
        CHECK(std::abs(out.samples[i] - expected) < 1e-9);
    }
}

TEST_CASE("fractional_delay: 2.5 samples on a tapered sinusoid") {
    const double fs = 8000.0;
    const double f = 440.0;
    const int n = 4096;
    const double tau = 2.5 / fs;
    TimeSignal sig;
    sig.sample_rate = fs;
    sig.samples.resize(n);
    auto env = [&](double t) {
        const double u = t * fs / n;
        return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u);
    };
    for (int i = 0; i < n; ++i) {
        const double t = i / fs;
        sig.samples[i] = env(t) * std::sin(2.0 * std::numbers::pi * f * t);
    }
    const auto out = fractional_delay(sig, tau);
    double max_err = 0.0;
    for (int i = 4; i < n; ++i) {
        const double t = i / fs - tau;
        const double expected =
            t >= 0.0 ? env(t) * std::sin(2.0 * std::numbers::pi * f * t) : 0.0;
        max_err = std::max(max_err, std::abs(out.samples[i] - expected));
    }
    CHECK(max_err < 1e-6);
}

TEST_CASE("fractional_delay: forward then backward recovers the interior") {
    const double fs = 8000.0;
    auto sig = band_limit(tapered_noise(600, fs, 8), 0.7);
    const double tau = 3.7 / fs;
    const auto back = fractional_delay(fractional_delay(sig, tau), -tau);
    const int guard = 8;
    double max_err = 0.0;
    for (int i = guard; i < 600 - guard; ++i)
        max_err = std::max(max_err, std::abs(back.samples[i] - sig.samples[i]));
    CHECK(max_err < 1e-6);
}

TEST_CASE("fractional_delay: rejects delays at or beyond the duration") {
    const auto sig = tapered_noise(100, 100.0, 9);  // 1 second
    CHECK_THROWS_AS(fractional_delay(sig, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(fractional_delay(sig, -1.5), std::invalid_argument);
}
