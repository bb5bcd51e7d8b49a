#include "otsep/baselines.hpp"
#include "otsep/rng.hpp"
#include "otsep/simulate.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace otsep;

namespace {

TimeSignal speechish(int n, double fs, std::uint64_t seed) {
    return synth_voice(160.0, n / fs, fs, seed);
}

}  // namespace

TEST_CASE("gcc_phat: identical signals give zero delay") {
    const auto x = speechish(4000, 8000.0, 1);
    GccConfig cfg{0.05, 4};
    CHECK(gcc_phat(x, x, cfg) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("gcc_phat: ten-sample delay, cross-checked against direct correlation") {
    const double fs = 8000.0;
    const auto x = speechish(4000, fs, 2);
    const auto y = fractional_delay(x, 10.0 / fs);
    GccConfig cfg{0.05, 1};
    const double got = gcc_phat(x, y, cfg);
    CHECK(std::abs(got - 10.0 / fs) <= 1.0 / fs);

    const int oracle_lag = oracles::xcorr_peak_lag(x.samples, y.samples, 40);
    CHECK(std::abs(got - oracle_lag / fs) <= 1.0 / fs);
}

TEST_CASE("gcc_phat: fractional delays resolve to a quarter sample") {
    const double fs = 8000.0;
    const auto x = speechish(4000, fs, 3);
    const auto y = fractional_delay(x, 2.5 / fs);
    GccConfig cfg{0.05, 8};
    const double got = gcc_phat(x, y, cfg);
    CHECK(std::abs(got - 2.5 / fs) <= 0.25 / fs);
}

TEST_CASE("gcc_phat: invariant to positive scaling of either input") {
    const double fs = 8000.0;
    const auto x = speechish(3000, fs, 4);
    const auto y = fractional_delay(x, 7.0 / fs);
    TimeSignal xs = x, ys = y;
    for (double& v : xs.samples) v *= 13.0;
    for (double& v : ys.samples) v *= 0.01;
    GccConfig cfg{0.05, 4};
    CHECK(gcc_phat(x, y, cfg) == doctest::Approx(gcc_phat(xs, ys, cfg)).epsilon(1e-12));
}

TEST_CASE("gcc_phat: swapping arguments negates the delay") {
    const double fs = 8000.0;
    const auto x = speechish(3000, fs, 5);
    const auto y = fractional_delay(x, 12.0 / fs);
    GccConfig cfg{0.05, 4};
    const double fwd = gcc_phat(x, y, cfg);
    const double bwd = gcc_phat(y, x, cfg);
    CHECK(std::abs(fwd + bwd) <= 0.25 / fs);
}

TEST_CASE("gcc_phat: all-zero input is rejected") {
    TimeSignal z;
    z.sample_rate = 8000.0;
    z.samples.assign(1000, 0.0);
    const auto x = speechish(1000, 8000.0, 6);
    CHECK_THROWS_WITH_AS(gcc_phat(x, z, GccConfig{0.01, 1}), "degenerate signal",
                         std::invalid_argument);
}

TEST_CASE("gcc_phat_multi: separates two sources' delays") {
    const double fs = 8000.0;
    const auto a = synth_voice(120.0, 0.5, fs, 7);
    const auto b = synth_voice(230.0, 0.5, fs, 8);
    TimeSignal mix0, mix1;
    mix0.sample_rate = mix1.sample_rate = fs;
    const auto ad = fractional_delay(place_centered(a, 0.8), 0.025);
    const auto bd = fractional_delay(place_centered(b, 0.8), -0.05);
    const auto a0 = place_centered(a, 0.8), b0 = place_centered(b, 0.8);
    mix0.samples.resize(a0.samples.size());
    mix1.samples.resize(a0.samples.size());
    for (size_t i = 0; i < mix0.samples.size(); ++i) {
        mix0.samples[i] = a0.samples[i] + b0.samples[i];
        mix1.samples[i] = ad.samples[i] + bd.samples[i];
    }
    GccConfig cfg{0.1, 4};
    const auto peaks = gcc_phat_multi(mix0, mix1, cfg, 2, 0.025);
    REQUIRE(peaks.size() == 2);
    const double lo = std::min(peaks[0], peaks[1]);
    const double hi = std::max(peaks[0], peaks[1]);
    CHECK(std::abs(hi - 0.025) <= 2.0 / fs);
    CHECK(std::abs(lo + 0.05) <= 2.0 / fs);
}

TEST_CASE("delay_and_sum: identical receivers, zero delays") {
    const auto x = speechish(2000, 8000.0, 9);
    const auto out = delay_and_sum({x, x}, {0.0, 0.0});
    for (size_t i = 0; i < x.samples.size(); ++i)
        CHECK(out.samples[i] == doctest::Approx(x.samples[i]).epsilon(1e-12));
}

TEST_CASE("delay_and_sum: coherent gain under independent noise") {
    const double fs = 8000.0;
    const double tau = 0.02;
    const auto clean = place_centered(synth_voice(150.0, 1.0, fs, 10), 1.5);
    TimeSignal rx0 = clean;
    TimeSignal rx1 = fractional_delay(clean, tau);
    double p = 0.0;
    for (double v : clean.samples) p += v * v;
    p /= clean.samples.size();
    const double sigma = std::sqrt(p);  // 0 dB per receiver
    Rng rng(11);
    for (double& v : rx0.samples) v += sigma * rng.next_gauss();
    for (double& v : rx1.samples) v += sigma * rng.next_gauss();

    const auto steered = delay_and_sum({rx0, rx1}, {0.0, tau});
    const double snr_single = snr_of(clean, rx0);
    const double snr_beam = snr_of(clean, steered);
    CHECK(snr_beam - snr_single > 2.5);
    CHECK(snr_beam - snr_single < 3.5);
}

TEST_CASE("delay_and_sum: half-period miscompensation cancels a sinusoid") {
    const double fs = 8000.0;
    const double f = 500.0;
    TimeSignal sine;
    sine.sample_rate = fs;
    sine.samples.resize(8000);
    for (size_t i = 0; i < sine.samples.size(); ++i)
        sine.samples[i] = std::sin(2.0 * std::numbers::pi * f * i / fs);
    const double half_period = 0.5 / f;
    const auto out = delay_and_sum({sine, sine}, {0.0, half_period});

    double e_in = 0.0, e_out = 0.0;
    for (size_t i = 100; i + 100 < sine.samples.size(); ++i) {
        e_in += sine.samples[i] * sine.samples[i];
        e_out += out.samples[i] * out.samples[i];
    }
    CHECK(10.0 * std::log10(e_in / e_out) >= 20.0);
}

TEST_CASE("delay_and_sum is linear in the receivers") {
    const double fs = 8000.0;
    const auto x = speechish(1500, fs, 12);
    const auto y = speechish(1500, fs, 13);
    TimeSignal sum = x;
    for (size_t i = 0; i < sum.samples.size(); ++i) sum.samples[i] += y.samples[i];
    const std::vector<double> delays = {0.0, 0.003};
    const auto ox = delay_and_sum({x, x}, delays);
    const auto oy = delay_and_sum({y, y}, delays);
    const auto os = delay_and_sum({sum, sum}, delays);
    for (size_t i = 0; i < os.samples.size(); ++i)
        CHECK(os.samples[i] ==
              doctest::Approx(ox.samples[i] + oy.samples[i]).epsilon(1e-9));
}
