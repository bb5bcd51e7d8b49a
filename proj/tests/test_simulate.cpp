#include "otsep/simulate.hpp"
#include "otsep/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace otsep;

namespace {

TimeSignal burst(int n, double fs, std::uint64_t seed) {
    Rng rng(seed);
    TimeSignal sig;
    sig.sample_rate = fs;
    sig.samples.resize(n);
    for (int i = 0; i < n; ++i)
        sig.samples[i] = rng.next_gauss() *
                         (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n));
    return sig;
}

Scenario two_receiver_scenario(double tau, double snr_db, bool noiseless) {
    Scenario sc;
    sc.sources = {place_centered(burst(6000, 8000.0, 21), 2.0)};
    sc.true_delays = DelayMatrix::zeros(1, 2);
    sc.true_delays.delays(0, 1) = tau;
    sc.snr_db = snr_db;
    sc.noiseless = noiseless;
    sc.duration = 2.0;
    sc.seed = 77;
    return sc;
}

}  // namespace

TEST_CASE("simulate: zero delay and no noise copies the source to both receivers") {
    const Scenario sc = two_receiver_scenario(0.0, 0.0, true);
    const MixtureData mix = simulate(sc);
    REQUIRE(mix.receiver_signals.size() == 2);
    for (int l = 0; l < 2; ++l)
        for (size_t i = 0; i < mix.padded_sources[0].samples.size(); ++i)
            CHECK(mix.receiver_signals[l].samples[i] ==
                  doctest::Approx(mix.padded_sources[0].samples[i]).epsilon(1e-12));
}

TEST_CASE("simulate: a one-hop delay shifts the power spectrogram one row") {
    const double tau = 200.0 / 8000.0;  // exactly one hop
    const Scenario sc = two_receiver_scenario(tau, 0.0, true);
    const MixtureData mix = simulate(sc);
    const Eigen::MatrixXd& r0 = mix.receiver_specs[0].mass;
    const Eigen::MatrixXd& r1 = mix.receiver_specs[1].mass;
    const double peak = r0.maxCoeff();
    double max_dev = 0.0;
    for (int t = 1; t < r0.rows() - 1; ++t)
        max_dev = std::max(max_dev,
                           (r1.row(t) - r0.row(t - 1)).cwiseAbs().maxCoeff());
    CHECK(max_dev <= 1e-6 * peak);
}

TEST_CASE("simulate: realized SNR tracks the request within 0.2 dB") {
    for (double target : {0.0, 10.0}) {
        const Scenario noisy_sc = two_receiver_scenario(0.0125, target, false);
        Scenario clean_sc = noisy_sc;
        clean_sc.noiseless = true;
        const MixtureData noisy = simulate(noisy_sc);
        const MixtureData clean = simulate(clean_sc);
        for (int l = 0; l < 2; ++l) {
            const double got =
                snr_of(clean.receiver_signals[l], noisy.receiver_signals[l]);
            CHECK(std::abs(got - target) < 0.2);
        }
    }
}

TEST_CASE("simulate: deterministic given the seed") {
    const Scenario sc = two_receiver_scenario(0.025, 5.0, false);
    const MixtureData a = simulate(sc);
    const MixtureData b = simulate(sc);
    for (int l = 0; l < 2; ++l) {
        REQUIRE(a.receiver_signals[l].samples == b.receiver_signals[l].samples);
        CHECK(a.receiver_specs[l].mass == b.receiver_specs[l].mass);
    }
}

TEST_CASE("simulate: single-source additivity is exact at the spectrogram level") {
    const Scenario sc = two_receiver_scenario(0.0, 0.0, true);
    const MixtureData mix = simulate(sc);
    CHECK((mix.receiver_specs[0].mass - mix.source_specs_ref[0].mass)
              .cwiseAbs()
              .maxCoeff() < 1e-12 * mix.source_specs_ref[0].mass.maxCoeff());
}

TEST_CASE("simulate: rejects delays that push a source outside the duration") {
    Scenario sc;
    sc.sources = {burst(15900, 8000.0, 3)};  // content starts at sample 0
    sc.true_delays = DelayMatrix::zeros(1, 2);
    sc.true_delays.delays(0, 1) = -0.05;  // would shift support before zero
    sc.noiseless = true;
    sc.duration = 2.0;
    CHECK_THROWS_AS(simulate(sc), std::invalid_argument);
}

TEST_CASE("snr_of: sentinel and hand values") {
    TimeSignal clean;
    clean.sample_rate = 1.0;
    clean.samples = {1.0, 0.0};
    CHECK(std::isinf(snr_of(clean, clean)));

    TimeSignal noisy = clean;
    noisy.samples = {1.0, 1.0};  // noise power equals signal power
    CHECK(snr_of(clean, noisy) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("delay_grid and sample_delays: grid membership and distinctness") {
    const auto grid = delay_grid(2.0, 0.025, 0.1);
    REQUIRE(grid.size() == 17);  // +-8 steps of 25 ms around zero
    CHECK(grid.front() == doctest::Approx(-0.2));
    CHECK(grid.back() == doctest::Approx(0.2));

    const DelayMatrix dm = sample_delays(grid, 2, 2, 123);
    CHECK(dm.delays(0, 0) == 0.0);
    CHECK(dm.delays(1, 0) == 0.0);
    CHECK(dm.delays(0, 1) != dm.delays(1, 1));
    for (int k = 0; k < 2; ++k) {
        bool found = false;
        for (double g : grid)
            if (g == dm.delays(k, 1)) found = true;
        CHECK(found);
    }
    const DelayMatrix again = sample_delays(grid, 2, 2, 123);
    CHECK(dm.delays == again.delays);
}

TEST_CASE("place_centered pads symmetrically") {
    TimeSignal sig;
    sig.sample_rate = 100.0;
    sig.samples = {1.0, 2.0};
    const auto out = place_centered(sig, 0.1);  // 10 samples
    REQUIRE(out.samples.size() == 10);
    CHECK(out.samples[4] == 1.0);
    CHECK(out.samples[5] == 2.0);
    CHECK(out.samples[0] == 0.0);
}

TEST_CASE("synth_voice: deterministic, bounded, and voiced") {
    const auto a = synth_voice(210.0, 1.0, 8000.0, 9);
    const auto b = synth_voice(210.0, 1.0, 8000.0, 9);
    REQUIRE(a.samples == b.samples);
    REQUIRE(a.samples.size() == 8000);
    double peak = 0.0, energy = 0.0;
    for (double v : a.samples) {
        peak = std::max(peak, std::abs(v));
        energy += v * v;
    }
    CHECK(peak <= 0.5 + 1e-12);
    CHECK(energy > 0.0);
    const auto c = synth_voice(115.0, 1.0, 8000.0, 9);
    CHECK(a.samples != c.samples);
}
