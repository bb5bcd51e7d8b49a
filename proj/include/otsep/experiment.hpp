#ifndef OTSEP_EXPERIMENT_HPP
#define OTSEP_EXPERIMENT_HPP

#include "otsep/baselines.hpp"
#include "otsep/metrics.hpp"
#include "otsep/separator.hpp"
#include "otsep/simulate.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace otsep {

// Parsed experiment description. See README for the config file format;
// unknown keys are rejected so configs stay reproducible.
struct ExperimentConfig {
    // [scenario]
    std::vector<std::string> sources;  // "synth:female", "synth:male",
                                       // "synth:<f0_hz>" or a mono WAV path
    int receivers = 2;
    double sample_rate_hz = 8000.0;
    double duration_s = 2.0;
    double synth_voiced_s = 1.2;
    double snr_db = 20.0;  // for the single-scenario subcommands
    bool no_noise = false;

    // [stft]
    StftConfig stft;

    // [delays]
    double grid_step_s = 0.0;  // 0 = one STFT hop
    double grid_span_fraction = 0.1;

    // [sweep]
    std::vector<double> snr_sweep_db;
    int trials = 1;
    std::vector<std::string> methods;

    // [solver]
    SolverConfig solver;

    // [gcc]
    GccConfig gcc{0.0, 4};  // max_delay 0 = grid span plus one hop

    // [reconstruct]
    double mask_noise_floor = 0.0;

    // [run]
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    bool timings = false;  // wall-clock runtimes in rows; off keeps CSVs
                           // byte-reproducible
    int trial_threads = 1;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(std::istream& in, const std::string& origin);

// One CSV row: a (method, snr, trial) result. Metrics a method does not
// produce are NaN; failures carry an error status instead of crashing.
struct TrialRow {
    std::string method;
    double snr_db = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    double tdoa_rmse_s = 0.0;
    double spec_err = 0.0;
    double delta_sdr_db = 0.0;
    double runtime_s = 0.0;
    std::string status = "ok";
};

// Seed for one (snr, trial) cell, derived so any cell can be reproduced
// in isolation.
std::uint64_t trial_seed(const ExperimentConfig& cfg, double snr_db, int trial);

// The two deterministic halves of a trial, exposed separately so the
// single-scenario subcommands reuse them.
std::vector<TimeSignal> build_sources(const ExperimentConfig& cfg);
Scenario build_scenario(const ExperimentConfig& cfg, double snr_db, int trial);

// Simulates one scenario and runs every configured method on it.
// Returns one row per method, in configured order.
std::vector<TrialRow> run_trial(const ExperimentConfig& cfg, double snr_db,
                                int trial);

// Full Monte Carlo sweep over snr_sweep_db x trials. Rows come back in
// (snr, trial, method) order regardless of how trials were scheduled.
std::vector<TrialRow> run_sweep(const ExperimentConfig& cfg);

// Aggregate of one (method, snr) cell of the sweep.
struct SummaryRow {
    std::string method;
    double snr_db = 0.0;
    int trials_ok = 0;
    int trials_failed = 0;
    double tdoa_rmse_mean = 0.0, tdoa_rmse_std = 0.0;
    double spec_err_mean = 0.0, spec_err_std = 0.0;
    double delta_sdr_mean = 0.0, delta_sdr_std = 0.0;
};
std::vector<SummaryRow> summarize(const ExperimentConfig& cfg,
                                  const std::vector<TrialRow>& rows);

std::string results_csv(const std::vector<TrialRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);

// Plain text dumps with lossless floats, shared by the CLI subcommands.
void save_spectrogram(const std::string& path, const PowerSpectrogram& spec);
PowerSpectrogram load_spectrogram(const std::string& path);
void save_delay_matrix(const std::string& path, const DelayMatrix& dm);
DelayMatrix load_delay_matrix(const std::string& path);

}  // namespace otsep

#endif
