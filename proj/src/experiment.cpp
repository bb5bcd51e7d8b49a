#include "otsep/experiment.hpp"

#include "otsep/reconstruct.hpp"
#include "otsep/rng.hpp"
#include "otsep/wav.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace otsep {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw std::runtime_error("config: bad number for " + key + ": " + v);
    }
}

long parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw std::runtime_error("config: bad integer for " + key + ": " + v);
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": " + v);
}

std::string fmt9(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::vector<std::string> kKnownMethods = {"ot", "gcc_phat", "delay_and_sum",
                                                "oracle_mask"};

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
    ExperimentConfig cfg;
    std::vector<double> eps_rel, eps_abs;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error(origin + ": malformed section at line " +
                                         std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            const char* known[] = {"scenario", "stft", "delays", "sweep",
                                   "solver",   "gcc",  "reconstruct", "run"};
            if (std::find(std::begin(known), std::end(known), section) ==
                std::end(known))
                throw std::runtime_error(origin + ": unknown section [" + section +
                                         "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ": expected key = value at line " +
                                     std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (qual == "scenario.sources") {
            cfg.sources = split_list(val);
        } else if (qual == "scenario.receivers") {
            cfg.receivers = static_cast<int>(parse_int(val, qual));
        } else if (qual == "scenario.sample_rate_hz") {
            cfg.sample_rate_hz = parse_double(val, qual);
        } else if (qual == "scenario.duration_s") {
            cfg.duration_s = parse_double(val, qual);
        } else if (qual == "scenario.synth_voiced_s") {
            cfg.synth_voiced_s = parse_double(val, qual);
        } else if (qual == "scenario.snr_db") {
            cfg.snr_db = parse_double(val, qual);
        } else if (qual == "scenario.no_noise") {
            cfg.no_noise = parse_bool(val, qual);
        } else if (qual == "stft.window_length") {
            cfg.stft.window_length = static_cast<int>(parse_int(val, qual));
        } else if (qual == "stft.hop") {
            cfg.stft.hop = static_cast<int>(parse_int(val, qual));
        } else if (qual == "stft.fft_size") {
            cfg.stft.fft_size = static_cast<int>(parse_int(val, qual));
        } else if (qual == "delays.grid_step_s") {
            cfg.grid_step_s = parse_double(val, qual);
        } else if (qual == "delays.grid_span_fraction") {
            cfg.grid_span_fraction = parse_double(val, qual);
        } else if (qual == "sweep.snr_sweep_db") {
            for (const std::string& s : split_list(val))
                cfg.snr_sweep_db.push_back(parse_double(s, qual));
        } else if (qual == "sweep.trials") {
            cfg.trials = static_cast<int>(parse_int(val, qual));
        } else if (qual == "sweep.methods") {
            cfg.methods = split_list(val);
        } else if (qual == "solver.epsilon_anneal_rel") {
            for (const std::string& s : split_list(val))
                eps_rel.push_back(parse_double(s, qual));
        } else if (qual == "solver.epsilon_anneal_s2") {
            for (const std::string& s : split_list(val))
                eps_abs.push_back(parse_double(s, qual));
        } else if (qual == "solver.inner_max_iters") {
            cfg.solver.inner_max_iters = static_cast<int>(parse_int(val, qual));
        } else if (qual == "solver.marginal_tol") {
            cfg.solver.marginal_tol = parse_double(val, qual);
        } else if (qual == "solver.bcd_max_iters") {
            cfg.solver.bcd_max_iters = static_cast<int>(parse_int(val, qual));
        } else if (qual == "solver.bcd_obj_tol") {
            cfg.solver.bcd_obj_tol = parse_double(val, qual);
        } else if (qual == "solver.mass_floor") {
            cfg.solver.mass_floor = parse_double(val, qual);
        } else if (qual == "solver.threads") {
            cfg.solver.threads = static_cast<int>(parse_int(val, qual));
        } else if (qual == "gcc.max_delay_s") {
            cfg.gcc.max_delay = parse_double(val, qual);
        } else if (qual == "gcc.interp_factor") {
            cfg.gcc.interp_factor = static_cast<int>(parse_int(val, qual));
        } else if (qual == "reconstruct.noise_floor") {
            cfg.mask_noise_floor = parse_double(val, qual);
        } else if (qual == "run.seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(val, qual));
        } else if (qual == "run.output_dir") {
            cfg.output_dir = val;
        } else if (qual == "run.timings") {
            cfg.timings = parse_bool(val, qual);
        } else if (qual == "run.trial_threads") {
            cfg.trial_threads = static_cast<int>(parse_int(val, qual));
        } else {
            throw std::runtime_error(origin + ": unknown key " + qual);
        }
    }

    if (!eps_rel.empty() && !eps_abs.empty())
        throw std::runtime_error(origin +
                                 ": epsilon_anneal_rel and epsilon_anneal_s2 are "
                                 "mutually exclusive");
    if (!eps_rel.empty()) {
        const double d = cfg.stft.hop / cfg.sample_rate_hz;
        for (double r : eps_rel) cfg.solver.epsilon_anneal.push_back(r * d * d);
    }
    if (!eps_abs.empty()) cfg.solver.epsilon_anneal = eps_abs;

    for (const std::string& m : cfg.methods)
        if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) ==
            kKnownMethods.end())
            throw std::runtime_error(origin + ": unknown method " + m);
    if (cfg.trials < 1) throw std::runtime_error(origin + ": trials must be >= 1");
    if (cfg.receivers < 2)
        throw std::runtime_error(origin + ": receivers must be >= 2");
    validate(cfg.stft);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    return parse_config(in, path);
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, double snr_db, int trial) {
    std::uint64_t bits;
    std::memcpy(&bits, &snr_db, sizeof bits);
    return mix_seed(mix_seed(cfg.seed, bits), static_cast<std::uint64_t>(trial));
}

std::vector<TimeSignal> build_sources(const ExperimentConfig& cfg) {
    if (cfg.sources.empty())
        throw std::runtime_error("config: no sources configured");
    std::vector<TimeSignal> out;
    for (size_t i = 0; i < cfg.sources.size(); ++i) {
        const std::string& spec = cfg.sources[i];
        TimeSignal sig;
        if (spec.rfind("synth:", 0) == 0) {
            const std::string kind = spec.substr(6);
            double f0;
            if (kind == "female")
                f0 = 210.0;
            else if (kind == "male")
                f0 = 115.0;
            else
                f0 = parse_double(kind, "scenario.sources synth f0");
            sig = synth_voice(f0, cfg.synth_voiced_s, cfg.sample_rate_hz,
                              mix_seed(cfg.seed, 100 + i));
        } else {
            sig = load_wav(spec);
            if (sig.sample_rate != cfg.sample_rate_hz)
                throw std::runtime_error("source " + spec +
                                         " sample rate differs from config; "
                                         "resample it first");
        }
        out.push_back(place_centered(sig, cfg.duration_s));
    }
    return out;
}

Scenario build_scenario(const ExperimentConfig& cfg, double snr_db, int trial) {
    Scenario sc;
    sc.sources = build_sources(cfg);
    sc.stft = cfg.stft;
    sc.duration = cfg.duration_s;
    sc.snr_db = snr_db;
    sc.noiseless = cfg.no_noise;
    sc.seed = trial_seed(cfg, snr_db, trial);
    const double step = cfg.grid_step_s > 0.0 ? cfg.grid_step_s
                                              : cfg.stft.hop / cfg.sample_rate_hz;
    const std::vector<double> grid =
        delay_grid(cfg.duration_s, step, cfg.grid_span_fraction);
    sc.true_delays = sample_delays(grid, static_cast<int>(sc.sources.size()),
                                   cfg.receivers, sc.seed);
    return sc;
}

namespace {

double effective_gcc_max_delay(const ExperimentConfig& cfg) {
    if (cfg.gcc.max_delay > 0.0) return cfg.gcc.max_delay;
    const double step = cfg.grid_step_s > 0.0 ? cfg.grid_step_s
                                              : cfg.stft.hop / cfg.sample_rate_hz;
    return cfg.grid_span_fraction * cfg.duration_s + step;
}

DelayMatrix gcc_estimate(const ExperimentConfig& cfg, const MixtureData& mix) {
    const int K = static_cast<int>(mix.padded_sources.size());
    const int L = static_cast<int>(mix.receiver_signals.size());
    GccConfig gc = cfg.gcc;
    gc.max_delay = effective_gcc_max_delay(cfg);
    const double sep = cfg.stft.hop / cfg.sample_rate_hz;
    DelayMatrix est = DelayMatrix::zeros(K, L);
    for (int l = 1; l < L; ++l) {
        const std::vector<double> peaks = gcc_phat_multi(
            mix.receiver_signals[0], mix.receiver_signals[l], gc, K, sep);
        if (static_cast<int>(peaks.size()) < K)
            throw std::runtime_error("gcc_phat found fewer peaks than sources");
        for (int k = 0; k < K; ++k) est.delays(k, l) = peaks[k];
    }
    return est;
}

void run_method(const ExperimentConfig& cfg, const std::string& method,
                const MixtureData& mix, TrialRow& row) {
    const int K = static_cast<int>(mix.padded_sources.size());
    const Scenario& sc = mix.scenario;
    const double nan = std::nan("");
    row.tdoa_rmse_s = nan;
    row.spec_err = nan;
    row.delta_sdr_db = nan;

    if (method == "ot") {
        SolverConfig solver = cfg.solver;
        solver.init_seed = sc.seed;
        const SeparationEstimate est = bcd_separate(mix.receiver_specs, K, solver);
        const Permutation perm =
            align_permutation(mix.source_specs_ref, est.source_specs);
        row.tdoa_rmse_s = tdoa_rmse(sc.true_delays, est.est_delays, perm);
        row.spec_err =
            spectrogram_error(mix.source_specs_ref, est.source_specs, perm);
        const WienerMaskSet masks =
            build_masks(est.source_specs, est.est_delays, cfg.mask_noise_floor);
        const std::vector<TimeSignal> recon =
            reconstruct_sources(mix.receiver_cplx, masks, est.est_delays);
        row.delta_sdr_db =
            delta_sdr(mix.padded_sources, recon, mix.receiver_signals[0], perm);
    } else if (method == "gcc_phat") {
        const DelayMatrix est = gcc_estimate(cfg, mix);
        const Permutation perm = align_permutation_delays(sc.true_delays, est);
        row.tdoa_rmse_s = tdoa_rmse(sc.true_delays, est, perm);
    } else if (method == "delay_and_sum") {
        const DelayMatrix est = gcc_estimate(cfg, mix);
        std::vector<TimeSignal> beams;
        std::vector<PowerSpectrogram> specs;
        for (int k = 0; k < K; ++k) {
            std::vector<double> comp(est.receivers());
            for (int l = 0; l < est.receivers(); ++l) comp[l] = est.at(k, l);
            beams.push_back(delay_and_sum(mix.receiver_signals, comp));
            specs.push_back(power_spectrogram(stft(beams.back(), sc.stft)));
        }
        const Permutation perm = align_permutation(mix.source_specs_ref, specs);
        row.tdoa_rmse_s = tdoa_rmse(sc.true_delays, est, perm);
        row.spec_err = spectrogram_error(mix.source_specs_ref, specs, perm);
        row.delta_sdr_db =
            delta_sdr(mix.padded_sources, beams, mix.receiver_signals[0], perm);
    } else if (method == "oracle_mask") {
        const WienerMaskSet masks = build_masks(
            mix.source_specs_ref, sc.true_delays, cfg.mask_noise_floor);
        const std::vector<TimeSignal> recon =
            reconstruct_sources(mix.receiver_cplx, masks, sc.true_delays);
        std::vector<PowerSpectrogram> specs;
        for (const TimeSignal& r : recon)
            specs.push_back(power_spectrogram(stft(r, sc.stft)));
        const Permutation perm = align_permutation(mix.source_specs_ref, specs);
        row.tdoa_rmse_s = tdoa_rmse(sc.true_delays, sc.true_delays, perm);
        row.spec_err = spectrogram_error(mix.source_specs_ref, specs, perm);
        row.delta_sdr_db =
            delta_sdr(mix.padded_sources, recon, mix.receiver_signals[0], perm);
    } else {
        throw std::runtime_error("unknown method " + method);
    }
}

std::string sanitize_error(const char* what) {
    std::string s = what;
    if (s.size() > 80) s.resize(80);
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\t') c = ';';
    return s;
}

}  // namespace

std::vector<TrialRow> run_trial(const ExperimentConfig& cfg, double snr_db,
                                int trial) {
    if (cfg.methods.empty()) throw std::runtime_error("no methods selected");
    const Scenario sc = build_scenario(cfg, snr_db, trial);
    const MixtureData mix = simulate(sc);

    std::vector<TrialRow> rows;
    rows.reserve(cfg.methods.size());
    for (const std::string& method : cfg.methods) {
        TrialRow row;
        row.method = method;
        row.snr_db = snr_db;
        row.trial = trial;
        row.seed = sc.seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            run_method(cfg, method, mix, row);
            row.status = "ok";
        } catch (const std::exception& e) {
            row.status = "error: " + sanitize_error(e.what());
            row.tdoa_rmse_s = std::nan("");
            row.spec_err = std::nan("");
            row.delta_sdr_db = std::nan("");
        }
        if (cfg.timings) {
            const auto t1 = std::chrono::steady_clock::now();
            row.runtime_s = std::chrono::duration<double>(t1 - t0).count();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<TrialRow> run_sweep(const ExperimentConfig& cfg) {
    if (cfg.methods.empty()) throw std::runtime_error("no methods selected");
    if (cfg.snr_sweep_db.empty())
        throw std::runtime_error("snr_sweep_db must not be empty");

    struct Cell {
        double snr;
        int trial;
    };
    std::vector<Cell> cells;
    for (double snr : cfg.snr_sweep_db)
        for (int t = 0; t < cfg.trials; ++t) cells.push_back({snr, t});

    std::vector<std::vector<TrialRow>> slots(cells.size());
    const int nthreads =
        std::max(1, cfg.trial_threads == 0
                        ? static_cast<int>(std::thread::hardware_concurrency())
                        : cfg.trial_threads);
    if (nthreads == 1) {
        for (size_t i = 0; i < cells.size(); ++i)
            slots[i] = run_trial(cfg, cells[i].snr, cells[i].trial);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < cells.size();
                     i = next.fetch_add(1))
                    slots[i] = run_trial(cfg, cells[i].snr, cells[i].trial);
            });
        for (std::thread& th : pool) th.join();
    }

    std::vector<TrialRow> rows;
    for (std::vector<TrialRow>& s : slots)
        for (TrialRow& r : s) rows.push_back(std::move(r));
    return rows;
}

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg,
                                  const std::vector<TrialRow>& rows) {
    auto aggregate = [](const std::vector<double>& vals, double& mean,
                        double& sdev) {
        std::vector<double> finite;
        bool has_inf = false;
        for (double v : vals) {
            if (std::isinf(v)) has_inf = true;
            if (std::isfinite(v)) finite.push_back(v);
        }
        if (has_inf) {
            mean = std::numeric_limits<double>::infinity();
            sdev = std::nan("");
            return;
        }
        if (finite.empty()) {
            mean = std::nan("");
            sdev = std::nan("");
            return;
        }
        double s = 0.0;
        for (double v : finite) s += v;
        mean = s / finite.size();
        double ss = 0.0;
        for (double v : finite) ss += (v - mean) * (v - mean);
        sdev = finite.size() > 1 ? std::sqrt(ss / (finite.size() - 1)) : 0.0;
    };

    std::vector<SummaryRow> out;
    for (const std::string& method : cfg.methods)
        for (double snr : cfg.snr_sweep_db) {
            SummaryRow s;
            s.method = method;
            s.snr_db = snr;
            std::vector<double> tdoa, serr, sdr;
            for (const TrialRow& r : rows) {
                if (r.method != method || r.snr_db != snr) continue;
                if (r.status == "ok") {
                    ++s.trials_ok;
                    tdoa.push_back(r.tdoa_rmse_s);
                    serr.push_back(r.spec_err);
                    sdr.push_back(r.delta_sdr_db);
                } else {
                    ++s.trials_failed;
                }
            }
            aggregate(tdoa, s.tdoa_rmse_mean, s.tdoa_rmse_std);
            aggregate(serr, s.spec_err_mean, s.spec_err_std);
            aggregate(sdr, s.delta_sdr_mean, s.delta_sdr_std);
            out.push_back(std::move(s));
        }
    return out;
}

std::string results_csv(const std::vector<TrialRow>& rows) {
    std::ostringstream os;
    os << "method,snr_db,trial,seed,tdoa_rmse_s,spec_err,delta_sdr_db,runtime_s,"
          "status\n";
    for (const TrialRow& r : rows)
        os << r.method << ',' << fmt9(r.snr_db) << ',' << r.trial << ',' << r.seed
           << ',' << fmt9(r.tdoa_rmse_s) << ',' << fmt9(r.spec_err) << ','
           << fmt9(r.delta_sdr_db) << ',' << fmt9(r.runtime_s) << ',' << r.status
           << '\n';
    return os.str();
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream os;
    os << "method,snr_db,trials_ok,trials_failed,tdoa_rmse_mean,tdoa_rmse_std,"
          "spec_err_mean,spec_err_std,delta_sdr_mean,delta_sdr_std\n";
    for (const SummaryRow& r : rows)
        os << r.method << ',' << fmt9(r.snr_db) << ',' << r.trials_ok << ','
           << r.trials_failed << ',' << fmt9(r.tdoa_rmse_mean) << ','
           << fmt9(r.tdoa_rmse_std) << ',' << fmt9(r.spec_err_mean) << ','
           << fmt9(r.spec_err_std) << ',' << fmt9(r.delta_sdr_mean) << ','
           << fmt9(r.delta_sdr_std) << '\n';
    return os.str();
}

void save_spectrogram(const std::string& path, const PowerSpectrogram& spec) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    const int T = spec.frames(), F = spec.bins();
    out << "# power_spectrogram frames=" << T << " bins=" << F
        << " frame_spacing_s=" << fmt17(T > 1 ? spec.frame_spacing() : 0.0)
        << " bin_spacing_hz="
        << fmt17(F > 1 ? spec.bin_freqs[1] - spec.bin_freqs[0] : 0.0) << '\n';
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < F; ++f) {
            if (f) out << '\t';
            out << fmt17(spec.mass(t, f));
        }
        out << '\n';
    }
}

PowerSpectrogram load_spectrogram(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string header;
    std::getline(in, header);
    int T = 0, F = 0;
    double dt = 0.0, df = 0.0;
    if (std::sscanf(header.c_str(),
                    "# power_spectrogram frames=%d bins=%d frame_spacing_s=%lf "
                    "bin_spacing_hz=%lf",
                    &T, &F, &dt, &df) != 4)
        throw std::runtime_error("bad spectrogram header in " + path);
    PowerSpectrogram spec;
    spec.mass.resize(T, F);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f)
            if (!(in >> spec.mass(t, f)))
                throw std::runtime_error("truncated spectrogram in " + path);
    spec.frame_times.resize(T);
    spec.bin_freqs.resize(F);
    for (int t = 0; t < T; ++t) spec.frame_times[t] = t * dt;
    for (int f = 0; f < F; ++f) spec.bin_freqs[f] = f * df;
    return spec;
}

void save_delay_matrix(const std::string& path, const DelayMatrix& dm) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# delay_matrix sources=" << dm.sources()
        << " receivers=" << dm.receivers() << '\n';
    for (int k = 0; k < dm.sources(); ++k) {
        for (int l = 0; l < dm.receivers(); ++l) {
            if (l) out << '\t';
            out << fmt17(dm.at(k, l));
        }
        out << '\n';
    }
}

DelayMatrix load_delay_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string header;
    std::getline(in, header);
    int K = 0, L = 0;
    if (std::sscanf(header.c_str(), "# delay_matrix sources=%d receivers=%d", &K,
                    &L) != 2)
        throw std::runtime_error("bad delay matrix header in " + path);
    DelayMatrix dm = DelayMatrix::zeros(K, L);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l)
            if (!(in >> dm.delays(k, l)))
                throw std::runtime_error("truncated delay matrix in " + path);
    return dm;
}

}  // namespace otsep
