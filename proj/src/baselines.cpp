#include "otsep/baselines.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otsep {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Upsampled PHAT correlation; index i corresponds to lag i / (up * fs)
// with negative lags wrapped to the top half.
std::vector<double> phat_correlation(const TimeSignal& x, const TimeSignal& y,
                                     int up, int& nfft_out) {
    if (x.samples.size() != y.samples.size() || x.sample_rate != y.sample_rate)
        throw std::invalid_argument("gcc_phat needs matching signals");
    double ex = 0.0, ey = 0.0;
    for (double v : x.samples) ex += v * v;
    for (double v : y.samples) ey += v * v;
    if (ex == 0.0 || ey == 0.0) throw std::invalid_argument("degenerate signal");

    const int n = static_cast<int>(x.samples.size());
    const int nfft = next_pow2(2 * n);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> bx(nfft), by(nfft), g(nfft);
    for (int i = 0; i < nfft; ++i) {
        bx[i] = i < n ? x.samples[i] : 0.0;
        by[i] = i < n ? y.samples[i] : 0.0;
    }
    std::vector<std::complex<double>> fx(nfft), fy(nfft);
    fft.fwd(fx, bx);
    fft.fwd(fy, by);
    for (int i = 0; i < nfft; ++i) {
        const std::complex<double> c = std::conj(fx[i]) * fy[i];
        g[i] = c / std::max(std::abs(c), 1e-12);
    }

    // Zero-pad the spectrum to upsample the correlation.
    const int m = nfft * up;
    std::vector<std::complex<double>> gz(m, 0.0);
    for (int i = 0; i < nfft / 2; ++i) gz[i] = g[i];
    for (int i = nfft / 2 + 1; i < nfft; ++i) gz[m - nfft + i] = g[i];
    gz[nfft / 2] = 0.5 * g[nfft / 2];
    gz[m - nfft / 2] = 0.5 * std::conj(g[nfft / 2]);

    std::vector<std::complex<double>> corr(m);
    fft.inv(corr, gz);
    std::vector<double> out(m);
    for (int i = 0; i < m; ++i) out[i] = corr[i].real();
    nfft_out = m;
    return out;
}

double peak_to_delay(const std::vector<double>& corr, int idx, int up, double fs,
                     bool refine) {
    const int m = static_cast<int>(corr.size());
    double pos = idx;
    if (refine) {
        const double cm = corr[(idx - 1 + m) % m];
        const double c0 = corr[idx];
        const double cp = corr[(idx + 1) % m];
        const double den = cm - 2.0 * c0 + cp;
        if (den < 0.0) {
            double d = 0.5 * (cm - cp) / den;
            d = std::clamp(d, -0.5, 0.5);
            pos += d;
        }
    }
    double lag = pos <= m / 2 ? pos : pos - m;
    return lag / (up * fs);
}

}  // namespace

double gcc_phat(const TimeSignal& x, const TimeSignal& y, const GccConfig& cfg) {
    return gcc_phat_multi(x, y, cfg, 1, 0.0)[0];
}

std::vector<double> gcc_phat_multi(const TimeSignal& x, const TimeSignal& y,
                                   const GccConfig& cfg, int num_peaks,
                                   double min_separation) {
    if (num_peaks < 1) throw std::invalid_argument("need at least one peak");
    if (cfg.interp_factor < 1) throw std::invalid_argument("interp_factor >= 1");
    const int up = cfg.interp_factor;
    int m = 0;
    std::vector<double> corr = phat_correlation(x, y, up, m);
    const double fs = x.sample_rate;
    const int max_lag =
        std::min(m / 2 - 1, static_cast<int>(std::floor(cfg.max_delay * fs * up)));
    if (max_lag < 0) throw std::invalid_argument("max_delay too small");
    const int sep = static_cast<int>(std::round(min_separation * fs * up));

    std::vector<char> blocked(m, 0);
    std::vector<double> peaks;
    for (int p = 0; p < num_peaks; ++p) {
        int best = -1;
        double best_val = -std::numeric_limits<double>::infinity();
        for (int lag = -max_lag; lag <= max_lag; ++lag) {
            const int idx = lag >= 0 ? lag : m + lag;
            if (blocked[idx]) continue;
            if (corr[idx] > best_val) {
                best_val = corr[idx];
                best = idx;
            }
        }
        if (best < 0) break;  // everything blocked; fewer peaks than requested
        peaks.push_back(peak_to_delay(corr, best, up, fs, up > 1));
        for (int o = -sep; o <= sep; ++o) blocked[(best + o + m) % m] = 1;
        if (sep == 0) blocked[best] = 1;
    }
    return peaks;
}

TimeSignal delay_and_sum(const std::vector<TimeSignal>& receivers,
                         const std::vector<double>& delays) {
    if (receivers.empty()) throw std::invalid_argument("no receivers");
    if (receivers.size() != delays.size())
        throw std::invalid_argument("one delay per receiver required");
    const size_t n = receivers[0].samples.size();
    for (const TimeSignal& r : receivers)
        if (r.samples.size() != n || r.sample_rate != receivers[0].sample_rate)
            throw std::invalid_argument("receivers must share length and rate");

    TimeSignal out;
    out.sample_rate = receivers[0].sample_rate;
    out.samples.assign(n, 0.0);
    for (size_t l = 0; l < receivers.size(); ++l) {
        const TimeSignal adv = delays[l] == 0.0
                                   ? receivers[l]
                                   : fractional_delay(receivers[l], -delays[l]);
        for (size_t i = 0; i < n; ++i) out.samples[i] += adv.samples[i];
    }
    const double scale = 1.0 / receivers.size();
    for (double& v : out.samples) v *= scale;
    return out;
}

}  // namespace otsep
