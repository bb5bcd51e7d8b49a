#include "otsep/separator.hpp"

#include "otsep/lp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace otsep {

namespace {

// exp(-x) underflows to zero near x = 745; stay safely inside.
constexpr double kExpRange = 700.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_uniform(const std::vector<double>& times) {
    if (times.size() < 2)
        throw std::invalid_argument("need at least two frame times");
    const double dt = times[1] - times[0];
    if (!(dt > 0.0)) throw std::invalid_argument("frame times must increase");
    for (size_t i = 2; i < times.size(); ++i)
        if (std::abs(times[i] - times[i - 1] - dt) > 1e-9 * std::max(1.0, dt))
            throw std::invalid_argument("frame times must be uniformly spaced");
}

}  // namespace

CostMatrix cost_matrix(double tau, const std::vector<double>& frame_times) {
    check_uniform(frame_times);
    const int T = static_cast<int>(frame_times.size());
    CostMatrix cm;
    cm.tau = tau;
    cm.frame_times = frame_times;
    cm.values.resize(T, T);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            const double u = (frame_times[j] - frame_times[i]) - tau;
            cm.values(i, j) = u * u;
        }
    return cm;
}

Eigen::MatrixXd& TransportPlanSet::plan(int k, int f, int l) {
    return store[(static_cast<size_t>(f) * num_sources + k) * (num_receivers - 1) +
                 (l - 1)];
}

const Eigen::MatrixXd& TransportPlanSet::plan(int k, int f, int l) const {
    return store[(static_cast<size_t>(f) * num_sources + k) * (num_receivers - 1) +
                 (l - 1)];
}

TransportPlanSet TransportPlanSet::zeros(int sources, int freqs, int receivers,
                                         int frames) {
    TransportPlanSet ps;
    ps.num_sources = sources;
    ps.num_freqs = freqs;
    ps.num_receivers = receivers;
    ps.frames = frames;
    ps.store.assign(static_cast<size_t>(sources) * freqs * (receivers - 1),
                    Eigen::MatrixXd::Zero(frames, frames));
    return ps;
}

std::vector<double> SolverConfig::schedule(double frame_spacing) const {
    std::vector<double> s = epsilon_anneal;
    if (s.empty()) {
        const double d2 = frame_spacing * frame_spacing;
        s = {10.0 * d2, 1.0 * d2, 0.1 * d2};
    }
    for (size_t i = 0; i < s.size(); ++i) {
        if (!(s[i] > 0.0))
            throw std::invalid_argument("epsilon schedule must be positive");
        if (i > 0 && !(s[i] < s[i - 1]))
            throw std::invalid_argument("epsilon schedule must be decreasing");
    }
    return s;
}

double SolverConfig::single_epsilon(double frame_spacing) const {
    if (epsilon > 0.0) return epsilon;
    return schedule(frame_spacing).back();
}

std::vector<double> SeparationEstimate::objective_trace() const {
    std::vector<double> v;
    v.reserve(trace.size());
    for (const TraceEntry& e : trace) v.push_back(e.reg_objective);
    return v;
}

std::vector<PowerSpectrogram> normalize_masses(
    const std::vector<PowerSpectrogram>& receiver_specs, double mass_floor) {
    if (receiver_specs.size() < 2)
        throw std::invalid_argument("normalize_masses needs at least 2 receivers");
    const int T = receiver_specs[0].frames();
    const int F = receiver_specs[0].bins();
    for (const PowerSpectrogram& s : receiver_specs)
        if (s.frames() != T || s.bins() != F)
            throw std::invalid_argument("receiver spectrograms must share shape");

    std::vector<PowerSpectrogram> out = receiver_specs;
    double max_col = 0.0;
    for (int f = 0; f < F; ++f)
        max_col = std::max(max_col, out[0].mass.col(f).sum());
    const double thr = mass_floor * max_col;

    for (int f = 0; f < F; ++f) {
        const double m0 = out[0].mass.col(f).sum();
        bool drop = m0 <= thr;
        for (size_t l = 1; !drop && l < out.size(); ++l)
            if (out[l].mass.col(f).sum() <= thr) drop = true;
        if (drop) {
            for (PowerSpectrogram& s : out) s.mass.col(f).setZero();
            continue;
        }
        for (size_t l = 1; l < out.size(); ++l) {
            const double ml = out[l].mass.col(f).sum();
            out[l].mass.col(f) *= m0 / ml;
        }
    }
    return out;
}

DelayMatrix update_delays(const TransportPlanSet& plans,
                          const std::vector<double>& frame_times,
                          double mass_floor) {
    if (static_cast<int>(frame_times.size()) != plans.frames)
        throw std::invalid_argument("frame time count does not match plans");
    const int K = plans.num_sources, L = plans.num_receivers, T = plans.frames;
    DelayMatrix dm = DelayMatrix::zeros(K, L);
    for (int k = 0; k < K; ++k)
        for (int l = 1; l < L; ++l) {
            double num = 0.0, den = 0.0;
            for (int f = 0; f < plans.num_freqs; ++f) {
                const Eigen::MatrixXd& M = plans.plan(k, f, l);
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j < T; ++j) {
                        const double m = M(i, j);
                        if (m == 0.0) continue;
                        num += m * (frame_times[j] - frame_times[i]);
                        den += m;
                    }
            }
            if (!(den > mass_floor)) throw std::runtime_error("degenerate source");
            dm.delays(k, l) = num / den;
        }
    return dm;
}

double objective(const TransportPlanSet& plans, const DelayMatrix& delays,
                 const std::vector<double>& frame_times) {
    if (delays.sources() != plans.num_sources ||
        delays.receivers() != plans.num_receivers)
        throw std::invalid_argument("delay matrix does not match plans");
    const int T = plans.frames;
    double total = 0.0;
    for (int k = 0; k < plans.num_sources; ++k)
        for (int l = 1; l < plans.num_receivers; ++l) {
            const double tau = delays.at(k, l);
            for (int f = 0; f < plans.num_freqs; ++f) {
                const Eigen::MatrixXd& M = plans.plan(k, f, l);
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j < T; ++j) {
                        const double m = M(i, j);
                        if (m == 0.0) continue;
                        const double u = (frame_times[j] - frame_times[i]) - tau;
                        total += m * u * u;
                    }
            }
        }
    return total;
}

// ---------------------------------------------------------------------------
// Inner solver
// ---------------------------------------------------------------------------

namespace {

// Gibbs kernel of one (source, receiver) pair, banded over displacements
// d = j - i. Entries outside the band underflow to zero anyway.
struct BandKernel {
    double tau = 0.0, eps = 1.0, spacing = 1.0;
    int lo = 0, hi = -1;
    std::vector<double> taps;

    double tap(int d) const { return taps[d - lo]; }
    double cost(int d) const {
        const double u = d * spacing - tau;
        return u * u;
    }
};

BandKernel make_kernel(double tau, double eps, int T, double spacing) {
    BandKernel k;
    k.tau = tau;
    k.eps = eps;
    k.spacing = spacing;
    const double w = std::sqrt(kExpRange * eps);
    int lo = static_cast<int>(std::ceil((tau - w) / spacing));
    int hi = static_cast<int>(std::floor((tau + w) / spacing));
    const int dn = std::clamp(static_cast<int>(std::lround(tau / spacing)),
                              -(T - 1), T - 1);
    lo = std::min(lo, dn);
    hi = std::max(hi, dn);
    k.lo = std::max(lo, -(T - 1));
    k.hi = std::min(hi, T - 1);
    k.taps.resize(k.hi - k.lo + 1);
    for (int d = k.lo; d <= k.hi; ++d) k.taps[d - k.lo] = std::exp(-k.cost(d) / eps);
    return k;
}

struct FreqProblem {
    bool active = false;
    Eigen::VectorXd a;               // reference column
    std::vector<Eigen::VectorXd> b;  // one per receiver l >= 1
    double mass = 0.0;
};

struct FreqState {
    std::vector<Eigen::VectorXd> logu;  // [k * R + l], length T
    std::vector<Eigen::VectorXd> logv;  // [l], length T
    Eigen::MatrixXd s;                  // T x K consensus row marginals
};

struct FreqOutcome {
    bool ok = true;         // scaled path succeeded (or log path ran)
    bool converged = false;
    int iters = 0;
    double violation = 0.0;  // relative column-marginal TV
};

struct PlanStats {
    double mass = 0.0;    // sum M
    double disp = 0.0;    // sum M * (t_j - t_i)
    double sqdisp = 0.0;  // sum M * (t_j - t_i)^2
    double obj = 0.0;     // sum M * cost(tau)
    double slogu = 0.0;   // sum_i rowsum_i * logu_i
    double mlogv = 0.0;   // sum_j colsum_j * logv_j
};

double lse_finish(double m, double s) {
    return m == -kInf ? -kInf : m + std::log(s);
}

class InnerCore {
public:
    InnerCore(const std::vector<PowerSpectrogram>& specs, int num_sources)
        : K_(num_sources), L_(static_cast<int>(specs.size())) {
        T_ = specs[0].frames();
        F_ = specs[0].bins();
        spacing_ = specs[0].frame_spacing();
        frame_times_ = specs[0].frame_times;
        R_ = L_ - 1;
        problems_.resize(F_);
        states_.resize(F_);
        for (int f = 0; f < F_; ++f) {
            FreqProblem& p = problems_[f];
            p.a = specs[0].mass.col(f);
            p.mass = p.a.sum();
            p.active = p.mass > 0.0;
            p.b.resize(R_);
            for (int l = 0; l < R_; ++l) p.b[l] = specs[l + 1].mass.col(f);
            if (!p.active) continue;
            FreqState& st = states_[f];
            st.logu.assign(K_ * R_, Eigen::VectorXd::Zero(T_));
            st.logv.assign(R_, Eigen::VectorXd::Zero(T_));
            st.s = Eigen::MatrixXd::Zero(T_, K_);
            for (int kl = 0; kl < K_ * R_; ++kl)
                for (int i = 0; i < T_; ++i)
                    if (p.a(i) == 0.0) st.logu[kl](i) = -kInf;
            for (int l = 0; l < R_; ++l)
                for (int j = 0; j < T_; ++j)
                    if (p.b[l](j) == 0.0) st.logv[l](j) = -kInf;
        }
    }

    int frames() const { return T_; }
    int freqs() const { return F_; }
    double spacing() const { return spacing_; }
    const std::vector<double>& frame_times() const { return frame_times_; }
    bool active(int f) const { return problems_[f].active; }
    const Eigen::MatrixXd& consensus(int f) const { return states_[f].s; }
    double total_mass() const {
        double m = 0.0;
        for (const FreqProblem& p : problems_) m += p.mass;
        return m;
    }

    void set_delays(const DelayMatrix& delays, double eps) {
        eps_ = eps;
        kernels_.resize(K_ * R_);
        for (int k = 0; k < K_; ++k)
            for (int l = 0; l < R_; ++l)
                kernels_[k * R_ + l] =
                    make_kernel(delays.at(k, l + 1), eps, T_, spacing_);
    }

    // Rescale stored potentials when the entropic weight changes.
    void rescale_states(double ratio) {
        for (int f = 0; f < F_; ++f) {
            if (!problems_[f].active) continue;
            for (Eigen::VectorXd& lu : states_[f].logu)
                for (int i = 0; i < T_; ++i)
                    if (lu(i) != -kInf) lu(i) *= ratio;
            for (Eigen::VectorXd& lv : states_[f].logv)
                for (int j = 0; j < T_; ++j)
                    if (lv(j) != -kInf) lv(j) *= ratio;
        }
    }

    FreqOutcome solve_freq(int f, double tol, int max_iters);
    void run(double tol, int max_iters, int threads,
             std::vector<FreqOutcome>& outcomes);

    std::vector<PlanStats> stats_freq(int f) const;
    void materialize_freq(int f, TransportPlanSet& plans) const;

private:
    bool scaled_pass(int f, double tol, int max_iters, FreqOutcome& out);
    void log_pass(int f, double tol, int max_iters, FreqOutcome& out);

    int K_, L_, R_, T_ = 0, F_ = 0;
    double spacing_ = 0.0, eps_ = 0.0;
    std::vector<double> frame_times_;
    std::vector<BandKernel> kernels_;  // [k * R + l]
    std::vector<FreqProblem> problems_;
    std::vector<FreqState> states_;
};

bool InnerCore::scaled_pass(int f, double tol, int max_iters, FreqOutcome& out) {
    const FreqProblem& p = problems_[f];
    FreqState& st = states_[f];
    const int KR = K_ * R_;

    std::vector<Eigen::VectorXd> u(KR), r(KR), denom(R_), v(R_);
    for (int kl = 0; kl < KR; ++kl) u[kl] = st.logu[kl].array().exp();
    for (int l = 0; l < R_; ++l) v[l] = st.logv[l].array().exp();
    for (int kl = 0; kl < KR; ++kl) r[kl].resize(T_);
    Eigen::MatrixXd S = st.s;
    Eigen::VectorXd G(T_);

    auto accumulate_denom = [&]() {
        for (int l = 0; l < R_; ++l) {
            denom[l].setZero(T_);
            for (int k = 0; k < K_; ++k) {
                const BandKernel& ker = kernels_[k * R_ + l];
                const Eigen::VectorXd& uk = u[k * R_ + l];
                for (int i = 0; i < T_; ++i) {
                    const double ui = uk(i);
                    if (ui == 0.0) continue;
                    const int dlo = std::max(ker.lo, -i);
                    const int dhi = std::min(ker.hi, T_ - 1 - i);
                    for (int d = dlo; d <= dhi; ++d)
                        denom[l](i + d) += ker.tap(d) * ui;
                }
            }
        }
    };

    bool wrote_s = false;
    accumulate_denom();
    for (out.iters = 1; out.iters <= max_iters; ++out.iters) {
        // Column-marginal violation of the current plans.
        double viol = 0.0;
        for (int l = 0; l < R_; ++l) {
            double tv = 0.0;
            for (int j = 0; j < T_; ++j) tv += std::abs(p.b[l](j) - v[l](j) * denom[l](j));
            viol = std::max(viol, tv);
        }
        if (!std::isfinite(viol)) return false;
        out.violation = viol / p.mass;
        if (out.violation <= tol) {
            out.converged = true;
            break;
        }

        for (int l = 0; l < R_; ++l)
            for (int j = 0; j < T_; ++j) {
                const double bj = p.b[l](j);
                if (bj > 0.0) {
                    const double dj = denom[l](j);
                    if (!(dj > 0.0) || !std::isfinite(dj)) return false;
                    v[l](j) = bj / dj;
                } else {
                    v[l](j) = 0.0;
                }
            }

        for (int kl = 0; kl < KR; ++kl) {
            const BandKernel& ker = kernels_[kl];
            const Eigen::VectorXd& vl = v[kl % R_];
            for (int i = 0; i < T_; ++i) {
                double acc = 0.0;
                const int dlo = std::max(ker.lo, -i);
                const int dhi = std::min(ker.hi, T_ - 1 - i);
                for (int d = dlo; d <= dhi; ++d) acc += ker.tap(d) * vl(i + d);
                r[kl](i) = acc;
            }
        }

        for (int i = 0; i < T_; ++i) {
            const double ai = p.a(i);
            if (ai == 0.0) continue;
            double gsum = 0.0;
            for (int k = 0; k < K_; ++k) {
                double g = 1.0;
                for (int l = 0; l < R_; ++l) g *= u[k * R_ + l](i) * r[k * R_ + l](i);
                g = R_ == 1 ? g : std::pow(g, 1.0 / R_);
                G(k) = g;
                gsum += g;
            }
            if (!(gsum > 0.0) || !std::isfinite(gsum)) return false;
            for (int k = 0; k < K_; ++k) S(i, k) = ai * G(k) / gsum;
        }
        for (int k = 0; k < K_; ++k)
            for (int l = 0; l < R_; ++l) {
                Eigen::VectorXd& ukl = u[k * R_ + l];
                const Eigen::VectorXd& rkl = r[k * R_ + l];
                for (int i = 0; i < T_; ++i) {
                    if (p.a(i) > 0.0 && rkl(i) > 0.0)
                        ukl(i) = S(i, k) / rkl(i);
                    else
                        ukl(i) = 0.0;
                    if (!std::isfinite(ukl(i))) return false;
                }
            }
        wrote_s = true;
        accumulate_denom();
    }
    out.iters = std::min(out.iters, max_iters);

    for (int kl = 0; kl < KR; ++kl)
        st.logu[kl] = u[kl].array().log();
    for (int l = 0; l < R_; ++l) st.logv[l] = v[l].array().log();
    if (wrote_s) st.s = S;
    out.ok = true;
    return true;
}

void InnerCore::log_pass(int f, double tol, int max_iters, FreqOutcome& out) {
    const FreqProblem& p = problems_[f];
    FreqState& st = states_[f];
    const int KR = K_ * R_;
    const double ieps = 1.0 / eps_;

    auto cost = [&](int kl, int i, int j) {
        const double u = (j - i) * spacing_ - kernels_[kl].tau;
        return u * u;
    };

    std::vector<Eigen::VectorXd> lden(R_, Eigen::VectorXd::Constant(T_, -kInf));
    std::vector<Eigen::VectorXd> lr(KR, Eigen::VectorXd::Constant(T_, -kInf));
    Eigen::VectorXd lg(K_);

    auto accumulate_lden = [&]() {
        for (int l = 0; l < R_; ++l)
            for (int j = 0; j < T_; ++j) {
                if (p.b[l](j) == 0.0) {
                    lden[l](j) = -kInf;
                    continue;
                }
                double m = -kInf;
                for (int k = 0; k < K_; ++k) {
                    const Eigen::VectorXd& lu = st.logu[k * R_ + l];
                    for (int i = 0; i < T_; ++i) {
                        if (lu(i) == -kInf) continue;
                        m = std::max(m, lu(i) - cost(k * R_ + l, i, j) * ieps);
                    }
                }
                if (m == -kInf) {
                    lden[l](j) = -kInf;
                    continue;
                }
                double s = 0.0;
                for (int k = 0; k < K_; ++k) {
                    const Eigen::VectorXd& lu = st.logu[k * R_ + l];
                    for (int i = 0; i < T_; ++i) {
                        if (lu(i) == -kInf) continue;
                        s += std::exp(lu(i) - cost(k * R_ + l, i, j) * ieps - m);
                    }
                }
                lden[l](j) = lse_finish(m, s);
            }
    };

    accumulate_lden();
    for (out.iters = 1; out.iters <= max_iters; ++out.iters) {
        double viol = 0.0;
        for (int l = 0; l < R_; ++l) {
            double tv = 0.0;
            for (int j = 0; j < T_; ++j) {
                const double bj = p.b[l](j);
                const double cur = (lden[l](j) == -kInf || st.logv[l](j) == -kInf)
                                       ? 0.0
                                       : std::exp(lden[l](j) + st.logv[l](j));
                tv += std::abs(bj - cur);
            }
            viol = std::max(viol, tv);
        }
        out.violation = viol / p.mass;
        if (out.violation <= tol) {
            out.converged = true;
            break;
        }

        for (int l = 0; l < R_; ++l)
            for (int j = 0; j < T_; ++j)
                st.logv[l](j) = p.b[l](j) > 0.0 && lden[l](j) != -kInf
                                    ? std::log(p.b[l](j)) - lden[l](j)
                                    : -kInf;

        for (int kl = 0; kl < KR; ++kl) {
            const Eigen::VectorXd& lv = st.logv[kl % R_];
            for (int i = 0; i < T_; ++i) {
                if (p.a(i) == 0.0) {
                    lr[kl](i) = -kInf;
                    continue;
                }
                double m = -kInf;
                for (int j = 0; j < T_; ++j)
                    if (lv(j) != -kInf)
                        m = std::max(m, lv(j) - cost(kl, i, j) * ieps);
                if (m == -kInf) {
                    lr[kl](i) = -kInf;
                    continue;
                }
                double s = 0.0;
                for (int j = 0; j < T_; ++j)
                    if (lv(j) != -kInf)
                        s += std::exp(lv(j) - cost(kl, i, j) * ieps - m);
                lr[kl](i) = lse_finish(m, s);
            }
        }

        for (int i = 0; i < T_; ++i) {
            const double ai = p.a(i);
            if (ai == 0.0) continue;
            double gm = -kInf;
            for (int k = 0; k < K_; ++k) {
                double acc = 0.0;
                for (int l = 0; l < R_; ++l) {
                    const int kl = k * R_ + l;
                    const double lq = st.logu[kl](i) == -kInf || lr[kl](i) == -kInf
                                          ? -kInf
                                          : st.logu[kl](i) + lr[kl](i);
                    if (lq == -kInf) {
                        acc = -kInf;
                        break;
                    }
                    acc += lq;
                }
                lg(k) = acc == -kInf ? -kInf : acc / R_;
                gm = std::max(gm, lg(k));
            }
            if (gm == -kInf) {
                // No source can currently reach this bin; leave potentials.
                continue;
            }
            double gs = 0.0;
            for (int k = 0; k < K_; ++k)
                if (lg(k) != -kInf) gs += std::exp(lg(k) - gm);
            const double lsum = lse_finish(gm, gs);
            for (int k = 0; k < K_; ++k) {
                const double ls =
                    lg(k) == -kInf ? -kInf : std::log(ai) + lg(k) - lsum;
                st.s(i, k) = ls == -kInf ? 0.0 : std::exp(ls);
                for (int l = 0; l < R_; ++l) {
                    const int kl = k * R_ + l;
                    st.logu[kl](i) =
                        ls == -kInf || lr[kl](i) == -kInf ? -kInf : ls - lr[kl](i);
                }
            }
        }
        accumulate_lden();
    }
    out.iters = std::min(out.iters, max_iters);
    out.ok = true;
}

FreqOutcome InnerCore::solve_freq(int f, double tol, int max_iters) {
    FreqOutcome out;
    if (!problems_[f].active) {
        out.converged = true;
        return out;
    }
    FreqState backup = states_[f];
    if (scaled_pass(f, tol, max_iters, out)) return out;
    states_[f] = std::move(backup);
    out = FreqOutcome{};
    log_pass(f, tol, max_iters, out);
    return out;
}

void InnerCore::run(double tol, int max_iters, int threads,
                    std::vector<FreqOutcome>& outcomes) {
    outcomes.assign(F_, FreqOutcome{});
    const int nthreads = std::max(1, threads);
    if (nthreads == 1) {
        for (int f = 0; f < F_; ++f) outcomes[f] = solve_freq(f, tol, max_iters);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < nthreads; ++t)
        pool.emplace_back([&]() {
            for (int f = next.fetch_add(1); f < F_; f = next.fetch_add(1))
                outcomes[f] = solve_freq(f, tol, max_iters);
        });
    for (std::thread& t : pool) t.join();
}

std::vector<PlanStats> InnerCore::stats_freq(int f) const {
    std::vector<PlanStats> stats(K_ * R_);
    const FreqProblem& p = problems_[f];
    if (!p.active) return stats;
    const FreqState& st = states_[f];
    const double ieps = 1.0 / eps_;
    for (int kl = 0; kl < K_ * R_; ++kl) {
        const BandKernel& ker = kernels_[kl];
        const Eigen::VectorXd& lu = st.logu[kl];
        const Eigen::VectorXd& lv = st.logv[kl % R_];
        PlanStats& ps = stats[kl];
        Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(T_);
        Eigen::VectorXd colsum = Eigen::VectorXd::Zero(T_);
        for (int i = 0; i < T_; ++i) {
            if (lu(i) == -kInf) continue;
            const int dlo = std::max(ker.lo, -i);
            const int dhi = std::min(ker.hi, T_ - 1 - i);
            for (int d = dlo; d <= dhi; ++d) {
                const int j = i + d;
                if (lv(j) == -kInf) continue;
                const double c = ker.cost(d);
                const double m = std::exp(lu(i) - c * ieps + lv(j));
                if (m == 0.0) continue;
                const double dt = d * spacing_;
                ps.mass += m;
                ps.disp += m * dt;
                ps.sqdisp += m * dt * dt;
                ps.obj += m * c;
                rowsum(i) += m;
                colsum(j) += m;
            }
        }
        for (int i = 0; i < T_; ++i)
            if (rowsum(i) > 0.0) ps.slogu += rowsum(i) * lu(i);
        for (int j = 0; j < T_; ++j)
            if (colsum(j) > 0.0) ps.mlogv += colsum(j) * lv(j);
    }
    return stats;
}

void InnerCore::materialize_freq(int f, TransportPlanSet& plans) const {
    const FreqProblem& p = problems_[f];
    if (!p.active) return;
    const FreqState& st = states_[f];
    const double ieps = 1.0 / eps_;
    for (int k = 0; k < K_; ++k)
        for (int l = 0; l < R_; ++l) {
            const int kl = k * R_ + l;
            const BandKernel& ker = kernels_[kl];
            const Eigen::VectorXd& lu = st.logu[kl];
            const Eigen::VectorXd& lv = st.logv[l];
            Eigen::MatrixXd& M = plans.plan(k, f, l + 1);
            for (int i = 0; i < T_; ++i) {
                if (lu(i) == -kInf) continue;
                const int dlo = std::max(ker.lo, -i);
                const int dhi = std::min(ker.hi, T_ - 1 - i);
                for (int d = dlo; d <= dhi; ++d) {
                    const int j = i + d;
                    if (lv(j) == -kInf) continue;
                    M(i, j) = std::exp(lu(i) - ker.cost(d) * ieps + lv(j));
                }
            }
        }
}

void check_normalized(const std::vector<PowerSpectrogram>& specs, double tol) {
    const int F = specs[0].bins();
    for (int f = 0; f < F; ++f) {
        const double m0 = specs[0].mass.col(f).sum();
        for (size_t l = 1; l < specs.size(); ++l) {
            const double ml = specs[l].mass.col(f).sum();
            if (std::abs(ml - m0) > tol * std::max(m0, 1e-300))
                throw std::invalid_argument("infeasible marginals");
        }
    }
}

}  // namespace

InnerSolution solve_inner(const std::vector<PowerSpectrogram>& receiver_specs,
                          const DelayMatrix& delays, const SolverConfig& cfg) {
    if (receiver_specs.size() < 2)
        throw std::invalid_argument("solve_inner needs at least 2 receivers");
    if (delays.receivers() != static_cast<int>(receiver_specs.size()))
        throw std::invalid_argument("delay matrix receiver count mismatch");
    check_normalized(receiver_specs, std::max(cfg.marginal_tol, 1e-12));

    const int K = delays.sources();
    const int T = receiver_specs[0].frames();
    const int F = receiver_specs[0].bins();
    const int L = static_cast<int>(receiver_specs.size());

    InnerSolution sol;
    sol.plans = TransportPlanSet::zeros(K, F, L, T);

    if (cfg.backend == InnerBackend::ExactLp) {
        const std::vector<double>& times = receiver_specs[0].frame_times;
        std::vector<Eigen::MatrixXd> costs(K * (L - 1));
        for (int k = 0; k < K; ++k)
            for (int l = 1; l < L; ++l)
                costs[k * (L - 1) + l - 1] = cost_matrix(delays.at(k, l), times).values;
        for (int f = 0; f < F; ++f) {
            const Eigen::VectorXd a = receiver_specs[0].mass.col(f);
            if (a.sum() <= 0.0) continue;
            std::vector<Eigen::VectorXd> b(L - 1);
            for (int l = 1; l < L; ++l) b[l - 1] = receiver_specs[l].mass.col(f);
            CoupledPlans cp = solve_coupled_transport(costs, a, b, K);
            for (int k = 0; k < K; ++k)
                for (int l = 1; l < L; ++l)
                    sol.plans.plan(k, f, l) = cp.plans[k * (L - 1) + l - 1];
            sol.objective += cp.objective;
        }
        sol.reg_objective = sol.objective;
        return sol;
    }

    InnerCore core(receiver_specs, K);
    core.set_delays(delays, cfg.single_epsilon(core.spacing()));
    std::vector<FreqOutcome> outcomes;
    core.run(cfg.marginal_tol, cfg.inner_max_iters, cfg.threads, outcomes);

    double reg_entropy = 0.0;
    for (int f = 0; f < F; ++f) {
        if (!core.active(f)) continue;
        sol.max_marginal_violation =
            std::max(sol.max_marginal_violation, outcomes[f].violation);
        sol.iterations = std::max(sol.iterations, outcomes[f].iters);
        for (const PlanStats& ps : core.stats_freq(f)) {
            sol.objective += ps.obj;
            reg_entropy += ps.slogu + ps.mlogv - ps.mass;
        }
        core.materialize_freq(f, sol.plans);
    }
    sol.reg_objective = cfg.single_epsilon(core.spacing()) * reg_entropy;

    for (int f = 0; f < F; ++f) {
        if (!core.active(f)) continue;
        if (!outcomes[f].converged) {
            auto best = std::make_shared<InnerSolution>(std::move(sol));
            std::ostringstream msg;
            msg << "inner solve did not converge: frequency " << f << ", violation "
                << outcomes[f].violation << " after " << outcomes[f].iters
                << " iterations";
            throw InnerSolveError(msg.str(), f, outcomes[f].iters,
                                  outcomes[f].violation, best);
        }
    }
    return sol;
}

SeparationEstimate bcd_separate(const std::vector<PowerSpectrogram>& receiver_specs,
                                int num_sources, const SolverConfig& cfg) {
    if (num_sources < 1) throw std::invalid_argument("need at least one source");
    if (receiver_specs.size() < 2)
        throw std::invalid_argument("need at least two receivers");

    const std::vector<PowerSpectrogram> specs =
        normalize_masses(receiver_specs, cfg.mass_floor);
    const int K = num_sources;
    const int L = static_cast<int>(specs.size());
    const int T = specs[0].frames();
    const int F = specs[0].bins();
    const double spacing = specs[0].frame_spacing();
    const std::vector<double>& times = specs[0].frame_times;

    DelayMatrix delays;
    if (cfg.init_delays) {
        delays = *cfg.init_delays;
        if (delays.sources() != K || delays.receivers() != L)
            throw std::invalid_argument("init_delays shape mismatch");
    } else {
        const std::vector<double> grid = delay_grid(T * spacing, spacing);
        delays = sample_delays(grid, K, L, cfg.init_seed);
    }

    std::ofstream dump;
    if (!cfg.debug_dump_path.empty()) {
        dump.open(cfg.debug_dump_path);
        dump << "stage\titeration\tfrequency\tsinkhorn_iters\tobjective\t"
                "marginal_violation\n";
    }

    if (cfg.backend == InnerBackend::ExactLp) {
        // Exact backend: run the same outer loop on the unregularized
        // program; intended for small cross-validation instances.
        SeparationEstimate est;
        SolverConfig inner = cfg;
        int iter_total = 0;
        double prev = kInf;
        InnerSolution sol;
        bool converged = false;
        for (int it = 1; it <= cfg.bcd_max_iters; ++it) {
            sol = solve_inner(specs, delays, inner);
            ++iter_total;
            est.trace.push_back({0, it, 'M', 0.0, sol.objective, sol.objective,
                                 sol.max_marginal_violation});
            DelayMatrix next = update_delays(sol.plans, times);
            const double obj_t = objective(sol.plans, next, times);
            est.trace.push_back(
                {0, it, 'T', 0.0, obj_t, obj_t, sol.max_marginal_violation});
            delays = next;
            if (prev - obj_t <= cfg.bcd_obj_tol * std::max(1.0, std::abs(prev))) {
                converged = true;
                break;
            }
            prev = obj_t;
        }
        est.est_delays = delays;
        est.converged = converged;
        est.iterations = iter_total;
        est.objective = est.trace.back().objective;
        est.source_specs.assign(K, PowerSpectrogram{});
        for (int k = 0; k < K; ++k) {
            PowerSpectrogram& s = est.source_specs[k];
            s.mass = Eigen::MatrixXd::Zero(T, F);
            s.frame_times = times;
            s.bin_freqs = specs[0].bin_freqs;
            for (int f = 0; f < F; ++f) {
                Eigen::VectorXd rows = sol.plans.plan(k, f, 1).rowwise().sum();
                s.mass.col(f) = rows;
            }
        }
        if (cfg.keep_plans) est.plans = std::move(sol.plans);
        return est;
    }

    InnerCore core(specs, K);
    const std::vector<double> schedule = cfg.schedule(spacing);
    SeparationEstimate est;

    std::vector<FreqOutcome> outcomes;
    std::vector<PlanStats> totals(K * (L - 1));
    int iter_total = 0;
    bool converged = false;
    double last_eps = 0.0;

    for (size_t stage = 0; stage < schedule.size(); ++stage) {
        const double eps = schedule[stage];
        if (stage > 0) core.rescale_states(last_eps / eps);
        last_eps = eps;
        double prev_reg = kInf;
        converged = false;

        for (int it = 1; it <= cfg.bcd_max_iters; ++it) {
            core.set_delays(delays, eps);
            core.run(cfg.marginal_tol, cfg.inner_max_iters, cfg.threads, outcomes);
            ++iter_total;

            std::fill(totals.begin(), totals.end(), PlanStats{});
            double viol = 0.0;
            int worst_f = -1, worst_iters = 0;
            bool all_ok = true;
            for (int f = 0; f < F; ++f) {
                if (!core.active(f)) continue;
                if (!outcomes[f].converged && worst_f < 0) {
                    all_ok = false;
                    worst_f = f;
                    worst_iters = outcomes[f].iters;
                }
                viol = std::max(viol, outcomes[f].violation);
                const std::vector<PlanStats> stats = core.stats_freq(f);
                double obj_f = 0.0;
                for (size_t kl = 0; kl < stats.size(); ++kl) {
                    totals[kl].mass += stats[kl].mass;
                    totals[kl].disp += stats[kl].disp;
                    totals[kl].sqdisp += stats[kl].sqdisp;
                    totals[kl].obj += stats[kl].obj;
                    totals[kl].slogu += stats[kl].slogu;
                    totals[kl].mlogv += stats[kl].mlogv;
                    obj_f += stats[kl].obj;
                }
                if (dump.is_open())
                    dump << stage << '\t' << it << '\t' << f << '\t'
                         << outcomes[f].iters << '\t' << obj_f << '\t'
                         << outcomes[f].violation << '\n';
            }
            if (!all_ok) {
                std::ostringstream msg;
                msg << "bcd stage " << stage << " iteration " << it
                    << ": inner solve did not converge at frequency " << worst_f;
                throw InnerSolveError(msg.str(), worst_f, worst_iters, viol);
            }

            double obj_m = 0.0, ent = 0.0;
            for (const PlanStats& ps : totals) {
                obj_m += ps.obj;
                ent += ps.slogu + ps.mlogv - ps.mass;
            }
            const double reg_m = eps * ent;
            est.trace.push_back({static_cast<int>(stage), it, 'M', eps, reg_m,
                                 obj_m, viol});

            // Analytic delay step from the same plan statistics.
            DelayMatrix next = DelayMatrix::zeros(K, L);
            for (int k = 0; k < K; ++k)
                for (int l = 1; l < L; ++l) {
                    const PlanStats& ps = totals[k * (L - 1) + l - 1];
                    if (!(ps.mass > 0.0))
                        throw std::runtime_error("degenerate source");
                    next.delays(k, l) = ps.disp / ps.mass;
                }
            double obj_t = 0.0;
            for (int k = 0; k < K; ++k)
                for (int l = 1; l < L; ++l) {
                    const PlanStats& ps = totals[k * (L - 1) + l - 1];
                    const double tau = next.delays(k, l);
                    obj_t += ps.sqdisp - 2.0 * tau * ps.disp + tau * tau * ps.mass;
                }
            const double reg_t = reg_m - obj_m + obj_t;
            est.trace.push_back({static_cast<int>(stage), it, 'T', eps, reg_t,
                                 obj_t, viol});
            delays = next;

            if (prev_reg - reg_t <=
                cfg.bcd_obj_tol * std::max(1.0, std::abs(prev_reg))) {
                converged = true;
                break;
            }
            prev_reg = reg_t;
        }
    }

    // One more inner solve at the final delays so the assembled source
    // spectrograms and reported objective match the returned delay estimates.
    core.set_delays(delays, schedule.back());
    core.run(cfg.marginal_tol, cfg.inner_max_iters, cfg.threads, outcomes);
    double obj_final = 0.0;
    for (int f = 0; f < F; ++f) {
        if (!core.active(f)) continue;
        if (!outcomes[f].converged)
            throw InnerSolveError("final inner solve did not converge", f,
                                  outcomes[f].iters, outcomes[f].violation);
        for (const PlanStats& ps : core.stats_freq(f)) obj_final += ps.obj;
    }

    est.est_delays = delays;
    est.converged = converged;
    est.iterations = iter_total;
    est.objective = obj_final;

    est.source_specs.assign(K, PowerSpectrogram{});
    for (int k = 0; k < K; ++k) {
        PowerSpectrogram& s = est.source_specs[k];
        s.mass = Eigen::MatrixXd::Zero(T, F);
        s.frame_times = times;
        s.bin_freqs = specs[0].bin_freqs;
        for (int f = 0; f < F; ++f)
            if (core.active(f)) s.mass.col(f) = core.consensus(f).col(k);
    }
    if (cfg.keep_plans) {
        TransportPlanSet plans = TransportPlanSet::zeros(K, F, L, T);
        for (int f = 0; f < F; ++f)
            if (core.active(f)) core.materialize_freq(f, plans);
        est.plans = std::move(plans);
    }
    return est;
}

}  // namespace otsep
