#ifndef OTSEP_SEPARATOR_HPP
#define OTSEP_SEPARATOR_HPP

#include "otsep/delays.hpp"
#include "otsep/dsp.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otsep {

// Quadratic move cost under one hypothesized delay:
//   values(i, j) = ((t_j - t_i) - tau)^2,
// zero exactly where mass moves from reference time t_i to t_i + tau, so a
// positive tau means the other receiver hears the source later.
struct CostMatrix {
    Eigen::MatrixXd values;  // T x T, seconds^2
    double tau = 0.0;
    std::vector<double> frame_times;
};

CostMatrix cost_matrix(double tau, const std::vector<double>& frame_times);

// Family of T x T transport plans indexed by (source k, frequency f,
// receiver l >= 1). Receiver 0 is the reference and carries no plan.
struct TransportPlanSet {
    int num_sources = 0;
    int num_freqs = 0;
    int num_receivers = 0;
    int frames = 0;
    std::vector<Eigen::MatrixXd> store;

    Eigen::MatrixXd& plan(int k, int f, int l);
    const Eigen::MatrixXd& plan(int k, int f, int l) const;
    static TransportPlanSet zeros(int sources, int freqs, int receivers, int frames);
};

enum class InnerBackend { Entropic, ExactLp };

struct SolverConfig {
    // Entropic weight (seconds^2). epsilon_anneal is the stage schedule for
    // the outer loop; when empty it defaults to {10, 1, 0.1} x spacing^2.
    // epsilon is the single-solve weight; 0 means "final schedule value".
    double epsilon = 0.0;
    std::vector<double> epsilon_anneal;
    int inner_max_iters = 5000;
    double marginal_tol = 1e-9;  // relative total-variation tolerance
    int bcd_max_iters = 40;      // outer iterations per annealing stage
    double bcd_obj_tol = 1e-10;  // relative objective-decrease stop threshold
    double mass_floor = 1e-9;    // relative per-frequency column-mass floor
    std::optional<DelayMatrix> init_delays;  // empty -> seeded grid draw
    std::uint64_t init_seed = 0;
    InnerBackend backend = InnerBackend::Entropic;
    int threads = 1;  // concurrent per-frequency solves
    bool keep_plans = false;
    std::string debug_dump_path;  // per-frequency solver log; empty = off

    std::vector<double> schedule(double frame_spacing) const;
    double single_epsilon(double frame_spacing) const;
};

// One row per half-step of the outer loop. reg_objective (transport cost
// plus the entropic term at the stage epsilon) is the quantity guaranteed
// nonincreasing within a stage; objective is the plain transport cost.
struct TraceEntry {
    int stage = 0;
    int iteration = 0;
    char phase = 'M';  // 'M' plan update, 'T' delay update
    double epsilon = 0.0;
    double reg_objective = 0.0;
    double objective = 0.0;
    double marginal_violation = 0.0;
};

struct SeparationEstimate {
    std::vector<PowerSpectrogram> source_specs;  // per-source, reference receiver
    DelayMatrix est_delays;
    std::vector<TraceEntry> trace;
    std::optional<TransportPlanSet> plans;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;  // final plain transport cost

    std::vector<double> objective_trace() const;  // reg_objective per entry
};

// Rescales receivers 1..L-1 per frequency column to match receiver 0's
// column mass; columns whose mass falls below mass_floor (relative to the
// largest receiver-0 column) in any receiver are zeroed everywhere.
std::vector<PowerSpectrogram> normalize_masses(
    const std::vector<PowerSpectrogram>& receiver_specs, double mass_floor = 1e-9);

struct InnerSolution {
    TransportPlanSet plans;
    double objective = 0.0;
    double reg_objective = 0.0;
    double max_marginal_violation = 0.0;  // relative, worst frequency
    int iterations = 0;                   // worst frequency
};

class InnerSolveError : public std::runtime_error {
public:
    InnerSolveError(const std::string& msg, int frequency, int iterations,
                    double violation,
                    std::shared_ptr<InnerSolution> best = nullptr)
        : std::runtime_error(msg),
          frequency_(frequency),
          iterations_(iterations),
          violation_(violation),
          best_(std::move(best)) {}

    int frequency() const { return frequency_; }
    int iterations() const { return iterations_; }
    double violation() const { return violation_; }
    const InnerSolution* best() const { return best_.get(); }

private:
    int frequency_;
    int iterations_;
    double violation_;
    std::shared_ptr<InnerSolution> best_;
};

// Solves the coupled transport program for fixed delays, one independent
// problem per frequency. Inputs must already be normalized (throws
// "infeasible marginals" otherwise). The entropic backend solves at
// cfg.single_epsilon; the exact backend solves the per-frequency LP.
InnerSolution solve_inner(const std::vector<PowerSpectrogram>& receiver_specs,
                          const DelayMatrix& delays, const SolverConfig& cfg);

// Closed-form delay update: the mass-weighted mean displacement of each
// (source, receiver) plan stack, which minimizes the transport cost in tau.
// Column 0 is forced to zero. Throws "degenerate source" when a slice's
// total mass is <= mass_floor.
DelayMatrix update_delays(const TransportPlanSet& plans,
                          const std::vector<double>& frame_times,
                          double mass_floor = 0.0);

// Plain transport objective: sum over (k, f, l) of <C(tau_kl), M_kfl>.
double objective(const TransportPlanSet& plans, const DelayMatrix& delays,
                 const std::vector<double>& frame_times);

// Block-coordinate descent over (plans, delays) with epsilon annealing.
// Deterministic given cfg, including the random delay initialization.
SeparationEstimate bcd_separate(const std::vector<PowerSpectrogram>& receiver_specs,
                                int num_sources, const SolverConfig& cfg);

}  // namespace otsep

#endif
