#ifndef OTSEP_DELAYS_HPP
#define OTSEP_DELAYS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace otsep {

// Per-(source, receiver) arrival-time offsets in seconds relative to the
// reference receiver (column 0, identically zero).
struct DelayMatrix {
    Eigen::MatrixXd delays;  // K x L

    int sources() const { return static_cast<int>(delays.rows()); }
    int receivers() const { return static_cast<int>(delays.cols()); }
    double at(int k, int l) const { return delays(k, l); }

    static DelayMatrix zeros(int sources, int receivers);
};

// Throws unless column 0 is zero and entries are finite with |delay| < duration.
void validate(const DelayMatrix& dm, double duration);

// Candidate delays: integer multiples of frame_spacing covering
// [-span_fraction, +span_fraction] of the duration, zero included.
std::vector<double> delay_grid(double duration, double frame_spacing,
                               double span_fraction = 0.1);

// Draws one delay per (source, receiver >= 1) uniformly from the grid,
// without replacement within a receiver column so no two sources share a
// delay there. Column 0 stays zero. Deterministic given seed.
DelayMatrix sample_delays(const std::vector<double>& grid, int sources,
                          int receivers, std::uint64_t seed);

}  // namespace otsep

#endif
