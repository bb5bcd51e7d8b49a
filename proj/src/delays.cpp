#include "otsep/delays.hpp"

#include "otsep/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace otsep {

DelayMatrix DelayMatrix::zeros(int sources, int receivers) {
    DelayMatrix dm;
    dm.delays = Eigen::MatrixXd::Zero(sources, receivers);
    return dm;
}

void validate(const DelayMatrix& dm, double duration) {
    if (dm.sources() < 1 || dm.receivers() < 1)
        throw std::invalid_argument("delay matrix is empty");
    for (int k = 0; k < dm.sources(); ++k) {
        if (dm.delays(k, 0) != 0.0)
            throw std::invalid_argument("reference receiver delays must be zero");
        for (int l = 0; l < dm.receivers(); ++l) {
            const double d = dm.delays(k, l);
            if (!std::isfinite(d) || std::abs(d) >= duration)
                throw std::invalid_argument("delay out of range");
        }
    }
}

std::vector<double> delay_grid(double duration, double frame_spacing,
                               double span_fraction) {
    if (!(frame_spacing > 0.0) || !(duration > 0.0))
        throw std::invalid_argument("delay_grid needs positive spacing and duration");
    const int steps =
        static_cast<int>(std::floor(span_fraction * duration / frame_spacing));
    std::vector<double> grid;
    grid.reserve(2 * steps + 1);
    for (int i = -steps; i <= steps; ++i) grid.push_back(i * frame_spacing);
    return grid;
}

DelayMatrix sample_delays(const std::vector<double>& grid, int sources,
                          int receivers, std::uint64_t seed) {
    if (static_cast<int>(grid.size()) < sources)
        throw std::invalid_argument("delay grid smaller than source count");
    DelayMatrix dm = DelayMatrix::zeros(sources, receivers);
    Rng rng(mix_seed(seed, 0xde1a));
    for (int l = 1; l < receivers; ++l) {
        std::vector<double> pool = grid;
        for (int k = 0; k < sources; ++k) {
            const size_t pick = rng.next_below(pool.size());
            dm.delays(k, l) = pool[pick];
            pool.erase(pool.begin() + pick);
        }
    }
    return dm;
}

}  // namespace otsep
