#include "fvita/schedule.hpp"

#include <cmath>

#include "fvita/errors.hpp"

namespace fvita {

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(size_t(T));
    s.alphas.resize(size_t(T));
    s.alpha_bars.resize(size_t(T));
    s.sqrt_alpha_bars.resize(size_t(T));
    s.sqrt_one_minus_alpha_bars.resize(size_t(T));

    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double beta = T == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) *
                                                double(t) / double(T - 1);
        s.betas[size_t(t)] = beta;
        s.alphas[size_t(t)] = 1.0 - beta;
        prod *= 1.0 - beta;
        s.alpha_bars[size_t(t)] = prod;
        s.sqrt_alpha_bars[size_t(t)] = std::sqrt(prod);
        s.sqrt_one_minus_alpha_bars[size_t(t)] = std::sqrt(1.0 - prod);
    }
    return s;
}

}  // namespace fvita
