#pragma once

#include <vector>

namespace fvita {

// DDPM beta/alpha arrays and derived coefficients.
struct NoiseSchedule {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;
    std::vector<double> sqrt_alpha_bars;
    std::vector<double> sqrt_one_minus_alpha_bars;
};

// Linear schedule; betas run from beta_start to beta_end inclusive.
NoiseSchedule build_schedule(int T, double beta_start, double beta_end);

inline NoiseSchedule default_schedule() { return build_schedule(1000, 1e-4, 0.02); }

}  // namespace fvita
