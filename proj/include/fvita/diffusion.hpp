#pragma once

#include <cstdint>
#include <vector>

#include "fvita/rng.hpp"
#include "fvita/schedule.hpp"
#include "fvita/tensor.hpp"

namespace fvita {

// Forward process: z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps.
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps,
                const NoiseSchedule& schedule);

Tensor gaussian_tensor(const std::vector<int>& shape, Rng& rng);

// Evenly spaced DDIM timestep subset, ascending, includes 0 and T-1.
std::vector<int> ddim_timesteps(int T, int steps);

// Per-step stochastic draws for the training loss, separated out so tests
// (and gradient checks) can fix them.
struct StepDraws {
    std::vector<int> t;
    std::vector<Tensor> eps;
    std::vector<int> template_id;
    std::vector<uint8_t> drop_objects;
    std::vector<uint8_t> drop_instruction;
};

StepDraws sample_step_draws(Rng& rng, int batch,
                            const std::vector<int>& latent_shape, int T,
                            int n_templates, double cfg_drop_prob);

}  // namespace fvita
