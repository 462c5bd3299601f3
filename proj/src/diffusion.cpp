#include "fvita/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "fvita/errors.hpp"

namespace fvita {

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps,
                const NoiseSchedule& schedule) {
    if (!z0.same_shape(eps))
        throw ArgumentError("q_sample: z0/eps shape mismatch");
    if (t < 0 || t >= schedule.T)
        throw ArgumentError("q_sample: t out of [0, T)");
    const double a = schedule.sqrt_alpha_bars[size_t(t)];
    const double b = schedule.sqrt_one_minus_alpha_bars[size_t(t)];
    Tensor out(z0.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

Tensor gaussian_tensor(const std::vector<int>& shape, Rng& rng) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1 || steps > T)
        throw ArgumentError("ddim: steps must be in [1, T]");
    std::vector<int> times;
    if (steps == 1) {
        times.push_back(T - 1);
    } else {
        for (int i = 0; i < steps; ++i)
            times.push_back(int(std::lround(double(i) * double(T - 1) /
                                            double(steps - 1))));
    }
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return times;
}

StepDraws sample_step_draws(Rng& rng, int batch,
                            const std::vector<int>& latent_shape, int T,
                            int n_templates, double cfg_drop_prob) {
    StepDraws d;
    for (int i = 0; i < batch; ++i) {
        d.t.push_back(rng.uniform_int(0, T - 1));
        d.eps.push_back(gaussian_tensor(latent_shape, rng));
        d.template_id.push_back(rng.uniform_int(0, n_templates - 1));
        d.drop_objects.push_back(rng.bernoulli(cfg_drop_prob) ? 1 : 0);
        d.drop_instruction.push_back(rng.bernoulli(cfg_drop_prob) ? 1 : 0);
    }
    return d;
}

}  // namespace fvita
