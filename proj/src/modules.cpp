#include "fvita/nn/modules.hpp"

#include <cmath>

#include "fvita/errors.hpp"
#include "fvita/rng.hpp"

namespace fvita::nn {

Var ParamStore::create_normal(const std::string& name, std::vector<int> shape,
                              double stddev, bool trainable) {
    return create_normal_seeded(name, std::move(shape), stddev, seed_, trainable);
}

Var ParamStore::create_normal_seeded(const std::string& name,
                                     std::vector<int> shape, double stddev,
                                     uint64_t seed, bool trainable) {
    if (params_.count(name))
        throw ArgumentError("parameter already exists: " + name);
    Tensor t(std::move(shape));
    Rng rng(mix_seed(seed, name));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
    Var v = make_leaf(std::move(t), trainable);
    params_[name] = v;
    return v;
}

Var ParamStore::create_constant(const std::string& name, std::vector<int> shape,
                                double value, bool trainable) {
    if (params_.count(name))
        throw ArgumentError("parameter already exists: " + name);
    Tensor t(std::move(shape));
    t.fill(value);
    Var v = make_leaf(std::move(t), trainable);
    params_[name] = v;
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
    return it->second;
}

std::vector<std::pair<std::string, Var>> ParamStore::with_prefix(
    const std::string& prefix) const {
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& [name, var] : params_)
        if (name.rfind(prefix, 0) == 0) out.emplace_back(name, var);
    return out;
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [name, var] : params_)
        if (name.rfind(prefix, 0) == 0) var->requires_grad = trainable;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out,
                      bool zero_init) {
    Linear l;
    double stddev = zero_init ? 0.0 : 1.0 / std::sqrt(double(in));
    l.w = zero_init ? ps.create_constant(name + ".w", {in, out}, 0.0)
                    : ps.create_normal(name + ".w", {in, out}, stddev);
    l.b = ps.create_constant(name + ".b", {out}, 0.0);
    return l;
}

Conv2d Conv2d::create(ParamStore& ps, const std::string& name, int cin,
                      int cout, int k, int stride, int pad, bool zero_init) {
    Conv2d c;
    c.stride = stride;
    c.pad = pad;
    double stddev = 1.0 / std::sqrt(double(cin) * k * k);
    c.w = zero_init ? ps.create_constant(name + ".w", {cout, cin, k, k}, 0.0)
                    : ps.create_normal(name + ".w", {cout, cin, k, k}, stddev);
    c.b = ps.create_constant(name + ".b", {cout}, 0.0);
    return c;
}

GroupNorm GroupNorm::create(ParamStore& ps, const std::string& name,
                            int channels, int groups) {
    GroupNorm gn;
    gn.groups = groups;
    gn.gamma = ps.create_constant(name + ".g", {channels}, 1.0);
    gn.beta = ps.create_constant(name + ".b", {channels}, 0.0);
    return gn;
}

Adam::Adam(std::vector<std::pair<std::string, Var>> params, double lr,
           double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw ConfigError("adam: learning rate must be > 0");
    for (auto& [name, var] : params) {
        Slot s;
        s.name = name;
        s.var = var;
        s.m = Tensor(var->value.shape());
        s.v = Tensor(var->value.shape());
        slots_.push_back(std::move(s));
    }
}

void Adam::zero_grad() {
    for (auto& s : slots_)
        if (s.var->has_grad()) s.var->grad.zero();
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, double(t_));
    const double bc2 = 1.0 - std::pow(b2_, double(t_));
    for (auto& s : slots_) {
        Tensor& p = s.var->value;
        const bool has_grad = s.var->has_grad();
        for (int64_t i = 0; i < p.size(); ++i) {
            double gv = has_grad ? s.var->grad[i] : 0.0;
            s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * gv;
            s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * gv * gv;
            double mhat = s.m[i] / bc1;
            double vhat = s.v[i] / bc2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::vector<std::string> Adam::owned_names() const {
    std::vector<std::string> names;
    for (const auto& s : slots_) names.push_back(s.name);
    return names;
}

Tensor sinusoidal_timestep_embedding(const std::vector<int>& timesteps,
                                     int dim) {
    if (dim % 2 != 0) throw ArgumentError("timestep embedding dim must be even");
    const int half = dim / 2;
    Tensor out({int(timesteps.size()), dim});
    for (size_t n = 0; n < timesteps.size(); ++n) {
        double t = double(timesteps[n]);
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * double(i) /
                                   double(half > 1 ? half - 1 : 1));
            out.at(int(n), i) = std::cos(t * freq);
            out.at(int(n), half + i) = std::sin(t * freq);
        }
    }
    return out;
}

}  // namespace fvita::nn
