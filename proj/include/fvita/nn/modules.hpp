#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fvita/nn/graph.hpp"

namespace fvita::nn {

// Named parameter registry. Initialization is a pure function of
// (init_seed, parameter name), so construction order never changes weights.
class ParamStore {
  public:
    explicit ParamStore(uint64_t init_seed) : seed_(init_seed) {}

    Var create_normal(const std::string& name, std::vector<int> shape,
                      double stddev, bool trainable = true);
    // For parameters whose initialization is pinned to a seed other than the
    // store's (the frozen embedder tables).
    Var create_normal_seeded(const std::string& name, std::vector<int> shape,
                             double stddev, uint64_t seed, bool trainable);
    Var create_constant(const std::string& name, std::vector<int> shape,
                        double value, bool trainable = true);

    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    // Sorted by name (std::map order).
    const std::map<std::string, Var>& all() const { return params_; }
    std::vector<std::pair<std::string, Var>> with_prefix(
        const std::string& prefix) const;

    void set_trainable(const std::string& prefix, bool trainable);

    uint64_t init_seed() const { return seed_; }

  private:
    uint64_t seed_;
    std::map<std::string, Var> params_;
};

struct Linear {
    Var w, b;
    static Linear create(ParamStore& ps, const std::string& name, int in,
                         int out, bool zero_init = false);
    Var operator()(Graph& g, const Var& x) const { return linear(g, x, w, b); }
};

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 1;
    static Conv2d create(ParamStore& ps, const std::string& name, int cin,
                         int cout, int k, int stride, int pad,
                         bool zero_init = false);
    Var operator()(Graph& g, const Var& x) const {
        return conv2d(g, x, w, b, stride, pad);
    }
};

struct GroupNorm {
    Var gamma, beta;
    int groups = 8;
    static GroupNorm create(ParamStore& ps, const std::string& name,
                            int channels, int groups);
    Var operator()(Graph& g, const Var& x) const {
        return group_norm(g, x, gamma, beta, groups);
    }
};

// Adam with bias correction; (0.9, 0.999), eps 1e-8 defaults.
class Adam {
  public:
    Adam(std::vector<std::pair<std::string, Var>> params, double lr,
         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    void step();

    // Exactly the parameter names this optimizer may ever touch.
    std::vector<std::string> owned_names() const;
    double lr() const { return lr_; }

  private:
    struct Slot {
        std::string name;
        Var var;
        Tensor m, v;
    };
    std::vector<Slot> slots_;
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
};

// Standard sinusoidal embedding of integer timesteps -> [n, dim].
Tensor sinusoidal_timestep_embedding(const std::vector<int>& timesteps, int dim);

}  // namespace fvita::nn
