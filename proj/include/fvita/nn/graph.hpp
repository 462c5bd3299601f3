#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fvita/tensor.hpp"

namespace fvita::nn {

// Define-by-run reverse-mode autodiff over double Tensors. A Graph is the
// tape for one forward pass; parameters are leaf Vars that outlive graphs
// and accumulate gradients across backward() calls until zero_grad().
class Node {
  public:
    Tensor value;
    Tensor grad;  // allocated lazily; empty means "all zeros"
    bool requires_grad = false;
    std::function<void()> backward_fn;

    Tensor& ensure_grad() {
        if (grad.empty() && value.size() > 0) grad = Tensor(value.shape());
        return grad;
    }
    bool has_grad() const { return !grad.empty(); }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool requires_grad);

class Graph {
  public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Tensor value);

    // Seeds d(loss)=1 and runs the tape in reverse creation order.
    // loss must be a scalar ([1]) node produced by this graph.
    void backward(const Var& loss);

    Var track(Var node);  // registers an op result on the tape

    size_t tape_size() const { return tape_.size(); }

  private:
    bool grad_enabled_;
    std::vector<Var> tape_;
};

// ---- elementwise ----
Var add(Graph& g, const Var& a, const Var& b);
Var sub(Graph& g, const Var& a, const Var& b);
Var mul(Graph& g, const Var& a, const Var& b);
Var scale(Graph& g, const Var& a, double s);
Var silu(Graph& g, const Var& a);
Var sigmoid_op(Graph& g, const Var& a);

// ---- dense ----
// x:[N,I] w:[I,O] b:[O] -> [N,O]
Var linear(Graph& g, const Var& x, const Var& w, const Var& b);
Var matmul(Graph& g, const Var& a, const Var& b);

// ---- conv / spatial (NCHW) ----
// x:[N,C,H,W] w:[O,C,kh,kw] b:[O]
Var conv2d(Graph& g, const Var& x, const Var& w, const Var& b, int stride,
           int pad);
Var upsample_nearest2(Graph& g, const Var& x);
Var group_norm(Graph& g, const Var& x, const Var& gamma, const Var& beta,
               int groups, double eps = 1e-5);
Var concat_channels(Graph& g, const Var& a, const Var& b);
// x:[N,C,H,W] + bias[N,C] broadcast over spatial
Var add_channel_bias(Graph& g, const Var& x, const Var& bias);
// x:[N,C,H,W] -> [N,C] spatial mean
Var spatial_mean(Graph& g, const Var& x);

// ---- batch & token plumbing ----
Var slice_batch(Graph& g, const Var& x, int index);           // [N,..]->[1,..]
Var stack_batch(Graph& g, const std::vector<Var>& items);     // inverse
Var to_tokens(Graph& g, const Var& x);    // [1,C,H,W] -> [H*W, C]
Var from_tokens(Graph& g, const Var& t, int channels, int height, int width);

// Builds an [n_rows, dim] matrix with the given Vars ([dim] or [1,dim])
// placed at row_index[i]; unset rows are zero.
Var assemble_rows(Graph& g, int n_rows, int dim, const std::vector<int>& row_index,
                  const std::vector<Var>& rows);

// ---- attention ----
// Multi-head attention: q:[T,D] k,v:[S,D], D = heads * head_dim. Softmax is
// computed over active key slots only, so values stored in inactive slots
// can never influence the output.
Var multihead_attention(Graph& g, const Var& q, const Var& k, const Var& v,
                        const std::vector<uint8_t>& active, int heads);

// ---- reductions ----
Var mean_all(Graph& g, const Var& x);            // -> [1]
Var mse(Graph& g, const Var& a, const Var& b);   // -> [1]

}  // namespace fvita::nn
