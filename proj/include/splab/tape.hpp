#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splab/tensor.hpp"

namespace splab {

using NodeId = int;

// Reverse-mode tape over float32 tensors. Ops append nodes, so node order is
// already topological and backward() is a single reverse sweep. Scalar
// reductions also carry a double-precision value (scalar_d) so losses can be
// read without float32 rounding on top of the reduction.
//
// A tape is confined to one thread; the kernels it calls may use OpenMP
// internally and stay bit-deterministic regardless of thread count.
class Tape {
 public:
  explicit Tape(uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  uint64_t rng_seed() const { return rng_seed_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Leaf bound to an external parameter. Gradients accumulate into
  // param->grad() when param->requires_grad().
  NodeId leaf(Tensor* param);
  // Unbound value; gradients are computed but discarded.
  NodeId constant(Tensor value);

  const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  // Scalar node value at the highest precision recorded.
  double scalar(NodeId id) const;
  const std::vector<float>& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }

  // --- ops ---
  NodeId matmul(NodeId a, NodeId b);              // [m,k]x[k,n]
  NodeId matmul_nt(NodeId a, NodeId b);           // [m,k]x[n,k]^T
  NodeId add(NodeId a, NodeId b);                 // same shape
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);                 // elementwise
  NodeId scale(NodeId a, double alpha);
  NodeId add_rowvec(NodeId x, NodeId v);          // [m,n] + [n]
  NodeId relu(NodeId x);
  NodeId gelu(NodeId x);
  NodeId topk_rows(NodeId x, int k);              // keep k largest per row
  NodeId jumprelu(NodeId z, NodeId theta, double ste_bandwidth);  // theta: [cols]
  NodeId layernorm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  NodeId causal_softmax(NodeId scores);           // [t,t], mask j > i
  NodeId embed_rows(NodeId table, std::vector<int> ids);
  NodeId slice_cols(NodeId x, int c0, int c1);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId sum_all(NodeId x);
  NodeId sum_sq(NodeId x);
  NodeId sum_abs(NodeId x);
  // Mean cross-entropy (nats) of softmax(logits) rows against target ids;
  // targets < 0 are ignored.
  NodeId softmax_xent_mean(NodeId logits, std::vector<int> targets);

  // Reverse sweep from a scalar root. May be called once per tape.
  void backward(NodeId root);

 private:
  struct Node {
    Tensor value;
    std::vector<float> grad;
    std::optional<double> scalar_d;
    Tensor* bound = nullptr;
    std::function<void(Tape&, Node&)> back;
  };

  NodeId push(Tensor value, std::function<void(Tape&, Node&)> back, const char* opname);
  Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  std::vector<float>& grad_buf(NodeId id);

  std::vector<Node> nodes_;
  uint64_t rng_seed_ = 0;
  bool backward_done_ = false;
};

// Adam with bias correction over a fixed parameter list.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  long step = 0;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One update from params[i]->grad(); throws NumericError on non-finite
// gradients. State is created lazily on the first call.
void adam_step(std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg);

// Central-difference gradient check. `f(record)` evaluates the scalar loss;
// when record is true it must also leave gradients in params[i]->grad().
// Returns max_i |g_tape,i - g_fd,i| / max(||g_tape||_inf, ||g_fd||_inf, 1e-12),
// i.e. the worst coordinate error relative to the gradient scale.
double finite_diff_check(const std::function<double(bool record)>& f,
                         std::vector<Tensor*> params, double step);

}  // namespace splab
