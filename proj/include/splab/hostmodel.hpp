#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "splab/tape.hpp"
#include "splab/tensor.hpp"

namespace splab {

struct HostConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_mlp = 256;
  int vocab_size = 96;
  int ctx_len = 128;
  uint64_t seed = 0;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
};

// Named activation sites within a block.
enum class Site { AttnOut, MlpOut, ResidPost };

std::string site_name(Site s);
Site site_from_name(const std::string& name);

struct HookSite {
  int layer = 0;
  Site site = Site::ResidPost;
};

enum class HookMode { Capture, Substitute, MeanAblate };

struct Hook {
  HookSite where;
  HookMode mode = HookMode::Capture;
  // Substitute: [seq x d_model]. MeanAblate: [d_model], broadcast over positions.
  const Tensor* replacement = nullptr;
};

// Observation points used by pruning calibration: the input activations of
// each prunable matrix plus the three hookable sites.
enum class Obs { Ln1Out, HeadConcat, Ln2Out, MlpHidden, AttnOut, MlpOut, ResidPost };
using Observer = std::function<void(int layer, Obs point, const Tensor& value)>;

struct LayerWeights {
  Tensor wq, wk, wv, wo;   // [d_model x d_model]
  Tensor w_in;             // [d_model x d_mlp]
  Tensor w_out;            // [d_mlp x d_model]
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

// Decoder-only transformer: pre-norm residual blocks, learned positional
// embeddings, no biases on the projections.
struct HostModel {
  HostConfig cfg;
  Tensor tok_emb;  // [vocab x d_model]
  Tensor pos_emb;  // [ctx x d_model]
  std::vector<LayerWeights> layers;
  Tensor lnf_g, lnf_b;
  Tensor unembed;  // [d_model x vocab]

  static HostModel init(const HostConfig& cfg);
  static HostModel zeros(const HostConfig& cfg);

  std::vector<Tensor*> params();
  std::vector<std::pair<std::string, Tensor*>> named_params();
  void set_requires_grad(bool v);

  // Builds the forward graph for one sequence; returns the logits node.
  NodeId build_forward(Tape& tape, std::span<const int> tokens, const Hook* hook,
                       Tensor* captured, const Observer* observer);
};

Tensor forward_logits(HostModel& model, std::span<const int> tokens);

struct HookResult {
  Tensor logits;    // [seq x vocab]
  Tensor captured;  // [seq x d_model] for Capture, empty otherwise
};

HookResult run_with_hook(HostModel& model, std::span<const int> tokens, const Hook& hook);

struct HostTrainOptions {
  int steps = 2000;
  double lr = 1e-3;
  int batch_seqs = 8;
  double holdout_frac = 0.05;
};

struct HostTrainResult {
  std::vector<float> loss_curve;  // one entry per step
  double holdout_loss = 0.0;
};

// Trains a fresh model from cfg on a token corpus. Deterministic in cfg.seed.
HostTrainResult train_host(HostModel& model, std::span<const int> corpus,
                           const HostTrainOptions& opts);

// Mean next-token cross-entropy (nats) over consecutive windows of `tokens`.
double host_cross_entropy(HostModel& model, std::span<const int> tokens);

void save_host(const HostModel& model, const std::filesystem::path& path);
HostModel load_host(const std::filesystem::path& path);

}  // namespace splab
