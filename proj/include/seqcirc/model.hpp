#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqcirc/node.hpp"
#include "seqcirc/tensor.hpp"
#include "seqcirc/tokenizer.hpp"

namespace seqcirc {

struct ModelConfig {
  int n_layers = 12;
  int n_heads = 12;
  int d_model = 768;
  int d_head = 64;
  int vocab_size = 50257;
  int max_ctx = 1024;
  float ln_eps = 1e-5f;

  int d_mlp() const noexcept { return 4 * d_model; }
  int n_nodes() const noexcept { return n_layers * (n_heads + 1); }
  /// Throws ArgumentError when dimensions are inconsistent.
  void validate() const;
};

/// One transformer block. Projection matrices use the in x out layout, so a
/// row vector times the matrix gives the projection.
struct LayerWeights {
  Tensor ln1_g, ln1_b;
  Tensor w_qkv;  // [d, 3d]: columns [Q heads | K heads | V heads], each head d_head wide
  Tensor b_qkv;  // [3d]
  Tensor w_o;    // [d, d]: rows h*d_head .. (h+1)*d_head belong to head h
  Tensor b_o;    // [d], attributed to the layer, never to a head
  Tensor ln2_g, ln2_b;
  Tensor w_fc, b_fc;      // [d, 4d], [4d]
  Tensor w_proj, b_proj;  // [4d, d], [d]
};

struct Weights {
  Tensor wte;  // [vocab, d]; also the unembedding (tied, used transposed)
  Tensor wpe;  // [max_ctx, d]
  std::vector<LayerWeights> layers;
  Tensor lnf_g, lnf_b;
};

/// Where a patch writes. Output sites replace a component's contribution to the
/// residual stream. Input sites replace the residual copy read by one consumer
/// (one head's Q, K or V projection, one MLP, or the unembedding) and leave the
/// stream itself and every other consumer untouched. Input sites read the
/// residual before the consumer's layer norm.
struct PatchSite {
  enum class Kind : unsigned char { HeadOut, MlpOut, HeadQIn, HeadKIn, HeadVIn, MlpIn, ResidPostFinal };

  Kind kind = Kind::HeadOut;
  int layer = 0;
  int head = 0;

  static PatchSite head_out(int l, int h) { return {Kind::HeadOut, l, h}; }
  static PatchSite mlp_out(int l) { return {Kind::MlpOut, l, 0}; }
  static PatchSite head_q_in(int l, int h) { return {Kind::HeadQIn, l, h}; }
  static PatchSite head_k_in(int l, int h) { return {Kind::HeadKIn, l, h}; }
  static PatchSite head_v_in(int l, int h) { return {Kind::HeadVIn, l, h}; }
  static PatchSite mlp_in(int l) { return {Kind::MlpIn, l, 0}; }
  static PatchSite resid_post_final() { return {Kind::ResidPostFinal, 0, 0}; }

  /// Output site of a node.
  static PatchSite output_of(const NodeId& node);
  /// Input site of a receiver slot.
  static PatchSite input_of(const ReceiverSlot& slot);

  bool is_output() const noexcept { return kind == Kind::HeadOut || kind == Kind::MlpOut; }
  std::string str() const;

  auto operator<=>(const PatchSite&) const = default;
};

/// One substitution.
///
/// positions: per-position mask (nonzero = patch); empty means every position.
/// value: [pos x d_model] replacement; empty means zeros.
/// sender: input sites only. The slot then receives
///   resid - (sender's output in this run) + value
/// at masked positions, i.e. only the sender's direct contribution to this one
/// consumer is swapped for `value`. Everything else still reads the real stream.
struct PatchEntry {
  PatchSite site;
  std::vector<std::uint8_t> positions;
  Tensor value;
  std::optional<NodeId> sender;
};

/// Entries touching the same site apply in plan order.
struct PatchPlan {
  std::vector<PatchEntry> entries;

  bool empty() const noexcept { return entries.empty(); }
  void add(PatchEntry e) { entries.push_back(std::move(e)); }
};

enum class LogitsMode : unsigned char { All, Last, None };

/// Residual state and upstream node outputs from an earlier run, used to start a
/// forward at `layer` instead of 0. Only valid when everything before `layer`
/// would be computed identically.
struct ResumeState {
  int layer = 0;
  Tensor resid_pre;                      // residual entering `layer`
  std::map<NodeId, Tensor> node_outputs;  // outputs of senders before `layer`
};

struct ForwardOptions {
  const PatchPlan* patches = nullptr;
  bool capture_resid = false;     // resid_pre / resid_mid / resid_post per layer
  bool capture_patterns = false;  // per-head attention patterns
  bool capture_head_out = false;  // per-head contributions
  bool capture_layer_out = false;  // attn_out / mlp_out per layer
  /// Outputs of these nodes are stored in ActivationCache::node_outputs.
  std::vector<NodeId> capture_nodes;
  LogitsMode logits = LogitsMode::All;
  /// Logits of these ids at the final position go to selected_logits.
  std::vector<TokenId> selected_tokens;
  /// Run layers [start, stop_layer); negative means all layers.
  int stop_layer = -1;
  const ResumeState* resume = nullptr;
};

/// Whatever the forward was asked to record. Unrequested entries stay empty.
struct ActivationCache {
  std::vector<Tensor> resid_pre, resid_mid, resid_post;  // [L] of [pos x d]
  std::vector<std::vector<Tensor>> patterns;             // [L][H] of [pos x pos]
  std::vector<std::vector<Tensor>> head_out;             // [L][H] of [pos x d]
  std::vector<Tensor> attn_out, mlp_out;                 // [L] of [pos x d]; attn_out includes b_O
  std::map<NodeId, Tensor> node_outputs;
  Tensor final_resid;  // residual read by ln_f, after any ResidPostFinal patch
  Tensor logits;       // [pos x vocab], [1 x vocab] (Last) or empty (None)
  std::vector<float> selected_logits;
};

/// Hooked GPT-2 style decoder: pre-norm blocks, tanh GELU, tied unembedding.
class Model {
 public:
  Model(ModelConfig config, Weights weights);

  /// Reads a safetensors checkpoint with the canonical GPT-2 tensor names
  /// (optionally prefixed with "transformer."). Throws LoadError.
  static Model load(const std::filesystem::path& path);

  const ModelConfig& config() const noexcept { return config_; }
  const Weights& weights() const noexcept { return weights_; }

  ActivationCache forward(std::span<const TokenId> tokens, const ForwardOptions& options = {}) const;

  /// Greedy argmax continuation with `patches` applied at every step. Patch
  /// entries must be length-agnostic (empty masks and values).
  std::vector<TokenId> generate(std::span<const TokenId> tokens, int n_new,
                                const PatchPlan* patches = nullptr) const;

  /// Final layer norm, then the tied unembedding.
  Tensor unembed(const Tensor& resid) const;
  /// Unembedding without the final layer norm.
  Tensor unembed_raw(const Tensor& normed) const;

  /// Per-head slices as standalone matrices.
  Tensor head_w_q(int layer, int head) const;  // [d, d_head]
  Tensor head_w_k(int layer, int head) const;  // [d, d_head]
  Tensor head_w_v(int layer, int head) const;  // [d, d_head]
  Tensor head_w_o(int layer, int head) const;  // [d_head, d]

  /// Number of stored parameters, counting the tied embedding once.
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  Weights weights_;
};

/// Validates every site, mask, value and sender of `plan` against `config` and
/// a sequence of `n_pos` tokens (n_pos < 0 skips length checks).
void validate_plan(const PatchPlan& plan, const ModelConfig& config, int n_pos);

}  // namespace seqcirc
