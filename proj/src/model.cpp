#include "seqcirc/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Core>
#include <fmt/format.h>

#include "seqcirc/errors.hpp"

namespace seqcirc {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstRowVec = Eigen::Map<const Eigen::RowVectorXf>;

ConstMap view(const Tensor& t) {
  return ConstMap(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MutMap view(Tensor& t) {
  return MutMap(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

bool masked(const PatchEntry& e, std::size_t p) { return e.positions.empty() || e.positions[p] != 0; }

bool covers_all(const PatchEntry& e) {
  return std::all_of(e.positions.begin(), e.positions.end(), [](std::uint8_t m) { return m != 0; });
}

using EntryList = std::vector<const PatchEntry*>;

class PlanIndex {
 public:
  explicit PlanIndex(const PatchPlan* plan) {
    if (plan == nullptr) return;
    for (const PatchEntry& e : plan->entries) {
      by_site_[e.site].push_back(&e);
      if (e.sender) senders_.insert(*e.sender);
    }
  }

  const EntryList* find(const PatchSite& site) const {
    auto it = by_site_.find(site);
    return it == by_site_.end() ? nullptr : &it->second;
  }
  const std::set<NodeId>& senders() const noexcept { return senders_; }

 private:
  std::map<PatchSite, EntryList> by_site_;
  std::set<NodeId> senders_;
};

void apply_output(const EntryList* entries, Tensor& out) {
  if (entries == nullptr) return;
  for (const PatchEntry* e : *entries) {
    for (std::size_t p = 0; p < out.rows(); ++p) {
      if (!masked(*e, p)) continue;
      auto row = out.row(p);
      if (e->value.empty()) {
        std::fill(row.begin(), row.end(), 0.0f);
      } else {
        const auto src = e->value.row(p);
        std::copy(src.begin(), src.end(), row.begin());
      }
    }
  }
}

// The residual copy a single consumer reads once the entries are applied.
Tensor patched_input(const EntryList& entries, const Tensor& resid,
                     const std::map<NodeId, Tensor>& outputs) {
  Tensor x = resid;
  for (const PatchEntry* e : entries) {
    const Tensor* sender_out = nullptr;
    if (e->sender) {
      auto it = outputs.find(*e->sender);
      if (it == outputs.end()) {
        throw ArgumentError(fmt::format("sender {} output unavailable for {}", e->sender->str(),
                                        e->site.str()));
      }
      sender_out = &it->second;
    }
    for (std::size_t p = 0; p < x.rows(); ++p) {
      if (!masked(*e, p)) continue;
      auto row = x.row(p);
      if (sender_out != nullptr) {
        const auto s = sender_out->row(p);
        for (std::size_t j = 0; j < row.size(); ++j) {
          row[j] = row[j] - s[j] + (e->value.empty() ? 0.0f : e->value.at(p, j));
        }
      } else if (e->value.empty()) {
        std::fill(row.begin(), row.end(), 0.0f);
      } else {
        const auto src = e->value.row(p);
        std::copy(src.begin(), src.end(), row.begin());
      }
    }
  }
  return x;
}

ReceiverSlot slot_of(const PatchSite& site) {
  switch (site.kind) {
    case PatchSite::Kind::HeadQIn: return ReceiverSlot::Q(site.layer, site.head);
    case PatchSite::Kind::HeadKIn: return ReceiverSlot::K(site.layer, site.head);
    case PatchSite::Kind::HeadVIn: return ReceiverSlot::V(site.layer, site.head);
    case PatchSite::Kind::MlpIn: return ReceiverSlot::MlpIn(site.layer);
    default: return ReceiverSlot::Final();
  }
}

}  // namespace

PatchSite PatchSite::output_of(const NodeId& node) {
  return node.is_head() ? head_out(node.layer, node.head) : mlp_out(node.layer);
}

PatchSite PatchSite::input_of(const ReceiverSlot& slot) {
  switch (slot.kind) {
    case ReceiverSlot::Kind::HeadQ: return head_q_in(slot.layer, slot.head);
    case ReceiverSlot::Kind::HeadK: return head_k_in(slot.layer, slot.head);
    case ReceiverSlot::Kind::HeadV: return head_v_in(slot.layer, slot.head);
    case ReceiverSlot::Kind::MlpIn: return mlp_in(slot.layer);
    case ReceiverSlot::Kind::ResidPostFinal: return resid_post_final();
  }
  return resid_post_final();
}

std::string PatchSite::str() const {
  switch (kind) {
    case Kind::HeadOut: return fmt::format("head_out({}.{})", layer, head);
    case Kind::MlpOut: return fmt::format("mlp_out({})", layer);
    case Kind::HeadQIn: return fmt::format("head_q_in({}.{})", layer, head);
    case Kind::HeadKIn: return fmt::format("head_k_in({}.{})", layer, head);
    case Kind::HeadVIn: return fmt::format("head_v_in({}.{})", layer, head);
    case Kind::MlpIn: return fmt::format("mlp_in({})", layer);
    case Kind::ResidPostFinal: return "resid_post_final";
  }
  return "?";
}

void validate_plan(const PatchPlan& plan, const ModelConfig& config, int n_pos) {
  for (const PatchEntry& e : plan.entries) {
    const PatchSite& s = e.site;
    const bool head_site = s.kind == PatchSite::Kind::HeadOut || s.kind == PatchSite::Kind::HeadQIn ||
                           s.kind == PatchSite::Kind::HeadKIn || s.kind == PatchSite::Kind::HeadVIn;
    if (s.kind != PatchSite::Kind::ResidPostFinal && (s.layer < 0 || s.layer >= config.n_layers)) {
      throw ArgumentError(fmt::format("patch site {} has no such layer", s.str()));
    }
    if (head_site && (s.head < 0 || s.head >= config.n_heads)) {
      throw ArgumentError(fmt::format("patch site {} has no such head", s.str()));
    }
    if (n_pos >= 0 && !e.positions.empty() && e.positions.size() != static_cast<std::size_t>(n_pos)) {
      throw ArgumentError(fmt::format("patch {} mask covers {} positions, sequence has {}", s.str(),
                                      e.positions.size(), n_pos));
    }
    if (!e.value.empty()) {
      const bool width_ok = e.value.rank() == 2 && e.value.cols() == static_cast<std::size_t>(config.d_model);
      const bool rows_ok = n_pos < 0 || e.value.rows() == static_cast<std::size_t>(n_pos);
      if (!width_ok || !rows_ok) {
        throw ArgumentError(fmt::format("patch {} value must be [{} x {}]", s.str(), n_pos, config.d_model));
      }
    }
    if (e.sender) {
      if (s.is_output()) {
        throw ArgumentError(fmt::format("patch {}: senders apply to input sites only", s.str()));
      }
      const NodeId& n = *e.sender;
      if (n.layer < 0 || n.layer >= config.n_layers || (n.is_head() && (n.head < 0 || n.head >= config.n_heads))) {
        throw ArgumentError(fmt::format("sender {} is not a node of this model", n.str()));
      }
      if (!can_feed(n, slot_of(s))) {
        throw ArgumentError(fmt::format("{} is not upstream of {}", n.str(), slot_of(s).str()));
      }
    }
  }
}

ActivationCache Model::forward(std::span<const TokenId> tokens, const ForwardOptions& opt) const {
  const ModelConfig& cfg = config_;
  const std::size_t n = tokens.size();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto dh = static_cast<Eigen::Index>(cfg.d_head);
  const auto D = static_cast<Eigen::Index>(cfg.d_model);
  if (n == 0) throw ArgumentError("forward: empty token sequence");
  if (n > static_cast<std::size_t>(cfg.max_ctx)) {
    throw ArgumentError(fmt::format("forward: {} tokens exceed the context of {}", n, cfg.max_ctx));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) throw ArgumentError(fmt::format("forward: token id {} out of range", t));
  }
  if (opt.patches != nullptr) validate_plan(*opt.patches, cfg, static_cast<int>(n));

  const int start = opt.resume != nullptr ? opt.resume->layer : 0;
  const int stop = opt.stop_layer < 0 ? cfg.n_layers : opt.stop_layer;
  if (start < 0 || stop > cfg.n_layers || start > stop) {
    throw ArgumentError(fmt::format("forward: layer range [{}, {}) is invalid", start, stop));
  }

  const PlanIndex plan(opt.patches);
  std::set<NodeId> keep = plan.senders();
  keep.insert(opt.capture_nodes.begin(), opt.capture_nodes.end());
  std::map<NodeId, Tensor> outputs;

  ActivationCache cache;
  const auto L = static_cast<std::size_t>(cfg.n_layers);
  const auto H = static_cast<std::size_t>(cfg.n_heads);
  if (opt.capture_resid) {
    cache.resid_pre.resize(L);
    cache.resid_mid.resize(L);
    cache.resid_post.resize(L);
  }
  if (opt.capture_patterns) cache.patterns.assign(L, std::vector<Tensor>(H));
  if (opt.capture_head_out) cache.head_out.assign(L, std::vector<Tensor>(H));
  if (opt.capture_layer_out) {
    cache.attn_out.resize(L);
    cache.mlp_out.resize(L);
  }

  Tensor x;
  if (opt.resume != nullptr) {
    x = opt.resume->resid_pre;
    if (x.rank() != 2 || x.rows() != n || x.cols() != d) {
      throw ArgumentError("forward: resume residual does not match the sequence");
    }
    for (const NodeId& node : keep) {
      if (node.layer >= start) continue;
      auto it = opt.resume->node_outputs.find(node);
      if (it == opt.resume->node_outputs.end()) {
        throw ArgumentError(fmt::format("forward: resume state lacks output of {}", node.str()));
      }
      outputs.emplace(node, it->second);
    }
  } else {
    x = Tensor({n, d});
    for (std::size_t p = 0; p < n; ++p) {
      const auto te = weights_.wte.row(static_cast<std::size_t>(tokens[p]));
      const auto pe = weights_.wpe.row(p);
      auto row = x.row(p);
      for (std::size_t j = 0; j < d; ++j) row[j] = te[j] + pe[j];
    }
  }

  const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.d_head));
  const auto N = static_cast<Eigen::Index>(n);

  for (int l = start; l < stop; ++l) {
    const LayerWeights& w = weights_.layers[static_cast<std::size_t>(l)];
    if (opt.capture_resid) cache.resid_pre[l] = x;

    const Tensor ln1 = layer_norm(x, w.ln1_g, w.ln1_b, cfg.ln_eps);
    Tensor qkv;  // shared projections, built on first use
    const ConstMap w_qkv = view(w.w_qkv);
    const ConstRowVec b_qkv(w.b_qkv.ptr(), 3 * D);
    const ConstMap w_o = view(w.w_o);

    // One head's q, k or v projection (section 0, 1, 2), honouring input patches.
    auto project = [&](int h, int section, PatchSite site) -> RowMatrix {
      const Eigen::Index col = section * D + h * dh;
      if (const EntryList* es = plan.find(site)) {
        const Tensor in = layer_norm(patched_input(*es, x, outputs), w.ln1_g, w.ln1_b, cfg.ln_eps);
        RowMatrix r = view(in) * w_qkv.middleCols(col, dh);
        r.rowwise() += b_qkv.segment(col, dh);
        return r;
      }
      if (qkv.empty()) qkv = linear(ln1, w.w_qkv, w.b_qkv);
      return view(qkv).middleCols(col, dh);
    };

    Tensor attn_out({n, d});
    for (int h = 0; h < cfg.n_heads; ++h) {
      const EntryList* out_entries = plan.find(PatchSite::head_out(l, h));
      bool replaced = false;
      if (out_entries != nullptr) {
        for (const PatchEntry* e : *out_entries) replaced = replaced || covers_all(*e);
      }
      Tensor head_out({n, d});
      if (!replaced || opt.capture_patterns) {
        const RowMatrix q = project(h, 0, PatchSite::head_q_in(l, h));
        const RowMatrix k = project(h, 1, PatchSite::head_k_in(l, h));
        RowMatrix scores = (q * k.transpose()) * scale;
        Tensor pattern({n, n});
        for (Eigen::Index i = 0; i < N; ++i) {
          float mx = scores(i, 0);
          for (Eigen::Index j = 1; j <= i; ++j) mx = std::max(mx, scores(i, j));
          double sum = 0.0;
          auto prow = pattern.row(static_cast<std::size_t>(i));
          for (Eigen::Index j = 0; j <= i; ++j) {
            prow[j] = std::exp(scores(i, j) - mx);
            sum += prow[j];
          }
          const float inv = static_cast<float>(1.0 / sum);
          for (Eigen::Index j = 0; j <= i; ++j) prow[j] *= inv;
        }
        if (!replaced) {
          const RowMatrix v = project(h, 2, PatchSite::head_v_in(l, h));
          const RowMatrix z = view(pattern) * v;
          view(head_out).noalias() = z * w_o.middleRows(h * dh, dh);
        }
        if (opt.capture_patterns) cache.patterns[l][h] = std::move(pattern);
      }
      apply_output(out_entries, head_out);
      add_inplace(attn_out, head_out);
      const NodeId node = NodeId::Head(l, h);
      if (keep.count(node)) outputs[node] = head_out;
      if (opt.capture_head_out) cache.head_out[l][h] = std::move(head_out);
    }
    view(attn_out).rowwise() += ConstRowVec(w.b_o.ptr(), D);

    Tensor resid_mid = x;
    add_inplace(resid_mid, attn_out);

    const EntryList* mlp_entries = plan.find(PatchSite::mlp_out(l));
    bool mlp_replaced = false;
    if (mlp_entries != nullptr) {
      for (const PatchEntry* e : *mlp_entries) mlp_replaced = mlp_replaced || covers_all(*e);
    }
    Tensor mlp_out({n, d});
    if (!mlp_replaced) {
      const EntryList* in_entries = plan.find(PatchSite::mlp_in(l));
      const Tensor mlp_in = in_entries != nullptr ? patched_input(*in_entries, resid_mid, outputs) : resid_mid;
      const Tensor hidden = gelu(linear(layer_norm(mlp_in, w.ln2_g, w.ln2_b, cfg.ln_eps), w.w_fc, w.b_fc));
      mlp_out = linear(hidden, w.w_proj, w.b_proj);
    }
    apply_output(mlp_entries, mlp_out);
    if (keep.count(NodeId::Mlp(l))) outputs[NodeId::Mlp(l)] = mlp_out;

    x = resid_mid;
    add_inplace(x, mlp_out);

    if (opt.capture_resid) {
      cache.resid_mid[l] = std::move(resid_mid);
      cache.resid_post[l] = x;
    }
    if (opt.capture_layer_out) {
      cache.attn_out[l] = std::move(attn_out);
      cache.mlp_out[l] = std::move(mlp_out);
    }
  }

  for (const NodeId& node : opt.capture_nodes) {
    auto it = outputs.find(node);
    if (it != outputs.end()) cache.node_outputs.emplace(node, it->second);
  }

  if (stop < cfg.n_layers) {
    cache.final_resid = std::move(x);
    return cache;
  }

  if (const EntryList* es = plan.find(PatchSite::resid_post_final())) x = patched_input(*es, x, outputs);

  if (opt.logits == LogitsMode::All) {
    cache.logits = unembed(x);
  } else if (opt.logits == LogitsMode::Last || !opt.selected_tokens.empty()) {
    Tensor last({1, d});
    const auto src = x.row(n - 1);
    std::copy(src.begin(), src.end(), last.row(0).begin());
    const Tensor normed = layer_norm(last, weights_.lnf_g, weights_.lnf_b, cfg.ln_eps);
    if (opt.logits == LogitsMode::Last) cache.logits = unembed_raw(normed);
    for (TokenId t : opt.selected_tokens) {
      if (t < 0 || t >= cfg.vocab_size) throw ArgumentError(fmt::format("selected token {} out of range", t));
      const ConstRowVec row(weights_.wte.row(static_cast<std::size_t>(t)).data(), D);
      cache.selected_logits.push_back(ConstRowVec(normed.ptr(), D).dot(row));
    }
  }
  if (opt.logits == LogitsMode::All && !opt.selected_tokens.empty()) {
    for (TokenId t : opt.selected_tokens) {
      if (t < 0 || t >= cfg.vocab_size) throw ArgumentError(fmt::format("selected token {} out of range", t));
      cache.selected_logits.push_back(cache.logits.at(n - 1, static_cast<std::size_t>(t)));
    }
  }
  cache.final_resid = std::move(x);
  return cache;
}

Tensor Model::unembed_raw(const Tensor& normed) const {
  return matmul_transposed(normed.reshaped({normed.rows(), normed.cols()}), weights_.wte);
}

Tensor Model::unembed(const Tensor& resid) const {
  return unembed_raw(layer_norm(resid, weights_.lnf_g, weights_.lnf_b, config_.ln_eps));
}

std::vector<TokenId> Model::generate(std::span<const TokenId> tokens, int n_new,
                                     const PatchPlan* patches) const {
  if (n_new < 0) throw ArgumentError("generate: n_new must be non-negative");
  if (tokens.size() + static_cast<std::size_t>(n_new) > static_cast<std::size_t>(config_.max_ctx)) {
    throw ArgumentError(fmt::format("generate: {} + {} tokens exceed the context of {}", tokens.size(),
                                    n_new, config_.max_ctx));
  }
  std::vector<TokenId> seq(tokens.begin(), tokens.end());
  ForwardOptions opt;
  opt.patches = patches;
  opt.logits = LogitsMode::Last;
  for (int step = 0; step < n_new; ++step) {
    const ActivationCache c = forward(seq, opt);
    const auto row = c.logits.row(0);
    seq.push_back(static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return seq;
}

}  // namespace seqcirc
