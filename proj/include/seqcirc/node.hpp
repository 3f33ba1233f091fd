#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace seqcirc {

/// A circuit component: attention head L.H or the MLP of layer L.
///
/// Ordering is forward execution order: by layer, heads (ascending) before the MLP.
struct NodeId {
  enum class Kind : unsigned char { Head = 0, Mlp = 1 };

  Kind kind = Kind::Head;
  int layer = 0;
  int head = 0;  // 0 for MLPs

  static NodeId Head(int layer, int head) { return {Kind::Head, layer, head}; }
  static NodeId Mlp(int layer) { return {Kind::Mlp, layer, 0}; }

  bool is_head() const noexcept { return kind == Kind::Head; }
  bool is_mlp() const noexcept { return kind == Kind::Mlp; }

  /// "9.1" for heads, "mlp.9" for MLPs.
  std::string str() const;
  /// Accepts "L.H", "mlp.L", "MLP L" and "mlpL". Throws ArgumentError otherwise.
  static NodeId parse(std::string_view text);

  std::strong_ordering operator<=>(const NodeId& o) const noexcept {
    if (auto c = layer <=> o.layer; c != 0) return c;
    if (auto c = kind <=> o.kind; c != 0) return c;
    return head <=> o.head;
  }
  bool operator==(const NodeId& o) const noexcept = default;
};

/// Every head and MLP in forward order (n_layers * (n_heads + 1) nodes).
std::vector<NodeId> all_nodes(int n_layers, int n_heads);

/// The input a sender can write into: one head's query/key/value stream,
/// an MLP's input, or the final residual read by the unembedding.
struct ReceiverSlot {
  enum class Kind : unsigned char { HeadQ, HeadK, HeadV, MlpIn, ResidPostFinal };

  Kind kind = Kind::ResidPostFinal;
  int layer = 0;
  int head = 0;

  static ReceiverSlot Q(int l, int h) { return {Kind::HeadQ, l, h}; }
  static ReceiverSlot K(int l, int h) { return {Kind::HeadK, l, h}; }
  static ReceiverSlot V(int l, int h) { return {Kind::HeadV, l, h}; }
  static ReceiverSlot MlpIn(int l) { return {Kind::MlpIn, l, 0}; }
  static ReceiverSlot Final() { return {Kind::ResidPostFinal, 0, 0}; }

  bool is_head_slot() const noexcept { return kind <= Kind::HeadV; }
  /// The node that owns this slot; meaningless for ResidPostFinal.
  NodeId owner() const;
  /// "q", "k", "v", "in" or "resid".
  std::string_view slot_name() const;
  /// Owner label plus slot, e.g. "9.1/v", "mlp.9/in", "resid_post".
  std::string str() const;
  static ReceiverSlot from_parts(std::string_view owner, std::string_view slot);

  auto operator<=>(const ReceiverSlot&) const = default;
};

/// Whether `sender` sits strictly upstream of `receiver`. Heads feed the MLP of
/// their own layer; a head never feeds another head of the same layer.
bool can_feed(const NodeId& sender, const ReceiverSlot& receiver);

}  // namespace seqcirc
