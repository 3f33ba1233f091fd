#include "seqcirc/node.hpp"

#include <charconv>

#include <fmt/format.h>

#include "seqcirc/errors.hpp"

namespace seqcirc {

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && out >= 0;
}

}  // namespace

std::string NodeId::str() const {
  return is_head() ? fmt::format("{}.{}", layer, head) : fmt::format("mlp.{}", layer);
}

NodeId NodeId::parse(std::string_view text) {
  int a = 0;
  int b = 0;
  for (std::string_view prefix : {"mlp.", "MLP ", "mlp", "MLP"}) {
    if (text.substr(0, prefix.size()) == prefix && parse_int(text.substr(prefix.size()), a)) {
      return Mlp(a);
    }
  }
  const auto dot = text.find('.');
  if (dot != std::string_view::npos && parse_int(text.substr(0, dot), a) &&
      parse_int(text.substr(dot + 1), b)) {
    return Head(a, b);
  }
  throw ArgumentError(fmt::format("'{}' is not a node label (expected L.H or mlp.L)", text));
}

std::vector<NodeId> all_nodes(int n_layers, int n_heads) {
  std::vector<NodeId> out;
  out.reserve(static_cast<std::size_t>(n_layers) * (n_heads + 1));
  for (int l = 0; l < n_layers; ++l) {
    for (int h = 0; h < n_heads; ++h) out.push_back(NodeId::Head(l, h));
    out.push_back(NodeId::Mlp(l));
  }
  return out;
}

NodeId ReceiverSlot::owner() const {
  return kind == Kind::MlpIn ? NodeId::Mlp(layer) : NodeId::Head(layer, head);
}

std::string_view ReceiverSlot::slot_name() const {
  switch (kind) {
    case Kind::HeadQ: return "q";
    case Kind::HeadK: return "k";
    case Kind::HeadV: return "v";
    case Kind::MlpIn: return "in";
    case Kind::ResidPostFinal: return "resid";
  }
  return "?";
}

std::string ReceiverSlot::str() const {
  if (kind == Kind::ResidPostFinal) return "resid_post";
  return fmt::format("{}/{}", owner().str(), slot_name());
}

ReceiverSlot ReceiverSlot::from_parts(std::string_view owner, std::string_view slot) {
  if (owner == "resid_post" || slot == "resid") return Final();
  const NodeId node = NodeId::parse(owner);
  if (node.is_mlp()) {
    if (slot != "in" && !slot.empty()) {
      throw ArgumentError(fmt::format("MLP receiver '{}' has no slot '{}'", owner, slot));
    }
    return MlpIn(node.layer);
  }
  if (slot == "q") return Q(node.layer, node.head);
  if (slot == "k") return K(node.layer, node.head);
  if (slot == "v") return V(node.layer, node.head);
  throw ArgumentError(fmt::format("head receiver '{}' needs slot q, k or v (got '{}')", owner, slot));
}

bool can_feed(const NodeId& sender, const ReceiverSlot& receiver) {
  switch (receiver.kind) {
    case ReceiverSlot::Kind::ResidPostFinal:
      return true;
    case ReceiverSlot::Kind::MlpIn:
      return sender.layer < receiver.layer || (sender.layer == receiver.layer && sender.is_head());
    default:
      return sender.layer < receiver.layer;
  }
}

}  // namespace seqcirc
