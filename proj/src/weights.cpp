#include <charconv>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "seqcirc/errors.hpp"
#include "seqcirc/model.hpp"
#include "seqcirc/safetensors.hpp"

namespace seqcirc {

namespace {

void expect_shape(const Tensor& t, std::vector<std::size_t> shape, const std::string& name) {
  if (t.shape() != shape) {
    throw LoadError(fmt::format("tensor '{}' has shape [{}], expected [{}]", name,
                                fmt::join(t.shape(), ", "), fmt::join(shape, ", ")));
  }
}

int metadata_int(const SafetensorsFile& file, const std::string& key, int fallback) {
  auto it = file.metadata().find(key);
  if (it == file.metadata().end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v <= 0) {
    throw LoadError(fmt::format("metadata '{}' = '{}' is not a positive integer", key, s));
  }
  return v;
}

Tensor slice_columns(const Tensor& m, std::size_t begin, std::size_t width) {
  Tensor out({m.dim(0), width});
  for (std::size_t r = 0; r < m.dim(0); ++r) {
    const auto row = m.row(r);
    std::copy(row.begin() + begin, row.begin() + begin + width, out.row(r).begin());
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || d_head <= 0 || vocab_size <= 0 || max_ctx <= 0) {
    throw ArgumentError("model dimensions must be positive");
  }
  if (d_model != n_heads * d_head) {
    throw ArgumentError(fmt::format("d_model {} != n_heads {} x d_head {}", d_model, n_heads, d_head));
  }
  if (!(ln_eps > 0.0f)) throw ArgumentError("ln_eps must be positive");
}

Model::Model(ModelConfig config, Weights weights) : config_(config), weights_(std::move(weights)) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto f = static_cast<std::size_t>(config_.d_mlp());
  expect_shape(weights_.wte, {static_cast<std::size_t>(config_.vocab_size), d}, "wte.weight");
  expect_shape(weights_.wpe, {static_cast<std::size_t>(config_.max_ctx), d}, "wpe.weight");
  if (weights_.layers.size() != static_cast<std::size_t>(config_.n_layers)) {
    throw LoadError(fmt::format("{} layers present, config expects {}", weights_.layers.size(),
                                config_.n_layers));
  }
  for (std::size_t i = 0; i < weights_.layers.size(); ++i) {
    const LayerWeights& w = weights_.layers[i];
    const std::string p = fmt::format("h.{}.", i);
    expect_shape(w.ln1_g, {d}, p + "ln_1.weight");
    expect_shape(w.ln1_b, {d}, p + "ln_1.bias");
    expect_shape(w.w_qkv, {d, 3 * d}, p + "attn.c_attn.weight");
    expect_shape(w.b_qkv, {3 * d}, p + "attn.c_attn.bias");
    expect_shape(w.w_o, {d, d}, p + "attn.c_proj.weight");
    expect_shape(w.b_o, {d}, p + "attn.c_proj.bias");
    expect_shape(w.ln2_g, {d}, p + "ln_2.weight");
    expect_shape(w.ln2_b, {d}, p + "ln_2.bias");
    expect_shape(w.w_fc, {d, f}, p + "mlp.c_fc.weight");
    expect_shape(w.b_fc, {f}, p + "mlp.c_fc.bias");
    expect_shape(w.w_proj, {f, d}, p + "mlp.c_proj.weight");
    expect_shape(w.b_proj, {d}, p + "mlp.c_proj.bias");
  }
  expect_shape(weights_.lnf_g, {d}, "ln_f.weight");
  expect_shape(weights_.lnf_b, {d}, "ln_f.bias");
}

Model Model::load(const std::filesystem::path& path) {
  const SafetensorsFile file = SafetensorsFile::open(path);
  std::string prefix;
  if (!file.contains("wte.weight") && file.contains("transformer.wte.weight")) prefix = "transformer.";
  auto get = [&](const std::string& name) { return file.read(prefix + name); };

  Weights w;
  w.wte = get("wte.weight");
  w.wpe = get("wpe.weight");
  if (w.wte.rank() != 2 || w.wpe.rank() != 2) throw LoadError("embeddings must be matrices");

  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(w.wte.dim(0));
  cfg.d_model = static_cast<int>(w.wte.dim(1));
  cfg.max_ctx = static_cast<int>(w.wpe.dim(0));
  cfg.n_heads = metadata_int(file, "n_head", cfg.d_model / 64);
  if (cfg.n_heads <= 0 || cfg.d_model % cfg.n_heads != 0) {
    throw LoadError(fmt::format("cannot split d_model {} into {} heads", cfg.d_model, cfg.n_heads));
  }
  cfg.d_head = cfg.d_model / cfg.n_heads;
  if (auto it = file.metadata().find("ln_eps"); it != file.metadata().end()) {
    try {
      cfg.ln_eps = std::stof(it->second);
    } catch (const std::exception&) {
      throw LoadError(fmt::format("metadata ln_eps = '{}' is not a number", it->second));
    }
  }
  int n_layers = 0;
  while (file.contains(fmt::format("{}h.{}.ln_1.weight", prefix, n_layers))) ++n_layers;
  if (n_layers == 0) throw LoadError(fmt::format("'{}': missing tensor 'h.0.ln_1.weight'", path.string()));
  cfg.n_layers = n_layers;

  for (int i = 0; i < n_layers; ++i) {
    const std::string p = fmt::format("h.{}.", i);
    LayerWeights lw;
    lw.ln1_g = get(p + "ln_1.weight");
    lw.ln1_b = get(p + "ln_1.bias");
    lw.w_qkv = get(p + "attn.c_attn.weight");
    lw.b_qkv = get(p + "attn.c_attn.bias");
    lw.w_o = get(p + "attn.c_proj.weight");
    lw.b_o = get(p + "attn.c_proj.bias");
    lw.ln2_g = get(p + "ln_2.weight");
    lw.ln2_b = get(p + "ln_2.bias");
    lw.w_fc = get(p + "mlp.c_fc.weight");
    lw.b_fc = get(p + "mlp.c_fc.bias");
    lw.w_proj = get(p + "mlp.c_proj.weight");
    lw.b_proj = get(p + "mlp.c_proj.bias");
    w.layers.push_back(std::move(lw));
  }
  w.lnf_g = get("ln_f.weight");
  w.lnf_b = get("ln_f.bias");

  try {
    return Model(cfg, std::move(w));
  } catch (const ArgumentError& e) {
    throw LoadError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

Tensor Model::head_w_q(int layer, int head) const {
  return slice_columns(weights_.layers.at(layer).w_qkv, static_cast<std::size_t>(head * config_.d_head),
                       config_.d_head);
}

Tensor Model::head_w_k(int layer, int head) const {
  return slice_columns(weights_.layers.at(layer).w_qkv,
                       static_cast<std::size_t>(config_.d_model + head * config_.d_head), config_.d_head);
}

Tensor Model::head_w_v(int layer, int head) const {
  return slice_columns(weights_.layers.at(layer).w_qkv,
                       static_cast<std::size_t>(2 * config_.d_model + head * config_.d_head),
                       config_.d_head);
}

Tensor Model::head_w_o(int layer, int head) const {
  const Tensor& w_o = weights_.layers.at(layer).w_o;
  const auto dh = static_cast<std::size_t>(config_.d_head);
  const auto d = static_cast<std::size_t>(config_.d_model);
  std::vector<float> rows(w_o.ptr() + head * dh * d, w_o.ptr() + (head + 1) * dh * d);
  return Tensor({dh, d}, std::move(rows));
}

std::size_t Model::parameter_count() const {
  std::size_t n = weights_.wte.numel() + weights_.wpe.numel() + weights_.lnf_g.numel() +
                  weights_.lnf_b.numel();
  for (const LayerWeights& w : weights_.layers) {
    for (const Tensor* t : {&w.ln1_g, &w.ln1_b, &w.w_qkv, &w.b_qkv, &w.w_o, &w.b_o, &w.ln2_g,
                            &w.ln2_b, &w.w_fc, &w.b_fc, &w.w_proj, &w.b_proj}) {
      n += t->numel();
    }
  }
  return n;
}

}  // namespace seqcirc
