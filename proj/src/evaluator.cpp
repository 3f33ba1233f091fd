#include <algorithm>
#include <climits>

#include <fmt/format.h>

#include "seqcirc/errors.hpp"
#include "seqcirc/parallel.hpp"
#include "seqcirc/patching.hpp"

namespace seqcirc {

namespace {

double mean_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

Evaluator::Evaluator(const Model& model, const TaskDataset& dataset, AblationMode mode, std::size_t workers,
                     std::shared_ptr<const MeanCache> means)
    : model_(model), dataset_(dataset), mode_(mode), workers_(workers), means_(std::move(means)) {
  if (dataset_.size() == 0) throw ArgumentError("evaluator needs a non-empty dataset");
  dataset_.validate();
  nodes_ = all_nodes(model_.config().n_layers, model_.config().n_heads);
  if (mode_ != AblationMode::Zero && dataset_.corrupted.empty()) {
    throw ArgumentError(fmt::format("{} ablation needs the corrupted half of the dataset", mode_name(mode_)));
  }
  if (mode_ == AblationMode::MeanCorrupted) {
    if (!means_) means_ = std::make_shared<const MeanCache>(MeanCache::build(model_, dataset_, workers_));
    if (means_->positions() != dataset_.seq_len()) {
      throw ArgumentError(fmt::format("mean cache covers {} positions, samples have {}", means_->positions(),
                                      dataset_.seq_len()));
    }
  }
}

const std::vector<double>& Evaluator::clean_diffs() {
  if (!clean_) {
    std::vector<double> diffs(dataset_.size());
    parallel_for(dataset_.size(), workers_, [&](std::size_t i) {
      const PromptSample& s = dataset_.clean[i];
      ForwardOptions opt;
      opt.logits = LogitsMode::None;
      opt.selected_tokens = {s.answer_id, s.incorrect_id};
      const ActivationCache c = model_.forward(s.tokens, opt);
      diffs[i] = static_cast<double>(c.selected_logits[0]) - static_cast<double>(c.selected_logits[1]);
    });
    clean_ = std::move(diffs);
  }
  return *clean_;
}

double Evaluator::clean_logit_diff() { return mean_in_order(clean_diffs()); }

std::map<NodeId, Tensor> Evaluator::corrupted_outputs(std::size_t i, const std::set<NodeId>& nodes) const {
  ForwardOptions opt;
  opt.logits = LogitsMode::None;
  opt.capture_nodes.assign(nodes.begin(), nodes.end());
  if (!nodes.empty()) {
    opt.stop_layer = std::max_element(nodes.begin(), nodes.end())->layer + 1;
  } else {
    return {};
  }
  return model_.forward(dataset_.corrupted.at(i), opt).node_outputs;
}

PatchPlan Evaluator::plan_for(std::size_t i, const std::set<NodeId>& ablate, const EdgeSet& removed) const {
  std::map<NodeId, Tensor> resampled;
  if (mode_ == AblationMode::ResampleCorrupted) {
    std::set<NodeId> needed = ablate;
    for (const Edge& e : removed) needed.insert(e.sender);
    resampled = corrupted_outputs(i, needed);
  }
  auto value = [&](const NodeId& n) -> Tensor {
    switch (mode_) {
      case AblationMode::MeanCorrupted: return means_->at(n);
      case AblationMode::Zero: return {};
      case AblationMode::ResampleCorrupted: return resampled.at(n);
    }
    return {};
  };
  PatchPlan plan;
  for (const NodeId& n : ablate) plan.add({PatchSite::output_of(n), {}, value(n), {}});
  for (const Edge& e : removed) {
    if (!can_feed(e.sender, e.receiver)) {
      throw ArgumentError(fmt::format("edge {} -> {} does not point downstream", e.sender.str(), e.receiver.str()));
    }
    plan.add({PatchSite::input_of(e.receiver), {}, value(e.sender), e.sender});
  }
  return plan;
}

int Evaluator::first_changed_layer(const std::set<NodeId>& ablate, const EdgeSet& removed) const {
  int first = INT_MAX;
  std::vector<NodeId> nodes;
  std::set_symmetric_difference(ablate.begin(), ablate.end(), ref_ablate_.begin(), ref_ablate_.end(),
                                std::back_inserter(nodes));
  for (const NodeId& n : nodes) first = std::min(first, n.layer);
  std::vector<Edge> edges;
  std::set_symmetric_difference(removed.begin(), removed.end(), ref_removed_.begin(), ref_removed_.end(),
                                std::back_inserter(edges));
  for (const Edge& e : edges) {
    first = std::min(first, e.receiver.kind == ReceiverSlot::Kind::ResidPostFinal ? model_.config().n_layers
                                                                                   : e.receiver.layer);
  }
  return first;
}

bool Evaluator::enable_prefix_reuse(std::vector<NodeId> tracked, std::size_t budget_bytes) {
  const ModelConfig& cfg = model_.config();
  const std::size_t per_tensor = dataset_.seq_len() * static_cast<std::size_t>(cfg.d_model) * sizeof(float);
  const std::size_t per_sample = (static_cast<std::size_t>(cfg.n_layers) + 1 + tracked.size()) * per_tensor;
  // Reference plus one pending copy.
  if (2 * per_sample * dataset_.size() > budget_bytes) {
    reuse_ = false;
    return false;
  }
  std::sort(tracked.begin(), tracked.end());
  tracked.erase(std::unique(tracked.begin(), tracked.end()), tracked.end());
  tracked_ = std::move(tracked);
  reuse_ = true;
  have_reference_ = false;
  reference_.clear();
  pending_.clear();
  return true;
}

void Evaluator::commit_last() {
  if (!reuse_ || pending_.empty()) return;
  if (!have_reference_) {
    reference_ = std::move(pending_);
  } else {
    for (std::size_t i = 0; i < reference_.size(); ++i) {
      SampleState& ref = reference_[i];
      SampleState& p = pending_[i];
      for (std::size_t l = static_cast<std::size_t>(p.from_layer); l < p.resid.size(); ++l) {
        if (!p.resid[l].empty()) ref.resid[l] = std::move(p.resid[l]);
      }
      for (auto& [node, t] : p.outputs) ref.outputs[node] = std::move(t);
      ref.diff = p.diff;
    }
  }
  pending_.clear();
  ref_ablate_ = last_ablate_;
  ref_removed_ = last_removed_;
  have_reference_ = true;
}

std::vector<double> Evaluator::ablated_diffs(const std::set<NodeId>& ablate, const EdgeSet& removed) {
  const ModelConfig& cfg = model_.config();
  const std::size_t n = dataset_.size();
  int start = 0;
  if (reuse_ && have_reference_) {
    start = first_changed_layer(ablate, removed);
    if (start == INT_MAX) {
      last_resume_layer_ = cfg.n_layers + 1;
      pending_.clear();
      last_ablate_ = ablate;
      last_removed_ = removed;
      std::vector<double> diffs(n);
      for (std::size_t i = 0; i < n; ++i) diffs[i] = reference_[i].diff;
      return diffs;
    }
  }
  last_resume_layer_ = start;

  const bool shared_plan = mode_ != AblationMode::ResampleCorrupted;
  PatchPlan common;
  if (shared_plan) common = plan_for(0, ablate, removed);

  std::vector<double> diffs(n);
  if (reuse_) pending_.assign(n, SampleState{});
  parallel_for(n, workers_, [&](std::size_t i) {
    const PromptSample& s = dataset_.clean[i];
    PatchPlan own;
    if (!shared_plan) own = plan_for(i, ablate, removed);
    ForwardOptions opt;
    opt.patches = shared_plan ? &common : &own;
    opt.logits = LogitsMode::None;
    opt.selected_tokens = {s.answer_id, s.incorrect_id};
    ResumeState resume;
    if (reuse_) {
      opt.capture_resid = true;
      opt.capture_nodes = tracked_;
      if (start > 0) {
        const SampleState& ref = reference_[i];
        resume.layer = start;
        resume.resid_pre = ref.resid[static_cast<std::size_t>(start)];
        for (const auto& [node, t] : ref.outputs) {
          if (node.layer < start) resume.node_outputs.emplace(node, t);
        }
        opt.resume = &resume;
      }
    }
    ActivationCache c = model_.forward(s.tokens, opt);
    diffs[i] = static_cast<double>(c.selected_logits[0]) - static_cast<double>(c.selected_logits[1]);
    if (reuse_) {
      SampleState& p = pending_[i];
      p.from_layer = start;
      p.diff = diffs[i];
      p.resid.resize(static_cast<std::size_t>(cfg.n_layers) + 1);
      for (int l = start; l < cfg.n_layers; ++l) p.resid[l] = std::move(c.resid_pre[l]);
      if (start < cfg.n_layers) p.resid[cfg.n_layers] = std::move(c.resid_post[cfg.n_layers - 1]);
      for (auto& [node, t] : c.node_outputs) {
        if (node.layer >= start) p.outputs.emplace(node, std::move(t));
      }
    }
  });
  last_ablate_ = ablate;
  last_removed_ = removed;
  return diffs;
}

EvalResult Evaluator::evaluate(const std::set<NodeId>& ablate, const EdgeSet& removed) {
  EvalResult r;
  r.clean_logit_diff = clean_logit_diff();
  if (r.clean_logit_diff == 0.0) {
    throw UndefinedScoreError("performance is undefined: the clean logit difference is zero");
  }
  r.ablated_logit_diff = mean_in_order(ablated_diffs(ablate, removed));
  r.performance_pct = 100.0 * (r.ablated_logit_diff / r.clean_logit_diff);
  return r;
}

}  // namespace seqcirc
