// Acceptance harness: one PASS/FAIL line per criterion.
//
// Criteria 1-9 need GPT-2 Small (SEQCIRC_MODEL or --model, default
// data/gpt2/model.safetensors). Criterion 10 runs on the tiny fixture model and
// the bundled vocabulary. Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "json.hpp"
#include "seqcirc/analysis.hpp"
#include "seqcirc/dataset.hpp"
#include "seqcirc/discovery.hpp"
#include "seqcirc/errors.hpp"
#include "seqcirc/patching.hpp"

using namespace seqcirc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Settings {
  std::string model_path;
  std::size_t workers = 0;
  std::uint64_t seed = 0;
  std::size_t n = 1536;
  std::size_t census_n = 256;
  std::size_t sample_cap = 128;
  std::string out_dir;
};

// Lazily built GPT-2 state shared by criteria 1-9.
class Gpt2Session {
 public:
  explicit Gpt2Session(Settings s) : s_(std::move(s)) {}

  bool available() const { return fs::exists(s_.model_path); }
  const Settings& settings() const { return s_; }

  const Model& model() {
    if (!model_) model_ = std::make_unique<Model>(Model::load(s_.model_path));
    return *model_;
  }
  const Tokenizer& tok() {
    if (!tok_) tok_ = std::make_unique<Tokenizer>(Tokenizer::load_dir(fs::path(SEQCIRC_DATA_DIR) / "gpt2"));
    return *tok_;
  }

  const TaskDataset& dataset(const std::string& task, std::size_t n) {
    const std::string key = fmt::format("{}/{}", task, n);
    auto it = datasets_.find(key);
    if (it == datasets_.end()) {
      GenerationOptions opt;
      TaskDataset ds = generate_clean(model_scorer(model(), s_.workers), tok(), SequenceLexicon::by_name(task),
                                      default_templates(SEQCIRC_DATA_DIR), n, s_.seed, opt);
      corrupt(ds, s_.seed, tok());
      it = datasets_.emplace(key, std::move(ds)).first;
    }
    return it->second;
  }

  std::shared_ptr<const MeanCache> means(const std::string& task) {
    auto& slot = means_[task];
    if (!slot) slot = std::make_shared<const MeanCache>(MeanCache::build(model(), dataset(task, s_.n), s_.workers));
    return slot;
  }

  /// Evaluator over the full task dataset, mean ablation.
  Evaluator full_evaluator(const std::string& task) {
    return Evaluator(model(), dataset(task, s_.n), AblationMode::MeanCorrupted, s_.workers, means(task));
  }

  const TaskDataset& search_subset(const std::string& task) {
    auto it = subsets_.find(task);
    if (it == subsets_.end()) it = subsets_.emplace(task, dataset(task, s_.n).head(s_.sample_cap)).first;
    return it->second;
  }

  struct Discovered {
    NodePruneResult prune;
    EvalResult full_score;
    double seconds = 0.0;
  };

  const Discovered& circuit(const std::string& task) {
    auto it = circuits_.find(task);
    if (it != circuits_.end()) return it->second;
    const auto t0 = Clock::now();
    SearchConfig cfg;  // T_n = T_e = 80, mean ablation
    Evaluator ev(model(), search_subset(task), cfg.mode, s_.workers, means(task));
    Discovered d;
    d.prune = prune_nodes(ev, cfg, [&](const std::string& line) { std::cerr << "  [" << task << "] " << line << '\n'; });
    d.seconds = seconds_since(t0);
    Evaluator full = full_evaluator(task);
    d.full_score = evaluate_circuit(full, d.prune.circuit);
    if (!s_.out_dir.empty()) {
      fs::create_directories(s_.out_dir);
      write_node_set(d.prune.circuit, fs::path(s_.out_dir) / fmt::format("circuit_{}.json", task));
    }
    return circuits_.emplace(task, std::move(d)).first->second;
  }

 private:
  Settings s_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<Tokenizer> tok_;
  std::map<std::string, TaskDataset> datasets_;
  std::map<std::string, TaskDataset> subsets_;
  std::map<std::string, std::shared_ptr<const MeanCache>> means_;
  std::map<std::string, Discovered> circuits_;
};

std::vector<NodeId> all_heads(const ModelConfig& c) {
  std::vector<NodeId> out;
  for (const auto& n : all_nodes(c.n_layers, c.n_heads)) {
    if (n.is_head()) out.push_back(n);
  }
  return out;
}

std::set<NodeId> all_node_set(const ModelConfig& c) {
  const auto v = all_nodes(c.n_layers, c.n_heads);
  return {v.begin(), v.end()};
}

const OvScoreReport& report_for(const std::vector<OvScoreReport>& reports, const NodeId& head) {
  for (const auto& r : reports) {
    if (r.head == head) return r;
  }
  throw std::runtime_error("missing head " + head.str());
}

// ---------------------------------------------------------------------------
// Criteria on GPT-2 Small

Outcome engine_fidelity(Gpt2Session& g) {
  const Model& m = g.model();
  const auto t0 = Clock::now();
  const auto prompts = pure_sequence_prompts(g.tok(), SequenceLexicon::numerals());
  std::size_t correct = 0;
  std::vector<double> probs;
  for (const auto& p : prompts) {
    ForwardOptions fo;
    fo.logits = LogitsMode::Last;
    const Tensor pr = softmax_last(m.forward(p.tokens, fo).logits);
    const auto row = pr.row(0);
    const auto top = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += top == p.answer_id;
    probs.push_back(row[static_cast<std::size_t>(p.answer_id)]);
  }
  const double secs = seconds_since(t0);
  std::sort(probs.begin(), probs.end());
  const std::size_t k = probs.size();
  const double median = k % 2 ? probs[k / 2] : 0.5 * (probs[k / 2 - 1] + probs[k / 2]);
  // Only 8 windows of four shown members plus an answer fit in 1..12; all must be right.
  const bool pass = correct == prompts.size() && prompts.size() == 8 && median >= 0.5 && secs < 60.0;
  return {pass, fmt::format("{}/{} argmax correct, median p(correct) {:.3f}, {:.1f}s (need all 8 correct, "
                            "median >= 0.5, < 60s)",
                            correct, prompts.size(), median, secs)};
}

Outcome successor_scores(Gpt2Session& g) {
  const Model& m = g.model();
  const auto t0 = Clock::now();
  const auto heads = all_heads(m.config());
  const auto numerals = ov_scores(m, numeral_ov_prompts(g.tok(), KeywordMode::Successor), heads, 5,
                                  g.settings().workers);
  const auto words = ov_scores(m, word_ov_prompts(g.tok(), "number_words", number_words_to_twenty(),
                                                  KeywordMode::Successor),
                               {NodeId::Head(9, 1)}, 5, g.settings().workers);
  const double secs = seconds_since(t0);
  const double s91 = report_for(numerals, NodeId::Head(9, 1)).score_pct;
  double mean = 0.0, best_other = 0.0;
  NodeId best_other_head;
  for (const auto& r : numerals) {
    mean += r.score_pct;
    if (r.head != NodeId::Head(9, 1) && r.score_pct >= best_other) {
      best_other = r.score_pct;
      best_other_head = r.head;
    }
  }
  mean /= static_cast<double>(numerals.size());
  const double w91 = words.front().score_pct;
  const bool pass = s91 >= 77.0 && s91 <= 95.0 && s91 > best_other && mean < 10.0 && w91 >= 80.0 && w91 <= 98.0 &&
                    secs < 600.0;
  return {pass, fmt::format("9.1 numerals {:.2f}% (need [77, 95]), runner-up {} {:.2f}%, all-head mean {:.2f}% "
                            "(need < 10), 9.1 number words {:.2f}% (need [80, 98]), {:.0f}s",
                            s91, best_other_head.str(), best_other, mean, w91, secs)};
}

Outcome copy_score(Gpt2Session& g) {
  const auto r = ov_score(g.model(), numeral_ov_prompts(g.tok(), KeywordMode::Copy), NodeId::Head(9, 1), 5);
  const bool pass = r.score_pct >= 45.0 && r.score_pct <= 75.0;
  return {pass, fmt::format("9.1 numerals copy score {:.2f}% (need [45, 75])", r.score_pct)};
}

Outcome lens_census(Gpt2Session& g) {
  const auto t0 = Clock::now();
  const std::size_t n = g.settings().census_n;
  const auto num = lens_transition_census(g.model(), g.dataset("numerals", n).clean, 9, g.settings().workers);
  const auto mon = lens_transition_census(g.model(), g.dataset("months", n).clean, 9, g.settings().workers);
  const double secs = seconds_since(t0);
  const bool pass = n >= 256 && num.fraction >= 0.90 && mon.fraction >= 0.90 && secs < 1200.0;
  return {pass, fmt::format("layer-9 first-top-1 fraction: numerals {:.4f}, months {:.4f} over n={} (need >= 0.90), "
                            "{:.0f}s",
                            num.fraction, mon.fraction, n, secs)};
}

Outcome node_pruning(Gpt2Session& g) {
  const auto& d = g.circuit("numerals");
  const std::set<NodeId> required{NodeId::Head(0, 1), NodeId::Head(4, 4), NodeId::Head(7, 11), NodeId::Head(9, 1),
                                  NodeId::Mlp(9)};
  std::vector<std::string> missing;
  for (const auto& n : required) {
    if (!d.prune.circuit.count(n)) missing.push_back(n.str());
  }
  const bool pass = missing.empty() && d.full_score.performance_pct >= 78.0 && d.seconds <= 3 * 3600.0;
  return {pass, fmt::format("{} nodes, missing [{}], full-dataset performance {:.2f}% (need >= 78), "
                            "{} sweeps, search {:.0f}s (budget 3h)",
                            d.prune.circuit.size(), fmt::join(missing, " "), d.full_score.performance_pct,
                            d.prune.sweeps, d.seconds)};
}

Outcome drop_tables(Gpt2Session& g) {
  const auto& circuit = g.circuit("numerals").prune.circuit;
  const auto everything = all_node_set(g.model().config());
  Evaluator num = g.full_evaluator("numerals");
  const double d91 = circuit.count(NodeId::Head(9, 1)) ? node_drop(num, circuit, NodeId::Head(9, 1)) : 0.0;
  const double mlp9_num = node_drop(num, everything, NodeId::Mlp(9));
  const double mlp0_num = node_drop(num, everything, NodeId::Mlp(0));
  Evaluator mon = g.full_evaluator("months");
  const double mlp9_mon = node_drop(mon, everything, NodeId::Mlp(9));
  const bool pass = d91 >= 20.0 && mlp9_num >= 50.0 && mlp9_mon >= 65.0 && mlp0_num >= 40.0;
  return {pass, fmt::format("9.1 from circuit {:.2f} (need >= 20), MLP 9 numerals {:.2f} (>= 50), MLP 9 months "
                            "{:.2f} (>= 65), MLP 0 numerals {:.2f} (>= 40)",
                            d91, mlp9_num, mlp9_mon, mlp0_num)};
}

Outcome cross_circuit(Gpt2Session& g) {
  const std::vector<std::string> tasks{"numerals", "number_words", "months"};
  const auto ioi = read_node_set(fs::path(SEQCIRC_DATA_DIR) / "ioi_circuit.json");
  bool own_ok = true;
  int negative = 0;
  double ioi_max = -1e9;
  std::vector<std::string> parts;
  for (const auto& task : tasks) {
    const auto& own = g.circuit(task);
    Evaluator ev = g.full_evaluator(task);
    const double own_pct = own.full_score.performance_pct;
    const double ioi_pct = evaluate_circuit(ev, ioi).performance_pct;
    own_ok = own_ok && own_pct >= 78.0;
    negative += ioi_pct < 0.0;
    ioi_max = std::max(ioi_max, ioi_pct);
    parts.push_back(fmt::format("{}: own {:.2f}% ioi {:.2f}%", task, own_pct, ioi_pct));
  }
  const bool pass = own_ok && ioi_max <= 10.0 && negative >= 2;
  return {pass, fmt::format("{} (need own >= 78, ioi <= 10 everywhere and < 0 on two)", fmt::join(parts, "; "))};
}

Outcome attention_motifs(Gpt2Session& g) {
  const TaskDataset& ds = g.dataset("numerals", g.settings().census_n);
  std::vector<std::vector<TokenId>> prompts;
  for (const auto& s : ds.clean) prompts.push_back(s.tokens);
  const auto sums = attention_summaries(g.model(), prompts, {NodeId::Head(9, 1), NodeId::Head(7, 11)}, nullptr,
                                        g.settings().workers);
  const Tensor& a91 = sums[0].matrix;
  const std::size_t last = a91.rows() - 1;
  const auto member = static_cast<std::size_t>(ds.clean.front().member_positions.back());
  double other = 0.0;
  std::size_t other_pos = 0;
  for (std::size_t p = 0; p < last; ++p) {
    if (p != member && a91.at(last, p) > other) {
      other = a91.at(last, p);
      other_pos = p;
    }
  }
  const DiagonalStats d711 = diagonal_stats(sums[1].matrix, 1);
  const bool pass = a91.at(last, member) > other && d711.diagonal_mean > d711.off_diagonal_mean;
  return {pass, fmt::format("9.1 final->last member {:.4f} vs best other position {} {:.4f}; 7.11 previous-token "
                            "diagonal {:.4f} vs off-diagonal {:.4f}",
                            a91.at(last, member), other_pos, other, d711.diagonal_mean, d711.off_diagonal_mean)};
}

Outcome edge_motif(Gpt2Session& g) {
  const auto& nodes = g.circuit("numerals").prune.circuit;
  const auto t0 = Clock::now();
  SearchConfig cfg;
  Evaluator ev(g.model(), g.search_subset("numerals"), cfg.mode, g.settings().workers, g.means("numerals"));
  const auto r = prune_edges(ev, nodes, cfg, [](const std::string& line) { std::cerr << "  [edges] " << line << '\n'; });
  if (!g.settings().out_dir.empty()) r.graph.save(fs::path(g.settings().out_dir) / "graph_numerals.json");
  std::vector<std::string> motif;
  std::map<NodeId, int> degree;
  for (const auto& e : r.graph.edges) {
    ++degree[e.sender];
    if (e.receiver.kind != ReceiverSlot::Kind::ResidPostFinal) ++degree[e.receiver.owner()];
    if ((e.sender == NodeId::Head(4, 4) || e.sender == NodeId::Head(7, 11)) && e.receiver.is_head_slot() &&
        e.receiver.owner() == NodeId::Head(9, 1)) {
      motif.push_back(fmt::format("{}->9.1.{}", e.sender.str(), e.receiver.slot_name()));
    }
  }
  std::size_t isolated = 0;
  for (const auto& n : r.graph.nodes) isolated += degree[n] == 0;
  const bool pass = !motif.empty() && isolated == 0;
  return {pass, fmt::format("{} edges over {} nodes, motif edges [{}], isolated nodes {}, {:.0f}s",
                            r.graph.edges.size(), r.graph.nodes.size(), fmt::join(motif, " "), isolated,
                            seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// Criterion 10: property suite

const Model& tiny() {
  static const Model m = Model::load(fs::path(SEQCIRC_TEST_DATA) / "tiny_gpt2.safetensors");
  return m;
}

TaskDataset tiny_dataset(std::size_t n, unsigned seed, bool corrupted_equals_clean = false) {
  std::mt19937 gen(seed);
  const int vocab = tiny().config().vocab_size;
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  TaskDataset ds;
  ds.task = "synthetic";
  for (std::size_t i = 0; i < n; ++i) {
    PromptSample s;
    s.tokens.resize(12);
    for (auto& t : s.tokens) t = tok(gen);
    s.member_positions = {2, 5, 8, 11};
    std::vector<TokenId> c = s.tokens;
    if (!corrupted_equals_clean) {
      for (int p : s.member_positions) c[static_cast<std::size_t>(p)] = tok(gen);
    }
    ForwardOptions fo;
    fo.logits = LogitsMode::Last;
    const auto row = tiny().forward(s.tokens, fo).logits.row(0);
    s.answer_id = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    s.incorrect_id = static_cast<TokenId>(std::min_element(row.begin(), row.end()) - row.begin());
    ds.clean.push_back(std::move(s));
    ds.corrupted.push_back(std::move(c));
  }
  return ds;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome property_suite(const Settings& s) {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  // Residual additivity: resid_post = resid_pre + heads + b_O + mlp_out, per layer.
  {
    const Model& m = tiny();
    const auto d = static_cast<std::size_t>(m.config().d_model);
    std::mt19937 gen(4);
    std::uniform_int_distribution<int> tok(0, m.config().vocab_size - 1);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<TokenId> tokens(static_cast<std::size_t>(1 + trial % 30));
      for (auto& t : tokens) t = tok(gen);
      ForwardOptions fo;
      fo.capture_resid = fo.capture_head_out = fo.capture_layer_out = true;
      const ActivationCache c = m.forward(tokens, fo);
      for (int l = 0; l < m.config().n_layers; ++l) {
        const auto& b_o = m.weights().layers[static_cast<std::size_t>(l)].b_o.data();
        for (std::size_t p = 0; p < tokens.size(); ++p) {
          for (std::size_t j = 0; j < d; ++j) {
            double sum = c.resid_pre[l].at(p, j) + b_o[j] + c.mlp_out[l].at(p, j);
            for (const Tensor& h : c.head_out[l]) sum += h.at(p, j);
            worst = std::max(worst, std::abs(sum - c.resid_post[l].at(p, j)));
          }
        }
      }
    }
    notes.push_back(fmt::format("additivity max err {:.2e}", worst));
    if (!(worst <= 1e-4)) failures.push_back("residual additivity");
  }

  // Empty ablation is exactly 100 and reproduces the clean diffs bit for bit.
  {
    const TaskDataset ds = tiny_dataset(16, 3);
    bool ok = true;
    for (auto mode : {AblationMode::MeanCorrupted, AblationMode::Zero, AblationMode::ResampleCorrupted}) {
      Evaluator ev(tiny(), ds, mode, 1);
      const auto r = ev.evaluate({});
      ok = ok && r.performance_pct == 100.0 && ev.ablated_diffs({}) == ev.clean_diffs();
    }
    if (!ok) failures.push_back("empty-ablation identity");
  }

  // Mean over a single corrupted copy of the clean prompt patches nothing.
  {
    const TaskDataset ds = tiny_dataset(1, 5, true);
    Evaluator ev(tiny(), ds, AblationMode::MeanCorrupted, 1);
    const auto everything = all_node_set(tiny().config());
    const double diff = std::abs(ev.ablated_diffs(everything).front() - ev.clean_diffs().front());
    notes.push_back(fmt::format("single-sample no-op err {:.2e}", diff));
    if (!(diff <= 1e-4)) failures.push_back("single-sample mean no-op");
  }

  // Tokenizer oracle corpus.
  const Tokenizer tok = Tokenizer::load_dir(fs::path(SEQCIRC_DATA_DIR) / "gpt2");
  {
    std::ifstream in(fs::path(SEQCIRC_TEST_DATA) / "tokenizer_oracle.jsonl");
    std::string line;
    std::size_t total = 0, matched = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      ++total;
      matched += tok.encode(j.at("text").get<std::string>()) == j.at("ids").get<std::vector<TokenId>>();
    }
    notes.push_back(fmt::format("tokenizer {}/{}", matched, total));
    if (total == 0 || matched != total) failures.push_back("tokenizer oracle");
  }

  // Determinism, single worker: datasets, mean caches, pruning traces, random sets.
  {
    bool ok = true;
    const fs::path dir = fs::temp_directory_path() / "seqcirc_acceptance";
    fs::create_directories(dir);
    const PairScorer stub = [](const std::vector<PromptSample>& batch) {
      std::vector<double> out;
      for (const auto& p : batch) out.push_back(1.0 + 0.01 * static_cast<double>(p.tokens.back() % 7));
      return out;
    };
    for (int run = 0; run < 2; ++run) {
      TaskDataset ds = generate_clean(stub, tok, SequenceLexicon::months(), default_templates(SEQCIRC_DATA_DIR), 96,
                                      s.seed + 17);
      corrupt(ds, s.seed + 17, tok);
      write_jsonl(ds, dir / fmt::format("run{}.jsonl", run));
    }
    ok = ok && file_bytes(dir / "run0.jsonl") == file_bytes(dir / "run1.jsonl");

    const TaskDataset ds = tiny_dataset(12, 9);
    const MeanCache a = MeanCache::build(tiny(), ds, 1);
    const MeanCache b = MeanCache::build(tiny(), ds, 1);
    ok = ok && a.means() == b.means();

    auto trace = [&] {
      Evaluator ev(tiny(), ds, AblationMode::MeanCorrupted, 1);
      SearchConfig cfg;
      cfg.t_node = 90.0;
      const auto r = prune_nodes(ev, cfg);
      std::ostringstream out;
      for (const auto& st : r.trace) out << st.node.str() << ' ' << fmt::format("{:.17g}", st.performance_pct) << '\n';
      return out.str();
    };
    ok = ok && trace() == trace();
    const auto heads = all_heads(tiny().config());
    ok = ok && random_component_sets(heads, 3, 5, {}, 42) == random_component_sets(heads, 3, 5, {}, 42);
    fs::remove_all(dir);
    if (!ok) failures.push_back("determinism");
  }

  if (failures.empty()) return {true, fmt::format("all properties hold ({})", fmt::join(notes, ", "))};
  return {false, fmt::format("failed: {} ({})", fmt::join(failures, ", "), fmt::join(notes, ", "))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Settings s;
  if (const char* env = std::getenv("SEQCIRC_MODEL"); env && *env) s.model_path = env;
  else s.model_path = (fs::path(SEQCIRC_DATA_DIR) / "gpt2" / "model.safetensors").string();
  std::vector<int> only;
  app.add_option("--model", s.model_path, "GPT-2 Small safetensors file")->capture_default_str();
  app.add_option("--workers", s.workers, "worker threads (0 = all cores)");
  app.add_option("--seed", s.seed, "dataset seed")->capture_default_str();
  app.add_option("--n", s.n, "prompts per task for circuit discovery")->capture_default_str();
  app.add_option("--census-n", s.census_n, "prompts per task for the lens census")->capture_default_str();
  app.add_option("--out", s.out_dir, "directory for discovered circuits");
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Gpt2Session gpt2(s);
  const std::vector<std::pair<std::string, std::function<Outcome(Gpt2Session&)>>> gpt2_criteria{
      {"engine fidelity", engine_fidelity},   {"successor score", successor_scores},
      {"copy score", copy_score},             {"logit-lens census", lens_census},
      {"node pruning", node_pruning},         {"drop tables", drop_tables},
      {"cross-circuit matrix", cross_circuit}, {"attention motifs", attention_motifs},
      {"edge motif", edge_motif}};

  auto selected = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  int failed = 0;
  auto print = [&](int id, const std::string& name, const Outcome& o) {
    failed += !o.pass;
    std::cout << fmt::format("{} criterion {:>2} {}: {}", o.pass ? "PASS" : "FAIL", id, name, o.detail) << std::endl;
  };

  for (std::size_t i = 0; i < gpt2_criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected(id)) continue;
    const auto& [name, fn] = gpt2_criteria[i];
    if (!gpt2.available()) {
      print(id, name, {false, fmt::format("GPT-2 Small weights not found at '{}' (set SEQCIRC_MODEL); not run",
                                          s.model_path)});
      continue;
    }
    try {
      print(id, name, fn(gpt2));
    } catch (const std::exception& e) {
      print(id, name, {false, fmt::format("error: {}", e.what())});
    }
  }
  if (selected(10)) {
    try {
      print(10, "property suite", property_suite(s));
    } catch (const std::exception& e) {
      print(10, "property suite", {false, fmt::format("error: {}", e.what())});
    }
  }
  return failed == 0 ? 0 : 1;
}
