// Experiment driver: generates synthetic instances, trains both stages,
// benchmarks the matchers, evaluates checkpoints, runs the ablation grid,
// and inspects trained models. Every subcommand writes its artifacts to an
// output directory and exits 0 only when its report file landed in full;
// on failure, partially written outputs are removed.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "osdr/backbone.hpp"
#include "osdr/errors.hpp"
#include "osdr/eval.hpp"
#include "osdr/io.hpp"
#include "osdr/manifest.hpp"
#include "osdr/matching.hpp"
#include "osdr/pipeline.hpp"
#include "osdr/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace osdr;

namespace {

struct CommonOpts {
  std::string config;
  std::string instance;
  std::string out = "out";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "run manifest file");
  cmd->add_option("--instance", o.instance,
                  "reference instance "
                  "(desk-i2awa-02|desk-i2awa-04|desk-i2cifar)");
  o.seed_opt = cmd->add_option("--seed", o.seed,
                               "seed applied to generation and both stages");
  cmd->add_option("--out", o.out, "output directory");
}

RunManifest resolve_manifest(const CommonOpts& o) {
  RunManifest m;
  if (!o.config.empty()) m = load_manifest(o.config);
  if (!o.instance.empty()) {
    m.spec = reference_instance(o.instance);
    m.instance = o.instance;
  }
  if (o.seed_opt && o.seed_opt->count() > 0) apply_seed(m, o.seed);
  validate(m.spec);
  return m;
}

std::uint64_t base_seed(const CommonOpts& o, const RunManifest& m) {
  return o.seed_opt && o.seed_opt->count() > 0 ? o.seed : m.spec.seed;
}

// Records every artifact path handed out so a failed run cleans up after
// itself instead of leaving a half-written output directory. Callers mark
// commit() once the report landed; until then, unwinding purges the files.
struct RunDir {
  fs::path dir;
  std::vector<fs::path> written;
  bool committed = false;

  explicit RunDir(const std::string& out) : dir(out) {
    fs::create_directories(dir);
  }
  ~RunDir() {
    if (committed) return;
    for (const fs::path& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
  std::string path(const std::string& name) {
    const fs::path p = dir / name;
    fs::create_directories(p.parent_path());
    written.push_back(p);
    return p.string();
  }
  void commit() { committed = true; }
};

DomainDataset labeled_target(const SynthInstance& inst) {
  DomainDataset t = inst.target;
  t.labels = inst.truth;
  t.class_count = inst.spec.total_classes;
  return t;
}

void write_json_file(RunDir& rd, const std::string& name, const json& j) {
  write_file_atomic(rd.path(name), j.dump(2) + "\n");
}

void write_notes(RunDir& rd, const SynthInstance& inst) {
  if (inst.notes.empty()) return;
  std::string text;
  for (const std::string& n : inst.notes) text += n + "\n";
  write_file_atomic(rd.path("notes.txt"), text);
}

int do_gen_data(const CommonOpts& o) {
  const RunManifest m = resolve_manifest(o);
  const SynthInstance inst = generate(m.spec);
  RunDir rd(o.out);
  write_manifest(rd.path("manifest.ini"), m);
  write_dataset_fbin(rd.path("source.fbin"), inst.source);
  write_dataset_fbin(rd.path("target.fbin"), inst.target);
  write_dataset_csv(rd.path("target_truth.csv"), labeled_target(inst));
  save_graph(inst.graph, rd.path("graph_edges.txt"),
             rd.path("graph_embeddings.txt"), rd.path("graph_roles.txt"));
  write_weight_set(rd.path("gt_weights.txt"), inst.gt_known);
  write_notes(rd, inst);

  json j;
  j["classes"] = inst.spec.total_classes;
  j["known"] = inst.spec.known_count();
  j["unknown"] = inst.spec.unknown_count();
  j["source_samples"] = inst.source.size();
  j["target_samples"] = inst.target.size();
  j["graph_nodes"] = inst.graph.node_count();
  j["seed"] = inst.spec.seed;
  j["fingerprint"] = manifest_fingerprint(m);
  write_json_file(rd, "data_report.json", j);
  rd.commit();
  std::printf("wrote instance (%zu source, %zu target, %zu nodes) to %s\n",
              inst.source.size(), inst.target.size(),
              inst.graph.node_count(), o.out.c_str());
  return 0;
}

int do_train_gcn(const CommonOpts& o) {
  const RunManifest m = resolve_manifest(o);
  const SynthInstance inst = generate(m.spec);
  const StageAResult a =
      run_stage_a(m.cfg.stage_a, !m.cfg.ablation.attention, inst.graph,
                  inst.gt_known, inst.gt_known.weights.cols());
  RunDir rd(o.out);
  write_manifest(rd.path("manifest.ini"), m);
  write_loss_trace_csv(rd.path("stage_a_trace.csv"), a.loss_trace);
  write_weight_set(rd.path("stage_a_weights.txt"), a.harvested);
  save_gcn_checkpoint(rd.path("gcn_a.ckpt"), a.model);
  write_notes(rd, inst);

  json j;
  j["steps"] = a.loss_trace.size() - 1;
  j["initial_loss"] = a.loss_trace.front();
  j["final_loss"] = a.loss_trace.back();
  j["seed"] = m.cfg.stage_a.train.seed;
  j["fingerprint"] = manifest_fingerprint(m);
  write_json_file(rd, "stage_a_report.json", j);
  rd.commit();
  std::printf("stage-A loss %.6g -> %.6g over %zu steps\n",
              a.loss_trace.front(), a.loss_trace.back(),
              a.loss_trace.size() - 1);
  return 0;
}

int do_match(const CommonOpts& o, const std::string& checkpoint) {
  const RunManifest m = resolve_manifest(o);
  const SynthInstance inst = generate(m.spec);

  Matrix src_feat = inst.source.features;
  Matrix tgt_feat = inst.target.features;
  Matrix src_resp, tgt_resp;
  if (!checkpoint.empty()) {
    const JointCheckpoint ck = load_joint_checkpoint(checkpoint);
    src_feat = extract(ck.bb, inst.source.features);
    tgt_feat = extract(ck.bb, inst.target.features);
    src_resp = responses(ck.bb, inst.source.features);
    tgt_resp = responses(ck.bb, inst.target.features);
  } else {
    // No trained model: match raw features under uniform responses.
    const std::size_t l_t = inst.spec.total_classes;
    src_resp = Matrix(inst.source.size(), l_t, 1.0 / double(l_t));
    tgt_resp = Matrix(inst.target.size(), l_t, 1.0 / double(l_t));
  }

  std::vector<MatchedPair> pairs = match_greedy(src_feat, tgt_feat);
  const std::vector<double> dists = response_distances(pairs, src_resp,
                                                       tgt_resp);
  const double tau = resolve_tau(m.cfg.smo, dists);
  filter_pairs(pairs, src_resp, tgt_resp, tau);
  const double loss =
      discrepancy_loss(pairs, src_feat, tgt_feat, m.cfg.smo.reduction);

  RunDir rd(o.out);
  write_manifest(rd.path("manifest.ini"), m);
  write_pairs_csv(rd.path("pairs.csv"), pairs);

  std::size_t passing = 0;
  for (const MatchedPair& p : pairs) passing += p.pass ? 1 : 0;
  json j;
  j["pairs"] = pairs.size();
  j["passing"] = passing;
  j["tau"] = tau;
  j["discrepancy"] = loss;
  j["reduction"] = reduction_name(m.cfg.smo.reduction);
  j["fingerprint"] = manifest_fingerprint(m);
  write_json_file(rd, "match_report.json", j);
  rd.commit();
  std::printf("%zu pairs, %zu passing (tau %.6g), discrepancy %.6g\n",
              pairs.size(), passing, tau, loss);
  return 0;
}

int do_bench_match(const CommonOpts& o, std::size_t n, std::size_t dim) {
  const RunManifest m = resolve_manifest(o);
  const MatcherBenchmark b = benchmark_matchers(n, n, dim, base_seed(o, m));
  RunDir rd(o.out);
  write_benchmark_json(rd.path("bench.json"), b);
  rd.commit();
  std::printf("n=%zu dim=%zu\n", n, dim);
  std::printf("  greedy     %10.3f ms  acc %.4f\n", b.greedy_ms,
              b.greedy_acc);
  std::printf("  hungarian  %10.3f ms  acc %.4f\n", b.hungarian_ms,
              b.hungarian_acc);
  std::printf("  speedup    %10.2fx\n", b.hungarian_ms / b.greedy_ms);
  return 0;
}

EvalReport pipeline_report(const RunManifest& m, const SynthInstance& inst,
                           const PipelineResult& r) {
  EvalReport rep = evaluate(r.joint.bb, labeled_target(inst));
  rep.config_fingerprint = manifest_fingerprint(m);
  rep.seed = m.cfg.joint.seed;
  return rep;
}

void write_joint_artifacts(RunDir& rd, const RunManifest& m,
                           const SynthInstance& inst,
                           const PipelineResult& r, const EvalReport& rep) {
  write_manifest(rd.path("manifest.ini"), m);
  write_loss_trace_csv(rd.path("stage_a_trace.csv"), r.stage_a.loss_trace);
  write_weight_set(rd.path("stage_a_weights.txt"), r.stage_a.harvested);
  save_gcn_checkpoint(rd.path("gcn_a.ckpt"), r.stage_a.model);
  write_trace_csv(rd.path("trace.csv"), r.joint.trace);
  write_pairs_csv(rd.path("pairs.csv"), r.joint.last_pairs);
  save_joint_checkpoint(rd.path("joint.ckpt"), r.joint.bb, r.joint.gcnb,
                        m.cfg.joint.seed, manifest_fingerprint(m));
  write_notes(rd, inst);
  write_report_text(rd.path("report.txt"), rep);
  write_report_json(rd.path("report.json"), rep);
}

int do_train_joint(const CommonOpts& o) {
  const RunManifest m = resolve_manifest(o);
  const SynthInstance inst = generate(m.spec);
  const PipelineResult r = run_pipeline(m.cfg, inst);
  const EvalReport rep = pipeline_report(m, inst, r);
  RunDir rd(o.out);
  write_joint_artifacts(rd, m, inst, r, rep);
  rd.commit();
  std::printf("%s", report_to_text(rep).c_str());
  return 0;
}

int do_evaluate(const CommonOpts& o, const std::string& checkpoint) {
  const RunManifest m = resolve_manifest(o);
  const SynthInstance inst = generate(m.spec);
  const JointCheckpoint ck = load_joint_checkpoint(checkpoint);
  EvalReport rep = evaluate(ck.bb, labeled_target(inst));
  rep.config_fingerprint = ck.fingerprint;
  rep.seed = ck.seed;
  RunDir rd(o.out);
  write_report_text(rd.path("report.txt"), rep);
  write_report_json(rd.path("report.json"), rep);
  rd.commit();
  std::printf("%s", report_to_text(rep).c_str());
  return 0;
}

struct ArmSpec {
  std::string name;
  AblationSwitches switches;
};

ArmSpec parse_arm(const std::string& name) {
  if (name == "zgcn") return {name, {false, false}};
  if (name == "zgcn-smo") return {name, {false, true}};
  if (name == "agcn") return {name, {true, false}};
  if (name == "agcn-smo") return {name, {true, true}};
  throw ConfigError("unknown arm '" + name +
                    "' (expected zgcn, zgcn-smo, agcn, agcn-smo)");
}

struct ArmStats {
  std::vector<double> known, unknown, all;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / double(v.size() - 1));
}

int do_ablate(const CommonOpts& o, const std::string& arms_csv,
              std::size_t seeds) {
  if (seeds == 0) throw UsageError("ablate: --seeds must be >= 1");
  const RunManifest base = resolve_manifest(o);
  std::vector<ArmSpec> arms;
  {
    std::string cur;
    for (char ch : arms_csv + ",") {
      if (ch == ',') {
        if (!cur.empty()) arms.push_back(parse_arm(cur));
        cur.clear();
      } else {
        cur += ch;
      }
    }
  }
  if (arms.empty()) throw UsageError("ablate: no arms given");

  const std::uint64_t seed0 = base_seed(o, base);
  RunDir rd(o.out);
  std::string runs_csv = "arm,seed,known_acc,unknown_acc,all_acc\n";
  std::vector<ArmStats> stats(arms.size());
  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (std::size_t s = 0; s < seeds; ++s) {
      RunManifest m = base;
      m.cfg.ablation = arms[a].switches;
      apply_seed(m, seed0 + s);
      const SynthInstance inst = generate(m.spec);
      const PipelineResult r = run_pipeline(m.cfg, inst);
      const EvalReport rep = pipeline_report(m, inst, r);
      const std::string run_dir =
          arms[a].name + "/seed_" + std::to_string(seed0 + s);
      write_report_json(rd.path(run_dir + "/report.json"), rep);
      write_report_text(rd.path(run_dir + "/report.txt"), rep);
      stats[a].known.push_back(rep.known_acc);
      stats[a].unknown.push_back(rep.unknown_acc);
      stats[a].all.push_back(rep.all_acc);
      runs_csv += arms[a].name + ',' + std::to_string(seed0 + s) + ',' +
                  fmt_g17(rep.known_acc) + ',' + fmt_g17(rep.unknown_acc) +
                  ',' + fmt_g17(rep.all_acc) + '\n';
      std::printf("%-9s seed %llu  known %.4f  unknown %.4f  all %.4f\n",
                  arms[a].name.c_str(),
                  static_cast<unsigned long long>(seed0 + s), rep.known_acc,
                  rep.unknown_acc, rep.all_acc);
    }
  }
  write_file_atomic(rd.path("runs.csv"), runs_csv);

  std::string summary_csv =
      "arm,known_mean,known_std,unknown_mean,unknown_std,all_mean,all_std\n";
  json jarms = json::array();
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const ArmStats& st = stats[a];
    summary_csv += arms[a].name + ',' + fmt_g17(mean_of(st.known)) + ',' +
                   fmt_g17(stddev_of(st.known)) + ',' +
                   fmt_g17(mean_of(st.unknown)) + ',' +
                   fmt_g17(stddev_of(st.unknown)) + ',' +
                   fmt_g17(mean_of(st.all)) + ',' + fmt_g17(stddev_of(st.all)) +
                   '\n';
    json ja;
    ja["arm"] = arms[a].name;
    ja["known_mean"] = mean_of(st.known);
    ja["known_std"] = stddev_of(st.known);
    ja["unknown_mean"] = mean_of(st.unknown);
    ja["unknown_std"] = stddev_of(st.unknown);
    ja["all_mean"] = mean_of(st.all);
    ja["all_std"] = stddev_of(st.all);
    jarms.push_back(ja);
    std::printf("%-9s known %.4f±%.4f  unknown %.4f±%.4f  all %.4f±%.4f\n",
                arms[a].name.c_str(), mean_of(st.known), stddev_of(st.known),
                mean_of(st.unknown), stddev_of(st.unknown), mean_of(st.all),
                stddev_of(st.all));
  }
  write_file_atomic(rd.path("summary.csv"), summary_csv);
  json j;
  j["seeds"] = seeds;
  j["first_seed"] = seed0;
  j["arms"] = jarms;
  j["fingerprint"] = manifest_fingerprint(base);
  write_json_file(rd, "summary.json", j);
  rd.commit();
  return 0;
}

int do_inspect(const CommonOpts& o, const std::string& checkpoint,
               const std::string& gcn_path, std::size_t topk,
               std::size_t samples, const std::string& nodes_csv) {
  if (checkpoint.empty() && gcn_path.empty())
    throw UsageError("inspect: give --checkpoint and/or --gcn");
  const RunManifest m = resolve_manifest(o);
  const SynthInstance inst = generate(m.spec);
  RunDir rd(o.out);
  json j;

  if (!gcn_path.empty()) {
    const GcnModel gm = load_gcn_checkpoint(gcn_path);
    std::vector<std::uint32_t> nodes;
    if (nodes_csv.empty()) {
      for (std::uint32_t i = 0; i < inst.spec.total_classes; ++i)
        nodes.push_back(i);
    } else {
      std::string cur;
      for (char ch : nodes_csv + ",") {
        if (ch != ',') {
          cur += ch;
          continue;
        }
        if (cur.empty()) continue;
        if (cur.find_first_not_of("0123456789") == std::string::npos) {
          nodes.push_back(static_cast<std::uint32_t>(std::stoul(cur)));
        } else {
          const auto id = inst.graph.index_of(cur);
          if (!id) throw UsageError("inspect: unknown node '" + cur + "'");
          nodes.push_back(*id);
        }
        cur.clear();
      }
    }
    json jatt = json::object();
    for (std::uint32_t node : nodes) {
      const auto top = dump_attention(gm, inst.graph, node, topk);
      json rows = json::array();
      std::printf("attention @ %s:", inst.graph.name(node).c_str());
      for (const auto& [name, coef] : top) {
        rows.push_back({{"neighbor", name}, {"coefficient", coef}});
        std::printf("  %s %.4f", name.c_str(), coef);
      }
      std::printf("\n");
      jatt[inst.graph.name(node)] = rows;
    }
    j["attention"] = jatt;
  }

  if (!checkpoint.empty()) {
    const JointCheckpoint ck = load_joint_checkpoint(checkpoint);
    const std::size_t n = std::min(samples, inst.target.size());
    json jpred = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      const auto top = top_k_predictions(ck.bb, inst.target.features.row(i),
                                         std::min(topk, ck.bb.class_count()));
      json rows = json::array();
      std::printf("sample %zu (truth %d):", i, inst.truth[i]);
      for (const auto& [cls, p] : top) {
        rows.push_back({{"class", cls}, {"probability", p}});
        std::printf("  %zu %.4f", cls, p);
      }
      std::printf("\n");
      jpred.push_back({{"sample", i},
                       {"truth", inst.truth[i]},
                       {"top", rows}});
    }
    j["predictions"] = jpred;
  }

  write_json_file(rd, "inspect.json", j);
  rd.commit();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention-graph classifier propagation workbench"};
  app.require_subcommand(1);

  CommonOpts gen_o, gcn_o, match_o, bench_o, joint_o, eval_o, abl_o, insp_o;
  std::string match_ckpt, eval_ckpt, insp_ckpt, insp_gcn;
  std::string arms = "zgcn,zgcn-smo,agcn,agcn-smo";
  std::string nodes;
  std::size_t bench_n = 1000, bench_dim = 32;
  std::size_t seeds = 10, topk = 3, samples = 5;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic instance");
  add_common(gen, gen_o);
  auto* tg = app.add_subcommand("train-gcn", "train the graph stage alone");
  add_common(tg, gcn_o);
  auto* mt = app.add_subcommand("match", "match target to source once");
  add_common(mt, match_o);
  mt->add_option("--checkpoint", match_ckpt,
                 "joint checkpoint providing features and responses");
  auto* bm = app.add_subcommand("bench-match",
                                "time greedy vs optimal assignment");
  add_common(bm, bench_o);
  bm->add_option("--n", bench_n, "instance size per domain");
  bm->add_option("--dim", bench_dim, "feature dimension");
  auto* tj = app.add_subcommand("train-joint", "run the full pipeline");
  add_common(tj, joint_o);
  auto* ev = app.add_subcommand("evaluate", "evaluate a joint checkpoint");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_ckpt, "joint checkpoint")->required();
  auto* ab = app.add_subcommand("ablate", "run the switch grid over seeds");
  add_common(ab, abl_o);
  ab->add_option("--arms", arms, "comma-separated arm list");
  ab->add_option("--seeds", seeds, "replications per arm");
  auto* in = app.add_subcommand("inspect",
                                "dump attention and top-k predictions");
  add_common(in, insp_o);
  in->add_option("--checkpoint", insp_ckpt, "joint checkpoint");
  in->add_option("--gcn", insp_gcn, "graph-stage checkpoint");
  in->add_option("--topk", topk, "entries per listing");
  in->add_option("--samples", samples, "target samples to rank");
  in->add_option("--nodes", nodes, "comma-separated node ids or names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return do_gen_data(gen_o);
    if (tg->parsed()) return do_train_gcn(gcn_o);
    if (mt->parsed()) return do_match(match_o, match_ckpt);
    if (bm->parsed()) return do_bench_match(bench_o, bench_n, bench_dim);
    if (tj->parsed()) return do_train_joint(joint_o);
    if (ev->parsed()) return do_evaluate(eval_o, eval_ckpt);
    if (ab->parsed()) return do_ablate(abl_o, arms, seeds);
    if (in->parsed()) return do_inspect(insp_o, insp_ckpt, insp_gcn, topk,
                                        samples, nodes);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
