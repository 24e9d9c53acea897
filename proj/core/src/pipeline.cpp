#include "osdr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "osdr/errors.hpp"
#include "osdr/eval.hpp"

namespace osdr {

namespace {

std::vector<std::size_t> sorted_class_nodes(const NodeRoleSplit& split) {
  std::vector<std::size_t> classes;
  classes.reserve(split.known.size() + split.unknown.size());
  for (std::uint32_t i : split.known) classes.push_back(i);
  for (std::uint32_t i : split.unknown) classes.push_back(i);
  std::sort(classes.begin(), classes.end());
  return classes;
}

std::size_t row_of(const ClassifierWeightSet& set, std::size_t cls,
                   const char* what) {
  const auto it =
      std::find(set.class_index.begin(), set.class_index.end(), cls);
  if (it == set.class_index.end())
    throw UsageError(std::string(what) + ": no row for class " +
                     std::to_string(cls));
  return static_cast<std::size_t>(it - set.class_index.begin());
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto row = m.row(idx[i]);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
}

void check_term_finite(double v, const char* term, std::size_t step) {
  if (!std::isfinite(v))
    throw TrainingDiverged(std::string(term) + " became non-finite", step);
}

// Overwrites the classifier rows of `classes` from graph output rows.
void write_rows_from(Backbone& bb, const Matrix& z,
                     const std::vector<std::size_t>& classes) {
  const std::size_t f = bb.feature_dim();
  for (std::size_t cls : classes) {
    for (std::size_t c = 0; c < f; ++c) bb.psi_w.value(cls, c) = z(cls, c);
    bb.psi_b.value(0, cls) = z(cls, f);
  }
}

}  // namespace

LossBreakdown LossBreakdown::weighted(double cls, double tran, double lb,
                                      double d, const LossWeights& w) {
  LossBreakdown b;
  b.l_cls = cls;
  b.l_tran = tran;
  b.l_lb = lb;
  b.l_d = d;
  b.w_cls = w.cls;
  b.w_tran = w.tran;
  b.w_lb = w.lb;
  b.w_d = w.d;
  b.total = w.cls * cls + w.tran * tran + w.lb * lb + w.d * d;
  return b;
}

StageAResult run_stage_a(const StageAConfig& cfg, bool uniform_attention,
                         const KnowledgeGraph& g,
                         const ClassifierWeightSet& gt_known,
                         std::size_t output_dim) {
  const NodeRoleSplit split = role_split(g);
  const ReachabilityReport reach = validate_reachability(g, split);
  if (!reach.ok) {
    std::string names;
    for (const auto& n : reach.unreachable_unknown) {
      if (!names.empty()) names += ", ";
      names += n;
    }
    throw UsageError("stage a: unknown classes unreachable from any known "
                     "class: " + names);
  }
  if (gt_known.weights.cols() != output_dim)
    throw DimensionError("stage a: ground-truth rows must be " +
                         std::to_string(output_dim) + " wide");

  GcnConfig gcn_cfg;
  gcn_cfg.input_dim = g.semantic_dim();
  gcn_cfg.hidden_dim = cfg.hidden_dim;
  gcn_cfg.output_dim = output_dim;
  gcn_cfg.kernel = cfg.kernel;
  gcn_cfg.uniform_attention = uniform_attention;
  gcn_cfg.leaky_slope = cfg.leaky_slope;

  StageAResult res{GcnModel::init(gcn_cfg, cfg.train.seed), Matrix(), {}, {}};
  res.loss_trace = train_init(res.model, g, gt_known, cfg.train);
  res.all_outputs = gcn_forward(res.model, g);

  res.harvested.class_index = sorted_class_nodes(split);
  res.harvested.weights =
      Matrix(res.harvested.class_index.size(), output_dim);
  for (std::size_t k = 0; k < res.harvested.class_index.size(); ++k) {
    const auto row = res.all_outputs.row(
        static_cast<std::uint32_t>(res.harvested.class_index[k]));
    std::copy(row.begin(), row.end(), res.harvested.weights.row(k).begin());
  }
  return res;
}

ClassifierWeightSet initial_classifier_rows(const StageAResult& stage_a,
                                            const ClassifierWeightSet& gt_known,
                                            const NodeRoleSplit& split) {
  ClassifierWeightSet init;
  init.class_index = sorted_class_nodes(split);
  init.weights =
      Matrix(init.class_index.size(), stage_a.harvested.weights.cols());
  std::vector<std::uint32_t> known_sorted = split.known;
  std::sort(known_sorted.begin(), known_sorted.end());
  for (std::size_t k = 0; k < init.class_index.size(); ++k) {
    const std::size_t cls = init.class_index[k];
    const bool is_known = std::binary_search(
        known_sorted.begin(), known_sorted.end(),
        static_cast<std::uint32_t>(cls));
    const ClassifierWeightSet& from =
        is_known ? gt_known : stage_a.harvested;
    const auto row = from.weights.row(
        row_of(from, cls, is_known ? "classifier init (source-fit)"
                                   : "classifier init (harvested)"));
    std::copy(row.begin(), row.end(), init.weights.row(k).begin());
  }
  return init;
}

Matrix transfer_inputs(const KnowledgeGraph& g,
                       const ClassifierWeightSet& stage_a,
                       const Matrix& stage_a_outputs) {
  if (stage_a_outputs.rows() != g.node_count())
    throw DimensionError("transfer inputs: need one stage-a output row per node");
  if (stage_a.weights.cols() != stage_a_outputs.cols())
    throw DimensionError("transfer inputs: row widths differ");
  Matrix inputs = stage_a_outputs;
  for (std::uint32_t i = 0; i < g.node_count(); ++i) {
    if (g.role(i) == NodeRole::Aux) continue;
    const auto row = stage_a.weights.row(row_of(stage_a, i, "transfer inputs"));
    std::copy(row.begin(), row.end(), inputs.row(i).begin());
  }
  return inputs;
}

Tape::Id transfer_loss(Tape& t, const BoundGcn& gcnb, const KnowledgeGraph& g,
                       Tape::Id joint_inputs, const BoundBackbone& bb,
                       const std::vector<std::size_t>& covered) {
  if (covered.empty()) throw UsageError("transfer loss: no covered classes");
  Tape::Id zb = gcn_forward(t, gcnb, g, joint_inputs);
  Tape::Id rows = classifier_rows(t, bb);
  return t.mse(t.select_rows(zb, covered), t.select_rows(rows, covered));
}

double transfer_loss(const GcnModel& gcnb, const KnowledgeGraph& g,
                     const Matrix& joint_inputs, const Backbone& bb,
                     const std::vector<std::size_t>& covered) {
  Tape t;
  BoundGcn bg = bind(t, gcnb);
  BoundBackbone bbb = bind(t, bb);
  return t.value(
      transfer_loss(t, bg, g, t.constant(joint_inputs), bbb, covered))(0, 0);
}

JointResult run_joint(const PipelineConfig& cfg, Backbone bb, GcnModel gcnb,
                      const KnowledgeGraph& g, const Matrix& joint_inputs,
                      const DomainDataset& source, const DomainDataset& target,
                      const std::vector<std::int32_t>* truth) {
  if (cfg.joint.batch_size < 1)
    throw ConfigError("joint: batch size must be >= 1");
  if (!source.labeled())
    throw UsageError("joint: source dataset must be labeled");
  validate(cfg.smo);

  LossWeights w = cfg.weights;
  if (!cfg.ablation.smo) w.d = 0.0;
  const bool use_matching = w.d != 0.0;

  std::vector<std::size_t> all_classes;
  all_classes.reserve(bb.known.size() + bb.unknown.size());
  all_classes.insert(all_classes.end(), bb.known.begin(), bb.known.end());
  all_classes.insert(all_classes.end(), bb.unknown.begin(), bb.unknown.end());
  std::sort(all_classes.begin(), all_classes.end());
  std::vector<std::size_t> known_classes = bb.known;
  std::sort(known_classes.begin(), known_classes.end());
  const std::vector<std::size_t>& covered =
      cfg.joint.refresh_unknown ? known_classes : all_classes;

  // Fit the joint-stage graph net to the just-initialized classifier rows
  // so the transfer term starts at its fixed point.
  if (w.tran != 0.0) {
    for (std::size_t step = 0; step < cfg.joint.warmup_steps; ++step) {
      Tape t;
      BoundGcn bg = bind(t, gcnb);
      Tape::Id zb = gcn_forward(t, bg, g, t.constant(joint_inputs));
      Tape::Id loss = t.mse(t.select_rows(zb, all_classes),
                            t.constant(gather_rows(classifier_rows(bb),
                                                   all_classes)));
      check_term_finite(t.value(loss)(0, 0), "transfer warmup", step);
      GradientMap grads = t.backward(loss);
      sgd_step(gcnb.parameters(), grads, cfg.joint.lr);
    }
  }

  std::mt19937_64 rng(cfg.joint.seed);
  std::vector<std::size_t> order(source.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<MatchedPair> pairs;
  double tau = 0.0;
  std::vector<EpochLog> trace;
  trace.reserve(cfg.joint.epochs);
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.joint.epochs; ++epoch) {
    if (use_matching && epoch % cfg.smo.rematch_period == 0) {
      const Matrix sf = extract(bb, source.features);
      const Matrix tf = extract(bb, target.features);
      pairs = match_greedy(sf, tf);
      const Matrix rs = responses(bb, source.features);
      const Matrix rt = responses(bb, target.features);
      tau = resolve_tau(cfg.smo, response_distances(pairs, rs, rt));
      filter_pairs(pairs, rs, rt, tau);
    }

    shuffle_indices(order, rng);
    for (std::size_t start = 0; start < order.size();
         start += cfg.joint.batch_size) {
      const std::size_t end =
          std::min(start + cfg.joint.batch_size, order.size());
      const std::vector<std::size_t> batch(order.begin() + start,
                                           order.begin() + end);

      Tape t;
      BoundGcn bg = bind(t, gcnb);
      BoundBackbone bbb = bind(t, bb);
      Tape::Id total = 0;
      bool have_total = false;
      auto add_term = [&](Tape::Id term, double weight, const char* name) {
        check_term_finite(t.value(term)(0, 0), name, global_step);
        Tape::Id weighted = t.scale(term, weight);
        total = have_total ? t.add(total, weighted) : weighted;
        have_total = true;
      };

      if (w.cls != 0.0) {
        std::vector<std::int32_t> labels(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
          labels[i] = source.labels[batch[i]];
        Tape::Id xb = t.constant(gather_rows(source.features, batch));
        add_term(classification_loss(t, bbb, xb, labels), w.cls, "l_cls");
      }
      if (w.tran != 0.0) {
        add_term(transfer_loss(t, bg, g, t.constant(joint_inputs), bbb,
                               covered),
                 w.tran, "l_tran");
      }
      if (w.lb != 0.0) {
        add_term(balance_loss(t, bbb, t.constant(target.features)), w.lb,
                 "l_lb");
      }
      if (use_matching) {
        Tape::Id sfeat = extract(t, bbb, t.constant(source.features));
        Tape::Id tfeat = extract(t, bbb, t.constant(target.features));
        add_term(discrepancy_loss(t, pairs, sfeat, tfeat, cfg.smo.reduction),
                 w.d, "l_d");
      }
      if (!have_total) continue;
      check_term_finite(t.value(total)(0, 0), "total", global_step);

      GradientMap grads = t.backward(total);
      std::vector<Parameter*> params = bb.parameters();
      for (Parameter* p : gcnb.parameters()) params.push_back(p);
      sgd_step(std::move(params), grads, cfg.joint.lr);
      ++global_step;
    }

    if (cfg.joint.refresh_unknown && w.tran != 0.0) {
      const Matrix zb = gcn_forward(gcnb, g, joint_inputs);
      std::vector<std::size_t> unknown_sorted = bb.unknown;
      std::sort(unknown_sorted.begin(), unknown_sorted.end());
      write_rows_from(bb, zb, unknown_sorted);
    }

    EpochLog log;
    log.epoch = epoch;
    const double l_cls =
        w.cls != 0.0 ? classification_loss(bb, source) : 0.0;
    const double l_tran =
        w.tran != 0.0 ? transfer_loss(gcnb, g, joint_inputs, bb, covered)
                      : 0.0;
    const double l_lb =
        w.lb != 0.0 ? balance_loss(bb, target.features) : 0.0;
    double l_d = 0.0;
    if (use_matching) {
      l_d = discrepancy_loss(pairs, extract(bb, source.features),
                             extract(bb, target.features),
                             cfg.smo.reduction);
    }
    check_term_finite(l_cls, "l_cls", global_step);
    check_term_finite(l_tran, "l_tran", global_step);
    check_term_finite(l_lb, "l_lb", global_step);
    check_term_finite(l_d, "l_d", global_step);
    log.losses = LossBreakdown::weighted(l_cls, l_tran, l_lb, l_d, w);
    if (truth != nullptr) {
      const AccuracyTriple acc =
          accuracy_triple(predict(bb, target.features), *truth, bb.known);
      log.known_acc = acc.known;
      log.unknown_acc = acc.unknown;
      log.all_acc = acc.all;
    }
    trace.push_back(log);
  }

  return JointResult{std::move(bb), std::move(gcnb), std::move(trace),
                     std::move(pairs), tau};
}

PipelineResult run_pipeline(const PipelineConfig& cfg,
                            const SynthInstance& inst) {
  const NodeRoleSplit split = role_split(inst.graph);
  const std::size_t f = inst.source.features.cols();
  const std::size_t l_t = split.known.size() + split.unknown.size();
  for (std::uint32_t i : split.known)
    if (i >= l_t)
      throw UsageError("pipeline: class nodes must precede auxiliary nodes");
  for (std::uint32_t i : split.unknown)
    if (i >= l_t)
      throw UsageError("pipeline: class nodes must precede auxiliary nodes");

  StageAResult stage_a = run_stage_a(cfg.stage_a, !cfg.ablation.attention,
                                     inst.graph, inst.gt_known, f + 1);
  const ClassifierWeightSet init_rows =
      initial_classifier_rows(stage_a, inst.gt_known, split);

  Backbone bb = Backbone::init(f, split.known.size(), split.unknown.size(),
                               cfg.joint.extractor);
  bb.known.assign(split.known.begin(), split.known.end());
  bb.unknown.assign(split.unknown.begin(), split.unknown.end());
  init_classifier_from_gcn(bb, init_rows);

  const Matrix joint_inputs =
      transfer_inputs(inst.graph, init_rows, stage_a.all_outputs);

  GcnConfig joint_gcn_cfg;
  joint_gcn_cfg.input_dim = f + 1;
  joint_gcn_cfg.hidden_dim = cfg.stage_a.hidden_dim;
  joint_gcn_cfg.output_dim = f + 1;
  joint_gcn_cfg.kernel = cfg.stage_a.kernel;
  joint_gcn_cfg.uniform_attention = !cfg.ablation.attention;
  joint_gcn_cfg.leaky_slope = cfg.stage_a.leaky_slope;
  const std::uint64_t joint_gcn_seed =
      cfg.joint.seed * 6364136223846793005ULL + 1442695040888963407ULL;
  GcnModel gcnb = GcnModel::init(joint_gcn_cfg, joint_gcn_seed);

  JointResult joint =
      run_joint(cfg, std::move(bb), std::move(gcnb), inst.graph, joint_inputs,
                inst.source, inst.target, &inst.truth);
  return PipelineResult{std::move(stage_a), std::move(joint)};
}

}  // namespace osdr
