#include "netcvr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace netcvr {

const char* to_string(Regime r) {
  switch (r) {
    case Regime::pretrained: return "pretrained";
    case Regime::oracle: return "oracle";
    case Regime::bdl: return "bdl";
    case Regime::fnc: return "fnc";
    case Regime::fnw: return "fnw";
    case Regime::esdfm: return "esdfm";
    case Regime::tesla: return "tesla";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  for (Regime r : {Regime::pretrained, Regime::oracle, Regime::bdl, Regime::fnc, Regime::fnw,
                   Regime::esdfm, Regime::tesla})
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown regime: " + s);
}

void RegimeSpec::validate() const {
  ranking.validate();
  if (regime != Regime::tesla) {
    // Everything outside tesla has fixed semantics; stray flags are config errors.
    if (use_dar)
      throw std::invalid_argument(std::string(to_string(regime)) + " does not admit the ranking loss");
    if (use_refund_obs_window)
      throw std::invalid_argument(std::string(to_string(regime)) +
                                  " detects refunds at actual refund time (no observation window)");
    if (use_refund_debias)
      throw std::invalid_argument(std::string(to_string(regime)) + " does not admit refund debiasing");
    if (use_cvr_debias && regime != Regime::esdfm)
      throw std::invalid_argument(std::string(to_string(regime)) + " does not admit debias weights");
  }
  if (regime == Regime::tesla && use_refund_debias && !use_refund_obs_window)
    throw std::invalid_argument("refund debiasing requires the refund observation window");
  if (direct_netcvr_head && regime != Regime::fnc)
    throw std::invalid_argument("the direct net-head comparison runs under fnc delivery");
}

RegimeSpec make_regime_spec(Regime regime, Variant variant) {
  RegimeSpec s;
  s.regime = regime;
  s.variant = variant;
  if (regime != Regime::tesla) {
    s.use_refund_obs_window = false;
    s.use_refund_debias = false;
    s.use_dar = false;
    s.use_cvr_debias = regime == Regime::esdfm;
  }
  return s;
}

WindowConfig RegimeSpec::effective_windows(const WindowConfig& w) const {
  WindowConfig e = w;
  switch (regime) {
    case Regime::fnc:
    case Regime::fnw:
      e.w_obs_v = 0.0;  // negatives at click time, positives re-injected on arrival
      e.w_obs_r = 0.0;
      break;
    case Regime::esdfm:
      e.w_obs_r = 0.0;
      break;
    case Regime::tesla:
      if (!use_refund_obs_window) e.w_obs_r = 0.0;
      break;
    default:
      break;  // oracle/bdl/pretrained do not consume observation windows
  }
  return e;
}

namespace {

constexpr double kProbEps = 1e-6;

struct TaskBatch {
  std::vector<const FeatureVec*> rows;
  std::vector<std::uint8_t> labels;
  std::vector<float> weights;      // importance weights (1 when disabled)
  std::vector<double> pos_delays;  // delay of each positive, in ranking units
  std::vector<std::int32_t> pos_index, neg_index;  // into the batch
  std::vector<std::uint8_t> dar_eligible;          // per batch entry
};

double delay_in_units(double days, DelayUnit u) {
  return u == DelayUnit::minutes ? days * 1440.0 : days;
}

class StreamTrainer {
 public:
  StreamTrainer(Model<float>&& model, const RegimeSpec& spec, const TrainSettings& settings,
                const DelayTailModel* tail_v, const DelayTailModel* tail_r,
                bool pretrain_mode = false)
      : model_(std::move(model)),
        spec_(spec),
        settings_(settings),
        tail_v_(tail_v),
        tail_r_(tail_r),
        sampler_(settings.sampling_seed),
        pretrain_mode_(pretrain_mode) {}

  Model<float>& model() { return model_; }

  void train_records(std::span<const ClickEvent> clicks, std::span<const DeliveryRecord> recs,
                     int segment) {
    for (std::size_t start = 0; start < recs.size(); start += settings_.batch_size) {
      const std::size_t end = std::min(recs.size(), start + settings_.batch_size);
      train_minibatch(clicks, recs.subspan(start, end - start), segment);
    }
  }

 private:
  void train_minibatch(std::span<const ClickEvent> clicks, std::span<const DeliveryRecord> recs,
                       int segment) {
    TaskBatch cvr, rfr;
    split_batch(clicks, recs, cvr, rfr);
    const double norm = 1.0 / static_cast<double>(recs.size());

    double loss = 0.0;
    loss += train_task(Task::cvr, cvr, norm, segment);
    loss += train_task(Task::rfr, rfr, norm, segment);  // net head under direct mode
    if (!std::isfinite(loss))
      throw std::runtime_error("non-finite loss in segment " + std::to_string(segment));
    model_.optimizer_step(settings_.adam);
  }

  // Forward, losses, backward for one tower's slice of the minibatch.
  double train_task(Task task, TaskBatch& b, double norm, int segment) {
    if (b.rows.empty()) return 0.0;
    const int B = static_cast<int>(b.rows.size());
    TowerCache<float> cache;
    model_.forward_train(task, RowRefs(b.rows.data(), b.rows.size()), cache);

    std::vector<float> p_hat(B);
    for (int i = 0; i < B; ++i) {
      const double o = std::clamp(static_cast<double>(cache.logits[i]), -model_.cfg.logit_clamp,
                                  model_.cfg.logit_clamp);
      p_hat[i] = static_cast<float>(sigmoid(o));
    }

    // Importance weights from the current prediction snapshot (detached).
    const bool debias = task == Task::cvr ? (spec_.cvr_debias() || spec_.fnw_weighting())
                                          : spec_.rfr_debias();
    if (debias) {
      const DelayTailModel* tail_model = task == Task::cvr ? tail_v_ : tail_r_;
      for (int i = 0; i < B; ++i) {
        const double p = std::clamp(static_cast<double>(p_hat[i]), kProbEps, 1.0 - kProbEps);
        // fnw replaces the delay tail with the model's own fake-negative probability
        const double tail = spec_.fnw_weighting() && task == Task::cvr
                                ? p
                                : static_cast<double>(tail_model->predict(*b.rows[i]));
        const auto w = importance_weights(p, tail);
        b.weights[i] = static_cast<float>(b.labels[i] ? w.pos : w.neg);
      }
    }

    const double c_bce = task == Task::cvr ? settings_.coefficients.bce_cvr
                                           : settings_.coefficients.bce_rfr;
    const double c_dar = task == Task::cvr ? settings_.coefficients.dar_cvr
                                           : settings_.coefficients.dar_rfr;
    BceResult<float> bce = debiased_bce<float>(cache.logits, b.labels, b.weights,
                                               model_.cfg.logit_clamp);
    double loss = c_bce * bce.loss;
    for (auto& g : bce.dlogits) g = static_cast<float>(g * c_bce);

    if (spec_.dar() && !b.pos_index.empty() && !b.neg_index.empty()) {
      std::vector<float> pos_logits, neg_logits, neg_p;
      std::vector<std::int32_t> dar_pos;  // batch indices of DAR-participating positives
      std::vector<double> dar_delays;
      for (auto i : b.pos_index) {
        if (!b.dar_eligible[i]) continue;
        dar_pos.push_back(i);
        dar_delays.push_back(b.pos_delays[i]);
        pos_logits.push_back(cache.logits[i]);
      }
      for (auto j : b.neg_index) {
        neg_logits.push_back(cache.logits[j]);
        neg_p.push_back(p_hat[j]);
      }
      if (!dar_pos.empty()) {
        std::vector<float> w_i;
        if (spec_.ranking.positive_weighting)
          w_i = positive_weights<float>(dar_delays, spec_.ranking);
        else
          w_i.assign(dar_pos.size(), 1.0f);
        auto pairs = sample_negatives<float>(neg_p, dar_pos.size(), spec_.ranking, sampler_);
        std::vector<float> d_pos(dar_pos.size(), 0.0f), d_neg(b.neg_index.size(), 0.0f);
        loss += c_dar * dar_loss<float>(pos_logits, neg_logits, pairs, w_i, spec_.ranking.K, d_pos, d_neg);
        for (std::size_t k = 0; k < dar_pos.size(); ++k)
          bce.dlogits[dar_pos[k]] += static_cast<float>(c_dar * d_pos[k]);
        for (std::size_t k = 0; k < b.neg_index.size(); ++k)
          bce.dlogits[b.neg_index[k]] += static_cast<float>(c_dar * d_neg[k]);
      }
    }

    for (auto& g : bce.dlogits) g = static_cast<float>(g * norm);
    model_.backward(task, RowRefs(b.rows.data(), b.rows.size()), cache, bce.dlogits);
    if (!std::isfinite(loss))
      throw std::runtime_error("non-finite " + std::string(task == Task::cvr ? "cvr" : "rfr") +
                               " loss in segment " + std::to_string(segment));
    return loss * norm;
  }

  void split_batch(std::span<const ClickEvent> clicks, std::span<const DeliveryRecord> recs,
                   TaskBatch& cvr, TaskBatch& rfr) {
    for (const DeliveryRecord& r : recs) {
      const ClickEvent& e = clicks[static_cast<std::size_t>(r.event_index)];
      if (is_cvr_kind(r.kind)) {
        push_record(cvr, e, r.observed_y, r.h_v, r.kind == DeliveryKind::cvr_positive_duplicate);
      } else if (spec_.direct_netcvr_head && !pretrain_mode_) {
        // Net head under streaming delivery: refund arrival re-injects the
        // click as a net negative; the window negative carries no extra
        // signal for a head that already saw the conversion as a positive.
        if (r.kind == DeliveryKind::rfr_negative_window) continue;
        push_record(rfr, e, 0, r.h_r, false);
      } else {
        // Cascade RFR labels; in pretrain_mode the direct head's records
        // arrive with observed_z already holding the attributed net label.
        push_record(rfr, e, r.observed_z, r.h_r,
                    r.kind == DeliveryKind::rfr_positive_duplicate);
      }
    }
    if (spec_.direct_netcvr_head && !pretrain_mode_) {
      // The CVR stream doubles as the net-positive stream for the direct head.
      for (const DeliveryRecord& r : recs) {
        if (!is_cvr_kind(r.kind)) continue;
        push_record(rfr, clicks[static_cast<std::size_t>(r.event_index)], r.observed_y, r.h_v,
                    r.kind == DeliveryKind::cvr_positive_duplicate);
      }
    }
  }

  void push_record(TaskBatch& b, const ClickEvent& e, std::uint8_t label, float delay_days,
                   bool duplicate) {
    const auto idx = static_cast<std::int32_t>(b.rows.size());
    b.rows.push_back(&e.feat);
    b.labels.push_back(label);
    b.weights.push_back(1.0f);
    b.pos_delays.push_back(delay_days >= 0.0f
                               ? delay_in_units(static_cast<double>(delay_days), spec_.ranking.delay_unit)
                               : 0.0);
    if (label) {
      b.pos_index.push_back(idx);
      b.dar_eligible.push_back(spec_.ranking.include_duplicates || !duplicate ? 1 : 0);
    } else {
      b.neg_index.push_back(idx);
      b.dar_eligible.push_back(0);
    }
  }

  Model<float> model_;
  RegimeSpec spec_;
  TrainSettings settings_;
  const DelayTailModel* tail_v_;
  const DelayTailModel* tail_r_;
  Rng sampler_;
  bool pretrain_mode_;
};

MetricsReport pooled_metrics(const EvalArrays& ev, std::size_t from = 0) {
  MetricsReport rep;
  auto pv = std::span<const float>(ev.p_v).subspan(from);
  auto pn = std::span<const float>(ev.p_n).subspan(from);
  auto y = std::span<const std::uint8_t>(ev.y).subspan(from);
  auto net = std::span<const std::uint8_t>(ev.net).subspan(from);
  rep.cvr = compute_task_metrics(pv, y);
  rep.netcvr = compute_task_metrics(pn, net);
  rep.n_samples = static_cast<std::int64_t>(pv.size());
  for (auto v : y) rep.n_positives_cvr += v;
  for (auto v : net) rep.n_positives_net += v;
  return rep;
}

}  // namespace

Model<float> pretrain_model(const ModelConfig& cfg, std::uint64_t init_seed,
                            std::span<const ClickEvent> clicks,
                            std::span<const std::int32_t> click_idx, const WindowConfig& windows,
                            const TrainSettings& settings, bool direct_netcvr_head) {
  Model<float> model = Model<float>::init(cfg, init_seed);
  // Plain supervised passes: no debias weights, no ranking loss.
  RegimeSpec spec = make_regime_spec(Regime::oracle, cfg.variant);
  spec.direct_netcvr_head = direct_netcvr_head;

  TrainSettings pre = settings;
  pre.adam = settings.pretrain_adam;
  StreamTrainer trainer(std::move(model), spec, pre, nullptr, nullptr, /*pretrain_mode=*/true);

  std::vector<std::int32_t> order(click_idx.begin(), click_idx.end());
  Rng shuffle_rng(settings.sampling_seed ^ 0xfeedULL);
  for (int epoch = 0; epoch < settings.pretrain_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    std::vector<DeliveryRecord> recs;
    recs.reserve(order.size() * 5 / 4);
    for (auto idx : order) {
      const ClickEvent& e = clicks[static_cast<std::size_t>(idx)];
      ResolvedLabels lab = resolve_labels(e, windows);
      DeliveryRecord r;
      r.event_id = e.id;
      r.event_index = idx;
      r.t_o = e.t_c;
      if (lab.y) {
        r.kind = DeliveryKind::cvr_positive_window;
        r.observed_y = 1;
        r.h_v = static_cast<float>(*e.t_v - e.t_c);
      } else {
        r.kind = DeliveryKind::cvr_negative_initial;
      }
      recs.push_back(r);
      if (direct_netcvr_head) {
        // Direct variant: the second tower pretrains on attributed net labels.
        DeliveryRecord s = r;
        s.kind = lab.net ? DeliveryKind::rfr_positive_window : DeliveryKind::rfr_negative_window;
        s.observed_y = lab.y;
        s.observed_z = lab.net;
        recs.push_back(s);
      } else if (lab.y) {
        DeliveryRecord s = r;
        s.kind = lab.z ? DeliveryKind::rfr_positive_window : DeliveryKind::rfr_negative_window;
        s.observed_y = lab.y;
        s.observed_z = lab.z;
        if (lab.z) s.h_r = static_cast<float>(*e.t_r - *e.t_v);
        recs.push_back(s);
      }
    }
    trainer.train_records(clicks, recs, /*segment=*/-1 - epoch);
  }
  return std::move(trainer.model());
}

RunResult run_regime(const RegimeSpec& spec, std::span<const ClickEvent> clicks,
                     const SplitPlan& plan, const WindowConfig& windows, const Checkpoint& init,
                     const TrainSettings& settings, MetricAggregation aggregation) {
  spec.validate();
  if (init.model.cfg.variant != spec.variant)
    throw std::invalid_argument("checkpoint variant does not match the regime spec");
  if (spec.cvr_debias() && !init.tail_v)
    throw std::invalid_argument("regime needs a pretrained conversion delay model");
  if (spec.rfr_debias() && !init.tail_r)
    throw std::invalid_argument("regime needs a pretrained refund delay model");

  const WindowConfig eff = spec.effective_windows(windows);
  std::vector<DeliveryRecord> schedule;
  switch (spec.regime) {
    case Regime::pretrained:
      break;
    case Regime::oracle:
      schedule = build_oracle_schedule(clicks, windows);
      break;
    case Regime::bdl:
      schedule = build_bdl_schedule(clicks, windows);
      break;
    default:
      schedule = build_delivery_schedule(clicks, eff);
      break;
  }
  Protocol protocol(clicks, schedule, plan, windows);

  StreamTrainer trainer(Model<float>(init.model), spec, settings,
                        init.tail_v ? &*init.tail_v : nullptr,
                        init.tail_r ? &*init.tail_r : nullptr);

  RunResult out;
  const int n_seg = protocol.n_segments();
  std::vector<const FeatureVec*> rows;
  std::vector<float> p_v, p_r;
  for (int seg = 0; seg < n_seg; ++seg) {
    // Predict the clicks of this segment before training on its records.
    EvalBatch ev = protocol.eval_batch(seg);
    if (!ev.click_idx.empty()) {
      rows.clear();
      for (auto idx : ev.click_idx) rows.push_back(&clicks[static_cast<std::size_t>(idx)].feat);
      trainer.model().predict(RowRefs(rows.data(), rows.size()), p_v, p_r);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out.eval.segment.push_back(seg);
        out.eval.y.push_back(ev.y[i]);
        out.eval.net.push_back(ev.net[i]);
        out.eval.p_v.push_back(p_v[i]);
        // direct head predicts net outright; cascade composes the towers
        out.eval.p_n.push_back(spec.direct_netcvr_head ? p_r[i] : p_v[i] * (1.0f - p_r[i]));
      }
    }
    if (spec.regime != Regime::pretrained) {
      auto recs = protocol.train_records(seg);
      out.n_train_records += static_cast<std::int64_t>(recs.size());
      trainer.train_records(clicks, recs, seg);
    }
    if (settings.trace_every > 0 && ((seg + 1) % settings.trace_every == 0 || seg + 1 == n_seg)) {
      SegmentTraceRow row;
      row.segment = seg;
      row.n_eval = static_cast<std::int64_t>(out.eval.p_v.size());
      MetricsReport m = pooled_metrics(out.eval);
      row.auc_cvr = m.cvr.auc.value_or(std::nan(""));
      row.auc_net = m.netcvr.auc.value_or(std::nan(""));
      row.nll_net = m.netcvr.nll;
      row.pcoc_net = m.netcvr.pcoc.value_or(std::nan(""));
      out.trace.push_back(row);
    }
  }

  out.metrics = pooled_metrics(out.eval);
  if (aggregation == MetricAggregation::per_segment) {
    out.metrics.cvr = compute_task_metrics_segmented(out.eval.p_v, out.eval.y, out.eval.segment);
    out.metrics.netcvr = compute_task_metrics_segmented(out.eval.p_n, out.eval.net, out.eval.segment);
  }
  const int quarter_start = (3 * n_seg) / 4;
  std::size_t from = 0;
  while (from < out.eval.segment.size() && out.eval.segment[from] < quarter_start) ++from;
  out.final_quarter = pooled_metrics(out.eval, from);
  out.tail_hash_v = init.tail_v ? init.tail_v->param_hash() : 0;
  out.tail_hash_r = init.tail_r ? init.tail_r->param_hash() : 0;
  return out;
}

}  // namespace netcvr
