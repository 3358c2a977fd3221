#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "netcvr/common.hpp"
#include "netcvr/kernels.hpp"

namespace netcvr {

enum class Variant : std::uint8_t { shared = 0, separate = 1, hybrid = 2 };
enum class Task : std::uint8_t { cvr = 0, rfr = 1 };
enum class ForwardMode : std::uint8_t { train, eval };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

template <class T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

struct ModelConfig {
  Variant variant = Variant::hybrid;
  int d_emb = 8;
  std::array<int, 3> hidden = {256, 256, 128};
  double leaky_slope = 0.01;
  double bn_momentum = 0.99;
  int bn_min_batch = 16;   // smaller train batches fall back to running stats
  double bn_eps = 1e-5;
  double logit_clamp = 15.0;  // applied inside losses only
  std::vector<std::int32_t> vocab;  // 22 per-field sizes; id >= vocab hits a reserved bucket
};

template <class T>
struct Predictions {
  T o_cvr = 0, o_rfr = 0;
  T p_v = 0, p_r = 0, p_n = 0;
};

// A trainable tensor plus its Adam state. step counts this parameter's own
// updates so bias correction stays exact when a group sits out some batches.
template <class T>
struct Param {
  std::vector<T> w, g, m, v;
  std::int64_t step = 0;

  void resize(std::size_t n) {
    w.assign(n, T(0));
    g.assign(n, T(0));
    m.assign(n, T(0));
    v.assign(n, T(0));
  }
  void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }

  void adam_step(const AdamConfig<T>& c) {
    ++step;
    const T bc1 = T(1) - std::pow(c.beta1, static_cast<T>(step));
    const T bc2 = T(1) - std::pow(c.beta2, static_cast<T>(step));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (T(1) - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (T(1) - c.beta2) * g[i] * g[i];
      w[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
};

// Per-field embedding tables with sparse Adam: rows untouched by a batch
// keep their weights, moments and step counts.
template <class T>
struct EmbeddingSet {
  int d = 0;
  std::vector<std::int32_t> vocab;          // per field; table has vocab+1 rows (last = reserved)
  std::vector<std::vector<T>> w, m, v;      // [field][(vocab+1)*d]
  std::vector<std::vector<std::int64_t>> row_step;

  struct PendingGrad {
    std::int32_t field;
    std::uint32_t row;
    std::uint32_t slot;  // index into grad_buf, units of d
  };
  std::vector<PendingGrad> pending;
  std::vector<T> grad_buf;

  void init(std::span<const std::int32_t> vocab_sizes, int dim, Rng& rng, double scale) {
    d = dim;
    vocab.assign(vocab_sizes.begin(), vocab_sizes.end());
    w.resize(vocab.size());
    m.resize(vocab.size());
    v.resize(vocab.size());
    row_step.resize(vocab.size());
    for (std::size_t f = 0; f < vocab.size(); ++f) {
      const std::size_t rows = static_cast<std::size_t>(vocab[f]) + 1;
      w[f].resize(rows * d);
      for (auto& x : w[f]) x = static_cast<T>(rng.normal(0.0, scale));
      m[f].assign(rows * d, T(0));
      v[f].assign(rows * d, T(0));
      row_step[f].assign(rows, 0);
    }
  }

  std::uint32_t row_of(int field, std::uint32_t id) const {
    return id < static_cast<std::uint32_t>(vocab[field]) ? id
                                                         : static_cast<std::uint32_t>(vocab[field]);
  }

  const T* row_ptr(int field, std::uint32_t id) const {
    return w[field].data() + static_cast<std::size_t>(row_of(field, id)) * d;
  }

  void add_grad(int field, std::uint32_t id, const T* g) {
    const std::uint32_t slot = static_cast<std::uint32_t>(grad_buf.size() / d);
    grad_buf.insert(grad_buf.end(), g, g + d);
    pending.push_back({field, row_of(field, static_cast<std::uint32_t>(id)), slot});
  }

  bool dirty() const { return !pending.empty(); }

  void apply_adam(const AdamConfig<T>& c) {
    if (pending.empty()) return;
    // Stable sort groups duplicate rows while keeping append order, so the
    // accumulated gradient is independent of thread count.
    std::stable_sort(pending.begin(), pending.end(), [](const PendingGrad& a, const PendingGrad& b) {
      return a.field != b.field ? a.field < b.field : a.row < b.row;
    });
    std::vector<T> acc(static_cast<std::size_t>(d));
    std::size_t i = 0;
    while (i < pending.size()) {
      const auto field = pending[i].field;
      const auto row = pending[i].row;
      std::fill(acc.begin(), acc.end(), T(0));
      while (i < pending.size() && pending[i].field == field && pending[i].row == row) {
        const T* g = grad_buf.data() + static_cast<std::size_t>(pending[i].slot) * d;
        for (int k = 0; k < d; ++k) acc[k] += g[k];
        ++i;
      }
      const std::int64_t step = ++row_step[field][row];
      const T bc1 = T(1) - std::pow(c.beta1, static_cast<T>(step));
      const T bc2 = T(1) - std::pow(c.beta2, static_cast<T>(step));
      T* wr = w[field].data() + static_cast<std::size_t>(row) * d;
      T* mr = m[field].data() + static_cast<std::size_t>(row) * d;
      T* vr = v[field].data() + static_cast<std::size_t>(row) * d;
      for (int k = 0; k < d; ++k) {
        mr[k] = c.beta1 * mr[k] + (T(1) - c.beta1) * acc[k];
        vr[k] = c.beta2 * vr[k] + (T(1) - c.beta2) * acc[k] * acc[k];
        wr[k] -= c.lr * (mr[k] / bc1) / (std::sqrt(vr[k] / bc2) + c.eps);
      }
    }
    pending.clear();
    grad_buf.clear();
  }
};

template <class T>
struct DenseLayer {
  int in = 0, out = 0;
  Param<T> weight, bias;  // weight is out x in, row-major

  void init(int in_, int out_, Rng& rng) {
    in = in_;
    out = out_;
    weight.resize(static_cast<std::size_t>(in) * out);
    bias.resize(static_cast<std::size_t>(out));
    const double r = std::sqrt(6.0 / (in + out));
    for (auto& x : weight.w) x = static_cast<T>((rng.uniform01() * 2.0 - 1.0) * r);
  }
};

template <class T>
struct BatchNormLayer {
  int dim = 0;
  Param<T> gamma, beta;
  std::vector<T> run_mean, run_var;

  void init(int dim_) {
    dim = dim_;
    gamma.resize(dim);
    beta.resize(dim);
    std::fill(gamma.w.begin(), gamma.w.end(), T(1));
    run_mean.assign(dim, T(0));
    run_var.assign(dim, T(1));
  }
};

template <class T>
struct TowerCache {
  int B = 0;
  std::vector<T> input;
  std::array<std::vector<T>, 3> pre;     // fc output = BN input
  std::array<std::vector<T>, 3> xhat;    // BN normalized
  std::array<std::vector<T>, 3> bn_out;  // leaky input
  std::array<std::vector<T>, 3> act;     // leaky output = next fc input
  std::array<std::vector<T>, 3> bn_mean, bn_inv_std;
  std::array<bool, 3> used_batch_stats{};
  std::vector<T> logits;
};

// Hidden stack {h1,h2,h3}, each FC -> BatchNorm -> LeakyReLU, then a scalar
// output layer.
template <class T>
struct Tower {
  std::array<DenseLayer<T>, 3> fc;
  std::array<BatchNormLayer<T>, 3> bn;
  DenseLayer<T> head;
  T slope = T(0.01);
  T bn_eps = T(1e-5);
  T bn_momentum = T(0.99);
  int bn_min_batch = 16;
  bool touched = false;  // saw gradients since the last optimizer step

  void init(int input_dim, const std::array<int, 3>& hidden, Rng& rng) {
    int in = input_dim;
    for (int l = 0; l < 3; ++l) {
      fc[l].init(in, hidden[l], rng);
      bn[l].init(hidden[l]);
      in = hidden[l];
    }
    head.init(in, 1, rng);
  }

  // Train-mode forward; populates the cache. update_running=false gives a
  // pure function of the inputs (used by finite-difference checks).
  void forward_train(std::vector<T> X, int B, TowerCache<T>& c, bool update_running) {
    c.B = B;
    c.input = std::move(X);
    const T* cur = c.input.data();
    for (int l = 0; l < 3; ++l) {
      const int H = fc[l].out;
      const std::size_t n = static_cast<std::size_t>(B) * H;
      c.pre[l].resize(n);
      c.xhat[l].resize(n);
      c.bn_out[l].resize(n);
      c.act[l].resize(n);
      c.bn_mean[l].resize(H);
      c.bn_inv_std[l].resize(H);
      kernels::dense_forward(cur, fc[l].weight.w.data(), fc[l].bias.w.data(), c.pre[l].data(), B,
                             fc[l].in, H);
      if (B >= bn_min_batch) {
        c.used_batch_stats[l] = true;
        kernels::bn_forward_train(c.pre[l].data(), c.bn_out[l].data(), c.bn_mean[l].data(),
                                  c.bn_inv_std[l].data(), c.xhat[l].data(), bn[l].gamma.w.data(),
                                  bn[l].beta.w.data(), B, H, bn_eps);
        if (update_running) {
          for (int h = 0; h < H; ++h) {
            const T is = c.bn_inv_std[l][h];
            const T batch_var = T(1) / (is * is) - bn_eps;
            bn[l].run_mean[h] = bn_momentum * bn[l].run_mean[h] + (T(1) - bn_momentum) * c.bn_mean[l][h];
            bn[l].run_var[h] = bn_momentum * bn[l].run_var[h] + (T(1) - bn_momentum) * batch_var;
          }
        }
      } else {
        c.used_batch_stats[l] = false;
        kernels::bn_forward_frozen(c.pre[l].data(), c.bn_out[l].data(), c.xhat[l].data(),
                                   bn[l].run_mean.data(), bn[l].run_var.data(), bn[l].gamma.w.data(),
                                   bn[l].beta.w.data(), B, H, bn_eps);
      }
      kernels::leaky_relu_forward(c.bn_out[l].data(), c.act[l].data(), n, slope);
      cur = c.act[l].data();
    }
    c.logits.resize(static_cast<std::size_t>(B));
    kernels::dense_forward(cur, head.weight.w.data(), head.bias.w.data(), c.logits.data(), B,
                           head.in, 1);
  }

  // Eval-mode forward with running statistics, no cache.
  void infer(const T* X, int B, T* logits_out) const {
    std::vector<T> buf_a(static_cast<std::size_t>(B) * fc[0].out);
    std::vector<T> buf_b;
    const T* cur = X;
    for (int l = 0; l < 3; ++l) {
      const int H = fc[l].out;
      buf_a.resize(static_cast<std::size_t>(B) * H);
      kernels::dense_forward(cur, fc[l].weight.w.data(), fc[l].bias.w.data(), buf_a.data(), B,
                             fc[l].in, H);
      buf_b.resize(buf_a.size());
      kernels::bn_forward_eval(buf_a.data(), buf_b.data(), bn[l].run_mean.data(),
                               bn[l].run_var.data(), bn[l].gamma.w.data(), bn[l].beta.w.data(), B, H,
                               bn_eps);
      kernels::leaky_relu_forward(buf_b.data(), buf_a.data(), buf_a.size(), slope);
      std::swap(buf_a, buf_b);
      cur = buf_b.data();
    }
    kernels::dense_forward(cur, head.weight.w.data(), head.bias.w.data(), logits_out, B, head.in, 1);
  }

  // Accumulates parameter gradients and returns d(loss)/d(input) in dX.
  void backward(const TowerCache<T>& c, std::span<const T> dlogits, std::vector<T>& dX) {
    touched = true;
    const int B = c.B;
    std::vector<T> d_act(static_cast<std::size_t>(B) * head.in);
    kernels::dense_backward_weights(c.act[2].data(), dlogits.data(), head.weight.g.data(),
                                    head.bias.g.data(), B, head.in, 1);
    kernels::dense_backward_data(dlogits.data(), head.weight.w.data(), d_act.data(), B, head.in, 1);

    std::vector<T> d_bn, d_pre;
    for (int l = 2; l >= 0; --l) {
      const int H = fc[l].out;
      const std::size_t n = static_cast<std::size_t>(B) * H;
      d_bn.resize(n);
      kernels::leaky_relu_backward(c.bn_out[l].data(), d_act.data(), d_bn.data(), n, slope);
      d_pre.resize(n);
      if (c.used_batch_stats[l]) {
        kernels::bn_backward_train(d_bn.data(), c.xhat[l].data(), c.bn_inv_std[l].data(),
                                   bn[l].gamma.w.data(), d_pre.data(), bn[l].gamma.g.data(),
                                   bn[l].beta.g.data(), B, H);
      } else {
        kernels::bn_backward_eval_stats(d_bn.data(), c.xhat[l].data(), bn[l].run_var.data(),
                                        bn[l].gamma.w.data(), d_pre.data(), bn[l].gamma.g.data(),
                                        bn[l].beta.g.data(), B, H, bn_eps);
      }
      const T* inputs = l == 0 ? c.input.data() : c.act[l - 1].data();
      kernels::dense_backward_weights(inputs, d_pre.data(), fc[l].weight.g.data(),
                                      fc[l].bias.g.data(), B, fc[l].in, H);
      std::vector<T>& d_in = l == 0 ? dX : d_act;
      d_in.resize(static_cast<std::size_t>(B) * fc[l].in);
      kernels::dense_backward_data(d_pre.data(), fc[l].weight.w.data(), d_in.data(), B, fc[l].in, H);
    }
  }

  void adam_step(const AdamConfig<T>& cfg) {
    for (int l = 0; l < 3; ++l) {
      fc[l].weight.adam_step(cfg);
      fc[l].bias.adam_step(cfg);
      bn[l].gamma.adam_step(cfg);
      bn[l].beta.adam_step(cfg);
    }
    head.weight.adam_step(cfg);
    head.bias.adam_step(cfg);
  }

  void zero_grad() {
    for (int l = 0; l < 3; ++l) {
      fc[l].weight.zero_grad();
      fc[l].bias.zero_grad();
      bn[l].gamma.zero_grad();
      bn[l].beta.zero_grad();
    }
    head.weight.zero_grad();
    head.bias.zero_grad();
    touched = false;
  }
};

using RowRefs = std::span<const FeatureVec* const>;

// Cascaded CVR-RFR predictor: task-private embedding tables E_v/E_r, a
// task-shared table E_s, and one tower head per task. The variant decides
// which tables feed each tower (shared: E_s only; separate: privates only;
// hybrid: private and shared concatenated).
template <class T>
class Model {
 public:
  ModelConfig cfg;
  EmbeddingSet<T> emb_v, emb_r, emb_s;
  Tower<T> tower_cvr, tower_rfr;
  std::int64_t global_step = 0;

  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.vocab.size() != kNumFields)
      throw std::invalid_argument("ModelConfig: vocab must have 22 entries");
    Model m;
    m.cfg = cfg;
    Rng rng(seed);
    const double emb_scale = 0.05;
    m.emb_v.init(cfg.vocab, cfg.d_emb, rng, emb_scale);
    m.emb_r.init(cfg.vocab, cfg.d_emb, rng, emb_scale);
    m.emb_s.init(cfg.vocab, cfg.d_emb, rng, emb_scale);
    const int in = m.tower_input_dim();
    for (Tower<T>* t : {&m.tower_cvr, &m.tower_rfr}) {
      t->slope = static_cast<T>(cfg.leaky_slope);
      t->bn_eps = static_cast<T>(cfg.bn_eps);
      t->bn_momentum = static_cast<T>(cfg.bn_momentum);
      t->bn_min_batch = cfg.bn_min_batch;
      t->init(in, cfg.hidden, rng);
    }
    return m;
  }

  int tower_input_dim() const {
    const int block = kNumFields * cfg.d_emb;
    return cfg.variant == Variant::hybrid ? 2 * block : block;
  }

  Tower<T>& tower(Task t) { return t == Task::cvr ? tower_cvr : tower_rfr; }
  const Tower<T>& tower(Task t) const { return t == Task::cvr ? tower_cvr : tower_rfr; }
  EmbeddingSet<T>& private_emb(Task t) { return t == Task::cvr ? emb_v : emb_r; }
  const EmbeddingSet<T>& private_emb(Task t) const { return t == Task::cvr ? emb_v : emb_r; }

  // Tower input rows: [private | shared] per the variant.
  void assemble_input(Task task, RowRefs rows, std::vector<T>& X) const {
    const int d = cfg.d_emb;
    const int block = kNumFields * d;
    const int in = tower_input_dim();
    X.resize(rows.size() * static_cast<std::size_t>(in));
    const bool use_priv = cfg.variant != Variant::shared;
    const bool use_shared = cfg.variant != Variant::separate;
    const EmbeddingSet<T>& priv = private_emb(task);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(rows.size()); ++b) {
      T* row = X.data() + static_cast<std::size_t>(b) * in;
      const FeatureVec& x = *rows[b];
      int off = 0;
      if (use_priv) {
        for (int f = 0; f < kNumFields; ++f)
          std::copy_n(priv.row_ptr(f, x[f]), d, row + off + f * d);
        off += block;
      }
      if (use_shared) {
        for (int f = 0; f < kNumFields; ++f)
          std::copy_n(emb_s.row_ptr(f, x[f]), d, row + off + f * d);
      }
    }
  }

  void forward_train(Task task, RowRefs rows, TowerCache<T>& cache, bool update_running = true) {
    std::vector<T> X;
    assemble_input(task, rows, X);
    tower(task).forward_train(std::move(X), static_cast<int>(rows.size()), cache, update_running);
  }

  // Routes d(loss)/d(input) into the embedding accumulators.
  void backward(Task task, RowRefs rows, const TowerCache<T>& cache, std::span<const T> dlogits) {
    std::vector<T> dX;
    tower(task).backward(cache, dlogits, dX);
    const int d = cfg.d_emb;
    const int block = kNumFields * d;
    const int in = tower_input_dim();
    const bool use_priv = cfg.variant != Variant::shared;
    const bool use_shared = cfg.variant != Variant::separate;
    EmbeddingSet<T>& priv = private_emb(task);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const T* row = dX.data() + b * in;
      const FeatureVec& x = *rows[b];
      int off = 0;
      if (use_priv) {
        for (int f = 0; f < kNumFields; ++f) priv.add_grad(f, x[f], row + off + f * d);
        off += block;
      }
      if (use_shared) {
        for (int f = 0; f < kNumFields; ++f) emb_s.add_grad(f, x[f], row + off + f * d);
      }
    }
  }

  void optimizer_step(const AdamConfig<T>& adam) {
    ++global_step;
    for (Task t : {Task::cvr, Task::rfr}) {
      if (tower(t).touched) {
        tower(t).adam_step(adam);
        tower(t).zero_grad();
      }
    }
    emb_v.apply_adam(adam);
    emb_r.apply_adam(adam);
    emb_s.apply_adam(adam);
  }

  // Eval-mode predictions from frozen state for both towers.
  void predict(RowRefs rows, std::vector<T>& p_v, std::vector<T>& p_r) const {
    const int B = static_cast<int>(rows.size());
    std::vector<T> X, logits(static_cast<std::size_t>(B));
    p_v.resize(rows.size());
    p_r.resize(rows.size());
    assemble_input(Task::cvr, rows, X);
    tower_cvr.infer(X.data(), B, logits.data());
    for (int i = 0; i < B; ++i) p_v[i] = static_cast<T>(sigmoid(static_cast<double>(logits[i])));
    assemble_input(Task::rfr, rows, X);
    tower_rfr.infer(X.data(), B, logits.data());
    for (int i = 0; i < B; ++i) p_r[i] = static_cast<T>(sigmoid(static_cast<double>(logits[i])));
  }

  Predictions<T> predict_one(const FeatureVec& x) const {
    const FeatureVec* ptr = &x;
    std::vector<T> X, logit_buf(1);
    Predictions<T> p;
    assemble_input(Task::cvr, RowRefs(&ptr, 1), X);
    tower_cvr.infer(X.data(), 1, logit_buf.data());
    p.o_cvr = logit_buf[0];
    assemble_input(Task::rfr, RowRefs(&ptr, 1), X);
    tower_rfr.infer(X.data(), 1, logit_buf.data());
    p.o_rfr = logit_buf[0];
    p.p_v = static_cast<T>(sigmoid(static_cast<double>(p.o_cvr)));
    p.p_r = static_cast<T>(sigmoid(static_cast<double>(p.o_rfr)));
    p.p_n = p.p_v * (T(1) - p.p_r);
    return p;
  }
};

}  // namespace netcvr
