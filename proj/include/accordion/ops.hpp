#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "accordion/errors.hpp"
#include "accordion/params.hpp"
#include "accordion/rng.hpp"
#include "accordion/tensor.hpp"

namespace accordion {

// Dense-layer kernels and the optimizer step.
//
// Determinism contract: every reduction in this file accumulates in ascending
// index order (inputs by column, batch by row), single-threaded, in float32
// except where noted. Combined with -ffp-contract=off this makes results
// bit-reproducible across builds and equal to a naive triple-loop evaluation
// of the same formulas, which is what the test suite checks against.

// out[b,o] = bias[o] + sum_i x[b,i] * w[o,i]
// x: [batch x in], w: [out x in] row-major, bias: [out], out: [batch x out].
// The inner loops run over a transposed copy of w so the compiler can
// vectorize along o while keeping the per-output accumulation order (ascending
// i, starting from the bias) identical to the naive form.
inline void dense_forward(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& out) {
  if (x.rank() != 2 || w.rank() != 2 || bias.rank() != 1)
    throw ShapeError("dense_forward: x and w must be rank 2, bias rank 1");
  const std::size_t batch = x.rows(), in = x.cols(), outn = w.rows();
  if (w.cols() != in) throw ShapeError("dense_forward: w cols != x cols");
  if (bias.size() != outn) throw ShapeError("dense_forward: bias size != w rows");
  if (out.rank() != 2 || out.rows() != batch || out.cols() != outn)
    throw ShapeError("dense_forward: bad output shape");

  std::vector<float> wt(in * outn);
  for (std::size_t o = 0; o < outn; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * outn + o] = w.at(o, i);

  for (std::size_t b = 0; b < batch; ++b) {
    float* orow = out.row(b);
    for (std::size_t o = 0; o < outn; ++o) orow[o] = bias[o];
    const float* xrow = x.row(b);
    for (std::size_t i = 0; i < in; ++i) {
      const float s = xrow[i];
      const float* wrow = wt.data() + i * outn;
      for (std::size_t o = 0; o < outn; ++o) orow[o] += s * wrow[o];
    }
  }
}

// Backward of dense_forward. dy: [batch x out].
//   dx[b,i]  = sum_o dy[b,o] * w[o,i]     (ascending o)
//   dw[o,i] += sum_b dy[b,o] * x[b,i]     (ascending b)
//   db[o]   += sum_b dy[b,o]              (ascending b)
// dw/db accumulate so a caller can sum contributions; dx is overwritten.
// Pass dx == nullptr to skip input gradients (first layer).
inline void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                           Tensor& dw, Tensor& db) {
  const std::size_t batch = x.rows(), in = x.cols(), outn = w.rows();
  if (dy.rank() != 2 || dy.rows() != batch || dy.cols() != outn)
    throw ShapeError("dense_backward: bad dy shape");
  if (!dw.same_shape(w) || db.size() != outn) throw ShapeError("dense_backward: bad dw/db shape");
  if (dx && (!dx->same_shape(x))) throw ShapeError("dense_backward: bad dx shape");

  if (dx) {
    for (std::size_t b = 0; b < batch; ++b) {
      float* dxrow = dx->row(b);
      for (std::size_t i = 0; i < in; ++i) dxrow[i] = 0.0f;
      const float* dyrow = dy.row(b);
      for (std::size_t o = 0; o < outn; ++o) {
        const float s = dyrow[o];
        const float* wrow = w.row(o);
        for (std::size_t i = 0; i < in; ++i) dxrow[i] += s * wrow[i];
      }
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const float* dyrow = dy.row(b);
    const float* xrow = x.row(b);
    for (std::size_t o = 0; o < outn; ++o) {
      const float s = dyrow[o];
      float* dwrow = dw.row(o);
      for (std::size_t i = 0; i < in; ++i) dwrow[i] += s * xrow[i];
      db[o] += s;
    }
  }
}

inline void relu_forward(const Tensor& x, Tensor& out) {
  if (!out.same_shape(x)) throw ShapeError("relu_forward: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

// dx = dy where the pre-activation was positive, else 0.
inline void relu_backward(const Tensor& pre, const Tensor& dy, Tensor& dx) {
  if (!dy.same_shape(pre) || !dx.same_shape(pre)) throw ShapeError("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < pre.size(); ++i) dx[i] = pre[i] > 0.0f ? dy[i] : 0.0f;
}

// Softmax cross-entropy with mean reduction. Returns the mean loss and writes
// d(loss)/d(logits) into grad (already divided by the batch size). The
// log-sum-exp and the loss accumulation run in double so the loss is a stable
// scalar even when logits are large.
inline double softmax_xent(const Tensor& logits, const std::vector<std::uint32_t>& labels,
                           Tensor& grad) {
  if (logits.rank() != 2) throw ShapeError("softmax_xent: logits must be rank 2");
  const std::size_t batch = logits.rows(), classes = logits.cols();
  if (labels.size() != batch) throw ShapeError("softmax_xent: labels size != batch");
  if (!grad.same_shape(logits)) throw ShapeError("softmax_xent: bad grad shape");

  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const float* lrow = logits.row(b);
    if (labels[b] >= classes) throw ConfigError("softmax_xent: label out of range");
    double m = lrow[0];
    for (std::size_t c = 1; c < classes; ++c) m = lrow[c] > m ? static_cast<double>(lrow[c]) : m;
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(lrow[c]) - m);
    const double log_z = std::log(sum);
    float* grow = grad.row(b);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(lrow[c]) - m) / sum;
      const double y = (c == labels[b]) ? 1.0 : 0.0;
      grow[c] = static_cast<float>((p - y) / static_cast<double>(batch));
    }
    total += -(static_cast<double>(lrow[labels[b]]) - m - log_z);
  }
  return total / static_cast<double>(batch);
}

// SGD with classic momentum and decoupled-from-nothing L2 (the standard
// "weight decay folded into the gradient" form):
//   g <- grad + weight_decay * value
//   v <- momentum * v + g
//   value <- value - lr * v
// Entries whose trainable flag is false are not touched at all -- neither
// value nor velocity -- so a frozen entry stays bit-identical no matter how
// many steps run.
inline void sgd_step(ParamSet& params, float lr, float momentum, float weight_decay) {
  if (lr < 0.0f || !std::isfinite(lr)) throw ConfigError("sgd_step: lr must be >= 0");
  if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("sgd_step: momentum must be in [0,1)");
  if (weight_decay < 0.0f) throw ConfigError("sgd_step: weight_decay must be >= 0");
  for (auto& p : params) {
    if (!p.trainable) continue;
    float* v = p.velocity.data();
    float* val = p.value.data();
    const float* g = p.grad.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float eff = g[i] + weight_decay * val[i];
      v[i] = momentum * v[i] + eff;
      val[i] -= lr * v[i];
    }
  }
}

// Central-difference gradient check over a random sample of trainable
// scalars. Call order: run forward+backward once so `grad` holds analytic
// gradients, then call this with a forward-only loss closure. Returns the
// max relative error  |a - n| / max(|a|, |n|, 1)  over the sample; when the
// loss is flat in a parameter both sides are ~0 and the error is ~0.
inline double grad_check(const std::function<double()>& loss_fn, ParamSet& params,
                         std::size_t samples, double eps, RngState& rng) {
  if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");
  if (samples == 0) throw ConfigError("grad_check: need at least one sample");

  std::vector<Param*> entries;
  std::size_t total = 0;
  for (auto& p : params) {
    if (!p.trainable) continue;
    entries.push_back(&p);
    total += p.value.size();
  }
  if (total == 0) throw ConfigError("grad_check: no trainable parameters");

  double worst = 0.0;
  const std::size_t n = samples < total ? samples : total;
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t flat = rng.uniform_index(total);
    Param* p = nullptr;
    for (Param* e : entries) {
      if (flat < e->value.size()) {
        p = e;
        break;
      }
      flat -= e->value.size();
    }
    float& slot = p->value[flat];
    const float saved = slot;
    const float hi = static_cast<float>(static_cast<double>(saved) + eps);
    const float lo = static_cast<float>(static_cast<double>(saved) - eps);
    slot = hi;
    const double loss_hi = loss_fn();
    slot = lo;
    const double loss_lo = loss_fn();
    slot = saved;
    const double width = static_cast<double>(hi) - static_cast<double>(lo);
    const double numeric = width != 0.0 ? (loss_hi - loss_lo) / width : 0.0;
    const double analytic = static_cast<double>(p->grad[flat]);
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
    const double rel = std::fabs(analytic - numeric) / denom;
    worst = rel > worst ? rel : worst;
  }
  return worst;
}

}  // namespace accordion
