#include "mipilot/tensor/ops.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace mipilot::tensor {

namespace {

template <Real S>
void accumulate(Tensor<S>& dst, const Tensor<S>& src) {
  S* d = dst.data();
  const S* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <Real S>
void axpy(S a, const S* x, S* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::size_t product(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

}  // namespace

template <Real S>
S dot(const S* a, const S* b, std::size_t n) {
  std::array<S, 8> acc{};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  S tail = S(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <Real S>
Var<S> add(Var<S> a, Var<S> b) {
  require(a.shape() == b.shape(),
          "add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  Tensor<S> out = a.value();
  accumulate(out, b.value());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad(ib), g);
  });
}

template <Real S>
Var<S> scale(Var<S> x, S factor) {
  Tensor<S> out = x.value();
  for (auto& v : out.values()) v *= factor;
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, factor](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

template <Real S>
Var<S> reshape(Var<S> x, Shape shape) {
  Tensor<S> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

namespace {

// For each output linear index, the matching input linear index.
std::vector<std::size_t> permutation_map(const Shape& in, const std::vector<std::size_t>& perm) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) out[i] = in[perm[i]];
  const std::size_t n = element_count(in);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_strides[perm[i]];
    map[o] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace

template <Real S>
Var<S> permute(Var<S> x, std::vector<std::size_t> perm) {
  const Shape& in = x.shape();
  require(perm.size() == in.size(), "permute: rank mismatch");
  std::vector<bool> used(perm.size(), false);
  for (auto p : perm) {
    require(p < perm.size() && !used[p], "permute: invalid axis order");
    used[p] = true;
  }
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out_shape[i] = in[perm[i]];
  auto map = permutation_map(in, perm);
  Tensor<S> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = xv[map[o]];
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x},
                        [ix, map = std::move(map)](Tape<S>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(ix);
                          for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += g[o];
                        });
}

template <Real S>
Var<S> slice(Var<S> x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& in = x.shape();
  require(axis < in.size(), "slice: axis out of range");
  require(start + length <= in[axis] && length > 0,
          "slice: rows [" + std::to_string(start) + ", " + std::to_string(start + length) +
              ") exceed axis of size " + std::to_string(in[axis]));
  const std::size_t outer = product(in, 0, axis);
  const std::size_t inner = product(in, axis + 1, in.size());
  Shape out_shape = in;
  out_shape[axis] = length;
  Tensor<S> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    const S* src = xv.data() + (o * in[axis] + start) * inner;
    std::copy(src, src + length * inner, out.data() + o * length * inner);
  }
  const std::size_t ix = x.id, dim = in[axis];
  return x.tape->record(std::move(out), {x},
                        [=](Tape<S>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(ix);
                          for (std::size_t o = 0; o < outer; ++o) {
                            const S* src = g.data() + o * length * inner;
                            S* dst = gx.data() + (o * dim + start) * inner;
                            for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                          }
                        });
}

template <Real S>
Var<S> concat0(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.shape().size() == tail.size() + 1 &&
                std::equal(tail.begin(), tail.end(), p.shape().begin() + 1),
            "concat: trailing shapes differ");
    rows += p.shape()[0];
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = rows;
  Tensor<S> out(out_shape);
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset);
    ids.push_back(p.id);
    offsets.push_back(offset);
    offset += p.value().size();
  }
  return parts[0].tape->record(
      std::move(out), parts, [ids, offsets](Tape<S>& t, std::size_t self) {
        const auto& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          auto& gx = t.grad(ids[k]);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[offsets[k] + i];
        }
      });
}

template <Real S>
Var<S> mean0(Var<S> x) {
  const Shape& in = x.shape();
  require(in.size() >= 2 && in[0] > 0, "mean0: need rank >= 2");
  const std::size_t n = in[0], inner = x.value().size() / n;
  Tensor<S> out(Shape(in.begin() + 1, in.end()));
  const auto& xv = x.value();
  for (std::size_t j = 0; j < inner; ++j) {
    S acc = S(0);
    for (std::size_t i = 0; i < n; ++i) acc += xv[i * inner + j];
    out[j] = acc / static_cast<S>(n);
  }
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) gx[i * inner + j] += g[j] / static_cast<S>(n);
  });
}

template <Real S>
Var<S> conv2d(Var<S> input, Var<S> kernel, std::optional<Var<S>> bias, Padding padding,
              std::size_t groups) {
  const Shape& xs = input.shape();
  const Shape& ws = kernel.shape();
  require(xs.size() == 4 && ws.size() == 4,
          "conv2d: expected 4-D input and kernel, got " + to_string(xs) + " and " + to_string(ws));
  const std::size_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const std::size_t Cout = ws[0], Cg = ws[1], KH = ws[2], KW = ws[3];
  require(groups >= 1 && Cin == Cg * groups && Cout % groups == 0,
          "conv2d: channels " + std::to_string(Cin) + " -> " + std::to_string(Cout) +
              " incompatible with kernel " + to_string(ws) + " and " + std::to_string(groups) +
              " groups");
  if (bias) require(bias->shape() == Shape{Cout}, "conv2d: bias shape mismatch");
  std::size_t pt = 0, pl = 0, Ho, Wo;
  if (padding == Padding::same) {
    pt = KH / 2;
    pl = KW / 2;
    Ho = H;
    Wo = W;
  } else {
    require(KH <= H && KW <= W, "conv2d: kernel larger than input for valid padding");
    Ho = H - KH + 1;
    Wo = W - KW + 1;
  }
  const std::size_t Og = Cout / groups;

  const auto& x = input.value();
  const auto& w = kernel.value();
  Tensor<S> out({B, Cout, Ho, Wo});
  // Visits every (output row, input row, weight) triple with the valid output column range.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t oc = 0; oc < Cout; ++oc) {
        const std::size_t g = oc / Og;
        for (std::size_t icl = 0; icl < Cg; ++icl) {
          const std::size_t ic = g * Cg + icl;
          for (std::size_t kh = 0; kh < KH; ++kh)
            for (std::size_t kw = 0; kw < KW; ++kw) {
              const std::size_t widx = ((oc * Cg + icl) * KH + kh) * KW + kw;
              const std::size_t lo = kw < pl ? pl - kw : 0;
              const std::size_t hi = std::min(Wo, W + pl - kw);
              if (lo >= hi) continue;
              for (std::size_t oh = 0; oh < Ho; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) -
                                          static_cast<std::ptrdiff_t>(pt);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                const std::size_t orow = ((b * Cout + oc) * Ho + oh) * Wo;
                const std::size_t irow = ((b * Cin + ic) * H + static_cast<std::size_t>(ih)) * W;
                // output column ow reads input column ow + kw - pl
                fn(widx, orow + lo, irow + lo + kw - pl, hi - lo);
              }
            }
        }
      }
  };

  if (bias) {
    const auto& bv = bias->value();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t oc = 0; oc < Cout; ++oc)
        std::fill_n(out.data() + (b * Cout + oc) * Ho * Wo, Ho * Wo, bv[oc]);
  }
  S* o = out.data();
  for_each_tap([&](std::size_t widx, std::size_t oo, std::size_t io, std::size_t n) {
    axpy(w[widx], x.data() + io, o + oo, n);
  });

  const std::size_t ix = input.id, iw = kernel.id;
  const std::optional<std::size_t> ib = bias ? std::optional(bias->id) : std::nullopt;
  std::vector<Var<S>> parents{input, kernel};
  if (bias) parents.push_back(*bias);
  return input.tape->record(
      std::move(out), parents,
      [=](Tape<S>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& xv = t.value(ix);
        const auto& wv = t.value(iw);
        if (t.requires_grad(ix)) {
          S* gx = t.grad(ix).data();
          for_each_tap([&](std::size_t widx, std::size_t oo, std::size_t io, std::size_t n) {
            axpy(wv[widx], g.data() + oo, gx + io, n);
          });
        }
        if (t.requires_grad(iw)) {
          S* gw = t.grad(iw).data();
          for_each_tap([&](std::size_t widx, std::size_t oo, std::size_t io, std::size_t n) {
            gw[widx] += dot(g.data() + oo, xv.data() + io, n);
          });
        }
        if (ib && t.requires_grad(*ib)) {
          auto& gb = t.grad(*ib);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t oc = 0; oc < Cout; ++oc) {
              const S* gp = g.data() + (b * Cout + oc) * Ho * Wo;
              S acc = S(0);
              for (std::size_t i = 0; i < Ho * Wo; ++i) acc += gp[i];
              gb[oc] += acc;
            }
        }
      });
}

template <Real S>
Var<S> batch_norm(Var<S> input, Var<S> gamma, Var<S> beta, Tensor<S>& running_mean,
                  Tensor<S>& running_var, Mode mode, S momentum, S eps, bool update_running) {
  const Shape& xs = input.shape();
  require(xs.size() >= 2, "batch_norm: need rank >= 2");
  const std::size_t B = xs[0], C = xs[1], inner = product(xs, 2, xs.size());
  require(gamma.shape() == Shape{C} && beta.shape() == Shape{C} &&
              running_mean.shape() == Shape{C} && running_var.shape() == Shape{C},
          "batch_norm: per-channel parameter shapes must be [" + std::to_string(C) + "]");
  if (mode == Mode::train && B * inner == 0)
    throw ArgumentError("batch_norm: empty batch in train mode");
  const std::size_t N = B * inner;

  const auto& x = input.value();
  const auto& gm = gamma.value();
  const auto& bt = beta.value();
  Tensor<S> xhat(xs);
  std::vector<S> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    S mean, var;
    if (mode == Mode::train) {
      S sum = S(0);
      for (std::size_t b = 0; b < B; ++b) {
        const S* p = x.data() + (b * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) sum += p[i];
      }
      mean = sum / static_cast<S>(N);
      S sq = S(0);
      for (std::size_t b = 0; b < B; ++b) {
        const S* p = x.data() + (b * C + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<S>(N);
      if (update_running) {
        running_mean[c] = momentum * running_mean[c] + (S(1) - momentum) * mean;
        running_var[c] = momentum * running_var[c] + (S(1) - momentum) * var;
      }
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    inv_std[c] = S(1) / std::sqrt(var + eps);
    for (std::size_t b = 0; b < B; ++b) {
      const S* p = x.data() + (b * C + c) * inner;
      S* q = xhat.data() + (b * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) q[i] = (p[i] - mean) * inv_std[c];
    }
  }
  Tensor<S> out(xs);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const S* q = xhat.data() + (b * C + c) * inner;
      S* o = out.data() + (b * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) o[i] = gm[c] * q[i] + bt[c];
    }

  const std::size_t ix = input.id, ig = gamma.id, ibt = beta.id;
  const bool batch_stats = mode == Mode::train;
  return input.tape->record(
      std::move(out), {input, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<S>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& gmv = t.value(ig);
        std::vector<S> sum_g(C, S(0)), sum_gx(C, S(0));
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            const S* gp = g.data() + (b * C + c) * inner;
            const S* q = xhat.data() + (b * C + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g[c] += gp[i];
              sum_gx[c] += gp[i] * q[i];
            }
          }
        if (t.requires_grad(ig)) {
          auto& gg = t.grad(ig);
          for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
        }
        if (t.requires_grad(ibt)) {
          auto& gb = t.grad(ibt);
          for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
        }
        if (t.requires_grad(ix)) {
          auto& gx = t.grad(ix);
          const S n = static_cast<S>(N);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const S* gp = g.data() + (b * C + c) * inner;
              const S* q = xhat.data() + (b * C + c) * inner;
              S* d = gx.data() + (b * C + c) * inner;
              const S k = gmv[c] * inv_std[c];
              if (batch_stats) {
                for (std::size_t i = 0; i < inner; ++i)
                  d[i] += k / n * (n * gp[i] - sum_g[c] - q[i] * sum_gx[c]);
              } else {
                for (std::size_t i = 0; i < inner; ++i) d[i] += k * gp[i];
              }
            }
        }
      });
}

template <Real S>
Var<S> elu(Var<S> x, S alpha) {
  Tensor<S> out = x.value();
  for (auto& v : out.values())
    if (v <= S(0)) v = alpha * (std::exp(v) - S(1));
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, alpha](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    const auto& xv = t.value(ix);
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > S(0) ? g[i] : g[i] * (y[i] + alpha);
  });
}

template <Real S>
Var<S> avg_pool(Var<S> x, std::size_t pool) {
  const Shape& xs = x.shape();
  require(!xs.empty() && pool >= 1 && xs.back() >= pool,
          "avg_pool: pool " + std::to_string(pool) + " does not fit shape " + to_string(xs));
  const std::size_t W = xs.back(), Wo = W / pool, rows = x.value().size() / W;
  Shape os = xs;
  os.back() = Wo;
  Tensor<S> out(os);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < Wo; ++o) {
      S acc = S(0);
      for (std::size_t k = 0; k < pool; ++k) acc += xv[r * W + o * pool + k];
      out[r * Wo + o] = acc / static_cast<S>(pool);
    }
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < Wo; ++o)
        for (std::size_t k = 0; k < pool; ++k)
          gx[r * W + o * pool + k] += g[r * Wo + o] / static_cast<S>(pool);
  });
}

template <Real S>
Var<S> dropout(Var<S> x, S rate, Rng& rng, Mode mode) {
  if (!(rate >= S(0) && rate < S(1))) throw ArgumentError("dropout rate must be in [0, 1)");
  if (mode == Mode::eval || rate == S(0)) return x;
  const S keep_scale = S(1) / (S(1) - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<S> mask(x.value().size());
  for (auto& m : mask) m = u(rng) < static_cast<double>(rate) ? S(0) : keep_scale;
  Tensor<S> out = x.value();
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] *= mask[i];
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x},
                        [ix, mask = std::move(mask)](Tape<S>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(ix);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                        });
}

template <Real S>
Var<S> dense(Var<S> x, Var<S> weight, std::optional<Var<S>> bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require(ws.size() == 2 && !xs.empty() && xs.back() == ws[0],
          "dense: input " + to_string(xs) + " incompatible with weight " + to_string(ws));
  const std::size_t in = ws[0], outd = ws[1], rows = x.value().size() / in;
  if (bias) require(bias->shape() == Shape{outd}, "dense: bias shape mismatch");
  Shape os = xs;
  os.back() = outd;
  Tensor<S> out(os);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  for (std::size_t r = 0; r < rows; ++r) {
    S* o = out.data() + r * outd;
    if (bias) std::copy(bias->value().data(), bias->value().data() + outd, o);
    for (std::size_t i = 0; i < in; ++i) axpy(xv[r * in + i], wv.data() + i * outd, o, outd);
  }
  const std::size_t ix = x.id, iw = weight.id;
  const std::optional<std::size_t> ib = bias ? std::optional(bias->id) : std::nullopt;
  std::vector<Var<S>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return x.tape->record(std::move(out), parents, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& wv = t.value(iw);
    if (t.requires_grad(ix)) {
      auto& gx = t.grad(ix);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < in; ++i)
          gx[r * in + i] += dot(g.data() + r * outd, wv.data() + i * outd, outd);
    }
    if (t.requires_grad(iw)) {
      auto& gw = t.grad(iw);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < in; ++i)
          axpy(xv[r * in + i], g.data() + r * outd, gw.data() + i * outd, outd);
    }
    if (ib && t.requires_grad(*ib)) {
      auto& gb = t.grad(*ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < outd; ++o) gb[o] += g[r * outd + o];
    }
  });
}

template <Real S>
Var<S> softmax(Var<S> x) {
  const Shape& xs = x.shape();
  require(!xs.empty() && xs.back() > 0, "softmax: empty last axis");
  const std::size_t n = xs.back(), rows = x.value().size() / n;
  Tensor<S> out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    S* p = out.data() + r * n;
    const S m = *std::max_element(p, p + n);
    S sum = S(0);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::exp(p[i] - m);
      sum += p[i];
    }
    for (std::size_t i = 0; i < n; ++i) p[i] /= sum;
  }
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      const S s = dot(g.data() + r * n, y.data() + r * n, n);
      for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += y[r * n + i] * (g[r * n + i] - s);
    }
  });
}

template <Real S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
  const Shape& xs = x.shape();
  require(!xs.empty(), "layer_norm: scalar input");
  const std::size_t n = xs.back(), rows = x.value().size() / n;
  require(gamma.shape() == Shape{n} && beta.shape() == Shape{n},
          "layer_norm: gamma/beta must be [" + std::to_string(n) + "]");
  Tensor<S> xhat(xs), out(xs);
  std::vector<S> inv(rows);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const S* p = xv.data() + r * n;
    S mean = S(0);
    for (std::size_t i = 0; i < n; ++i) mean += p[i];
    mean /= static_cast<S>(n);
    S var = S(0);
    for (std::size_t i = 0; i < n; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<S>(n);
    inv[r] = S(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (p[i] - mean) * inv[r];
      out[r * n + i] = gamma.value()[i] * xhat[r * n + i] + beta.value()[i];
    }
  }
  const std::size_t ix = x.id, ig = gamma.id, ibt = beta.id;
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv = std::move(inv)](Tape<S>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& gm = t.value(ig);
        if (t.requires_grad(ig) || t.requires_grad(ibt)) {
          auto& gg = t.grad(ig);
          auto& gb = t.grad(ibt);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < n; ++i) {
              gg[i] += g[r * n + i] * xhat[r * n + i];
              gb[i] += g[r * n + i];
            }
        }
        if (t.requires_grad(ix)) {
          auto& gx = t.grad(ix);
          std::vector<S> gy(n);
          for (std::size_t r = 0; r < rows; ++r) {
            S s1 = S(0), s2 = S(0);
            for (std::size_t i = 0; i < n; ++i) {
              gy[i] = g[r * n + i] * gm[i];
              s1 += gy[i];
              s2 += gy[i] * xhat[r * n + i];
            }
            const S nn = static_cast<S>(n);
            for (std::size_t i = 0; i < n; ++i)
              gx[r * n + i] += inv[r] / nn * (nn * gy[i] - s1 - xhat[r * n + i] * s2);
          }
        }
      });
}

template <Real S>
Var<S> matmul(Var<S> a, Var<S> b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  require(as.size() >= 2 && as.size() == bs.size() &&
              std::equal(as.begin(), as.end() - 2, bs.begin()),
          "matmul: batch axes of " + to_string(as) + " and " + to_string(bs) + " differ");
  const std::size_t M = as[as.size() - 2], K = as.back();
  const std::size_t N = transpose_b ? bs[bs.size() - 2] : bs.back();
  require((transpose_b ? bs.back() : bs[bs.size() - 2]) == K,
          "matmul: inner dimensions of " + to_string(as) + " and " + to_string(bs) + " differ");
  const std::size_t batch = product(as, 0, as.size() - 2);
  Shape os = as;
  os.back() = N;
  Tensor<S> out(os);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t z = 0; z < batch; ++z) {
    const S* A = av.data() + z * M * K;
    const S* Bm = bv.data() + z * K * N;
    S* O = out.data() + z * M * N;
    for (std::size_t m = 0; m < M; ++m) {
      if (transpose_b) {
        for (std::size_t n = 0; n < N; ++n) O[m * N + n] = dot(A + m * K, Bm + n * K, K);
      } else {
        for (std::size_t k = 0; k < K; ++k) axpy(A[m * K + k], Bm + k * N, O + m * N, N);
      }
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
    S* GA = need_a ? t.grad(ia).data() : nullptr;
    S* GB = need_b ? t.grad(ib).data() : nullptr;
    for (std::size_t z = 0; z < batch; ++z) {
      const S* A = av.data() + z * M * K;
      const S* Bm = bv.data() + z * K * N;
      const S* G = g.data() + z * M * N;
      for (std::size_t m = 0; m < M; ++m) {
        if (transpose_b) {
          // out[m,n] = sum_k A[m,k] B[n,k]
          for (std::size_t n = 0; n < N; ++n) {
            if (need_a) axpy(G[m * N + n], Bm + n * K, GA + z * M * K + m * K, K);
            if (need_b) axpy(G[m * N + n], A + m * K, GB + z * K * N + n * K, K);
          }
        } else {
          for (std::size_t k = 0; k < K; ++k) {
            if (need_a) GA[z * M * K + m * K + k] += dot(G + m * N, Bm + k * N, N);
            if (need_b) axpy(A[m * K + k], G + m * N, GB + z * K * N + k * N, N);
          }
        }
      }
    }
  });
}

template <Real S>
AttentionOutput<S> multi_head_self_attention(Var<S> x, const AttentionWeights<S>& w,
                                             AttentionShape shape, S dropout_rate, Rng& rng,
                                             Mode mode) {
  const Shape& xs = x.shape();
  require(xs.size() == 3 && xs[1] >= 1, "attention: input must be [B, S, d], got " + to_string(xs));
  const std::size_t B = xs[0], L = xs[1], d = xs[2], H = shape.heads, Kd = shape.key_dim;
  require(w.wq.shape() == Shape{d, H * Kd} && w.wk.shape() == Shape{d, H * Kd} &&
              w.wv.shape() == Shape{d, H * Kd} && w.wo.shape() == Shape{H * Kd, d},
          "attention: projection shapes do not match d=" + std::to_string(d) + ", heads=" +
              std::to_string(H) + ", key_dim=" + std::to_string(Kd));
  auto heads = [&](Var<S> proj) {
    return permute(reshape(proj, {B, L, H, Kd}), {0, 2, 1, 3});  // [B, H, L, Kd]
  };
  auto q = heads(dense(x, w.wq, std::optional(w.bq)));
  auto k = heads(dense(x, w.wk, std::optional(w.bk)));
  auto v = heads(dense(x, w.wv, std::optional(w.bv)));
  auto scores = scale(matmul(q, k, true), S(1) / std::sqrt(static_cast<S>(Kd)));
  auto weights = softmax(scores);
  auto dropped = dropout(weights, dropout_rate, rng, mode);
  auto context = reshape(permute(matmul(dropped, v), {0, 2, 1, 3}), {B, L, H * Kd});
  return {dense(context, w.wo, std::optional(w.bo)), weights};
}

template <Real S>
Var<S> causal_dilated_conv1d(Var<S> x, Var<S> kernel, std::optional<Var<S>> bias,
                             std::size_t dilation) {
  if (dilation < 1) throw ArgumentError("causal conv: dilation must be >= 1");
  const Shape& xs = x.shape();
  const Shape& ws = kernel.shape();
  require(xs.size() == 3 && ws.size() == 3 && ws[1] == xs[1],
          "causal conv: input " + to_string(xs) + " incompatible with kernel " + to_string(ws));
  const std::size_t B = xs[0], Cin = xs[1], L = xs[2], Cout = ws[0], K = ws[2];
  if (bias) require(bias->shape() == Shape{Cout}, "causal conv: bias shape mismatch");
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < Cout; ++o)
        for (std::size_t i = 0; i < Cin; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const std::size_t shift = (K - 1 - k) * dilation;
            if (shift >= L) continue;
            fn((o * Cin + i) * K + k, (b * Cout + o) * L + shift, (b * Cin + i) * L, L - shift);
          }
  };
  Tensor<S> out({B, Cout, L});
  if (bias)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < Cout; ++o)
        std::fill_n(out.data() + (b * Cout + o) * L, L, bias->value()[o]);
  const auto& xv = x.value();
  const auto& wv = kernel.value();
  for_each_tap([&](std::size_t widx, std::size_t oo, std::size_t io, std::size_t n) {
    axpy(wv[widx], xv.data() + io, out.data() + oo, n);
  });
  const std::size_t ix = x.id, iw = kernel.id;
  const std::optional<std::size_t> ib = bias ? std::optional(bias->id) : std::nullopt;
  std::vector<Var<S>> parents{x, kernel};
  if (bias) parents.push_back(*bias);
  return x.tape->record(std::move(out), parents, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& wv = t.value(iw);
    if (t.requires_grad(ix)) {
      S* gx = t.grad(ix).data();
      for_each_tap([&](std::size_t widx, std::size_t oo, std::size_t io, std::size_t n) {
        axpy(wv[widx], g.data() + oo, gx + io, n);
      });
    }
    if (t.requires_grad(iw)) {
      S* gw = t.grad(iw).data();
      for_each_tap([&](std::size_t widx, std::size_t oo, std::size_t io, std::size_t n) {
        gw[widx] += dot(g.data() + oo, xv.data() + io, n);
      });
    }
    if (ib && t.requires_grad(*ib)) {
      auto& gb = t.grad(*ib);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Cout; ++o)
          for (std::size_t s = 0; s < L; ++s) gb[o] += g[(b * Cout + o) * L + s];
    }
  });
}

namespace {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows)
    throw ArgumentError("expected " + std::to_string(rows) + " labels, got " +
                        std::to_string(labels.size()));
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw ArgumentError("label " + std::to_string(l) + " outside [0, " +
                          std::to_string(classes) + ")");
}

}  // namespace

template <Real S>
Var<S> cross_entropy(Var<S> logits, std::span<const int> labels) {
  const Shape& ls = logits.shape();
  require(ls.size() == 2 && ls[0] > 0, "cross_entropy: logits must be [B, C]");
  const std::size_t B = ls[0], C = ls[1];
  check_labels(labels, B, C);
  const auto& z = logits.value();
  Tensor<S> probs({B, C});
  S total = S(0);
  for (std::size_t r = 0; r < B; ++r) {
    const S* p = z.data() + r * C;
    const S m = *std::max_element(p, p + C);
    S sum = S(0);
    for (std::size_t i = 0; i < C; ++i) sum += std::exp(p[i] - m);
    const S lse = m + std::log(sum);
    total += lse - p[labels[r]];
    for (std::size_t i = 0; i < C; ++i) probs[r * C + i] = std::exp(p[i] - lse);
  }
  Tensor<S> out({1}, total / static_cast<S>(B));
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t iz = logits.id;
  return logits.tape->record(
      std::move(out), {logits},
      [=, probs = std::move(probs), lab = std::move(lab)](Tape<S>& t, std::size_t self) {
        const S g = t.grad(self)[0] / static_cast<S>(B);
        auto& gz = t.grad(iz);
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t i = 0; i < C; ++i)
            gz[r * C + i] +=
                g * (probs[r * C + i] - (static_cast<int>(i) == lab[r] ? S(1) : S(0)));
      });
}

template <Real S>
Var<S> nll_from_probabilities(Var<S> probs, std::span<const int> labels) {
  const Shape& ps = probs.shape();
  require(ps.size() == 2 && ps[0] > 0, "nll: probabilities must be [B, C]");
  const std::size_t B = ps[0], C = ps[1];
  check_labels(labels, B, C);
  constexpr S kFloor = std::numeric_limits<S>::min();
  const auto& p = probs.value();
  S total = S(0);
  for (std::size_t r = 0; r < B; ++r) total -= std::log(std::max(p[r * C + labels[r]], kFloor));
  Tensor<S> out({1}, total / static_cast<S>(B));
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t ip = probs.id;
  return probs.tape->record(std::move(out), {probs},
                            [=, lab = std::move(lab)](Tape<S>& t, std::size_t self) {
                              const S g = t.grad(self)[0] / static_cast<S>(B);
                              const auto& pv = t.value(ip);
                              auto& gp = t.grad(ip);
                              for (std::size_t r = 0; r < B; ++r) {
                                const S pr = pv[r * C + lab[r]];
                                if (pr > kFloor) gp[r * C + lab[r]] -= g / pr;
                              }
                            });
}

#define MIPILOT_INSTANTIATE(S)                                                                   \
  template S dot<S>(const S*, const S*, std::size_t);                                           \
  template Var<S> add<S>(Var<S>, Var<S>);                                                       \
  template Var<S> scale<S>(Var<S>, S);                                                          \
  template Var<S> reshape<S>(Var<S>, Shape);                                                    \
  template Var<S> permute<S>(Var<S>, std::vector<std::size_t>);                                 \
  template Var<S> slice<S>(Var<S>, std::size_t, std::size_t, std::size_t);                      \
  template Var<S> concat0<S>(const std::vector<Var<S>>&);                                       \
  template Var<S> mean0<S>(Var<S>);                                                             \
  template Var<S> conv2d<S>(Var<S>, Var<S>, std::optional<Var<S>>, Padding, std::size_t);       \
  template Var<S> batch_norm<S>(Var<S>, Var<S>, Var<S>, Tensor<S>&, Tensor<S>&, Mode, S, S,     \
                                bool);                                                           \
  template Var<S> elu<S>(Var<S>, S);                                                            \
  template Var<S> avg_pool<S>(Var<S>, std::size_t);                                             \
  template Var<S> dropout<S>(Var<S>, S, Rng&, Mode);                                            \
  template Var<S> dense<S>(Var<S>, Var<S>, std::optional<Var<S>>);                              \
  template Var<S> softmax<S>(Var<S>);                                                           \
  template Var<S> layer_norm<S>(Var<S>, Var<S>, Var<S>, S);                                     \
  template Var<S> matmul<S>(Var<S>, Var<S>, bool);                                              \
  template AttentionOutput<S> multi_head_self_attention<S>(Var<S>, const AttentionWeights<S>&,  \
                                                           AttentionShape, S, Rng&, Mode);      \
  template Var<S> causal_dilated_conv1d<S>(Var<S>, Var<S>, std::optional<Var<S>>, std::size_t); \
  template Var<S> cross_entropy<S>(Var<S>, std::span<const int>);                               \
  template Var<S> nll_from_probabilities<S>(Var<S>, std::span<const int>);

MIPILOT_INSTANTIATE(float)
MIPILOT_INSTANTIATE(double)

#undef MIPILOT_INSTANTIATE

}  // namespace mipilot::tensor
