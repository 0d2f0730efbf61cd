#include "conpro/graph.hpp"

#include <cmath>
#include <cstring>

namespace conpro {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

// cols: (C*k*k, Ho*Wo), stride-1 convolution
void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t k, int64_t pad, int64_t Ho,
            int64_t Wo, double* cols) {
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t di = 0; di < k; ++di) {
      for (int64_t dj = 0; dj < k; ++dj) {
        double* crow = cols + row * Ho * Wo;
        ++row;
        for (int64_t i = 0; i < Ho; ++i) {
          const int64_t si = i + di - pad;
          double* dst = crow + i * Wo;
          if (si < 0 || si >= H) {
            std::memset(dst, 0, static_cast<size_t>(Wo) * sizeof(double));
            continue;
          }
          const double* src = x + (c * H + si) * W;
          const int64_t jlo = std::max<int64_t>(0, pad - dj);
          const int64_t jhi = std::min<int64_t>(Wo, W + pad - dj);
          for (int64_t j = 0; j < jlo; ++j) dst[j] = 0.0;
          if (jhi > jlo)
            std::memcpy(dst + jlo, src + (jlo + dj - pad),
                        static_cast<size_t>(jhi - jlo) * sizeof(double));
          for (int64_t j = jhi; j < Wo; ++j) dst[j] = 0.0;
        }
      }
    }
  }
}

void col2im_acc(const double* cols, int64_t C, int64_t H, int64_t W, int64_t k, int64_t pad,
                int64_t Ho, int64_t Wo, double* gx) {
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t di = 0; di < k; ++di) {
      for (int64_t dj = 0; dj < k; ++dj) {
        const double* crow = cols + row * Ho * Wo;
        ++row;
        for (int64_t i = 0; i < Ho; ++i) {
          const int64_t si = i + di - pad;
          if (si < 0 || si >= H) continue;
          double* dst = gx + (c * H + si) * W;
          const double* src = crow + i * Wo;
          const int64_t jlo = std::max<int64_t>(0, pad - dj);
          const int64_t jhi = std::min<int64_t>(Wo, W + pad - dj);
          for (int64_t j = jlo; j < jhi; ++j) dst[j + dj - pad] += src[j];
        }
      }
    }
  }
}

}  // namespace

Var Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size()) - 1};
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  check(n.has_grad, "gradient was not computed for this variable");
  return n.grad;
}

Var Graph::make(Tensor value, std::vector<Var> parents, std::function<void()> backprop) {
  bool rg = false;
  for (Var p : parents) rg = rg || node(p).requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(Var v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  Node& ln = node(loss);
  check(ln.value.size() == 1, "backward expects a scalar loss");
  check(ln.requires_grad, "loss does not depend on any variable requiring gradients");
  grad_buf(loss)[0] = 1.0;
  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.has_grad && n.backprop) n.backprop();
  }
}

Var Graph::add(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  check(ta.same_shape(tb), "add: shape mismatch " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  Tensor out = ta;
  axpy(1.0, tb.data(), out.data(), out.size());
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a, b}, [this, self, a, b] {
    const Tensor& g = nodes_[self].grad;
    if (node(a).requires_grad) axpy(1.0, g.data(), grad_buf(a).data(), g.size());
    if (node(b).requires_grad) axpy(1.0, g.data(), grad_buf(b).data(), g.size());
  });
}

Var Graph::sub(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  check(ta.same_shape(tb), "sub: shape mismatch " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  Tensor out = ta;
  axpy(-1.0, tb.data(), out.data(), out.size());
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a, b}, [this, self, a, b] {
    const Tensor& g = nodes_[self].grad;
    if (node(a).requires_grad) axpy(1.0, g.data(), grad_buf(a).data(), g.size());
    if (node(b).requires_grad) axpy(-1.0, g.data(), grad_buf(b).data(), g.size());
  });
}

Var Graph::mul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  check(ta.same_shape(tb), "mul: shape mismatch " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a, b}, [this, self, a, b] {
    const Tensor& g = nodes_[self].grad;
    const Tensor& va = nodes_[a.id].value;
    const Tensor& vb = nodes_[b.id].value;
    if (node(a).requires_grad) {
      Tensor& ga = grad_buf(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (node(b).requires_grad) {
      Tensor& gb = grad_buf(b);
      for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var Graph::div(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  check(ta.same_shape(tb), "div: shape mismatch " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] / tb[i];
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a, b}, [this, self, a, b] {
    const Tensor& g = nodes_[self].grad;
    const Tensor& y = nodes_[self].value;
    const Tensor& vb = nodes_[b.id].value;
    if (node(a).requires_grad) {
      Tensor& ga = grad_buf(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / vb[i];
    }
    if (node(b).requires_grad) {
      Tensor& gb = grad_buf(b);
      for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * y[i] / vb[i];
    }
  });
}

Var Graph::scale(Var a, double s) {
  const Tensor& ta = node(a).value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = s * ta[i];
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a}, [this, self, a, s] {
    const Tensor& g = nodes_[self].grad;
    if (node(a).requires_grad) axpy(s, g.data(), grad_buf(a).data(), g.size());
  });
}

Var Graph::add_scalar(Var a, double s) {
  const Tensor& ta = node(a).value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] + s;
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a}, [this, self, a] {
    const Tensor& g = nodes_[self].grad;
    if (node(a).requires_grad) axpy(1.0, g.data(), grad_buf(a).data(), g.size());
  });
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  check(ta.ndim() == 2 && tb.ndim() == 2 && ta.dim(1) == tb.dim(0),
        "matmul: shape mismatch " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
  Tensor out = matmul_nn(ta, tb);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a, b}, [this, self, a, b] {
    const Tensor& g = nodes_[self].grad;
    const Tensor& va = nodes_[a.id].value;
    const Tensor& vb = nodes_[b.id].value;
    const int64_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    if (node(a).requires_grad) mm_nt_acc(grad_buf(a).data(), g.data(), vb.data(), m, n, k);
    if (node(b).requires_grad) mm_tn_acc(grad_buf(b).data(), va.data(), g.data(), m, k, n);
  });
}

Var Graph::transpose(Var a) {
  Tensor out = transpose2(node(a).value);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a}, [this, self, a] {
    if (!node(a).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    Tensor& ga = grad_buf(a);
    for (int64_t i = 0; i < g.dim(0); ++i)
      for (int64_t j = 0; j < g.dim(1); ++j) ga.at2(j, i) += g.at2(i, j);
  });
}

Var Graph::add_rowvec(Var a, Var v) {
  const Tensor& ta = node(a).value;
  const Tensor& tv = node(v).value;
  check(ta.ndim() == 2 && tv.ndim() == 1 && ta.dim(1) == tv.dim(0),
        "add_rowvec: shape mismatch " + shape_str(ta.shape()) + " + " + shape_str(tv.shape()));
  Tensor out = ta;
  for (int64_t i = 0; i < ta.dim(0); ++i) axpy(1.0, tv.data(), out.data() + i * ta.dim(1), ta.dim(1));
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {a, v}, [this, self, a, v] {
    const Tensor& g = nodes_[self].grad;
    if (node(a).requires_grad) axpy(1.0, g.data(), grad_buf(a).data(), g.size());
    if (node(v).requires_grad) {
      Tensor& gv = grad_buf(v);
      const int64_t rows = g.dim(0), cols = g.dim(1);
      for (int64_t i = 0; i < rows; ++i) axpy(1.0, g.data() + i * cols, gv.data(), cols);
    }
  });
}

Var Graph::conv2d(Var x, Var w, Var b, int pad) {
  const Tensor& tx = node(x).value;
  const Tensor& tw = node(w).value;
  check(tx.ndim() == 4 && tw.ndim() == 4, "conv2d expects 4-d input and weights");
  check(tx.dim(1) == tw.dim(1), "conv2d: channel mismatch " + shape_str(tx.shape()) + " vs " +
                                    shape_str(tw.shape()));
  check(tw.dim(2) == tw.dim(3) && tw.dim(2) >= 1, "conv2d: kernel must be square");
  check(pad >= 0, "conv2d: negative padding");
  const int64_t B = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  const int64_t Co = tw.dim(0), k = tw.dim(2);
  const int64_t Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1;
  check(Ho >= 1 && Wo >= 1, "conv2d: kernel larger than padded input");
  const int64_t K = C * k * k, P = Ho * Wo;

  if (b.valid()) {
    const Tensor& tb = node(b).value;
    check(tb.ndim() == 1 && tb.dim(0) == Co, "conv2d: bias shape mismatch");
  }

  Tensor out({B, Co, Ho, Wo});
  std::vector<double> cols(static_cast<size_t>(K * P));
  for (int64_t bi = 0; bi < B; ++bi) {
    im2col(tx.data() + bi * C * H * W, C, H, W, k, pad, Ho, Wo, cols.data());
    mm_nn_acc(out.data() + bi * Co * P, tw.data(), cols.data(), Co, K, P);
    if (b.valid()) {
      const Tensor& tb = node(b).value;
      for (int64_t co = 0; co < Co; ++co) {
        double* o = out.data() + (bi * Co + co) * P;
        for (int64_t p = 0; p < P; ++p) o[p] += tb[co];
      }
    }
  }

  const int32_t self = static_cast<int32_t>(nodes_.size());
  std::vector<Var> parents = b.valid() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make(std::move(out), std::move(parents), [this, self, x, w, b, pad, B, C, H, W, Co, k, Ho, Wo, K, P] {
    const Tensor& g = nodes_[self].grad;
    const Tensor& tx = nodes_[x.id].value;
    const Tensor& tw = nodes_[w.id].value;
    const bool need_x = node(x).requires_grad;
    const bool need_w = node(w).requires_grad;
    std::vector<double> cols(need_w ? static_cast<size_t>(K * P) : 0);
    std::vector<double> gcols(need_x ? static_cast<size_t>(K * P) : 0);
    for (int64_t bi = 0; bi < B; ++bi) {
      const double* gb = g.data() + bi * Co * P;
      if (need_w) {
        im2col(tx.data() + bi * C * H * W, C, H, W, k, pad, Ho, Wo, cols.data());
        mm_nt_acc(grad_buf(w).data(), gb, cols.data(), Co, P, K);
      }
      if (need_x) {
        std::memset(gcols.data(), 0, gcols.size() * sizeof(double));
        mm_tn_acc(gcols.data(), tw.data(), gb, Co, K, P);
        col2im_acc(gcols.data(), C, H, W, k, pad, Ho, Wo, grad_buf(x).data() + bi * C * H * W);
      }
    }
    if (b.valid() && node(b).requires_grad) {
      Tensor& gbias = grad_buf(b);
      for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t co = 0; co < Co; ++co) {
          const double* go = g.data() + (bi * Co + co) * P;
          double acc = 0.0;
          for (int64_t p = 0; p < P; ++p) acc += go[p];
          gbias[co] += acc;
        }
    }
  });
}

Var Graph::upsample2(Var x) {
  const Tensor& tx = node(x).value;
  check(tx.ndim() == 4, "upsample2 expects a 4-d tensor");
  const int64_t B = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  Tensor out({B, C, 2 * H, 2 * W});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = tx.data() + bc * H * W;
    double* dst = out.data() + bc * 4 * H * W;
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        const double v = src[i * W + j];
        double* d = dst + 2 * i * 2 * W + 2 * j;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x, B, C, H, W] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    Tensor& gx = grad_buf(x);
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const double* gs = g.data() + bc * 4 * H * W;
      double* gd = gx.data() + bc * H * W;
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          const double* s = gs + 2 * i * 2 * W + 2 * j;
          gd[i * W + j] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
        }
    }
  });
}

Var Graph::avgpool2(Var x) {
  const Tensor& tx = node(x).value;
  check(tx.ndim() == 4 && tx.dim(2) % 2 == 0 && tx.dim(3) % 2 == 0,
        "avgpool2 expects a 4-d tensor with even spatial dims");
  const int64_t B = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  const int64_t Ho = H / 2, Wo = W / 2;
  Tensor out({B, C, Ho, Wo});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = tx.data() + bc * H * W;
    double* dst = out.data() + bc * Ho * Wo;
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) {
        const double* s = src + 2 * i * W + 2 * j;
        dst[i * Wo + j] = 0.25 * (s[0] + s[1] + s[W] + s[W + 1]);
      }
  }
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x, B, C, H, W, Ho, Wo] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    Tensor& gx = grad_buf(x);
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const double* gs = g.data() + bc * Ho * Wo;
      double* gd = gx.data() + bc * H * W;
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          const double q = 0.25 * gs[i * Wo + j];
          double* d = gd + 2 * i * W + 2 * j;
          d[0] += q;
          d[1] += q;
          d[W] += q;
          d[W + 1] += q;
        }
    }
  });
}

Var Graph::instance_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& tx = node(x).value;
  check(tx.ndim() == 4, "instance_norm expects a 4-d tensor");
  const int64_t B = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
  const Tensor& tg = node(gain).value;
  const Tensor& tb = node(bias).value;
  check(tg.ndim() == 1 && tg.dim(0) == C && tb.ndim() == 1 && tb.dim(0) == C,
        "instance_norm: affine shape mismatch");

  Tensor out(tx.shape());
  Tensor xhat(tx.shape());
  std::vector<double> inv_std(static_cast<size_t>(B * C));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const double* src = tx.data() + (b * C + c) * HW;
      double mu = 0.0;
      for (int64_t i = 0; i < HW; ++i) mu += src[i];
      mu /= static_cast<double>(HW);
      double var = 0.0;
      for (int64_t i = 0; i < HW; ++i) {
        const double d = src[i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(HW);
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(b * C + c)] = inv;
      double* xh = xhat.data() + (b * C + c) * HW;
      double* o = out.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        xh[i] = (src[i] - mu) * inv;
        o[i] = tg[c] * xh[i] + tb[c];
      }
    }

  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x, gain, bias},
              [this, self, x, gain, bias, B, C, HW, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                const Tensor& g = nodes_[self].grad;
                const Tensor& tg = nodes_[gain.id].value;
                const bool need_x = node(x).requires_grad;
                const bool need_g = node(gain).requires_grad;
                const bool need_b = node(bias).requires_grad;
                for (int64_t b = 0; b < B; ++b)
                  for (int64_t c = 0; c < C; ++c) {
                    const double* go = g.data() + (b * C + c) * HW;
                    const double* xh = xhat.data() + (b * C + c) * HW;
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int64_t i = 0; i < HW; ++i) {
                      sum_g += go[i];
                      sum_gx += go[i] * xh[i];
                    }
                    if (need_b) grad_buf(bias)[c] += sum_g;
                    if (need_g) grad_buf(gain)[c] += sum_gx;
                    if (need_x) {
                      const double inv = inv_std[static_cast<size_t>(b * C + c)];
                      const double gscale = tg[c] * inv;
                      const double mg = sum_g / static_cast<double>(HW);
                      const double mgx = sum_gx / static_cast<double>(HW);
                      double* gx = grad_buf(x).data() + (b * C + c) * HW;
                      for (int64_t i = 0; i < HW; ++i) gx[i] += gscale * (go[i] - mg - xh[i] * mgx);
                    }
                  }
              });
}

Var Graph::leaky_relu(Var x, double alpha) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = tx[i] > 0.0 ? tx[i] : alpha * tx[i];
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x, alpha] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& tx = nodes_[x.id].value;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (tx[i] > 0.0 ? 1.0 : alpha);
  });
}

Var Graph::tanh(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(tx[i]);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& y = nodes_[self].value;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Graph::sigmoid(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(tx[i]);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& y = nodes_[self].value;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Graph::softplus(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(tx[i]);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& tx = nodes_[x.id].value;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * stable_sigmoid(tx[i]);
  });
}

Var Graph::exp(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(tx[i]);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& y = nodes_[self].value;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
  });
}

Var Graph::log(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(tx[i]);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& tx = nodes_[x.id].value;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] / tx[i];
  });
}

Var Graph::sqrt(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(tx[i]);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& y = nodes_[self].value;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] / (2.0 * y[i]);
  });
}

Var Graph::sum(Var x) {
  const Tensor& tx = node(x).value;
  Tensor out = Tensor::scalar(tx.sum());
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const double g = nodes_[self].grad[0];
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var Graph::mean(Var x) {
  const Tensor& tx = node(x).value;
  check(tx.size() > 0, "mean of empty tensor");
  Tensor out = Tensor::scalar(tx.sum() / static_cast<double>(tx.size()));
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    Tensor& gx = grad_buf(x);
    const double g = nodes_[self].grad[0] / static_cast<double>(gx.size());
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var Graph::row_sum(Var x) {
  const Tensor& tx = node(x).value;
  check(tx.ndim() == 2, "row_sum expects a 2-d tensor");
  const int64_t M = tx.dim(0), N = tx.dim(1);
  Tensor out({M});
  for (int64_t i = 0; i < M; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < N; ++j) acc += tx.at2(i, j);
    out[i] = acc;
  }
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x, M, N] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < M; ++i)
      for (int64_t j = 0; j < N; ++j) gx.at2(i, j) += g[i];
  });
}

Var Graph::reshape(Var x, Shape s) {
  Tensor out = node(x).value.reshaped(std::move(s));
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    axpy(1.0, g.data(), grad_buf(x).data(), g.size());
  });
}

Var Graph::select_row(Var x, int64_t i) {
  const Tensor& tx = node(x).value;
  check(tx.ndim() >= 1, "select_row expects at least 1-d");
  check(i >= 0 && i < tx.dim(0), "select_row: index out of range");
  Shape rest(tx.shape().begin() + 1, tx.shape().end());
  if (rest.empty()) rest = {1};
  const int64_t stride = shape_numel(rest);
  Tensor out(rest);
  std::memcpy(out.data(), tx.data() + i * stride, static_cast<size_t>(stride) * sizeof(double));
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x, i, stride] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    axpy(1.0, g.data(), grad_buf(x).data() + i * stride, stride);
  });
}

Var Graph::slice_rows(Var x, int64_t start, int64_t len) {
  const Tensor& tx = node(x).value;
  check(tx.ndim() >= 1, "slice_rows expects at least 1-d");
  check(start >= 0 && len >= 1 && start + len <= tx.dim(0), "slice_rows: range out of bounds");
  Shape s = tx.shape();
  s[0] = len;
  const int64_t stride = tx.size() / tx.dim(0);
  Tensor out(s);
  std::memcpy(out.data(), tx.data() + start * stride,
              static_cast<size_t>(len * stride) * sizeof(double));
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x, start, stride, len] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    axpy(1.0, g.data(), grad_buf(x).data() + start * stride, len * stride);
  });
}

Var Graph::concat_scalars(const std::vector<Var>& xs) {
  check(!xs.empty(), "concat_scalars: empty input");
  Tensor out({static_cast<int64_t>(xs.size())});
  for (size_t i = 0; i < xs.size(); ++i) {
    const Tensor& t = node(xs[i]).value;
    check(t.size() == 1, "concat_scalars: inputs must be scalars");
    out[static_cast<int64_t>(i)] = t[0];
  }
  const int32_t self = static_cast<int32_t>(nodes_.size());
  std::vector<Var> parents = xs;
  return make(std::move(out), parents, [this, self, xs] {
    const Tensor& g = nodes_[self].grad;
    for (size_t i = 0; i < xs.size(); ++i)
      if (node(xs[i]).requires_grad) grad_buf(xs[i])[0] += g[static_cast<int64_t>(i)];
  });
}

Var Graph::softmax(Var x) {
  const Tensor& tx = node(x).value;
  check(tx.ndim() == 1, "softmax expects a 1-d tensor");
  double mx = tx[0];
  for (int64_t i = 1; i < tx.size(); ++i) mx = std::max(mx, tx[i]);
  Tensor out(tx.shape());
  double denom = 0.0;
  for (int64_t i = 0; i < tx.size(); ++i) {
    out[i] = std::exp(tx[i] - mx);
    denom += out[i];
  }
  for (int64_t i = 0; i < tx.size(); ++i) out[i] /= denom;
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {x}, [this, self, x] {
    if (!node(x).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    const Tensor& y = nodes_[self].value;
    double gy = 0.0;
    for (int64_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
    Tensor& gx = grad_buf(x);
    for (int64_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - gy);
  });
}

Var Graph::afm_reshape(Var w) {
  const Tensor& tw = node(w).value;
  check(tw.ndim() == 4, "afm_reshape expects 4-axis weights, got shape " + shape_str(tw.shape()));
  const int64_t co = tw.dim(0), ci = tw.dim(1), k = tw.dim(2);
  check(tw.dim(3) == k, "afm_reshape expects square kernels");
  Tensor out({co * k, ci * k});
  for (int64_t a = 0; a < co; ++a)
    for (int64_t b = 0; b < ci; ++b)
      for (int64_t r = 0; r < k; ++r)
        for (int64_t c = 0; c < k; ++c) out.at2(a * k + r, b * k + c) = tw.at4(a, b, r, c);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {w}, [this, self, w, co, ci, k] {
    if (!node(w).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    Tensor& gw = grad_buf(w);
    for (int64_t a = 0; a < co; ++a)
      for (int64_t b = 0; b < ci; ++b)
        for (int64_t r = 0; r < k; ++r)
          for (int64_t c = 0; c < k; ++c) gw.at4(a, b, r, c) += g.at2(a * k + r, b * k + c);
  });
}

Var Graph::afm_unreshape(Var m, int64_t c_out, int64_t c_in, int64_t k) {
  const Tensor& tm = node(m).value;
  check(tm.ndim() == 2 && tm.dim(0) == c_out * k && tm.dim(1) == c_in * k,
        "afm_unreshape: matrix shape " + shape_str(tm.shape()) + " does not match (" +
            std::to_string(c_out * k) + "," + std::to_string(c_in * k) + ")");
  Tensor out({c_out, c_in, k, k});
  for (int64_t a = 0; a < c_out; ++a)
    for (int64_t b = 0; b < c_in; ++b)
      for (int64_t r = 0; r < k; ++r)
        for (int64_t c = 0; c < k; ++c) out.at4(a, b, r, c) = tm.at2(a * k + r, b * k + c);
  const int32_t self = static_cast<int32_t>(nodes_.size());
  return make(std::move(out), {m}, [this, self, m, c_out, c_in, k] {
    if (!node(m).requires_grad) return;
    const Tensor& g = nodes_[self].grad;
    Tensor& gm = grad_buf(m);
    for (int64_t a = 0; a < c_out; ++a)
      for (int64_t b = 0; b < c_in; ++b)
        for (int64_t r = 0; r < k; ++r)
          for (int64_t c = 0; c < k; ++c) gm.at2(a * k + r, b * k + c) += g.at4(a, b, r, c);
  });
}

}  // namespace conpro
