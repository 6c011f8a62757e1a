#include "dgsr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace dgsr {

namespace {

thread_local bool g_grad_enabled = true;

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

template <typename Scalar>
using Array = typename Tensor<Scalar>::Array;

template <typename Scalar>
using Matrix = typename Tensor<Scalar>::Matrix;

// Builds the result node. The backward closure is attached only when some
// input needs a gradient and recording is on.
template <typename Scalar, typename Fn>
Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<const Var<Scalar>*> inputs,
                   Fn&& fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto* in : inputs) any = any || (in->defined() && in->requires_grad());
    if (any) {
      node->requires_grad = true;
      for (const auto* in : inputs)
        if (in->defined() && in->requires_grad()) node->parents.push_back(in->node());
      node->backward = std::forward<Fn>(fn);
    }
  }
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
bool wants(const NodePtr<Scalar>& n) {
  return n && n->requires_grad;
}

template <typename Scalar>
void check_same(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
}

// y = f(x) element-wise; f and df act on whole arrays, df(x, y) = dy/dx.
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const Var<Scalar>& x, F f, DF df) {
  Tensor<Scalar> out(x.shape(), f(x.value().data()));
  auto xn = x.node();
  auto yv = std::make_shared<Array<Scalar>>(out.data());
  return record(std::move(out), {&x}, [xn, yv, df](const Tensor<Scalar>& g) {
    xn->accumulate(g.data() * df(xn->value.data(), *yv));
  });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
void backward(const Var<Scalar>& loss) {
  if (loss.value().size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Array<Scalar>::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(node->grad);
      // Interior gradients are not needed again; release them.
      node->grad = Tensor<Scalar>();
    }
  }
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.value().data() + b.value().data());
  auto an = a.node(), bn = b.node();
  return record(std::move(out), {&a, &b}, [an, bn](const Tensor<Scalar>& g) {
    if (wants(an)) an->accumulate(g.data());
    if (wants(bn)) bn->accumulate(g.data());
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same(a, b, "sub");
  Tensor<Scalar> out(a.shape(), a.value().data() - b.value().data());
  auto an = a.node(), bn = b.node();
  return record(std::move(out), {&a, &b}, [an, bn](const Tensor<Scalar>& g) {
    if (wants(an)) an->accumulate(g.data());
    if (wants(bn)) bn->accumulate(-g.data());
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.value().data() * b.value().data());
  auto an = a.node(), bn = b.node();
  return record(std::move(out), {&a, &b}, [an, bn](const Tensor<Scalar>& g) {
    if (wants(an)) an->accumulate(g.data() * bn->value.data());
    if (wants(bn)) bn->accumulate(g.data() * an->value.data());
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, double s) {
  const Scalar k = Scalar(s);
  Tensor<Scalar> out(a.shape(), a.value().data() * k);
  auto an = a.node();
  return record(std::move(out), {&a}, [an, k](const Tensor<Scalar>& g) {
    an->accumulate(g.data() * k);
  });
}

template <typename Scalar>
Var<Scalar> axpby(double a, const Var<Scalar>& x, double b, const Var<Scalar>& y) {
  check_same(x, y, "axpby");
  const Scalar ka = Scalar(a), kb = Scalar(b);
  Tensor<Scalar> out(x.shape(), ka * x.value().data() + kb * y.value().data());
  auto xn = x.node(), yn = y.node();
  return record(std::move(out), {&x, &y}, [xn, yn, ka, kb](const Tensor<Scalar>& g) {
    if (wants(xn)) xn->accumulate(g.data() * ka);
    if (wants(yn)) yn->accumulate(g.data() * kb);
  });
}

template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, double x_coef, const Tensor<Scalar>& offset) {
  if (x.shape() != offset.shape())
    throw std::invalid_argument("affine: shape mismatch " + x.shape().str() + " vs " +
                                offset.shape().str());
  const Scalar k = Scalar(x_coef);
  Tensor<Scalar> out(x.shape(), k * x.value().data() + offset.data());
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn, k](const Tensor<Scalar>& g) {
    xn->accumulate(g.data() * k);
  });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  using A = Array<Scalar>;
  return unary(
      x, [](const A& v) -> A { return v.square(); },
      [](const A& v, const A&) -> A { return Scalar(2) * v; });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  using A = Array<Scalar>;
  return unary(
      x, [](const A& v) -> A { return v.exp(); }, [](const A&, const A& y) -> A { return y; });
}

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& x) {
  using A = Array<Scalar>;
  return unary(
      x, [](const A& v) -> A { return v / (Scalar(1) + (-v).exp()); },
      [](const A& v, const A&) -> A {
        A s = Scalar(1) / (Scalar(1) + (-v).exp());
        return s * (Scalar(1) + v * (Scalar(1) - s));
      });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  using A = Array<Scalar>;
  return unary(
      x, [](const A& v) -> A { return Scalar(1) / (Scalar(1) + (-v).exp()); },
      [](const A&, const A& y) -> A { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  using A = Array<Scalar>;
  return unary(
      x, [](const A& v) -> A { return v.tanh(); },
      [](const A&, const A& y) -> A { return Scalar(1) - y.square(); });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, double slope) {
  using A = Array<Scalar>;
  const Scalar k = Scalar(slope);
  return unary(
      x, [k](const A& v) -> A { return (v > Scalar(0)).select(v, k * v); },
      [k](const A& v, const A&) -> A {
        return (v > Scalar(0)).select(A::Ones(v.size()), A::Constant(v.size(), k));
      });
}

template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& x, double lo, double hi) {
  using A = Array<Scalar>;
  const Scalar l = Scalar(lo), h = Scalar(hi);
  return unary(
      x, [l, h](const A& v) -> A { return v.max(l).min(h); },
      [l, h](const A& v, const A&) -> A {
        return (v >= l && v <= h).select(A::Ones(v.size()), A::Zero(v.size()));
      });
}

// ---------------------------------------------------------------------------
// Convolution via an im2col matrix laid out (output pixels) x (Cin * k * k).

namespace {

template <typename Scalar>
void im2col(const Scalar* img, int channels, int h, int w, int k, int stride, int pad, int oh,
            int ow, Matrix<Scalar>& col) {
  col.resize(Eigen::Index(oh) * ow, Eigen::Index(channels) * k * k);
  for (int c = 0; c < channels; ++c) {
    const Scalar* plane = img + std::ptrdiff_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = col.data() + ((Eigen::Index(c) * k + ky) * k + kx) * col.rows();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          Scalar* row = dst + std::ptrdiff_t(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + ow, Scalar(0));
            continue;
          }
          const Scalar* src = plane + std::ptrdiff_t(iy) * w;
          if (stride == 1) {
            const int x0 = kx - pad;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = x0 + ox;
              row[ox] = (ix >= 0 && ix < w) ? src[ix] : Scalar(0);
            }
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              row[ox] = (ix >= 0 && ix < w) ? src[ix] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Matrix<Scalar>& col, int channels, int h, int w, int k, int stride, int pad,
            int oh, int ow, Scalar* img) {
  for (int c = 0; c < channels; ++c) {
    Scalar* plane = img + std::ptrdiff_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = col.data() + ((Eigen::Index(c) * k + ky) * k + kx) * col.rows();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const Scalar* row = src + std::ptrdiff_t(oy) * ow;
          Scalar* dst = plane + std::ptrdiff_t(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   int stride, int padding) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w)
    throw std::invalid_argument("conv2d: weight " + ws.str() + " does not fit input " + xs.str());
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const int k = ws.h, cout = ws.n;
  const int oh = (xs.h + 2 * padding - k) / stride + 1;
  const int ow = (xs.w + 2 * padding - k) / stride + 1;
  if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: input " + xs.str() + " too small");
  if (bias.defined() && bias.value().size() != cout)
    throw std::invalid_argument("conv2d: bias size mismatch");

  const bool pointwise = (k == 1 && stride == 1 && padding == 0);
  const Eigen::Index ckk = Eigen::Index(xs.c) * k * k;
  Tensor<Scalar> out({xs.n, cout, oh, ow});
  Eigen::Map<const Matrix<Scalar>> wt(weight.value().ptr(), ckk, cout);
  Matrix<Scalar> col;
  for (int n = 0; n < xs.n; ++n) {
    auto o = out.pixels(n);
    if (pointwise) {
      o.noalias() = x.value().pixels(n) * wt;
    } else {
      im2col(x.value().image(n), xs.c, xs.h, xs.w, k, stride, padding, oh, ow, col);
      o.noalias() = col * wt;
    }
    if (bias.defined())
      o.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
          bias.value().ptr(), cout);
  }

  auto xn = x.node(), wn = weight.node(), bn = bias.node();
  return record(
      std::move(out), {&x, &weight, &bias},
      [xn, wn, bn, xs, k, cout, oh, ow, stride, padding, ckk, pointwise](
          const Tensor<Scalar>& g) {
        Eigen::Map<const Matrix<Scalar>> wt(wn->value.ptr(), ckk, cout);
        Matrix<Scalar> col, dcol;
        const bool need_x = wants(xn), need_w = wants(wn), need_b = wants(bn);
        Eigen::Map<Matrix<Scalar>> dw(need_w ? wn->grad_buffer().ptr() : nullptr,
                                      need_w ? ckk : 0, need_w ? cout : 0);
        for (int n = 0; n < xs.n; ++n) {
          auto go = g.pixels(n);
          if (need_b) {
            Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> db(bn->grad_buffer().ptr(), cout);
            db += go.colwise().sum();
          }
          if (pointwise) {
            if (need_w) dw.noalias() += xn->value.pixels(n).transpose() * go;
            if (need_x) xn->grad_buffer().pixels(n).noalias() += go * wt.transpose();
          } else {
            if (need_w) {
              im2col(xn->value.image(n), xs.c, xs.h, xs.w, k, stride, padding, oh, ow, col);
              dw.noalias() += col.transpose() * go;
            }
            if (need_x) {
              dcol.noalias() = go * wt.transpose();
              col2im(dcol, xs.c, xs.h, xs.w, k, stride, padding, oh, ow,
                     xn->grad_buffer().image(n));
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> add_channelwise(const Var<Scalar>& x, const Var<Scalar>& e) {
  const Shape xs = x.shape(), es = e.shape();
  if (es.c != xs.c || es.h != 1 || es.w != 1 || (es.n != xs.n && es.n != 1))
    throw std::invalid_argument("add_channelwise: " + es.str() + " does not broadcast to " +
                                xs.str());
  Tensor<Scalar> out = x.value();
  const auto plane = xs.plane();
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const Scalar v = e.value()(es.n == 1 ? 0 : n, c, 0, 0);
      out.data().segment((std::ptrdiff_t(n) * xs.c + c) * plane, plane) += v;
    }
  auto xn = x.node(), en = e.node();
  return record(std::move(out), {&x, &e}, [xn, en, xs, es, plane](const Tensor<Scalar>& g) {
    if (wants(xn)) xn->accumulate(g.data());
    if (wants(en)) {
      auto& eg = en->grad_buffer();
      for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
          eg(es.n == 1 ? 0 : n, c, 0, 0) +=
              g.data().segment((std::ptrdiff_t(n) * xs.c + c) * plane, plane).sum();
    }
  });
}

template <typename Scalar>
Var<Scalar> group_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       int groups, double eps) {
  const Shape xs = x.shape();
  if (groups < 1 || xs.c % groups != 0)
    throw std::invalid_argument("group_norm: " + std::to_string(xs.c) +
                                " channels not divisible into " + std::to_string(groups));
  if (gamma.value().size() != xs.c || beta.value().size() != xs.c)
    throw std::invalid_argument("group_norm: affine parameter size mismatch");
  const int cpg = xs.c / groups;
  const std::ptrdiff_t plane = xs.plane(), gsize = plane * cpg;

  auto xhat = std::make_shared<Array<Scalar>>(xs.size());
  auto inv_std = std::make_shared<std::vector<Scalar>>(std::size_t(xs.n) * groups);
  Tensor<Scalar> out(xs);
  for (int n = 0; n < xs.n; ++n)
    for (int gi = 0; gi < groups; ++gi) {
      const std::ptrdiff_t off = (std::ptrdiff_t(n) * groups + gi) * gsize;
      auto seg = x.value().data().segment(off, gsize);
      const Scalar mu = seg.mean();
      const Scalar var = (seg - mu).square().mean();
      const Scalar is = Scalar(1) / std::sqrt(var + Scalar(eps));
      (*inv_std)[std::size_t(n) * groups + gi] = is;
      xhat->segment(off, gsize) = (seg - mu) * is;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = gi * cpg + cc;
        const std::ptrdiff_t co = off + cc * plane;
        out.data().segment(co, plane) =
            xhat->segment(co, plane) * gamma.value().data()[c] + beta.value().data()[c];
      }
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return record(std::move(out), {&x, &gamma, &beta},
                [xn, gn, bn, xs, groups, cpg, plane, gsize, xhat, inv_std](
                    const Tensor<Scalar>& g) {
                  Array<Scalar> dxhat(gsize);
                  for (int n = 0; n < xs.n; ++n)
                    for (int gi = 0; gi < groups; ++gi) {
                      const std::ptrdiff_t off = (std::ptrdiff_t(n) * groups + gi) * gsize;
                      for (int cc = 0; cc < cpg; ++cc) {
                        const int c = gi * cpg + cc;
                        const std::ptrdiff_t co = off + cc * plane;
                        auto gseg = g.data().segment(co, plane);
                        if (wants(gn))
                          gn->grad_buffer().data()[c] +=
                              (gseg * xhat->segment(co, plane)).sum();
                        if (wants(bn)) bn->grad_buffer().data()[c] += gseg.sum();
                        dxhat.segment(cc * plane, plane) = gseg * gn->value.data()[c];
                      }
                      if (wants(xn)) {
                        auto xh = xhat->segment(off, gsize);
                        const Scalar m1 = dxhat.mean();
                        const Scalar m2 = (dxhat * xh).mean();
                        xn->grad_buffer().data().segment(off, gsize) +=
                            (dxhat - m1 - xh * m2) * (*inv_std)[std::size_t(n) * groups + gi];
                      }
                    }
                });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape as = a.shape(), bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
    throw std::invalid_argument("concat_channels: " + as.str() + " vs " + bs.str());
  Tensor<Scalar> out({as.n, as.c + bs.c, as.h, as.w});
  const auto na = as.image_size(), nb = bs.image_size();
  for (int n = 0; n < as.n; ++n) {
    out.data().segment(n * (na + nb), na) = a.value().data().segment(n * na, na);
    out.data().segment(n * (na + nb) + na, nb) = b.value().data().segment(n * nb, nb);
  }
  auto an = a.node(), bn = b.node();
  return record(std::move(out), {&a, &b}, [an, bn, na, nb, as](const Tensor<Scalar>& g) {
    for (int n = 0; n < as.n; ++n) {
      if (wants(an))
        an->grad_buffer().data().segment(n * na, na) += g.data().segment(n * (na + nb), na);
      if (wants(bn))
        bn->grad_buffer().data().segment(n * nb, nb) += g.data().segment(n * (na + nb) + na, nb);
    }
  });
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, int first, int count) {
  const Shape xs = x.shape();
  if (first < 0 || count < 1 || first + count > xs.c)
    throw std::invalid_argument("slice_channels: range out of bounds for " + xs.str());
  Tensor<Scalar> out({xs.n, count, xs.h, xs.w});
  const auto plane = xs.plane(), ni = xs.image_size(), no = plane * count;
  for (int n = 0; n < xs.n; ++n)
    out.data().segment(n * no, no) = x.value().data().segment(n * ni + first * plane, no);
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn, xs, first, plane, ni, no](const Tensor<Scalar>& g) {
    for (int n = 0; n < xs.n; ++n)
      xn->grad_buffer().data().segment(n * ni + first * plane, no) += g.data().segment(n * no, no);
  });
}

template <typename Scalar>
Var<Scalar> ordered_concat(const Var<Scalar>& a, const Var<Scalar>& b,
                           const std::vector<std::uint8_t>& a_first) {
  check_same(a, b, "ordered_concat");
  const Shape s = a.shape();
  if (a_first.size() != std::size_t(s.n))
    throw std::invalid_argument("ordered_concat: order flags do not match batch size");
  Tensor<Scalar> out({s.n, 2 * s.c, s.h, s.w});
  const auto ni = s.image_size();
  for (int n = 0; n < s.n; ++n) {
    const auto& first = a_first[n] ? a.value() : b.value();
    const auto& second = a_first[n] ? b.value() : a.value();
    out.data().segment(2 * n * ni, ni) = first.data().segment(n * ni, ni);
    out.data().segment(2 * n * ni + ni, ni) = second.data().segment(n * ni, ni);
  }
  auto an = a.node(), bn = b.node();
  return record(std::move(out), {&a, &b}, [an, bn, a_first, s, ni](const Tensor<Scalar>& g) {
    for (int n = 0; n < s.n; ++n) {
      const std::ptrdiff_t a_off = 2 * n * ni + (a_first[n] ? 0 : ni);
      const std::ptrdiff_t b_off = 2 * n * ni + (a_first[n] ? ni : 0);
      if (wants(an)) an->grad_buffer().data().segment(n * ni, ni) += g.data().segment(a_off, ni);
      if (wants(bn)) bn->grad_buffer().data().segment(n * ni, ni) += g.data().segment(b_off, ni);
    }
  });
}

template <typename Scalar>
Var<Scalar> avg_pool2(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  if (xs.h % 2 || xs.w % 2) throw std::invalid_argument("avg_pool2: odd spatial size " + xs.str());
  const int oh = xs.h / 2, ow = xs.w / 2;
  Tensor<Scalar> out({xs.n, xs.c, oh, ow});
  const int planes = xs.n * xs.c;
  for (int p = 0; p < planes; ++p) {
    const Scalar* src = x.value().ptr() + std::ptrdiff_t(p) * xs.h * xs.w;
    Scalar* dst = out.ptr() + std::ptrdiff_t(p) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        const Scalar* s0 = src + (2 * y) * xs.w + 2 * xx;
        dst[y * ow + xx] = Scalar(0.25) * (s0[0] + s0[1] + s0[xs.w] + s0[xs.w + 1]);
      }
  }
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn, xs, oh, ow, planes](const Tensor<Scalar>& g) {
    auto& gx = xn->grad_buffer();
    for (int p = 0; p < planes; ++p) {
      Scalar* dst = gx.ptr() + std::ptrdiff_t(p) * xs.h * xs.w;
      const Scalar* src = g.ptr() + std::ptrdiff_t(p) * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const Scalar v = Scalar(0.25) * src[y * ow + xx];
          Scalar* d0 = dst + (2 * y) * xs.w + 2 * xx;
          d0[0] += v;
          d0[1] += v;
          d0[xs.w] += v;
          d0[xs.w + 1] += v;
        }
    }
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  const int oh = xs.h * 2, ow = xs.w * 2;
  Tensor<Scalar> out({xs.n, xs.c, oh, ow});
  const int planes = xs.n * xs.c;
  for (int p = 0; p < planes; ++p) {
    const Scalar* src = x.value().ptr() + std::ptrdiff_t(p) * xs.h * xs.w;
    Scalar* dst = out.ptr() + std::ptrdiff_t(p) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[(y / 2) * xs.w + xx / 2];
  }
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn, xs, oh, ow, planes](const Tensor<Scalar>& g) {
    auto& gx = xn->grad_buffer();
    for (int p = 0; p < planes; ++p) {
      Scalar* dst = gx.ptr() + std::ptrdiff_t(p) * xs.h * xs.w;
      const Scalar* src = g.ptr() + std::ptrdiff_t(p) * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) dst[(y / 2) * xs.w + xx / 2] += src[y * ow + xx];
    }
  });
}

template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  const Shape xs = x.shape();
  const auto plane = xs.plane();
  Tensor<Scalar> out({xs.n, xs.c, 1, 1});
  for (int p = 0; p < xs.n * xs.c; ++p) out.data()[p] = x.value().data().segment(p * plane, plane).mean();
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn, xs, plane](const Tensor<Scalar>& g) {
    auto& gx = xn->grad_buffer();
    for (int p = 0; p < xs.n * xs.c; ++p)
      gx.data().segment(p * plane, plane) += g.data()[p] / Scalar(plane);
  });
}

template <typename Scalar>
Var<Scalar> spatial_attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v) {
  check_same(q, k, "spatial_attention");
  check_same(q, v, "spatial_attention");
  const Shape s = q.shape();
  const Scalar sc = Scalar(1) / std::sqrt(Scalar(s.c));
  const auto p = s.plane();
  auto probs = std::make_shared<std::vector<Matrix<Scalar>>>(s.n);
  Tensor<Scalar> out(s);
  for (int n = 0; n < s.n; ++n) {
    Matrix<Scalar> logits = (q.value().pixels(n) * k.value().pixels(n).transpose()) * sc;
    for (Eigen::Index r = 0; r < p; ++r) {
      auto row = logits.row(r);
      row.array() = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    out.pixels(n).noalias() = logits * v.value().pixels(n);
    (*probs)[n] = std::move(logits);
  }
  auto qn = q.node(), kn = k.node(), vn = v.node();
  return record(std::move(out), {&q, &k, &v}, [qn, kn, vn, probs, s, sc](const Tensor<Scalar>& g) {
    for (int n = 0; n < s.n; ++n) {
      const auto& a = (*probs)[n];
      auto go = g.pixels(n);
      if (wants(vn)) vn->grad_buffer().pixels(n).noalias() += a.transpose() * go;
      if (!wants(qn) && !wants(kn)) continue;
      Matrix<Scalar> da = go * vn->value.pixels(n).transpose();
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rs = (da.array() * a.array()).rowwise().sum();
      Matrix<Scalar> dl = (a.array() * (da.array().colwise() - rs.array())).matrix() * sc;
      if (wants(qn)) qn->grad_buffer().pixels(n).noalias() += dl * kn->value.pixels(n);
      if (wants(kn)) kn->grad_buffer().pixels(n).noalias() += dl.transpose() * qn->value.pixels(n);
    }
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  Tensor<Scalar> out = x.value().reshaped(shape);
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn](const Tensor<Scalar>& g) { xn->accumulate(g.data()); });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  auto out = Tensor<Scalar>::scalar(x.value().data().sum());
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn](const Tensor<Scalar>& g) {
    xn->accumulate(Array<Scalar>::Constant(xn->value.size(), g.data()[0]));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const auto count = x.value().size();
  if (count == 0) throw std::invalid_argument("mean of empty tensor");
  auto out = Tensor<Scalar>::scalar(x.value().data().mean());
  auto xn = x.node();
  return record(std::move(out), {&x}, [xn, count](const Tensor<Scalar>& g) {
    xn->accumulate(Array<Scalar>::Constant(count, g.data()[0] / Scalar(count)));
  });
}

template <typename Scalar>
Var<Scalar> mse_loss(const Var<Scalar>& a, const Var<Scalar>& b) {
  check_same(a, b, "mse_loss");
  const auto count = a.value().size();
  Array<Scalar> diff = a.value().data() - b.value().data();
  auto out = Tensor<Scalar>::scalar(diff.square().mean());
  auto an = a.node(), bn = b.node();
  auto d = std::make_shared<Array<Scalar>>(std::move(diff));
  return record(std::move(out), {&a, &b}, [an, bn, d, count](const Tensor<Scalar>& g) {
    const Scalar k = Scalar(2) * g.data()[0] / Scalar(count);
    if (wants(an)) an->accumulate(*d * k);
    if (wants(bn)) bn->accumulate(*d * -k);
  });
}

template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& prob, const std::vector<std::uint8_t>& labels,
                     double eps) {
  const auto count = prob.value().size();
  if (std::size_t(count) != labels.size())
    throw std::invalid_argument("bce_loss: prediction/label length mismatch");
  const Scalar lo = Scalar(eps), hi = Scalar(1) - Scalar(eps);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < count; ++i) {
    const Scalar p = std::clamp(prob.value().data()[i], lo, hi);
    total -= labels[i] ? std::log(p) : std::log(Scalar(1) - p);
  }
  auto out = Tensor<Scalar>::scalar(total / Scalar(count));
  auto pn = prob.node();
  return record(std::move(out), {&prob}, [pn, labels, lo, hi, count](const Tensor<Scalar>& g) {
    Array<Scalar> d(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      const Scalar raw = pn->value.data()[i];
      if (raw < lo || raw > hi) {
        d[i] = 0;
        continue;
      }
      d[i] = labels[i] ? -Scalar(1) / raw : Scalar(1) / (Scalar(1) - raw);
    }
    pn->accumulate(d * (g.data()[0] / Scalar(count)));
  });
}

#define DGSR_INSTANTIATE_AUTOGRAD(S)                                                          \
  template void backward<S>(const Var<S>&);                                                   \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                       \
  template Var<S> sub<S>(const Var<S>&, const Var<S>&);                                       \
  template Var<S> mul<S>(const Var<S>&, const Var<S>&);                                       \
  template Var<S> scale<S>(const Var<S>&, double);                                            \
  template Var<S> axpby<S>(double, const Var<S>&, double, const Var<S>&);                     \
  template Var<S> affine<S>(const Var<S>&, double, const Tensor<S>&);                         \
  template Var<S> square<S>(const Var<S>&);                                                   \
  template Var<S> exp<S>(const Var<S>&);                                                      \
  template Var<S> silu<S>(const Var<S>&);                                                     \
  template Var<S> sigmoid<S>(const Var<S>&);                                                  \
  template Var<S> tanh<S>(const Var<S>&);                                                     \
  template Var<S> leaky_relu<S>(const Var<S>&, double);                                       \
  template Var<S> clamp<S>(const Var<S>&, double, double);                                    \
  template Var<S> conv2d<S>(const Var<S>&, const Var<S>&, const Var<S>&, int, int);           \
  template Var<S> add_channelwise<S>(const Var<S>&, const Var<S>&);                           \
  template Var<S> group_norm<S>(const Var<S>&, const Var<S>&, const Var<S>&, int, double);    \
  template Var<S> concat_channels<S>(const Var<S>&, const Var<S>&);                           \
  template Var<S> slice_channels<S>(const Var<S>&, int, int);                                 \
  template Var<S> ordered_concat<S>(const Var<S>&, const Var<S>&,                             \
                                    const std::vector<std::uint8_t>&);                        \
  template Var<S> avg_pool2<S>(const Var<S>&);                                                \
  template Var<S> upsample_nearest2<S>(const Var<S>&);                                        \
  template Var<S> global_avg_pool<S>(const Var<S>&);                                          \
  template Var<S> spatial_attention<S>(const Var<S>&, const Var<S>&, const Var<S>&);          \
  template Var<S> reshape<S>(const Var<S>&, Shape);                                           \
  template Var<S> sum<S>(const Var<S>&);                                                      \
  template Var<S> mean<S>(const Var<S>&);                                                     \
  template Var<S> mse_loss<S>(const Var<S>&, const Var<S>&);                                  \
  template Var<S> bce_loss<S>(const Var<S>&, const std::vector<std::uint8_t>&, double);

DGSR_INSTANTIATE_AUTOGRAD(float)
DGSR_INSTANTIATE_AUTOGRAD(double)

}  // namespace dgsr
