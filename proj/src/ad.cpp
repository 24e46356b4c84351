#include "braintalker/ad.hpp"

#include <cmath>

namespace bt::ad {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(std::string("ad::") + op + ": shape mismatch " + std::to_string(a.rows()) + "x" +
         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
         std::to_string(b.cols()));
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&)> backfn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backfn = std::move(backfn);
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

Var Tape::leaf(const Matrix& value, bool requires_grad) {
  return push(value, requires_grad, nullptr);
}

Matrix Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = node(id);
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss.id);
  require(ln.value.rows() == 1 && ln.value.cols() == 1, "ad::backward: loss must be 1x1");
  require(ln.requires_grad, "ad::backward: loss does not depend on any trainable leaf");
  node(loss.id).grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = node(i);
    if (n.grad.size() == 0 || !n.backfn) continue;
    n.backfn(*this);
  }
}

// --- elementwise and affine -------------------------------------------------

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a) + value(b), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, pb = b.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pa, g);
      t.accumulate(pb, g);
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a) - value(b), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, pb = b.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pa, g);
      t.accumulate(pb, -g);
    };
  }
  return out;
}

Var Tape::cmul(Var a, Var b) {
  check_same_shape(value(a), value(b), "cmul");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a).cwiseProduct(value(b)), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, pb = b.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pa, g.cwiseProduct(t.value(Var{pb})));
      t.accumulate(pb, g.cwiseProduct(t.value(Var{pa})));
    };
  }
  return out;
}

Var Tape::scale(Var a, double s) {
  const bool rg = needs_grad(a);
  Var out = push(value(a) * s, rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, s](Tape& t) {
      t.accumulate(pa, t.grad_of(self) * s);
    };
  }
  return out;
}

Var Tape::scale_by(Var a, Var s) {
  require(value(s).rows() == 1 && value(s).cols() == 1, "ad::scale_by: s must be 1x1");
  const bool rg = needs_grad(a) || needs_grad(s);
  Var out = push(value(a) * value(s)(0, 0), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, ps = s.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pa, g * t.value(Var{ps})(0, 0));
      t.accumulate(ps, Matrix::Constant(1, 1, g.cwiseProduct(t.value(Var{pa})).sum()));
    };
  }
  return out;
}

Var Tape::add_scalar(Var a, Var s) {
  require(value(s).rows() == 1 && value(s).cols() == 1, "ad::add_scalar: s must be 1x1");
  const bool rg = needs_grad(a) || needs_grad(s);
  Var out = push((value(a).array() + value(s)(0, 0)).matrix(), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, ps = s.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pa, g);
      t.accumulate(ps, Matrix::Constant(1, 1, g.sum()));
    };
  }
  return out;
}

Var Tape::add_const(Var a, const Matrix& c) {
  check_same_shape(value(a), c, "add_const");
  const bool rg = needs_grad(a);
  Var out = push(value(a) + c, rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id](Tape& t) {
      t.accumulate(pa, t.grad_of(self));
    };
  }
  return out;
}

Var Tape::leaky_relu(Var x, double negative_slope) {
  const Matrix& v = value(x);
  Matrix y = v.unaryExpr([negative_slope](double e) { return e > 0.0 ? e : negative_slope * e; });
  const bool rg = needs_grad(x);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, negative_slope](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& xv = t.value(Var{px});
      Matrix gx = g.cwiseProduct(
          xv.unaryExpr([negative_slope](double e) { return e > 0.0 ? 1.0 : negative_slope; }));
      t.accumulate(px, gx);
    };
  }
  return out;
}

Var Tape::gelu(Var x) {
  const Matrix& v = value(x);
  Matrix y = v.unaryExpr([](double e) { return 0.5 * e * (1.0 + std::erf(e * M_SQRT1_2)); });
  const bool rg = needs_grad(x);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& xv = t.value(Var{px});
      Matrix dy = xv.unaryExpr([](double e) {
        const double cdf = 0.5 * (1.0 + std::erf(e * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * e * e) / std::sqrt(2.0 * M_PI);
        return cdf + e * pdf;
      });
      t.accumulate(px, g.cwiseProduct(dy));
    };
  }
  return out;
}

Var Tape::tanh(Var x) {
  Matrix y = value(x).array().tanh();
  const bool rg = needs_grad(x);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& yv = t.value(Var{self});
      t.accumulate(px, (g.array() * (1.0 - yv.array().square())).matrix());
    };
  }
  return out;
}

Var Tape::sigmoid(Var x) {
  Matrix y = (1.0 / (1.0 + (-value(x).array()).exp())).matrix();
  const bool rg = needs_grad(x);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& yv = t.value(Var{self});
      t.accumulate(px, (g.array() * yv.array() * (1.0 - yv.array())).matrix());
    };
  }
  return out;
}

// --- linear algebra -----------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "ad::matmul: inner dimension mismatch");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a) * value(b), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, pb = b.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pa, g * t.value(Var{pb}).transpose());
      t.accumulate(pb, t.value(Var{pa}).transpose() * g);
    };
  }
  return out;
}

Var Tape::matmul_t(Var a, Var b) {
  require(value(a).cols() == value(b).cols(), "ad::matmul_t: inner dimension mismatch");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a) * value(b).transpose(), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id, pb = b.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pa, g * t.value(Var{pb}));
      t.accumulate(pb, g.transpose() * t.value(Var{pa}));
    };
  }
  return out;
}

Var Tape::transpose(Var a) {
  const bool rg = needs_grad(a);
  Var out = push(value(a).transpose(), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, pa = a.id](Tape& t) {
      t.accumulate(pa, t.grad_of(self).transpose());
    };
  }
  return out;
}

Var Tape::linear(Var x, Var weight, Var bias) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(weight);
  const Matrix& bv = value(bias);
  require(xv.cols() == wv.cols(), "ad::linear: input dim mismatch");
  require(bv.rows() == 1 && bv.cols() == wv.rows(), "ad::linear: bias must be 1 x out");
  Matrix y = xv * wv.transpose();
  y.rowwise() += bv.row(0);
  const bool rg = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, pw = weight.id, pb = bias.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(px, g * t.value(Var{pw}));
      t.accumulate(pw, g.transpose() * t.value(Var{px}));
      t.accumulate(pb, g.colwise().sum());
    };
  }
  return out;
}

// --- shape --------------------------------------------------------------------

Var Tape::slice_cols(Var x, Index start, Index count) {
  const Matrix& v = value(x);
  require(start >= 0 && start + count <= v.cols(), "ad::slice_cols: out of range");
  const bool rg = needs_grad(x);
  Var out = push(v.middleCols(start, count), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, start, count](Tape& t) {
      const Matrix& xv = t.value(Var{px});
      Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
      gx.middleCols(start, count) = t.grad_of(self);
      t.accumulate(px, gx);
    };
  }
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  require(!xs.empty(), "ad::concat_cols: empty list");
  Index rows = value(xs.front()).rows(), cols = 0;
  bool rg = false;
  for (Var v : xs) {
    require(value(v).rows() == rows, "ad::concat_cols: row count mismatch");
    cols += value(v).cols();
    rg = rg || needs_grad(v);
  }
  Matrix y(rows, cols);
  Index at = 0;
  std::vector<std::pair<int, Index>> spans;
  for (Var v : xs) {
    const Index n = value(v).cols();
    y.middleCols(at, n) = value(v);
    spans.push_back({v.id, n});
    at += n;
  }
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, spans](Tape& t) {
      const Matrix& g = t.grad_of(self);
      Index at2 = 0;
      for (const auto& [pid, n] : spans) {
        t.accumulate(pid, g.middleCols(at2, n));
        at2 += n;
      }
    };
  }
  return out;
}

Var Tape::rows_head(Var x, Index count) {
  const Matrix& v = value(x);
  require(count >= 0 && count <= v.rows(), "ad::rows_head: out of range");
  const bool rg = needs_grad(x);
  Var out = push(v.topRows(count), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, count](Tape& t) {
      const Matrix& xv = t.value(Var{px});
      Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
      gx.topRows(count) = t.grad_of(self);
      t.accumulate(px, gx);
    };
  }
  return out;
}

// --- normalization and attention pieces ----------------------------------------

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = value(x);
  const Matrix& gv = value(gamma);
  const Matrix& bv = value(beta);
  const Index d = xv.cols();
  require(gv.rows() == 1 && gv.cols() == d && bv.rows() == 1 && bv.cols() == d,
          "ad::layer_norm: gamma/beta must be 1 x dim");
  Vector mean = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mean;
  Vector inv_std =
      ((centered.array().square().rowwise().sum() / double(d)) + eps).sqrt().inverse();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix y = (xhat.array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();
  const bool rg = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, pg = gamma.id, pb = beta.id,
                           xhat = std::move(xhat), inv_std = std::move(inv_std), d](Tape& t) {
      const Matrix& g = t.grad_of(self);
      t.accumulate(pg, (g.array() * xhat.array()).colwise().sum().matrix());
      t.accumulate(pb, g.colwise().sum());
      // gx = inv_std/d * (d*ghat - sum(ghat) - xhat * sum(ghat .* xhat)), rowwise
      Matrix ghat = g.array().rowwise() * t.value(Var{pg}).row(0).array();
      Vector sum_ghat = ghat.rowwise().sum();
      Vector sum_gx = (ghat.array() * xhat.array()).rowwise().sum();
      Matrix gx = double(d) * ghat;
      gx.colwise() -= sum_ghat;
      gx -= (xhat.array().colwise() * sum_gx.array()).matrix();
      gx = (gx.array().colwise() * (inv_std.array() / double(d))).matrix();
      t.accumulate(px, gx);
    };
  }
  return out;
}

Var Tape::softmax_rows(Var x) {
  const Matrix& xv = value(x);
  Matrix y(xv.rows(), xv.cols());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double m = xv.row(r).maxCoeff();
    Eigen::ArrayXd e = (xv.row(r).array() - m).exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  const bool rg = needs_grad(x);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& yv = t.value(Var{self});
      Matrix gx(yv.rows(), yv.cols());
      for (Index r = 0; r < yv.rows(); ++r) {
        const double dot = g.row(r).dot(yv.row(r));
        gx.row(r) = (yv.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
      t.accumulate(px, gx);
    };
  }
  return out;
}

// --- convolutions ---------------------------------------------------------------

Var Tape::conv1d(Var x, Var weight, Var bias, int kernel, int stride) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(weight);
  const Matrix& bv = value(bias);
  const Index t_in = xv.rows(), c_in = xv.cols();
  require(stride >= 1 && kernel >= 1, "ad::conv1d: bad kernel/stride");
  require(wv.cols() == Index(kernel) * c_in, "ad::conv1d: weight cols != kernel * c_in");
  require(t_in >= kernel, "ad::conv1d: input shorter than kernel");
  const Index c_out = wv.rows();
  require(bv.rows() == 1 && bv.cols() == c_out, "ad::conv1d: bias must be 1 x c_out");
  const Index t_out = (t_in - kernel) / stride + 1;

  Matrix y = Matrix::Zero(t_out, c_out);
  for (int k = 0; k < kernel; ++k) {
    const auto wk = wv.middleCols(Index(k) * c_in, c_in);  // c_out x c_in
    const Matrix xk = xv(Eigen::seqN(k, t_out, stride), Eigen::all);
    y.noalias() += xk * wk.transpose();
  }
  y.rowwise() += bv.row(0);

  const bool rg = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, pw = weight.id, pb = bias.id, kernel, stride,
                           t_out, c_in](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& xv2 = t.value(Var{px});
      const Matrix& wv2 = t.value(Var{pw});
      Matrix gx = Matrix::Zero(xv2.rows(), xv2.cols());
      Matrix gw = Matrix::Zero(wv2.rows(), wv2.cols());
      for (int k = 0; k < kernel; ++k) {
        const auto wk = wv2.middleCols(Index(k) * c_in, c_in);
        const Matrix xk = xv2(Eigen::seqN(k, t_out, stride), Eigen::all);
        gw.middleCols(Index(k) * c_in, c_in).noalias() += g.transpose() * xk;
        gx(Eigen::seqN(k, t_out, stride), Eigen::all) += g * wk;
      }
      t.accumulate(px, gx);
      t.accumulate(pw, gw);
      t.accumulate(pb, g.colwise().sum());
    };
  }
  return out;
}

Var Tape::conv1d_transpose(Var x, Var weight, Var bias, int kernel, int stride, int pad) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(weight);
  const Matrix& bv = value(bias);
  const Index t_in = xv.rows(), c_in = xv.cols();
  require(stride >= 1 && kernel >= 1 && pad >= 0, "ad::conv1d_transpose: bad geometry");
  require(wv.cols() == Index(kernel) * c_in, "ad::conv1d_transpose: weight cols != kernel * c_in");
  const Index c_out = wv.rows();
  require(bv.rows() == 1 && bv.cols() == c_out, "ad::conv1d_transpose: bias must be 1 x c_out");
  const Index t_out = (t_in - 1) * stride + kernel - 2 * pad;
  require(t_out >= 1, "ad::conv1d_transpose: empty output");

  // For kernel offset k, input row t writes output row t*stride + k - pad;
  // the valid t form one contiguous run [t0, t0+n).
  const auto valid_run = [stride, pad, t_out](Index t_in2, int k, Index& t0, Index& n) {
    t0 = 0;
    while (t0 < t_in2 && t0 * stride + k - pad < 0) ++t0;
    Index t1 = t_in2 - 1;
    while (t1 >= t0 && t1 * stride + k - pad >= t_out) --t1;
    n = t1 - t0 + 1;
  };

  Matrix y = Matrix::Zero(t_out, c_out);
  for (int k = 0; k < kernel; ++k) {
    Index t0 = 0, n = 0;
    valid_run(t_in, k, t0, n);
    if (n <= 0) continue;
    const auto wk = wv.middleCols(Index(k) * c_in, c_in);
    y(Eigen::seqN(t0 * stride + k - pad, n, stride), Eigen::all) +=
        xv.middleRows(t0, n) * wk.transpose();
  }
  y.rowwise() += bv.row(0);

  const bool rg = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
  Var out = push(std::move(y), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, pw = weight.id, pb = bias.id, kernel, stride,
                           pad, t_out, c_in, valid_run](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& xv2 = t.value(Var{px});
      const Matrix& wv2 = t.value(Var{pw});
      Matrix gx = Matrix::Zero(xv2.rows(), xv2.cols());
      Matrix gw = Matrix::Zero(wv2.rows(), wv2.cols());
      for (int k = 0; k < kernel; ++k) {
        Index t0 = 0, n = 0;
        valid_run(xv2.rows(), k, t0, n);
        if (n <= 0) continue;
        const auto wk = wv2.middleCols(Index(k) * c_in, c_in);
        const Matrix gk = g(Eigen::seqN(t0 * stride + k - pad, n, stride), Eigen::all);
        gx.middleRows(t0, n).noalias() += gk * wk;
        gw.middleCols(Index(k) * c_in, c_in).noalias() += gk.transpose() * xv2.middleRows(t0, n);
      }
      t.accumulate(px, gx);
      t.accumulate(pw, gw);
      t.accumulate(pb, g.colwise().sum());
    };
  }
  return out;
}

// --- recurrence -------------------------------------------------------------------

Var Tape::gru(Var x, const GruParams& p) {
  const Matrix& xv = value(x);
  const Index frames = xv.rows();
  const Index h_dim = value(p.w_reset).rows();
  require(value(p.w_reset).cols() == xv.cols(), "ad::gru: input dim mismatch");
  require(value(p.u_reset).rows() == h_dim && value(p.u_reset).cols() == h_dim,
          "ad::gru: recurrent weight shape mismatch");

  // Precompute the input projections in one pass each.
  Matrix xr = xv * value(p.w_reset).transpose();
  xr.rowwise() += value(p.b_in_reset).row(0);
  Matrix xz = xv * value(p.w_update).transpose();
  xz.rowwise() += value(p.b_in_update).row(0);
  Matrix xn = xv * value(p.w_cand).transpose();
  xn.rowwise() += value(p.b_in_cand).row(0);

  Matrix r(frames, h_dim), z(frames, h_dim), n(frames, h_dim), h(frames, h_dim);
  Matrix hu_cand(frames, h_dim);  // U_n h_{t-1} + b_hn, needed by backward
  Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(h_dim);
  for (Index t = 0; t < frames; ++t) {
    const Eigen::RowVectorXd ar =
        xr.row(t) + h_prev * value(p.u_reset).transpose() + value(p.b_h_reset).row(0);
    const Eigen::RowVectorXd az =
        xz.row(t) + h_prev * value(p.u_update).transpose() + value(p.b_h_update).row(0);
    r.row(t) = (1.0 / (1.0 + (-ar.array()).exp())).matrix();
    z.row(t) = (1.0 / (1.0 + (-az.array()).exp())).matrix();
    hu_cand.row(t) = h_prev * value(p.u_cand).transpose() + value(p.b_h_cand).row(0);
    n.row(t) = (xn.row(t).array() + r.row(t).array() * hu_cand.row(t).array()).tanh().matrix();
    h.row(t) =
        ((1.0 - z.row(t).array()) * n.row(t).array() + z.row(t).array() * h_prev.array()).matrix();
    h_prev = h.row(t);
  }

  bool rg = needs_grad(x);
  for (Var v : {p.w_reset, p.w_update, p.w_cand, p.u_reset, p.u_update, p.u_cand, p.b_in_reset,
                p.b_in_update, p.b_in_cand, p.b_h_reset, p.b_h_update, p.b_h_cand})
    rg = rg || needs_grad(v);

  Var out = push(h, rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, p, r = std::move(r), z = std::move(z),
                           n = std::move(n), h = std::move(h), hu_cand = std::move(hu_cand),
                           frames, h_dim](Tape& t) {
      const Matrix& g = t.grad_of(self);
      const Matrix& xv2 = t.value(Var{px});
      const Matrix& ur = t.value(p.u_reset);
      const Matrix& uz = t.value(p.u_update);
      const Matrix& un = t.value(p.u_cand);
      const Matrix& wr = t.value(p.w_reset);
      const Matrix& wz = t.value(p.w_update);
      const Matrix& wn = t.value(p.w_cand);

      Matrix gx = Matrix::Zero(xv2.rows(), xv2.cols());
      Matrix gwr = Matrix::Zero(wr.rows(), wr.cols());
      Matrix gwz = Matrix::Zero(wz.rows(), wz.cols());
      Matrix gwn = Matrix::Zero(wn.rows(), wn.cols());
      Matrix gur = Matrix::Zero(h_dim, h_dim);
      Matrix guz = Matrix::Zero(h_dim, h_dim);
      Matrix gun = Matrix::Zero(h_dim, h_dim);
      Eigen::RowVectorXd gbir = Eigen::RowVectorXd::Zero(h_dim);
      Eigen::RowVectorXd gbiz = Eigen::RowVectorXd::Zero(h_dim);
      Eigen::RowVectorXd gbin = Eigen::RowVectorXd::Zero(h_dim);
      Eigen::RowVectorXd gbhr = Eigen::RowVectorXd::Zero(h_dim);
      Eigen::RowVectorXd gbhz = Eigen::RowVectorXd::Zero(h_dim);
      Eigen::RowVectorXd gbhn = Eigen::RowVectorXd::Zero(h_dim);

      Eigen::RowVectorXd carry = Eigen::RowVectorXd::Zero(h_dim);
      for (Index tt = frames - 1; tt >= 0; --tt) {
        const Eigen::RowVectorXd gh = g.row(tt) + carry;
        const Eigen::RowVectorXd h_prev2 =
            tt > 0 ? Eigen::RowVectorXd(h.row(tt - 1)) : Eigen::RowVectorXd::Zero(h_dim);

        const Eigen::RowVectorXd gz =
            (gh.array() * (h_prev2.array() - n.row(tt).array())).matrix();
        const Eigen::RowVectorXd gn = (gh.array() * (1.0 - z.row(tt).array())).matrix();
        Eigen::RowVectorXd gh_prev = (gh.array() * z.row(tt).array()).matrix();

        // candidate: n = tanh(xn + r .* hu_cand)
        const Eigen::RowVectorXd gan =
            (gn.array() * (1.0 - n.row(tt).array().square())).matrix();
        gx.row(tt) += gan * wn;
        gwn += gan.transpose() * xv2.row(tt);
        gbin += gan;
        const Eigen::RowVectorXd gr = (gan.array() * hu_cand.row(tt).array()).matrix();
        const Eigen::RowVectorXd ghu = (gan.array() * r.row(tt).array()).matrix();
        gh_prev += ghu * un;
        gun += ghu.transpose() * h_prev2;
        gbhn += ghu;

        // gates
        const Eigen::RowVectorXd gar =
            (gr.array() * r.row(tt).array() * (1.0 - r.row(tt).array())).matrix();
        gx.row(tt) += gar * wr;
        gwr += gar.transpose() * xv2.row(tt);
        gbir += gar;
        gh_prev += gar * ur;
        gur += gar.transpose() * h_prev2;
        gbhr += gar;

        const Eigen::RowVectorXd gaz =
            (gz.array() * z.row(tt).array() * (1.0 - z.row(tt).array())).matrix();
        gx.row(tt) += gaz * wz;
        gwz += gaz.transpose() * xv2.row(tt);
        gbiz += gaz;
        gh_prev += gaz * uz;
        guz += gaz.transpose() * h_prev2;
        gbhz += gaz;

        carry = gh_prev;
      }

      t.accumulate(px, gx);
      t.accumulate(p.w_reset.id, gwr);
      t.accumulate(p.w_update.id, gwz);
      t.accumulate(p.w_cand.id, gwn);
      t.accumulate(p.u_reset.id, gur);
      t.accumulate(p.u_update.id, guz);
      t.accumulate(p.u_cand.id, gun);
      t.accumulate(p.b_in_reset.id, gbir);
      t.accumulate(p.b_in_update.id, gbiz);
      t.accumulate(p.b_in_cand.id, gbin);
      t.accumulate(p.b_h_reset.id, gbhr);
      t.accumulate(p.b_h_update.id, gbhz);
      t.accumulate(p.b_h_cand.id, gbhn);
    };
  }
  return out;
}

// --- reductions ---------------------------------------------------------------------

Var Tape::l2_norm(Var x) {
  const double norm = value(x).norm();
  const bool rg = needs_grad(x);
  Var out = push(Matrix::Constant(1, 1, norm), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id, norm](Tape& t) {
      const double g = t.grad_of(self)(0, 0);
      if (norm > 0.0) t.accumulate(px, (g / norm) * t.value(Var{px}));
    };
  }
  return out;
}

Var Tape::sum(Var x) {
  const bool rg = needs_grad(x);
  Var out = push(Matrix::Constant(1, 1, value(x).sum()), rg, nullptr);
  if (rg) {
    node(out.id).backfn = [self = out.id, px = x.id](Tape& t) {
      const Matrix& xv = t.value(Var{px});
      t.accumulate(px, Matrix::Constant(xv.rows(), xv.cols(), t.grad_of(self)(0, 0)));
    };
  }
  return out;
}

Var Tape::stop_gradient(Var x) { return constant(value(x)); }

}  // namespace bt::ad
