#include "genrank/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace genrank::ad {

Var Graph::param(const Mat& value, Mat* grad_slot) {
  Node n;
  n.external = &value;
  n.grad_slot = record_ ? grad_slot : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Mat& Graph::value(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.external ? *n.external : n.value;
}

Var Graph::push(Mat value, std::function<void(Graph&, const Mat&)> backward) {
  Node n;
  n.value = std::move(value);
  if (record_) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Graph::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad_slot) return *n.grad_slot;
  if (!n.has_grad) {
    const Mat& val = n.external ? *n.external : n.value;
    n.grad = Mat::Zero(val.rows(), val.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var root) {
  if (!record_) throw std::logic_error("backward on a non-recording graph");
  if (value(root).size() != 1) throw std::logic_error("backward root must be scalar");
  grad(root)(0, 0) += 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || !n.has_grad) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

bool wants(const Graph& g) { return g.recording(); }

}  // namespace

Var add(Graph& g, Var a, Var b) {
  Mat out = g.value(a) + g.value(b);
  return g.push(std::move(out), [a, b](Graph& gr, const Mat& d) {
    gr.grad(a) += d;
    gr.grad(b) += d;
  });
}

Var add_constant(Graph& g, Var x, const Mat& c) {
  Mat out = g.value(x) + c;
  return g.push(std::move(out), [x](Graph& gr, const Mat& d) { gr.grad(x) += d; });
}

Var scale(Graph& g, Var x, double s) {
  Mat out = g.value(x) * s;
  return g.push(std::move(out), [x, s](Graph& gr, const Mat& d) { gr.grad(x) += d * s; });
}

Var linear(Graph& g, Var x, Var w, Var b) {
  const Mat& xv = g.value(x);
  const Mat& wv = g.value(w);
  Mat out = xv * wv;
  out.rowwise() += g.value(b).row(0);
  return g.push(std::move(out), [x, w, b](Graph& gr, const Mat& d) {
    gr.grad(x).noalias() += d * gr.value(w).transpose();
    gr.grad(w).noalias() += gr.value(x).transpose() * d;
    gr.grad(b) += d.colwise().sum();
  });
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = g.value(x);
  const auto n = xv.rows();
  const auto dim = xv.cols();
  Mat xhat(n, dim);
  RowVec inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * inv_std(i);
  }
  Mat out = xhat.array().rowwise() * g.value(gamma).row(0).array();
  out.rowwise() += g.value(beta).row(0);
  return g.push(std::move(out), [x, gamma, beta, xhat = std::move(xhat),
                                 inv_std = std::move(inv_std)](Graph& gr, const Mat& d) {
    const RowVec gam = gr.value(gamma).row(0);
    gr.grad(gamma) += (d.array() * xhat.array()).colwise().sum().matrix();
    gr.grad(beta) += d.colwise().sum();
    Mat& dx = gr.grad(x);
    const double inv_dim = 1.0 / static_cast<double>(xhat.cols());
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
      const RowVec dxhat = d.row(i).cwiseProduct(gam);
      const double m1 = dxhat.sum() * inv_dim;
      const double m2 = dxhat.cwiseProduct(xhat.row(i)).sum() * inv_dim;
      dx.row(i).array() += inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
    }
  });
}

Var relu(Graph& g, Var x) {
  Mat out = g.value(x).cwiseMax(0.0);
  return g.push(std::move(out), [x](Graph& gr, const Mat& d) {
    gr.grad(x).array() += (gr.value(x).array() > 0.0).select(d.array(), 0.0);
  });
}

Var tanh(Graph& g, Var x) {
  Mat out = g.value(x).array().tanh().matrix();
  Mat copy = wants(g) ? out : Mat();
  return g.push(std::move(out), [x, y = std::move(copy)](Graph& gr, const Mat& d) {
    gr.grad(x).array() += d.array() * (1.0 - y.array().square());
  });
}

Var gather_rows(Graph& g, Var table, std::span<const int> ids) {
  const Mat& t = g.value(table);
  Mat out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) throw std::out_of_range("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  std::vector<int> keep(ids.begin(), ids.end());
  return g.push(std::move(out), [table, keep = std::move(keep)](Graph& gr, const Mat& d) {
    Mat& dt = gr.grad(table);
    for (std::size_t i = 0; i < keep.size(); ++i) dt.row(keep[i]) += d.row(static_cast<Eigen::Index>(i));
  });
}

Var row(Graph& g, Var x, int index) {
  Mat out = g.value(x).row(index);
  return g.push(std::move(out), [x, index](Graph& gr, const Mat& d) { gr.grad(x).row(index) += d.row(0); });
}

Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Var attention(Graph& g, Var q, Var k, Var v, int heads, bool causal) {
  const Mat& qv = g.value(q);
  const Mat& kv = g.value(k);
  const Mat& vv = g.value(v);
  const auto nq = qv.rows();
  const auto nk = kv.rows();
  const auto dim = qv.cols();
  if (dim % heads != 0) throw std::invalid_argument("model dim not divisible by heads");
  if (causal && nq != nk) throw std::invalid_argument("causal attention needs equal lengths");
  const auto dh = dim / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat out(nq, dim);
  std::vector<Mat> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Mat scores = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * s;
    if (causal) {
      for (Eigen::Index i = 0; i < nq; ++i) {
        for (Eigen::Index j = i + 1; j < nk; ++j) scores(i, j) = -std::numeric_limits<double>::infinity();
      }
    }
    Mat p = softmax_rows(scores);
    out.middleCols(h * dh, dh).noalias() = p * vv.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(p);
  }
  if (!wants(g)) return g.push(std::move(out), {});
  return g.push(std::move(out), [q, k, v, heads, dh, s, probs = std::move(probs)](Graph& gr, const Mat& d) {
    const Mat& qv2 = gr.value(q);
    const Mat& kv2 = gr.value(k);
    const Mat& vv2 = gr.value(v);
    Mat dq = Mat::Zero(qv2.rows(), qv2.cols());
    Mat dk = Mat::Zero(kv2.rows(), kv2.cols());
    Mat dv = Mat::Zero(vv2.rows(), vv2.cols());
    for (int h = 0; h < heads; ++h) {
      const Mat& p = probs[static_cast<std::size_t>(h)];
      const auto dout = d.middleCols(h * dh, dh);
      Mat dp = dout * vv2.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() += p.transpose() * dout;
      Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
      Mat ds = p.array() * (dp.array().colwise() - rowdot.array());
      dq.middleCols(h * dh, dh).noalias() += (ds * kv2.middleCols(h * dh, dh)) * s;
      dk.middleCols(h * dh, dh).noalias() += (ds.transpose() * qv2.middleCols(h * dh, dh)) * s;
    }
    gr.grad(q) += dq;
    gr.grad(k) += dk;
    gr.grad(v) += dv;
  });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> targets) {
  const Mat& lv = g.value(logits);
  if (static_cast<std::size_t>(lv.rows()) != targets.size()) {
    throw std::invalid_argument("cross entropy: one target per row");
  }
  Mat p = softmax_rows(lv);
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    loss -= std::log(p(static_cast<Eigen::Index>(i), targets[i]));
  }
  Mat out(1, 1);
  out(0, 0) = loss;
  std::vector<int> t(targets.begin(), targets.end());
  return g.push(std::move(out), [logits, p = std::move(p), t = std::move(t)](Graph& gr, const Mat& d) {
    Mat dl = p;
    for (std::size_t i = 0; i < t.size(); ++i) dl(static_cast<Eigen::Index>(i), t[i]) -= 1.0;
    gr.grad(logits) += dl * d(0, 0);
  });
}

Mat sinusoidal_positions(int length, int dim) {
  Mat pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

}  // namespace genrank::ad
