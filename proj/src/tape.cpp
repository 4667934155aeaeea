#include "splab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splab/error.hpp"
#include "splab/kernels.hpp"

namespace splab {

namespace ks = splab::kernels;

NodeId Tape::push(Tensor value, std::function<void(Tape&, Node&)> back, const char* opname) {
  ks::check_finite(value.data(), value.size(), opname);
  Node nd;
  nd.value = std::move(value);
  nd.back = std::move(back);
  nodes_.push_back(std::move(nd));
  return static_cast<NodeId>(nodes_.size() - 1);
}

std::vector<float>& Tape::grad_buf(NodeId id) {
  Node& nd = node(id);
  if (nd.grad.empty()) nd.grad.assign(nd.value.size(), 0.0f);
  return nd.grad;
}

double Tape::scalar(NodeId id) const {
  const Node& nd = nodes_[static_cast<size_t>(id)];
  if (nd.value.size() != 1) throw DimensionError("scalar() on non-scalar node");
  if (nd.scalar_d) return *nd.scalar_d;
  return nd.value.at(0);
}

NodeId Tape::leaf(Tensor* param) {
  NodeId id = push(*param, nullptr, "leaf");
  node(id).bound = param;
  node(id).back = [](Tape&, Node& nd) {
    if (nd.bound && nd.bound->requires_grad()) {
      auto& g = nd.bound->grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
    }
  };
  return id;
}

NodeId Tape::constant(Tensor value) { return push(std::move(value), nullptr, "constant"); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw DimensionError("matmul: " + av.shape().str() + " x " + bv.shape().str());
  const int m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(Shape{m, n});
  ks::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  return push(std::move(out), [a, b, m, k, n](Tape& t, Node& nd) {
    ks::gemm_nt(nd.grad.data(), t.val(b).data(), t.grad_buf(a).data(), m, n, k, true);
    ks::gemm_tn(t.val(a).data(), nd.grad.data(), t.grad_buf(b).data(), k, m, n, true);
  }, "matmul");
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
    throw DimensionError("matmul_nt: " + av.shape().str() + " x " + bv.shape().str());
  const int m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out(Shape{m, n});
  ks::gemm_nt(av.data(), bv.data(), out.data(), m, k, n);
  return push(std::move(out), [a, b, m, k, n](Tape& t, Node& nd) {
    ks::gemm_nn(nd.grad.data(), t.val(b).data(), t.grad_buf(a).data(), m, n, k, true);
    ks::gemm_tn(nd.grad.data(), t.val(a).data(), t.grad_buf(b).data(), n, m, k, true);
  }, "matmul_nt");
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.shape() != bv.shape())
    throw DimensionError("add: " + av.shape().str() + " vs " + bv.shape().str());
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] + bv.data()[i];
  NodeId id = push(std::move(out), [a, b](Tape& t, Node& nd) {
    auto& ga = t.grad_buf(a);
    auto& gb = t.grad_buf(b);
    for (size_t i = 0; i < nd.grad.size(); ++i) {
      ga[i] += nd.grad[i];
      gb[i] += nd.grad[i];
    }
  }, "add");
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.scalar_d && nb.scalar_d) node(id).scalar_d = *na.scalar_d + *nb.scalar_d;
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.shape() != bv.shape())
    throw DimensionError("sub: " + av.shape().str() + " vs " + bv.shape().str());
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] - bv.data()[i];
  NodeId id = push(std::move(out), [a, b](Tape& t, Node& nd) {
    auto& ga = t.grad_buf(a);
    auto& gb = t.grad_buf(b);
    for (size_t i = 0; i < nd.grad.size(); ++i) {
      ga[i] += nd.grad[i];
      gb[i] -= nd.grad[i];
    }
  }, "sub");
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.scalar_d && nb.scalar_d) node(id).scalar_d = *na.scalar_d - *nb.scalar_d;
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.shape() != bv.shape())
    throw DimensionError("mul: " + av.shape().str() + " vs " + bv.shape().str());
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] * bv.data()[i];
  return push(std::move(out), [a, b](Tape& t, Node& nd) {
    auto& ga = t.grad_buf(a);
    auto& gb = t.grad_buf(b);
    const float* avd = t.val(a).data();
    const float* bvd = t.val(b).data();
    for (size_t i = 0; i < nd.grad.size(); ++i) {
      ga[i] += nd.grad[i] * bvd[i];
      gb[i] += nd.grad[i] * avd[i];
    }
  }, "mul");
}

NodeId Tape::scale(NodeId a, double alpha) {
  const Tensor& av = val(a);
  Tensor out(av.shape());
  for (size_t i = 0; i < out.size(); ++i)
    out.data()[i] = static_cast<float>(av.data()[i] * alpha);
  NodeId id = push(std::move(out), [a, alpha](Tape& t, Node& nd) {
    auto& ga = t.grad_buf(a);
    for (size_t i = 0; i < nd.grad.size(); ++i)
      ga[i] += static_cast<float>(nd.grad[i] * alpha);
  }, "scale");
  if (node(a).scalar_d) node(id).scalar_d = *node(a).scalar_d * alpha;
  return id;
}

NodeId Tape::add_rowvec(NodeId x, NodeId v) {
  const Tensor& xv = val(x);
  const Tensor& vv = val(v);
  if (xv.rank() != 2 || vv.rank() != 1 || vv.rows() != xv.cols())
    throw DimensionError("add_rowvec: " + xv.shape().str() + " + " + vv.shape().str());
  const int m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = xv.at(i, j) + vv.at(j);
  return push(std::move(out), [x, v, m, n](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    auto& gv = t.grad_buf(v);
    for (size_t i = 0; i < nd.grad.size(); ++i) gx[i] += nd.grad[i];
    std::vector<double> acc(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) acc[static_cast<size_t>(j)] += nd.grad[static_cast<size_t>(i) * n + j];
    for (int j = 0; j < n; ++j) gv[static_cast<size_t>(j)] += static_cast<float>(acc[static_cast<size_t>(j)]);
  }, "add_rowvec");
}

NodeId Tape::relu(NodeId x) {
  const Tensor& xv = val(x);
  Tensor out(xv.shape());
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] = xv.data()[i] > 0.0f ? xv.data()[i] : 0.0f;
  return push(std::move(out), [x](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    const float* xd = t.val(x).data();
    for (size_t i = 0; i < nd.grad.size(); ++i)
      if (xd[i] > 0.0f) gx[i] += nd.grad[i];
  }, "relu");
}

namespace {
constexpr double kGeluC = 0.044715;
inline double gelu_fwd(double x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return 0.5 * x * (1.0 + std::tanh(c * (x + kGeluC * x * x * x)));
}
inline double gelu_bwd(double x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const double u = c * (x + kGeluC * x * x * x);
  const double th = std::tanh(u);
  const double sech2 = 1.0 - th * th;
  return 0.5 * (1.0 + th) + 0.5 * x * sech2 * c * (1.0 + 3.0 * kGeluC * x * x);
}
}  // namespace

NodeId Tape::gelu(NodeId x) {
  const Tensor& xv = val(x);
  Tensor out(xv.shape());
  for (size_t i = 0; i < out.size(); ++i)
    out.data()[i] = static_cast<float>(gelu_fwd(xv.data()[i]));
  return push(std::move(out), [x](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    const float* xd = t.val(x).data();
    for (size_t i = 0; i < nd.grad.size(); ++i)
      gx[i] += static_cast<float>(nd.grad[i] * gelu_bwd(xd[i]));
  }, "gelu");
}

NodeId Tape::topk_rows(NodeId x, int k) {
  const Tensor& xv = val(x);
  if (xv.rank() != 2) throw DimensionError("topk_rows: rank-2 input required");
  const int m = xv.rows(), n = xv.cols();
  if (k < 1 || k > n)
    throw ConfigError("topk_rows: k=" + std::to_string(k) + " out of range for " + std::to_string(n) + " units");
  Tensor out(xv.shape());
  std::vector<int32_t> kept(static_cast<size_t>(m) * k);
  std::vector<std::pair<float, int>> scratch(static_cast<size_t>(n));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) scratch[static_cast<size_t>(j)] = {xv.at(i, j), j};
    // Largest values first; ties broken by lower column index.
    std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end(),
                     [](const auto& a, const auto& b) {
                       if (a.first != b.first) return a.first > b.first;
                       return a.second < b.second;
                     });
    for (int j = 0; j < k; ++j) {
      const int col = scratch[static_cast<size_t>(j)].second;
      kept[static_cast<size_t>(i) * k + j] = col;
      out.at(i, col) = xv.at(i, col);
    }
  }
  return push(std::move(out), [x, m, k, kept = std::move(kept)](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    const int n = t.val(x).cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) {
        const int col = kept[static_cast<size_t>(i) * k + j];
        gx[static_cast<size_t>(i) * n + col] += nd.grad[static_cast<size_t>(i) * n + col];
      }
  }, "topk_rows");
}

NodeId Tape::jumprelu(NodeId z, NodeId theta, double ste_bandwidth) {
  const Tensor& zv = val(z);
  const Tensor& tv = val(theta);
  if (zv.rank() != 2 || tv.rank() != 1 || tv.rows() != zv.cols())
    throw DimensionError("jumprelu: " + zv.shape().str() + " with theta " + tv.shape().str());
  for (size_t i = 0; i < tv.size(); ++i)
    if (tv.data()[i] < 0.0f) throw ConfigError("jumprelu: negative threshold");
  const int m = zv.rows(), n = zv.cols();
  Tensor out(zv.shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = zv.at(i, j) > tv.at(j) ? zv.at(i, j) : 0.0f;
  const double eps = ste_bandwidth;
  return push(std::move(out), [z, theta, m, n, eps](Tape& t, Node& nd) {
    auto& gz = t.grad_buf(z);
    auto& gth = t.grad_buf(theta);
    const float* zd = t.val(z).data();
    const float* thd = t.val(theta).data();
    std::vector<double> acc(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        const size_t idx = static_cast<size_t>(i) * n + j;
        const double zij = zd[idx];
        const double th = thd[j];
        if (zij > th) gz[idx] += nd.grad[idx];
        // Straight-through window for the threshold.
        if (std::fabs(zij - th) <= eps / 2.0)
          acc[static_cast<size_t>(j)] += nd.grad[idx] * zij * (-1.0 / eps);
      }
    }
    for (int j = 0; j < n; ++j) gth[static_cast<size_t>(j)] += static_cast<float>(acc[static_cast<size_t>(j)]);
  }, "jumprelu");
}

NodeId Tape::layernorm(NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& xv = val(x);
  const Tensor& gv = val(gain);
  const Tensor& bv = val(bias);
  if (xv.rank() != 2 || gv.rank() != 1 || bv.rank() != 1 || gv.rows() != xv.cols() ||
      bv.rows() != xv.cols())
    throw DimensionError("layernorm: " + xv.shape().str());
  const int m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  std::vector<float> xhat(static_cast<size_t>(m) * n);
  std::vector<double> inv(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xv.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xv.at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double iv = 1.0 / std::sqrt(var + eps);
    inv[static_cast<size_t>(i)] = iv;
    for (int j = 0; j < n; ++j) {
      const float xh = static_cast<float>((xv.at(i, j) - mu) * iv);
      xhat[static_cast<size_t>(i) * n + j] = xh;
      out.at(i, j) = xh * gv.at(j) + bv.at(j);
    }
  }
  return push(std::move(out),
              [x, gain, bias, m, n, xhat = std::move(xhat), inv = std::move(inv)](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    auto& gg = t.grad_buf(gain);
    auto& gb = t.grad_buf(bias);
    const float* gaind = t.val(gain).data();
    std::vector<double> gacc(static_cast<size_t>(n), 0.0), bacc(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < m; ++i) {
      const float* grow = nd.grad.data() + static_cast<size_t>(i) * n;
      const float* xhrow = xhat.data() + static_cast<size_t>(i) * n;
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int j = 0; j < n; ++j) {
        const double dxh = static_cast<double>(grow[j]) * gaind[j];
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xhrow[j];
        gacc[static_cast<size_t>(j)] += static_cast<double>(grow[j]) * xhrow[j];
        bacc[static_cast<size_t>(j)] += grow[j];
      }
      mean_dxhat /= n;
      mean_dxhat_xhat /= n;
      const double iv = inv[static_cast<size_t>(i)];
      for (int j = 0; j < n; ++j) {
        const double dxh = static_cast<double>(grow[j]) * gaind[j];
        gx[static_cast<size_t>(i) * n + j] +=
            static_cast<float>(iv * (dxh - mean_dxhat - xhrow[j] * mean_dxhat_xhat));
      }
    }
    for (int j = 0; j < n; ++j) {
      gg[static_cast<size_t>(j)] += static_cast<float>(gacc[static_cast<size_t>(j)]);
      gb[static_cast<size_t>(j)] += static_cast<float>(bacc[static_cast<size_t>(j)]);
    }
  }, "layernorm");
}

NodeId Tape::causal_softmax(NodeId scores) {
  const Tensor& sv = val(scores);
  if (sv.rank() != 2 || sv.rows() != sv.cols())
    throw DimensionError("causal_softmax: square matrix required, got " + sv.shape().str());
  const int t_len = sv.rows();
  Tensor out(sv.shape());
  for (int i = 0; i < t_len; ++i) {
    float mx = sv.at(i, 0);
    for (int j = 1; j <= i; ++j) mx = std::max(mx, sv.at(i, j));
    double denom = 0.0;
    for (int j = 0; j <= i; ++j) denom += std::exp(static_cast<double>(sv.at(i, j)) - mx);
    for (int j = 0; j <= i; ++j)
      out.at(i, j) = static_cast<float>(std::exp(static_cast<double>(sv.at(i, j)) - mx) / denom);
  }
  return push(std::move(out), [scores, t_len](Tape& t, Node& nd) {
    auto& gs = t.grad_buf(scores);
    const Tensor& p = nd.value;
    for (int i = 0; i < t_len; ++i) {
      double dz = 0.0;
      for (int j = 0; j <= i; ++j)
        dz += static_cast<double>(nd.grad[static_cast<size_t>(i) * t_len + j]) * p.at(i, j);
      for (int j = 0; j <= i; ++j) {
        const size_t idx = static_cast<size_t>(i) * t_len + j;
        gs[idx] += static_cast<float>(p.at(i, j) * (static_cast<double>(nd.grad[idx]) - dz));
      }
    }
  }, "causal_softmax");
}

NodeId Tape::embed_rows(NodeId table, std::vector<int> ids) {
  const Tensor& tv = val(table);
  if (tv.rank() != 2) throw DimensionError("embed_rows: table must be rank-2");
  const int v = tv.rows(), d = tv.cols();
  for (int id : ids)
    if (id < 0 || id >= v)
      throw InputError("embed_rows: id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
  Tensor out(Shape{static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.row(ids[i]), d, out.row(static_cast<int>(i)));
  return push(std::move(out), [table, d, ids = std::move(ids)](Tape& t, Node& nd) {
    auto& gt = t.grad_buf(table);
    for (size_t i = 0; i < ids.size(); ++i) {
      const float* gr = nd.grad.data() + i * static_cast<size_t>(d);
      float* dst = gt.data() + static_cast<size_t>(ids[i]) * d;
      for (int j = 0; j < d; ++j) dst[j] += gr[j];
    }
  }, "embed_rows");
}

NodeId Tape::slice_cols(NodeId x, int c0, int c1) {
  const Tensor& xv = val(x);
  if (xv.rank() != 2 || c0 < 0 || c1 > xv.cols() || c0 >= c1)
    throw DimensionError("slice_cols: bad range");
  const int m = xv.rows(), n = xv.cols(), w = c1 - c0;
  Tensor out(Shape{m, w});
  for (int i = 0; i < m; ++i) std::copy_n(xv.row(i) + c0, w, out.row(i));
  return push(std::move(out), [x, c0, m, n, w](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        gx[static_cast<size_t>(i) * n + c0 + j] += nd.grad[static_cast<size_t>(i) * w + j];
  }, "slice_cols");
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const int m = val(parts[0]).rows();
  int n = 0;
  for (NodeId p : parts) {
    if (val(p).rank() != 2 || val(p).rows() != m)
      throw DimensionError("concat_cols: row mismatch");
    n += val(p).cols();
  }
  Tensor out(Shape{m, n});
  int off = 0;
  for (NodeId p : parts) {
    const Tensor& pv = val(p);
    for (int i = 0; i < m; ++i) std::copy_n(pv.row(i), pv.cols(), out.row(i) + off);
    off += pv.cols();
  }
  return push(std::move(out), [parts, m, n](Tape& t, Node& nd) {
    int off2 = 0;
    for (NodeId p : parts) {
      auto& gp = t.grad_buf(p);
      const int w = t.val(p).cols();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          gp[static_cast<size_t>(i) * w + j] += nd.grad[static_cast<size_t>(i) * n + off2 + j];
      off2 += w;
    }
  }, "concat_cols");
}

NodeId Tape::sum_all(NodeId x) {
  const Tensor& xv = val(x);
  const double s = ks::sum(xv.data(), xv.size());
  Tensor out(Shape::scalar());
  out.at(0) = static_cast<float>(s);
  NodeId id = push(std::move(out), [x](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    const float g = nd.grad[0];
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  }, "sum_all");
  node(id).scalar_d = s;
  return id;
}

NodeId Tape::sum_sq(NodeId x) {
  const Tensor& xv = val(x);
  const double s = ks::sum_sq(xv.data(), xv.size());
  Tensor out(Shape::scalar());
  out.at(0) = static_cast<float>(s);
  NodeId id = push(std::move(out), [x](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    const float* xd = t.val(x).data();
    const float g = nd.grad[0];
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0f * g * xd[i];
  }, "sum_sq");
  node(id).scalar_d = s;
  return id;
}

NodeId Tape::sum_abs(NodeId x) {
  const Tensor& xv = val(x);
  const double s = ks::sum_abs(xv.data(), xv.size());
  Tensor out(Shape::scalar());
  out.at(0) = static_cast<float>(s);
  NodeId id = push(std::move(out), [x](Tape& t, Node& nd) {
    auto& gx = t.grad_buf(x);
    const float* xd = t.val(x).data();
    const float g = nd.grad[0];
    for (size_t i = 0; i < gx.size(); ++i) {
      if (xd[i] > 0.0f) gx[i] += g;
      else if (xd[i] < 0.0f) gx[i] -= g;
    }
  }, "sum_abs");
  node(id).scalar_d = s;
  return id;
}

NodeId Tape::softmax_xent_mean(NodeId logits, std::vector<int> targets) {
  const Tensor& lv = val(logits);
  if (lv.rank() != 2 || static_cast<int>(targets.size()) != lv.rows())
    throw DimensionError("softmax_xent_mean: logits " + lv.shape().str() + " vs " +
                         std::to_string(targets.size()) + " targets");
  const int t_len = lv.rows(), v = lv.cols();
  int counted = 0;
  for (int tgt : targets) {
    if (tgt >= v) throw InputError("softmax_xent_mean: target out of range");
    if (tgt >= 0) ++counted;
  }
  if (counted == 0) throw InputError("softmax_xent_mean: no targets");
  Tensor probs(Shape{t_len, v});
  double loss = 0.0;
  for (int i = 0; i < t_len; ++i) {
    float mx = lv.at(i, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, lv.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < v; ++j) denom += std::exp(static_cast<double>(lv.at(i, j)) - mx);
    for (int j = 0; j < v; ++j)
      probs.at(i, j) = static_cast<float>(std::exp(static_cast<double>(lv.at(i, j)) - mx) / denom);
    if (targets[static_cast<size_t>(i)] >= 0)
      loss += std::log(denom) - (static_cast<double>(lv.at(i, targets[static_cast<size_t>(i)])) - mx);
  }
  loss /= counted;
  Tensor out(Shape::scalar());
  out.at(0) = static_cast<float>(loss);
  NodeId id = push(std::move(out),
                   [logits, t_len, v, counted, targets = std::move(targets),
                    probs = std::move(probs)](Tape& t, Node& nd) {
    auto& gl = t.grad_buf(logits);
    const float g = nd.grad[0];
    for (int i = 0; i < t_len; ++i) {
      const int tgt = targets[static_cast<size_t>(i)];
      if (tgt < 0) continue;
      for (int j = 0; j < v; ++j) {
        float d = probs.at(i, j);
        if (j == tgt) d -= 1.0f;
        gl[static_cast<size_t>(i) * v + j] += g * d / counted;
      }
    }
  }, "softmax_xent_mean");
  node(id).scalar_d = loss;
  return id;
}

void Tape::backward(NodeId root) {
  if (backward_done_) throw Error("Tape::backward called twice");
  backward_done_ = true;
  const Node& r = node(root);
  if (r.value.size() != 1) throw DimensionError("backward: root must be scalar");
  grad_buf(root)[0] = 1.0f;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& nd = nodes_[static_cast<size_t>(i)];
    if (nd.grad.empty() || !nd.back) continue;
    nd.back(*this, nd);
  }
}

void adam_step(std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p]->size(), 0.0f);
      state.v[p].assign(params[p]->size(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) throw ConfigError("adam_step: state/param count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    if (state.m[p].size() != w.size()) throw ConfigError("adam_step: moment/param shape mismatch");
    auto& g = w.grad();
    ks::check_finite(g.data(), g.size(), "adam_step gradient");
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w.data()[i] = static_cast<float>(w.data()[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

double finite_diff_check(const std::function<double(bool record)>& f,
                         std::vector<Tensor*> params, double step) {
  if (step <= 0.0) throw ConfigError("finite_diff_check: step must be positive");
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  f(true);
  std::vector<std::vector<double>> tape_grad(params.size());
  for (size_t p = 0; p < params.size(); ++p) {
    tape_grad[p].assign(params[p]->grad().begin(), params[p]->grad().end());
  }
  double max_diff = 0.0, scale_t = 0.0, scale_f = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    for (size_t i = 0; i < w.size(); ++i) {
      const float orig = w.data()[i];
      const float plus = static_cast<float>(static_cast<double>(orig) + step);
      const float minus = static_cast<float>(static_cast<double>(orig) - step);
      w.data()[i] = plus;
      const double lp = f(false);
      w.data()[i] = minus;
      const double lm = f(false);
      w.data()[i] = orig;
      const double h = static_cast<double>(plus) - static_cast<double>(minus);
      const double fd = (lp - lm) / h;
      const double gt = tape_grad[p][i];
      max_diff = std::max(max_diff, std::fabs(gt - fd));
      scale_t = std::max(scale_t, std::fabs(gt));
      scale_f = std::max(scale_f, std::fabs(fd));
    }
  }
  return max_diff / std::max({scale_t, scale_f, 1e-12});
}

}  // namespace splab
