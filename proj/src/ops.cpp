// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

using Grads = std::span<Tensor* const>;

void require_rank2(Var v, const char* op) { require_matrix(v.value(), op); }

void require_row_vector(const Tensor& row, std::size_t n, const char* op) {
  const bool shape_ok = row.size() == n && (row.rank() == 1 || (row.rank() == 2 && row.shape()[0] == 1));
  if (!shape_ok) {
    throw ValidationError(std::string(op) + ": expected a row of width " + std::to_string(n) +
                          ", got shape " + shape_string(row.shape()));
  }
}

void check_index_length(const std::vector<Index>& idx, std::size_t expected, const char* op) {
  if (idx.size() != expected) {
    throw ValidationError(std::string(op) + ": index length " + std::to_string(idx.size()) +
                          " does not match " + std::to_string(expected) + " rows");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ValidationError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " vs " +
                          shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av(i, p) * bv(p, j);
      out(i, j) = acc;
    }
  return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor&, const Tensor& g, Grads in) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (Tensor* ga = in[0]) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g(i, j) * bv(p, j);
          (*ga)(i, p) += acc;
        }
    }
    if (Tensor* gb = in[1]) {
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += av(i, p) * g(i, j);
          (*gb)(p, j) += acc;
        }
    }
  });
}

Var transpose(Var a) {
  require_rank2(a, "transpose");
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  return a.tape().record(std::move(out), {a}, [](const Tensor&, const Tensor& g, Grads in) {
    Tensor& ga = *in[0];
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.tape().record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, Grads in) {
    if (in[0]) *in[0] += g;
    if (in[1]) *in[1] += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, Grads in) {
    if (in[0]) *in[0] += g;
    if (Tensor* gb = in[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor&, const Tensor& g, Grads in) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (Tensor* ga = in[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (Tensor* gb = in[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a}, [factor](const Tensor&, const Tensor& g, Grads in) {
    for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * factor;
  });
}

Var add_row(Var a, Var row) {
  require_rank2(a, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require_row_vector(rv, av.cols(), "add_row");
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  return a.tape().record(std::move(out), {a, row}, [](const Tensor&, const Tensor& g, Grads in) {
    if (in[0]) *in[0] += g;
    if (Tensor* gr = in[1])
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)[j] += g(i, j);
  });
}

Var mul_row(Var a, Var row) {
  require_rank2(a, "mul_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require_row_vector(rv, av.cols(), "mul_row");
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= rv[j];
  return a.tape().record(std::move(out), {a, row}, [a, row](const Tensor&, const Tensor& g, Grads in) {
    const Tensor& av = a.value();
    const Tensor& rv = row.value();
    if (Tensor* ga = in[0])
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += g(i, j) * rv[j];
    if (Tensor* gr = in[1])
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)[j] += g(i, j) * av(i, j);
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.tape().record(std::move(out), {a}, [a](const Tensor&, const Tensor& g, Grads in) {
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) (*in[0])[i] += g[i];
  });
}

Var softmax_rows(Var x) {
  require_rank2(x, "softmax_rows");
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto xr = xv.row(i);
    auto yr = out.row(i);
    if (xr.empty()) continue;
    const double mx = *std::max_element(xr.begin(), xr.end());
    double total = 0.0;
    for (std::size_t j = 0; j < xr.size(); ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (auto& v : yr) v /= total;
  }
  return x.tape().record(std::move(out), {x}, [](const Tensor& y, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var x) {
  require_rank2(x, "log_softmax_rows");
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto xr = xv.row(i);
    auto yr = out.row(i);
    if (xr.empty()) continue;
    const double mx = *std::max_element(xr.begin(), xr.end());
    double total = 0.0;
    for (double v : xr) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < xr.size(); ++j) yr[j] = xr[j] - lse;
  }
  return x.tape().record(std::move(out), {x}, [](const Tensor& y, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) gsum += g(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += g(i, j) - std::exp(y(i, j)) * gsum;
    }
  });
}

Var l2_normalize_rows(Var x, double eps) {
  require_rank2(x, "l2_normalize_rows");
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows();
  std::vector<double> denom(m);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (double v : xv.row(i)) ss += v * v;
    denom[i] = std::max(std::sqrt(ss), eps);
    auto yr = out.row(i);
    auto xr = xv.row(i);
    for (std::size_t j = 0; j < xr.size(); ++j) yr[j] = xr[j] / denom[i];
  }
  return x.tape().record(std::move(out), {x}, [denom = std::move(denom), eps](const Tensor& y, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double n = denom[i];
      if (n > eps) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * g(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += (g(i, j) - y(i, j) * dot) / n;
      } else {
        for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += g(i, j) / n;
      }
    }
  });
}

Var standardize_rows(Var x, double eps) {
  require_rank2(x, "standardize_rows");
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  std::vector<double> inv_std(m);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    auto xr = xv.row(i);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    auto yr = out.row(i);
    for (std::size_t j = 0; j < n; ++j) yr[j] = (xr[j] - mu) * inv_std[i];
  }
  return x.tape().record(std::move(out), {x}, [inv_std = std::move(inv_std)](const Tensor& y, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    const std::size_t n = y.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gmean = 0.0, gymean = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        gmean += g(i, j);
        gymean += g(i, j) * y(i, j);
      }
      gmean *= inv_n;
      gymean *= inv_n;
      for (std::size_t j = 0; j < n; ++j)
        gx(i, j) += inv_std[i] * (g(i, j) - gmean - y(i, j) * gymean);
    }
  });
}

Var mse_mean(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mse_mean");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double value = n ? acc / static_cast<double>(n) : 0.0;
  return a.tape().record(Tensor::scalar(value), {a, b}, [a, b](const Tensor&, const Tensor& g, Grads in) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t n = av.size();
    if (n == 0) return;
    const double f = 2.0 * g.item() / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = f * (av[i] - bv[i]);
      if (in[0]) (*in[0])[i] += d;
      if (in[1]) (*in[1])[i] -= d;
    }
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.tape().record(Tensor::scalar(acc), {a}, [](const Tensor&, const Tensor& g, Grads in) {
    const double gv = g.item();
    for (auto& v : in[0]->data()) v += gv;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ValidationError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var gather_rows(Var x, std::vector<Index> index) {
  require_rank2(x, "gather_rows");
  const Tensor& xv = x.value();
  const std::size_t c = xv.cols();
  for (Index i : index) {
    if (i >= static_cast<Index>(xv.rows())) {
      throw ValidationError("gather_rows: index " + std::to_string(i) + " out of range for " +
                            shape_string(xv.shape()));
    }
  }
  Tensor out({index.size(), c});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0) continue;
    auto src = xv.row(static_cast<std::size_t>(index[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return x.tape().record(std::move(out), {x}, [index = std::move(index)](const Tensor&, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (index[r] < 0) continue;
      auto dst = gx.row(static_cast<std::size_t>(index[r]));
      auto src = g.row(r);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var segment_sum(Var x, std::vector<Index> segment, std::size_t num_segments) {
  require_rank2(x, "segment_sum");
  const Tensor& xv = x.value();
  check_index_length(segment, xv.rows(), "segment_sum");
  Tensor out({num_segments, xv.cols()});
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const Index s = segment[r];
    if (s < 0) continue;
    if (s >= static_cast<Index>(num_segments)) throw ValidationError("segment_sum: segment id out of range");
    auto dst = out.row(static_cast<std::size_t>(s));
    auto src = xv.row(r);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return x.tape().record(std::move(out), {x}, [segment = std::move(segment)](const Tensor&, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    for (std::size_t r = 0; r < segment.size(); ++r) {
      if (segment[r] < 0) continue;
      auto src = g.row(static_cast<std::size_t>(segment[r]));
      auto dst = gx.row(r);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var segment_max(Var x, std::vector<Index> segment, std::size_t num_segments, std::vector<Index> tie_key) {
  require_rank2(x, "segment_max");
  const Tensor& xv = x.value();
  check_index_length(segment, xv.rows(), "segment_max");
  check_index_length(tie_key, xv.rows(), "segment_max");
  const std::size_t c = xv.cols();
  // winner[s*c + j] = source row of the max, or -1 for an empty segment.
  std::vector<Index> winner(num_segments * c, -1);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const Index s = segment[r];
    if (s < 0) continue;
    if (s >= static_cast<Index>(num_segments)) throw ValidationError("segment_max: segment id out of range");
    for (std::size_t j = 0; j < c; ++j) {
      Index& w = winner[static_cast<std::size_t>(s) * c + j];
      if (w < 0) {
        w = static_cast<Index>(r);
        continue;
      }
      const double cur = xv(static_cast<std::size_t>(w), j);
      const double v = xv(r, j);
      if (v > cur || (v == cur && tie_key[r] < tie_key[static_cast<std::size_t>(w)])) w = static_cast<Index>(r);
    }
  }
  Tensor out({num_segments, c});
  for (std::size_t s = 0; s < num_segments; ++s)
    for (std::size_t j = 0; j < c; ++j) {
      const Index w = winner[s * c + j];
      if (w >= 0) out(s, j) = xv(static_cast<std::size_t>(w), j);
    }
  return x.tape().record(std::move(out), {x}, [winner = std::move(winner), c](const Tensor&, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    for (std::size_t k = 0; k < winner.size(); ++k) {
      if (winner[k] < 0) continue;
      gx(static_cast<std::size_t>(winner[k]), k % c) += g[k];
    }
  });
}

Var place_blocks(Var x, std::vector<Index> block, std::size_t num_blocks) {
  require_rank2(x, "place_blocks");
  const Tensor& xv = x.value();
  check_index_length(block, xv.rows(), "place_blocks");
  const std::size_t c = xv.cols();
  Tensor out({xv.rows(), num_blocks * c});
  for (std::size_t r = 0; r < block.size(); ++r) {
    if (block[r] < 0 || block[r] >= static_cast<Index>(num_blocks)) {
      throw ValidationError("place_blocks: block id " + std::to_string(block[r]) + " out of range");
    }
    auto src = xv.row(r);
    std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(block[r]) * static_cast<std::ptrdiff_t>(c));
  }
  return x.tape().record(std::move(out), {x}, [block = std::move(block), c](const Tensor&, const Tensor& g, Grads in) {
    Tensor& gx = *in[0];
    for (std::size_t r = 0; r < block.size(); ++r) {
      auto src = g.row(r).subspan(static_cast<std::size_t>(block[r]) * c, c);
      auto dst = gx.row(r);
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

Var pick_weighted_sum(Var x, std::vector<Index> column, std::vector<double> weight) {
  require_rank2(x, "pick_weighted_sum");
  const Tensor& xv = x.value();
  check_index_length(column, xv.rows(), "pick_weighted_sum");
  if (weight.size() != column.size()) throw ValidationError("pick_weighted_sum: weight length mismatch");
  double acc = 0.0;
  for (std::size_t r = 0; r < column.size(); ++r) {
    if (column[r] < 0 || column[r] >= static_cast<Index>(xv.cols())) {
      throw ValidationError("pick_weighted_sum: column " + std::to_string(column[r]) + " out of range");
    }
    acc += weight[r] * xv(r, static_cast<std::size_t>(column[r]));
  }
  return x.tape().record(Tensor::scalar(acc), {x},
                         [column = std::move(column), weight = std::move(weight)](const Tensor&, const Tensor& g, Grads in) {
                           Tensor& gx = *in[0];
                           const double gv = g.item();
                           for (std::size_t r = 0; r < column.size(); ++r)
                             gx(r, static_cast<std::size_t>(column[r])) += gv * weight[r];
                         });
}

}  // namespace bevkd
