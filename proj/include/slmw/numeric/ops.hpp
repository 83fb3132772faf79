#ifndef SLMW_NUMERIC_OPS_HPP
#define SLMW_NUMERIC_OPS_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slmw/numeric/tensor.hpp"

namespace slmw::numeric {

/// Cubic coefficient of the tanh approximation to GELU.
inline constexpr double kGeluCubic = 0.044715;

namespace detail {

inline void require_same_shape(Index r1, Index c1, Index r2, Index c2, const char* op) {
  if (r1 != r2 || c1 != c2) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op) + ": shape (" + std::to_string(r1) + "," + std::to_string(c1) +
                    ") vs (" + std::to_string(r2) + "," + std::to_string(c2) + ")");
  }
}

template <typename Scalar>
MatrixX<Scalar> softmax_rows(const MatrixX<Scalar>& x) {
  MatrixX<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar max = x.row(r).maxCoeff();
    if (!std::isfinite(max)) {
      // fully masked row
      y.row(r).setZero();
      continue;
    }
    y.row(r) = (x.row(r).array() - max).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

// dx = y * (g - rowsum(g * y))
template <typename Scalar>
MatrixX<Scalar> softmax_rows_backward(const MatrixX<Scalar>& y, const MatrixX<Scalar>& g) {
  const auto dots = (g.array() * y.array()).rowwise().sum().eval();
  return (y.array() * (g.array().colwise() - dots)).matrix();
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "matmul: inner dimensions " + std::to_string(a.cols()) +
                                               " and " + std::to_string(b.rows()));
  }
  auto na = a.node();
  auto nb = b.node();
  return BasicTensor<Scalar>::make_result(a.value() * b.value(), {a, b},
                                          [na, nb](const MatrixX<Scalar>& g) {
                                            detail::accumulate(*na, g * nb->value.transpose());
                                            detail::accumulate(*nb, na->value.transpose() * g);
                                          });
}

/// a * b^T without materializing the transpose.
template <typename Scalar>
BasicTensor<Scalar> matmul_transposed(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "matmul_transposed: column counts " +
                                               std::to_string(a.cols()) + " and " +
                                               std::to_string(b.cols()));
  }
  auto na = a.node();
  auto nb = b.node();
  return BasicTensor<Scalar>::make_result(a.value() * b.value().transpose(), {a, b},
                                          [na, nb](const MatrixX<Scalar>& g) {
                                            detail::accumulate(*na, g * nb->value);
                                            detail::accumulate(*nb, g.transpose() * na->value);
                                          });
}

template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& a) {
  auto na = a.node();
  return BasicTensor<Scalar>::make_result(
      a.value().transpose(), {a},
      [na](const MatrixX<Scalar>& g) { detail::accumulate(*na, g.transpose()); });
}

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "add");
  auto na = a.node();
  auto nb = b.node();
  return BasicTensor<Scalar>::make_result(a.value() + b.value(), {a, b},
                                          [na, nb](const MatrixX<Scalar>& g) {
                                            detail::accumulate(*na, g);
                                            detail::accumulate(*nb, g);
                                          });
}

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "sub");
  auto na = a.node();
  auto nb = b.node();
  return BasicTensor<Scalar>::make_result(a.value() - b.value(), {a, b},
                                          [na, nb](const MatrixX<Scalar>& g) {
                                            detail::accumulate(*na, g);
                                            detail::accumulate(*nb, -g);
                                          });
}

/// Elementwise product.
template <typename Scalar>
BasicTensor<Scalar> mul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), "mul");
  auto na = a.node();
  auto nb = b.node();
  return BasicTensor<Scalar>::make_result(
      a.value().cwiseProduct(b.value()), {a, b}, [na, nb](const MatrixX<Scalar>& g) {
        detail::accumulate(*na, g.cwiseProduct(nb->value));
        detail::accumulate(*nb, g.cwiseProduct(na->value));
      });
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar s) {
  auto na = a.node();
  return BasicTensor<Scalar>::make_result(
      a.value() * s, {a}, [na, s](const MatrixX<Scalar>& g) { detail::accumulate(*na, g * s); });
}

/// Adds a 1xN row to every row of an MxN tensor.
template <typename Scalar>
BasicTensor<Scalar> add_row(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "add_row: row must be 1x" + std::to_string(a.cols()));
  }
  auto na = a.node();
  auto nr = row.node();
  MatrixX<Scalar> out = a.value();
  out.rowwise() += row.value().row(0);
  return BasicTensor<Scalar>::make_result(std::move(out), {a, row},
                                          [na, nr](const MatrixX<Scalar>& g) {
                                            detail::accumulate(*na, g);
                                            detail::accumulate(*nr, g.colwise().sum());
                                          });
}

/// Adds a constant (non-differentiable) row, e.g. an additive attention mask
/// holding 0 or -infinity.
template <typename Scalar>
BasicTensor<Scalar> add_constant_row(const BasicTensor<Scalar>& a, const RowVectorX<Scalar>& row) {
  if (row.cols() != a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "add_constant_row: width mismatch");
  }
  auto na = a.node();
  MatrixX<Scalar> out = a.value();
  out.rowwise() += row;
  return BasicTensor<Scalar>::make_result(
      std::move(out), {a}, [na](const MatrixX<Scalar>& g) { detail::accumulate(*na, g); });
}

template <typename Scalar>
BasicTensor<Scalar> tanh(const BasicTensor<Scalar>& a) {
  auto na = a.node();
  MatrixX<Scalar> y = a.value().array().tanh().matrix();
  return BasicTensor<Scalar>::make_result(y, {a}, [na, y](const MatrixX<Scalar>& g) {
    detail::accumulate(*na, (g.array() * (Scalar(1) - y.array().square())).matrix());
  });
}

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename Scalar>
BasicTensor<Scalar> gelu(const BasicTensor<Scalar>& a) {
  const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
  const Scalar k = static_cast<Scalar>(kGeluCubic);
  auto na = a.node();
  const auto& x = a.value().array();
  MatrixX<Scalar> t = (c * (x + k * x.cube())).tanh().matrix();
  MatrixX<Scalar> y = (Scalar(0.5) * x * (Scalar(1) + t.array())).matrix();
  return BasicTensor<Scalar>::make_result(std::move(y), {a}, [na, t, c, k](const MatrixX<Scalar>& g) {
    const auto& xv = na->value.array();
    const auto dt = (Scalar(1) - t.array().square()) * c * (Scalar(1) + Scalar(3) * k * xv.square());
    const auto dy = Scalar(0.5) * (Scalar(1) + t.array()) + Scalar(0.5) * xv * dt;
    detail::accumulate(*na, (g.array() * dy).matrix());
  });
}

/// Softmax along `axis` (1 = across each row, 0 = down each column), with
/// max subtraction. Rows that are entirely -infinity come out as zeros.
template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& a, int axis = 1) {
  if (axis != 0 && axis != 1) throw Error(ErrorCode::kInvalidArgument, "softmax axis must be 0 or 1");
  auto na = a.node();
  if (axis == 1) {
    MatrixX<Scalar> y = detail::softmax_rows<Scalar>(a.value());
    return BasicTensor<Scalar>::make_result(y, {a}, [na, y](const MatrixX<Scalar>& g) {
      detail::accumulate(*na, detail::softmax_rows_backward<Scalar>(y, g));
    });
  }
  MatrixX<Scalar> yt = detail::softmax_rows<Scalar>(a.value().transpose());
  return BasicTensor<Scalar>::make_result(
      yt.transpose(), {a}, [na, yt](const MatrixX<Scalar>& g) {
        MatrixX<Scalar> gt = g.transpose();
        detail::accumulate(*na, detail::softmax_rows_backward<Scalar>(yt, gt).transpose());
      });
}

/// Normalizes each row to mean 0 / population variance 1 (eps inside the
/// square root), then applies the 1xN gain and bias.
template <typename Scalar>
BasicTensor<Scalar> layer_norm(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& gain,
                               const BasicTensor<Scalar>& bias, Scalar eps = Scalar(1e-12)) {
  const Index n = x.cols();
  if (n < 1) throw Error(ErrorCode::kShapeMismatch, "layer_norm: empty last axis");
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw Error(ErrorCode::kShapeMismatch, "layer_norm: gain/bias must be 1x" + std::to_string(n));
  }
  const auto& xv = x.value();
  RowVectorX<Scalar> inv_std(xv.rows());
  MatrixX<Scalar> xhat(xv.rows(), n);
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mean = xv.row(r).mean();
    const auto centered = (xv.row(r).array() - mean).eval();
    const Scalar var = centered.square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  MatrixX<Scalar> y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  y.rowwise() += bias.value().row(0);

  auto nx = x.node();
  auto ng = gain.node();
  auto nb = bias.node();
  return BasicTensor<Scalar>::make_result(
      std::move(y), {x, gain, bias},
      [nx, ng, nb, xhat, inv_std, n](const MatrixX<Scalar>& g) {
        detail::accumulate(*ng, g.cwiseProduct(xhat).colwise().sum());
        detail::accumulate(*nb, g.colwise().sum());
        if (!nx->requires_grad) return;
        const MatrixX<Scalar> gx_hat = (g.array().rowwise() * ng->value.row(0).array()).matrix();
        MatrixX<Scalar> gx(g.rows(), n);
        for (Index r = 0; r < g.rows(); ++r) {
          const Scalar mean_g = gx_hat.row(r).mean();
          const Scalar mean_gx = gx_hat.row(r).dot(xhat.row(r)) / static_cast<Scalar>(n);
          gx.row(r) =
              ((gx_hat.row(r).array() - mean_g - xhat.row(r).array() * mean_gx) * inv_std(r))
                  .matrix();
        }
        detail::accumulate(*nx, gx);
      });
}

/// Row lookup: result row i is table row ids[i]. Gradients scatter-add.
template <typename Scalar>
BasicTensor<Scalar> gather_rows(const BasicTensor<Scalar>& table, std::span<const int> ids) {
  MatrixX<Scalar> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw Error(ErrorCode::kOutOfRange, "gather_rows: id " + std::to_string(ids[i]) +
                                              " outside table of " + std::to_string(table.rows()) +
                                              " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  auto nt = table.node();
  std::vector<int> idx(ids.begin(), ids.end());
  return BasicTensor<Scalar>::make_result(std::move(out), {table},
                                          [nt, idx = std::move(idx)](const MatrixX<Scalar>& g) {
                                            if (!nt->requires_grad) return;
                                            if (nt->grad.size() == 0) {
                                              nt->grad = MatrixX<Scalar>::Zero(nt->value.rows(),
                                                                               nt->value.cols());
                                            }
                                            for (std::size_t i = 0; i < idx.size(); ++i) {
                                              nt->grad.row(idx[i]) += g.row(static_cast<Index>(i));
                                            }
                                          });
}

template <typename Scalar>
BasicTensor<Scalar> block(const BasicTensor<Scalar>& a, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw Error(ErrorCode::kOutOfRange, "block: region outside tensor");
  }
  auto na = a.node();
  return BasicTensor<Scalar>::make_result(
      a.value().block(row, col, rows, cols), {a},
      [na, row, col](const MatrixX<Scalar>& g) { detail::accumulate_block(*na, row, col, g); });
}

template <typename Scalar>
BasicTensor<Scalar> concat_rows(std::span<const BasicTensor<Scalar>> parts) {
  if (parts.empty()) throw Error(ErrorCode::kEmptyInput, "concat_rows: no inputs");
  Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw Error(ErrorCode::kShapeMismatch, "concat_rows: widths differ");
    total += p.rows();
  }
  MatrixX<Scalar> out(total, parts[0].cols());
  std::vector<std::shared_ptr<typename BasicTensor<Scalar>::NodeType>> parents;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
    parents.push_back(p.node());
  }
  auto captured = parents;
  return BasicTensor<Scalar>::make_result(std::move(out), std::move(parents),
                                          [captured](const MatrixX<Scalar>& g) {
                                            Index at = 0;
                                            for (const auto& n : captured) {
                                              const Index r = n->value.rows();
                                              detail::accumulate(*n, g.middleRows(at, r));
                                              at += r;
                                            }
                                          });
}

template <typename Scalar>
BasicTensor<Scalar> concat_cols(std::span<const BasicTensor<Scalar>> parts) {
  if (parts.empty()) throw Error(ErrorCode::kEmptyInput, "concat_cols: no inputs");
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw Error(ErrorCode::kShapeMismatch, "concat_cols: heights differ");
    total += p.cols();
  }
  MatrixX<Scalar> out(parts[0].rows(), total);
  std::vector<std::shared_ptr<typename BasicTensor<Scalar>::NodeType>> parents;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    parents.push_back(p.node());
  }
  auto captured = parents;
  return BasicTensor<Scalar>::make_result(std::move(out), std::move(parents),
                                          [captured](const MatrixX<Scalar>& g) {
                                            Index at = 0;
                                            for (const auto& n : captured) {
                                              const Index c = n->value.cols();
                                              detail::accumulate(*n, g.middleCols(at, c));
                                              at += c;
                                            }
                                          });
}

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& a) {
  auto na = a.node();
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return BasicTensor<Scalar>::make_result(std::move(out), {a}, [na](const MatrixX<Scalar>& g) {
    detail::accumulate(*na, MatrixX<Scalar>::Constant(na->value.rows(), na->value.cols(), g(0, 0)));
  });
}

template <typename Scalar>
BasicTensor<Scalar> mean(const BasicTensor<Scalar>& a) {
  if (a.size() == 0) throw Error(ErrorCode::kEmptyInput, "mean of an empty tensor");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.size()));
}

/// Mean negative log-softmax probability of targets[i] in logits row i,
/// over rows whose target is not ignore_id.
template <typename Scalar>
BasicTensor<Scalar> cross_entropy(const BasicTensor<Scalar>& logits, std::span<const int> targets,
                                  int ignore_id) {
  if (static_cast<Index>(targets.size()) != logits.rows()) {
    throw Error(ErrorCode::kLengthMismatch, "cross_entropy: " + std::to_string(targets.size()) +
                                                " targets for " + std::to_string(logits.rows()) +
                                                " rows");
  }
  Index counted = 0;
  for (int t : targets) {
    if (t == ignore_id) continue;
    if (t < 0 || t >= logits.cols()) {
      throw Error(ErrorCode::kOutOfRange, "cross_entropy: target " + std::to_string(t) +
                                              " outside " + std::to_string(logits.cols()) +
                                              " classes");
    }
    ++counted;
  }
  if (counted == 0) throw Error(ErrorCode::kEmptyInput, "cross_entropy: every position is ignored");

  const auto& x = logits.value();
  MatrixX<Scalar> probs = MatrixX<Scalar>::Zero(x.rows(), x.cols());
  Scalar total = 0;
  for (Index r = 0; r < x.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == ignore_id) continue;
    const Scalar max = x.row(r).maxCoeff();
    const auto shifted = (x.row(r).array() - max).eval();
    const Scalar log_z = std::log(shifted.exp().sum());
    total -= shifted(t) - log_z;
    probs.row(r) = (shifted - log_z).exp().matrix();
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(counted);
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = total * inv;

  auto nl = logits.node();
  std::vector<int> tgt(targets.begin(), targets.end());
  return BasicTensor<Scalar>::make_result(
      std::move(out), {logits},
      [nl, probs = std::move(probs), tgt = std::move(tgt), inv, ignore_id](const MatrixX<Scalar>& g) {
        MatrixX<Scalar> d = probs;
        for (std::size_t r = 0; r < tgt.size(); ++r) {
          if (tgt[r] != ignore_id) d(static_cast<Index>(r), tgt[r]) -= Scalar(1);
        }
        detail::accumulate(*nl, d * (g(0, 0) * inv));
      });
}

/// Inverted dropout; identity when rate is 0.
template <typename Scalar, typename Rng>
BasicTensor<Scalar> dropout(const BasicTensor<Scalar>& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error(ErrorCode::kInvalidArgument, "dropout rate must be in [0,1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar factor = static_cast<Scalar>(1.0 / (1.0 - rate));
  MatrixX<Scalar> mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? factor : Scalar(0);
  auto na = a.node();
  return BasicTensor<Scalar>::make_result(
      a.value().cwiseProduct(mask), {a},
      [na, mask](const MatrixX<Scalar>& g) { detail::accumulate(*na, g.cwiseProduct(mask)); });
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return sub(a, b);
}

/// Matrix product, as for Eigen matrices.
template <typename Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return matmul(a, b);
}

template <typename Scalar>
BasicTensor<Scalar> operator*(Scalar s, const BasicTensor<Scalar>& a) {
  return scale(a, s);
}

}  // namespace slmw::numeric

#endif  // SLMW_NUMERIC_OPS_HPP
