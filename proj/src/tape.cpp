#include "tia/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace tia::ad {

namespace {

std::atomic<std::uint32_t> g_tape_counter{1};

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b) {
  throw InvalidArgument(std::string(op_name(kind)) + ": incompatible shapes " +
                        shape_str(a) + " and " + shape_str(b));
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Neg: return "neg";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Abs: return "abs";
    case OpKind::SmoothL1: return "smooth_l1";
    case OpKind::Softmax: return "softmax";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::L2Norm: return "l2norm";
    case OpKind::Reshape: return "reshape";
    case OpKind::StackRows: return "stack_rows";
    case OpKind::SortColumns: return "sort_columns";
    case OpKind::Grl: return "grl";
    case OpKind::Detach: return "detach";
  }
  return "?";
}

const std::vector<double>& GradientMap::at_node(int node) const {
  if (node < 0 || static_cast<std::size_t>(node) >= grads_.size()) {
    throw InvalidArgument("gradient lookup for unknown node " +
                          std::to_string(node));
  }
  return grads_[static_cast<std::size_t>(node)];
}

const std::vector<double>& GradientMap::at(const Tensor& t) const {
  return at_node(t.node);
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

int Tape::new_node(const Shape& shape) {
  node_shapes_.push_back(shape);
  return static_cast<int>(node_shapes_.size()) - 1;
}

void Tape::check_on_tape(OpKind kind, const Tensor& t) const {
  if (t.node < 0 || t.tape_id != id_) {
    throw InvalidArgument(std::string(op_name(kind)) +
                          ": input tensor is not registered on this tape");
  }
}

void Tape::axpy(std::vector<double>& acc, const std::vector<double>& g,
                double factor) {
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += factor * g[i];
}

Tensor Tape::emit(OpKind kind, Shape shape, std::vector<double> values,
                  BackFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(std::string(op_name(kind)) +
                  ": non-finite value in forward output");
    }
  }
  Tensor out(std::move(shape), std::move(values));
  out.node = new_node(out.shape);
  out.tape_id = id_;
  records_.push_back({kind, std::move(backward)});
  return out;
}

Tensor Tape::leaf(const Tensor& value) { return leaf(value.shape, value.values); }

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw InvalidArgument("leaf: shape/value size mismatch");
  }
  Tensor out(std::move(shape), std::move(values));
  out.node = new_node(out.shape);
  out.tape_id = id_;
  records_.push_back({OpKind::Detach, nullptr});  // leaves carry no rule
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check_on_tape(OpKind::Matmul, a);
  check_on_tape(OpKind::Matmul, b);
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    shape_error(OpKind::Matmul, a.shape, b.shape);
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.values[i * k + p];
      const double* brow = &b.values[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  const int an = a.node, bn = b.node;
  std::vector<double> av = a.values, bv = b.values;
  return emit(OpKind::Matmul, {m, n}, std::move(out),
              [an, bn, av = std::move(av), bv = std::move(bv), m, k, n](
                  GradStore& gs, const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                std::vector<double>& gb = gs[bn];
                // dA = g * B^T
                for (std::size_t i = 0; i < m; ++i) {
                  for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = &g[i * n];
                    const double* brow = &bv[p * n];
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                  }
                }
                // dB = A^T * g
                for (std::size_t p = 0; p < k; ++p) {
                  for (std::size_t i = 0; i < m; ++i) {
                    const double av_ip = av[i * k + p];
                    const double* grow = &g[i * n];
                    double* gbrow = &gb[p * n];
                    for (std::size_t j = 0; j < n; ++j)
                      gbrow[j] += av_ip * grow[j];
                  }
                }
              });
}

// add/sub accept identical shapes, or (B,n) op (n) broadcast over the leading
// batch dimension.
Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_on_tape(OpKind::Add, a);
  check_on_tape(OpKind::Add, b);
  const int an = a.node, bn = b.node;
  if (a.shape == b.shape) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = a.values[i] + b.values[i];
    return emit(OpKind::Add, a.shape, std::move(out),
                [an, bn](GradStore& gs, const std::vector<double>& g) {
                  axpy(gs[an], g);
                  axpy(gs[bn], g);
                });
  }
  if (a.rank() == 2 && b.rank() == 1 && a.cols() == b.shape[0]) {
    const std::size_t rows = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j)
        out[r * n + j] = a.values[r * n + j] + b.values[j];
    return emit(OpKind::Add, a.shape, std::move(out),
                [an, bn, rows, n](GradStore& gs, const std::vector<double>& g) {
                  axpy(gs[an], g);
                  std::vector<double>& gb = gs[bn];
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
                });
  }
  shape_error(OpKind::Add, a.shape, b.shape);
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_on_tape(OpKind::Sub, a);
  check_on_tape(OpKind::Sub, b);
  const int an = a.node, bn = b.node;
  if (a.shape == b.shape) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = a.values[i] - b.values[i];
    return emit(OpKind::Sub, a.shape, std::move(out),
                [an, bn](GradStore& gs, const std::vector<double>& g) {
                  axpy(gs[an], g);
                  axpy(gs[bn], g, -1.0);
                });
  }
  if (a.rank() == 2 && b.rank() == 1 && a.cols() == b.shape[0]) {
    const std::size_t rows = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j)
        out[r * n + j] = a.values[r * n + j] - b.values[j];
    return emit(OpKind::Sub, a.shape, std::move(out),
                [an, bn, rows, n](GradStore& gs, const std::vector<double>& g) {
                  axpy(gs[an], g);
                  std::vector<double>& gb = gs[bn];
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < n; ++j) gb[j] -= g[r * n + j];
                });
  }
  shape_error(OpKind::Sub, a.shape, b.shape);
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_on_tape(OpKind::Mul, a);
  check_on_tape(OpKind::Mul, b);
  if (a.shape != b.shape) shape_error(OpKind::Mul, a.shape, b.shape);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values[i] * b.values[i];
  const int an = a.node, bn = b.node;
  std::vector<double> av = a.values, bv = b.values;
  return emit(OpKind::Mul, a.shape, std::move(out),
              [an, bn, av = std::move(av), bv = std::move(bv)](
                  GradStore& gs, const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                std::vector<double>& gb = gs[bn];
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] += g[i] * bv[i];
                  gb[i] += g[i] * av[i];
                }
              });
}

Tensor Tape::scale(const Tensor& a, double factor) {
  check_on_tape(OpKind::Scale, a);
  if (!std::isfinite(factor)) {
    throw InvalidArgument("scale: non-finite factor");
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.values[i];
  const int an = a.node;
  return emit(OpKind::Scale, a.shape, std::move(out),
              [an, factor](GradStore& gs, const std::vector<double>& g) {
                axpy(gs[an], g, factor);
              });
}

Tensor Tape::neg(const Tensor& a) {
  check_on_tape(OpKind::Neg, a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -a.values[i];
  const int an = a.node;
  return emit(OpKind::Neg, a.shape, std::move(out),
              [an](GradStore& gs, const std::vector<double>& g) {
                axpy(gs[an], g, -1.0);
              });
}

Tensor Tape::relu(const Tensor& a) {
  check_on_tape(OpKind::Relu, a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values[i] > 0.0 ? a.values[i] : 0.0;
  const int an = a.node;
  std::vector<double> av = a.values;
  return emit(OpKind::Relu, a.shape, std::move(out),
              [an, av = std::move(av)](GradStore& gs,
                                       const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t i = 0; i < g.size(); ++i)
                  if (av[i] > 0.0) ga[i] += g[i];
              });
}

Tensor Tape::exp(const Tensor& a) {
  check_on_tape(OpKind::Exp, a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values[i]);
  const int an = a.node;
  std::vector<double> ov = out;
  return emit(OpKind::Exp, a.shape, std::move(out),
              [an, ov = std::move(ov)](GradStore& gs,
                                       const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t i = 0; i < g.size(); ++i)
                  ga[i] += g[i] * ov[i];
              });
}

Tensor Tape::log(const Tensor& a) {
  check_on_tape(OpKind::Log, a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log(std::max(a.values[i], kLogFloor));
  const int an = a.node;
  std::vector<double> av = a.values;
  return emit(OpKind::Log, a.shape, std::move(out),
              [an, av = std::move(av)](GradStore& gs,
                                       const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t i = 0; i < g.size(); ++i)
                  if (av[i] >= kLogFloor) ga[i] += g[i] / av[i];
              });
}

Tensor Tape::sigmoid(const Tensor& a) {
  check_on_tape(OpKind::Sigmoid, a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  const int an = a.node;
  std::vector<double> ov = out;
  return emit(OpKind::Sigmoid, a.shape, std::move(out),
              [an, ov = std::move(ov)](GradStore& gs,
                                       const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t i = 0; i < g.size(); ++i)
                  ga[i] += g[i] * ov[i] * (1.0 - ov[i]);
              });
}

Tensor Tape::abs(const Tensor& a) {
  check_on_tape(OpKind::Abs, a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.values[i]);
  const int an = a.node;
  std::vector<double> av = a.values;
  return emit(OpKind::Abs, a.shape, std::move(out),
              [an, av = std::move(av)](GradStore& gs,
                                       const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t i = 0; i < g.size(); ++i) {
                  if (av[i] > 0.0) ga[i] += g[i];
                  else if (av[i] < 0.0) ga[i] -= g[i];
                  // subgradient 0 at exactly 0
                }
              });
}

Tensor Tape::smooth_l1(const Tensor& a) {
  check_on_tape(OpKind::SmoothL1, a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values[i];
    out[i] = std::fabs(x) < 1.0 ? 0.5 * x * x : std::fabs(x) - 0.5;
  }
  const int an = a.node;
  std::vector<double> av = a.values;
  return emit(OpKind::SmoothL1, a.shape, std::move(out),
              [an, av = std::move(av)](GradStore& gs,
                                       const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t i = 0; i < g.size(); ++i) {
                  const double x = av[i];
                  const double d =
                      std::fabs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0);
                  ga[i] += g[i] * d;
                }
              });
}

namespace {

// Iteration geometry for axis ops on rank-1/rank-2 tensors: `slices`
// independent groups of `len` elements, consecutive elements `stride` apart.
struct AxisView {
  std::size_t slices, len, stride, slice_step;
};

AxisView axis_view(OpKind kind, const Shape& shape, int axis) {
  if (shape.size() == 1) {
    if (axis != 0) {
      throw InvalidArgument(std::string(op_name(kind)) +
                            ": axis out of range for rank-1 tensor");
    }
    return {1, shape[0], 1, 0};
  }
  if (shape.size() == 2) {
    if (axis == 0) return {shape[1], shape[0], shape[1], 1};
    if (axis == 1) return {shape[0], shape[1], 1, shape[1]};
    throw InvalidArgument(std::string(op_name(kind)) +
                          ": axis out of range for rank-2 tensor");
  }
  throw InvalidArgument(std::string(op_name(kind)) +
                        ": only rank-1/rank-2 tensors supported, got " +
                        shape_str(shape));
}

Shape reduced_shape(const Shape& shape, int axis) {
  if (shape.size() == 1) return {1};
  return {shape[axis == 0 ? 1 : 0]};
}

}  // namespace

Tensor Tape::softmax(const Tensor& a, int axis) {
  check_on_tape(OpKind::Softmax, a);
  const AxisView v = axis_view(OpKind::Softmax, a.shape, axis);
  std::vector<double> out(a.size());
  for (std::size_t s = 0; s < v.slices; ++s) {
    const std::size_t base = s * v.slice_step;
    double mx = -1e300;
    for (std::size_t i = 0; i < v.len; ++i)
      mx = std::max(mx, a.values[base + i * v.stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) {
      const double e = std::exp(a.values[base + i * v.stride] - mx);
      out[base + i * v.stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < v.len; ++i) out[base + i * v.stride] /= z;
  }
  const int an = a.node;
  std::vector<double> ov = out;
  return emit(OpKind::Softmax, a.shape, std::move(out),
              [an, ov = std::move(ov), v](GradStore& gs,
                                          const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t s = 0; s < v.slices; ++s) {
                  const std::size_t base = s * v.slice_step;
                  double dot = 0.0;
                  for (std::size_t i = 0; i < v.len; ++i) {
                    const std::size_t idx = base + i * v.stride;
                    dot += g[idx] * ov[idx];
                  }
                  for (std::size_t i = 0; i < v.len; ++i) {
                    const std::size_t idx = base + i * v.stride;
                    ga[idx] += ov[idx] * (g[idx] - dot);
                  }
                }
              });
}

Tensor Tape::sum(const Tensor& a, int axis) {
  check_on_tape(OpKind::Sum, a);
  const AxisView v = axis_view(OpKind::Sum, a.shape, axis);
  std::vector<double> out(v.slices, 0.0);
  for (std::size_t s = 0; s < v.slices; ++s) {
    const std::size_t base = s * v.slice_step;
    for (std::size_t i = 0; i < v.len; ++i)
      out[s] += a.values[base + i * v.stride];
  }
  const int an = a.node;
  return emit(OpKind::Sum, reduced_shape(a.shape, axis), std::move(out),
              [an, v](GradStore& gs, const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t s = 0; s < v.slices; ++s) {
                  const std::size_t base = s * v.slice_step;
                  for (std::size_t i = 0; i < v.len; ++i)
                    ga[base + i * v.stride] += g[s];
                }
              });
}

Tensor Tape::mean(const Tensor& a, int axis) {
  check_on_tape(OpKind::Mean, a);
  const AxisView v = axis_view(OpKind::Mean, a.shape, axis);
  const double inv = 1.0 / static_cast<double>(v.len);
  std::vector<double> out(v.slices, 0.0);
  for (std::size_t s = 0; s < v.slices; ++s) {
    const std::size_t base = s * v.slice_step;
    // Anchor-shifted sum: exact for constant slices, so downstream
    // deviations of identical predictions are exactly zero.
    const double anchor = a.values[base];
    double acc = 0.0;
    for (std::size_t i = 0; i < v.len; ++i)
      acc += a.values[base + i * v.stride] - anchor;
    out[s] = anchor + acc * inv;
  }
  const int an = a.node;
  return emit(OpKind::Mean, reduced_shape(a.shape, axis), std::move(out),
              [an, v, inv](GradStore& gs, const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t s = 0; s < v.slices; ++s) {
                  const std::size_t base = s * v.slice_step;
                  for (std::size_t i = 0; i < v.len; ++i)
                    ga[base + i * v.stride] += g[s] * inv;
                }
              });
}

Tensor Tape::l2norm(const Tensor& a, int axis) {
  check_on_tape(OpKind::L2Norm, a);
  const AxisView v = axis_view(OpKind::L2Norm, a.shape, axis);
  std::vector<double> out(v.slices, 0.0);
  for (std::size_t s = 0; s < v.slices; ++s) {
    const std::size_t base = s * v.slice_step;
    double acc = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) {
      const double x = a.values[base + i * v.stride];
      acc += x * x;
    }
    out[s] = std::sqrt(acc);
  }
  const int an = a.node;
  std::vector<double> av = a.values;
  std::vector<double> ov = out;
  return emit(OpKind::L2Norm, reduced_shape(a.shape, axis), std::move(out),
              [an, v, av = std::move(av), ov = std::move(ov)](
                  GradStore& gs, const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t s = 0; s < v.slices; ++s) {
                  if (ov[s] == 0.0) continue;  // subgradient 0 at agreement
                  const std::size_t base = s * v.slice_step;
                  const double f = g[s] / ov[s];
                  for (std::size_t i = 0; i < v.len; ++i) {
                    const std::size_t idx = base + i * v.stride;
                    ga[idx] += f * av[idx];
                  }
                }
              });
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
  check_on_tape(OpKind::Reshape, a);
  if (numel(shape) != a.size()) {
    shape_error(OpKind::Reshape, a.shape, shape);
  }
  const int an = a.node;
  return emit(OpKind::Reshape, std::move(shape), std::vector<double>(a.values),
              [an](GradStore& gs, const std::vector<double>& g) {
                axpy(gs[an], g);
              });
}

Tensor Tape::stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw InvalidArgument("stack_rows: no inputs");
  }
  const std::size_t n = parts[0].size();
  std::vector<int> nodes;
  std::vector<double> out;
  out.reserve(parts.size() * n);
  for (const Tensor& p : parts) {
    check_on_tape(OpKind::StackRows, p);
    if (p.size() != n) shape_error(OpKind::StackRows, parts[0].shape, p.shape);
    nodes.push_back(p.node);
    out.insert(out.end(), p.values.begin(), p.values.end());
  }
  return emit(OpKind::StackRows, {parts.size(), n}, std::move(out),
              [nodes = std::move(nodes), n](GradStore& gs,
                                            const std::vector<double>& g) {
                for (std::size_t r = 0; r < nodes.size(); ++r) {
                  std::vector<double>& gp = gs[nodes[r]];
                  for (std::size_t i = 0; i < n; ++i) gp[i] += g[r * n + i];
                }
              });
}

Tensor Tape::sort_columns(const Tensor& a) {
  check_on_tape(OpKind::SortColumns, a);
  if (a.rank() != 2) {
    throw InvalidArgument("sort_columns: rank-2 tensor required, got " +
                          shape_str(a.shape));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.size());
  std::vector<std::uint32_t> perm(a.size());  // perm[c*rows+i] = source row
  std::vector<std::uint32_t> order(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t i = 0; i < rows; ++i)
      order[i] = static_cast<std::uint32_t>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t x, std::uint32_t y) {
                       return a.values[x * cols + c] < a.values[y * cols + c];
                     });
    for (std::size_t i = 0; i < rows; ++i) {
      out[i * cols + c] = a.values[order[i] * cols + c];
      perm[c * rows + i] = order[i];
    }
  }
  const int an = a.node;
  return emit(OpKind::SortColumns, a.shape, std::move(out),
              [an, perm = std::move(perm), rows, cols](
                  GradStore& gs, const std::vector<double>& g) {
                std::vector<double>& ga = gs[an];
                for (std::size_t c = 0; c < cols; ++c)
                  for (std::size_t i = 0; i < rows; ++i)
                    ga[perm[c * rows + i] * cols + c] += g[i * cols + c];
              });
}

Tensor Tape::grl(const Tensor& a, double grl_scale) {
  check_on_tape(OpKind::Grl, a);
  if (!std::isfinite(grl_scale) || grl_scale < 0.0) {
    throw InvalidArgument(
        "grl: scale must be finite and nonnegative (sign semantics live in "
        "the reversal)");
  }
  const int an = a.node;
  return emit(OpKind::Grl, a.shape, std::vector<double>(a.values),
              [an, grl_scale](GradStore& gs, const std::vector<double>& g) {
                axpy(gs[an], g, -grl_scale);
              });
}

Tensor Tape::detach(const Tensor& a) {
  check_on_tape(OpKind::Detach, a);
  Tensor out(a.shape, a.values);
  out.node = new_node(out.shape);
  out.tape_id = id_;
  records_.push_back({OpKind::Detach, nullptr});
  return out;
}

Tensor Tape::apply(OpKind kind, const std::vector<Tensor>& inputs, int axis,
                   double scalar) {
  auto one = [&]() -> const Tensor& {
    if (inputs.size() != 1)
      throw InvalidArgument(std::string(op_name(kind)) + ": expects 1 input");
    return inputs[0];
  };
  auto two = [&]() {
    if (inputs.size() != 2)
      throw InvalidArgument(std::string(op_name(kind)) + ": expects 2 inputs");
  };
  switch (kind) {
    case OpKind::Matmul: two(); return matmul(inputs[0], inputs[1]);
    case OpKind::Add: two(); return add(inputs[0], inputs[1]);
    case OpKind::Sub: two(); return sub(inputs[0], inputs[1]);
    case OpKind::Mul: two(); return mul(inputs[0], inputs[1]);
    case OpKind::Scale: return scale(one(), scalar);
    case OpKind::Neg: return neg(one());
    case OpKind::Relu: return relu(one());
    case OpKind::Exp: return exp(one());
    case OpKind::Log: return log(one());
    case OpKind::Sigmoid: return sigmoid(one());
    case OpKind::Abs: return abs(one());
    case OpKind::SmoothL1: return smooth_l1(one());
    case OpKind::Softmax: return softmax(one(), axis);
    case OpKind::Sum: return sum(one(), axis);
    case OpKind::Mean: return mean(one(), axis);
    case OpKind::L2Norm: return l2norm(one(), axis);
    case OpKind::Reshape: return reshape(one(), {one().size()});
    case OpKind::StackRows: return stack_rows(inputs);
    case OpKind::SortColumns: return sort_columns(one());
    case OpKind::Grl: return grl(one(), scalar);
    case OpKind::Detach: return detach(one());
  }
  throw InvalidArgument("apply: unknown op kind");
}

GradientMap Tape::backward(const Tensor& loss) const {
  check_on_tape(OpKind::Detach, loss);
  if (numel(loss.shape) != 1) {
    throw InvalidArgument("backward: loss must be scalar, got " +
                          shape_str(loss.shape));
  }
  GradientMap map;
  GradStore& gs = map.grads_;
  gs.resize(node_shapes_.size());
  for (std::size_t i = 0; i < gs.size(); ++i)
    gs[i].assign(numel(node_shapes_[i]), 0.0);
  gs[static_cast<std::size_t>(loss.node)][0] = 1.0;

  // Records and nodes are 1:1, so record index r is the output node of the
  // r-th operation; walk in exact reverse recording order.
  for (std::size_t r = records_.size(); r-- > 0;) {
    const Record& rec = records_[r];
    if (!rec.backward) continue;
    rec.backward(gs, gs[r]);
  }
  return map;
}

}  // namespace tia::ad
