// Tape-based reverse-mode automatic differentiation.
//
// Every primitive's backward rule is written in terms of the primitives
// themselves, so a backward pass appends ordinary nodes to the tape and the
// result of gradient() can be differentiated again. That single mechanism
// carries the input-gradient losses (second order) and the meta-gradient
// (third order).
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hammeta/common.hpp"
#include "hammeta/tensor.hpp"

namespace hammeta::ad {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  kInput,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kMatMul,
  kExp,
  kLog,
  kSin,
  kCos,
  kSqrt,
  kTanh,
  kSoftplus,
  kMish,
  kLogCosh,
  kSum,
  kMean,
  kConcat,
  kSlice,
  kBroadcast,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kMatMul: return "matmul";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kSqrt: return "sqrt";
    case Op::kTanh: return "tanh";
    case Op::kSoftplus: return "softplus";
    case Op::kMish: return "mish";
    case Op::kLogCosh: return "logcosh";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kBroadcast: return "broadcast";
  }
  return "?";
}

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  Tensor value;
  bool requires_grad{false};
  // op-specific attributes
  bool trans_a{false}, trans_b{false};            // matmul
  int axis{0};                                    // concat
  std::size_t r0{0}, r1{0}, c0{0}, c1{0};         // slice
  std::string name;                               // inputs only
};

class Tape;

// Cheap handle to a tape node.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  NodeId id() const { return id_; }
  Tape& tape() const { return *tape_; }
  Tape* tape_ptr() const { return tape_; }
  inline const Tensor& value() const;
  inline const Shape& shape() const;
  inline bool requires_grad() const;

 private:
  Tape* tape_{nullptr};
  NodeId id_{0};
};

// Evaluates one node given a value lookup for its inputs. Shared by eager
// recording and by re-evaluation under fresh bindings.
template <class ValueAt>
Tensor eval_op(const Node& n, ValueAt&& at) {
  switch (n.op) {
    case Op::kInput:
    case Op::kConstant:
      return n.value;
    case Op::kAdd: return add(at(n.inputs[0]), at(n.inputs[1]));
    case Op::kSub: return sub(at(n.inputs[0]), at(n.inputs[1]));
    case Op::kMul: return mul(at(n.inputs[0]), at(n.inputs[1]));
    case Op::kDiv: return div(at(n.inputs[0]), at(n.inputs[1]));
    case Op::kNeg: return neg(at(n.inputs[0]));
    case Op::kMatMul:
      return matmul(at(n.inputs[0]), at(n.inputs[1]), n.trans_a, n.trans_b);
    case Op::kExp:
      return detail::map(at(n.inputs[0]), [](double x) { return std::exp(x); });
    case Op::kLog:
      return detail::map(at(n.inputs[0]), [](double x) {
        if (x <= 0.0) throw DomainError("log: non-positive input");
        return std::log(x);
      });
    case Op::kSin:
      return detail::map(at(n.inputs[0]), [](double x) { return std::sin(x); });
    case Op::kCos:
      return detail::map(at(n.inputs[0]), [](double x) { return std::cos(x); });
    case Op::kSqrt:
      return detail::map(at(n.inputs[0]), [](double x) {
        if (x < 0.0) throw DomainError("sqrt: negative input");
        return std::sqrt(x);
      });
    case Op::kTanh:
      return detail::map(at(n.inputs[0]), [](double x) { return std::tanh(x); });
    case Op::kSoftplus: return detail::map(at(n.inputs[0]), softplus_scalar);
    case Op::kMish: return detail::map(at(n.inputs[0]), mish_scalar);
    case Op::kLogCosh: return detail::map(at(n.inputs[0]), logcosh_scalar);
    case Op::kSum: return reduce_sum(at(n.inputs[0]));
    case Op::kMean: return reduce_mean(at(n.inputs[0]));
    case Op::kConcat: {
      std::vector<Tensor> parts;
      parts.reserve(n.inputs.size());
      for (NodeId i : n.inputs) parts.push_back(at(i));
      return concat(parts, n.axis);
    }
    case Op::kSlice:
      return slice(at(n.inputs[0]), n.r0, n.r1, n.c0, n.c1);
    case Op::kBroadcast:
      return broadcast_to(at(n.inputs[0]), n.value.shape());
  }
  throw TapeError("eval_op: unknown op");
}

// Append-only sequence of primitive operations; inputs of a node always
// precede it, so tape order is a topological order. Single-owner while
// recording; results are plain tensors, safe to read anywhere.
class Tape {
 public:
  Var input(std::string name, Tensor v, bool requires_grad = true) {
    if (inputs_by_name_.count(name) != 0) {
      throw TapeError("input '" + name + "' already bound on this tape");
    }
    Node n;
    n.op = Op::kInput;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.name = name;
    const NodeId id = append(std::move(n));
    inputs_by_name_.emplace(std::move(name), id);
    return Var(this, id);
  }

  Var constant(Tensor v) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(v);
    n.requires_grad = false;
    return Var(this, append(std::move(n)));
  }

  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  // Records `n` (inputs must already be on this tape) and evaluates it.
  Var emit(Node n) {
    for (NodeId i : n.inputs) {
      if (i >= nodes_.size()) throw TapeError("emit: input node not on tape");
      n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    }
    try {
      if (n.op == Op::kBroadcast) {
        // target shape is carried in n.value (empty tensor of the right shape)
        n.value = broadcast_to(nodes_[n.inputs[0]].value, n.value.shape());
      } else {
        n.value = eval_op(n, [this](NodeId i) -> const Tensor& { return nodes_[i].value; });
      }
    } catch (const ShapeError& e) {
      throw ShapeErrorAt(e.what(), nodes_.size(), n.op);
    }
    return Var(this, append(std::move(n)));
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const {
    if (id >= nodes_.size()) throw TapeError("node id out of range");
    return nodes_[id];
  }
  const std::unordered_map<std::string, NodeId>& inputs_by_name() const {
    return inputs_by_name_;
  }

 private:
  static ShapeError ShapeErrorAt(const std::string& what, std::size_t id, Op op) {
    return ShapeError("node #" + std::to_string(id) + " (" + op_name(op) + "): " + what);
  }
  NodeId append(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> inputs_by_name_;
};

inline const Tensor& Var::value() const { return tape_->node(id_).value; }
inline const Shape& Var::shape() const { return value().shape(); }
inline bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

// ---------------------------------------------------------------------------
// Recording helpers.

namespace detail {
inline Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape_ptr() != b.tape_ptr()) {
    throw TapeError(std::string(op) + ": operands on different tapes");
  }
  return a.tape();
}

inline Var binary(Op op, Var a, Var b) {
  Tape& t = same_tape(a, b, op_name(op));
  Node n;
  n.op = op;
  n.inputs = {a.id(), b.id()};
  return t.emit(std::move(n));
}

inline Var unary(Op op, Var a) {
  Node n;
  n.op = op;
  n.inputs = {a.id()};
  return a.tape().emit(std::move(n));
}
}  // namespace detail

inline Var add(Var a, Var b) { return detail::binary(Op::kAdd, a, b); }
inline Var sub(Var a, Var b) { return detail::binary(Op::kSub, a, b); }
inline Var mul(Var a, Var b) { return detail::binary(Op::kMul, a, b); }
inline Var div(Var a, Var b) { return detail::binary(Op::kDiv, a, b); }
inline Var neg(Var a) { return detail::unary(Op::kNeg, a); }
inline Var exp(Var a) { return detail::unary(Op::kExp, a); }
inline Var log(Var a) { return detail::unary(Op::kLog, a); }
inline Var sin(Var a) { return detail::unary(Op::kSin, a); }
inline Var cos(Var a) { return detail::unary(Op::kCos, a); }
inline Var sqrt(Var a) { return detail::unary(Op::kSqrt, a); }
inline Var tanh(Var a) { return detail::unary(Op::kTanh, a); }
inline Var softplus(Var a) { return detail::unary(Op::kSoftplus, a); }
inline Var mish(Var a) { return detail::unary(Op::kMish, a); }
inline Var logcosh(Var a) { return detail::unary(Op::kLogCosh, a); }
inline Var sum(Var a) { return detail::unary(Op::kSum, a); }
inline Var mean(Var a) { return detail::unary(Op::kMean, a); }

inline Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
  Tape& t = detail::same_tape(a, b, "matmul");
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a.id(), b.id()};
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  return t.emit(std::move(n));
}

inline Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw TapeError("concat: no operands");
  Node n;
  n.op = Op::kConcat;
  n.axis = axis;
  for (Var p : parts) {
    detail::same_tape(parts[0], p, "concat");
    n.inputs.push_back(p.id());
  }
  return parts[0].tape().emit(std::move(n));
}
inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

inline Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  Node n;
  n.op = Op::kSlice;
  n.inputs = {a.id()};
  n.r0 = r0; n.r1 = r1; n.c0 = c0; n.c1 = c1;
  return a.tape().emit(std::move(n));
}
inline Var rows(Var a, std::size_t r0, std::size_t r1) {
  return slice(a, r0, r1, 0, a.shape().cols);
}
inline Var cols(Var a, std::size_t c0, std::size_t c1) {
  return slice(a, 0, a.shape().rows, c0, c1);
}

inline Var broadcast_to(Var a, Shape target) {
  if (a.shape() == target) return a;
  Node n;
  n.op = Op::kBroadcast;
  n.inputs = {a.id()};
  n.value = Tensor(target);  // placeholder carrying the target shape
  return a.tape().emit(std::move(n));
}

inline Var scale(Var a, double c) {
  return mul(a, broadcast_to(a.tape().scalar(c), a.shape()));
}
inline Var add_scalar(Var a, double c) {
  return add(a, broadcast_to(a.tape().scalar(c), a.shape()));
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }

// Same value, no gradient path.
inline Var detach(Var a) { return a.tape().constant(a.value()); }

inline Var one_minus_square(Var y) {  // 1 - y^2
  return add_scalar(neg(mul(y, y)), 1.0);
}
inline Var sigmoid_expr(Var x) {  // 0.5 * (1 + tanh(x/2)), itself in primitives
  return scale(add_scalar(tanh(scale(x, 0.5)), 1.0), 0.5);
}

// ---------------------------------------------------------------------------
// Reverse pass. Appends backward nodes to the tape (the backward computation
// is itself a tape program), so the returned gradients are differentiable
// again. With create_graph=false they are detached to constants.
inline std::vector<Var> gradient(Var output, std::span<const Var> wrt,
                                 bool create_graph = true) {
  if (!output.valid()) throw TapeError("gradient: invalid output");
  Tape& tape = output.tape();
  for (Var w : wrt) {
    if (!w.valid() || w.tape_ptr() != &tape) {
      throw TapeError("gradient: wrt node not on the output's tape");
    }
  }
  if (output.value().numel() != 1) {
    throw TapeError("gradient: output must be scalar, got shape " +
                    output.shape().str());
  }

  // Propagate only through nodes that can reach a wrt node; everything else
  // cannot influence the requested gradients.
  std::vector<char> reach(static_cast<std::size_t>(output.id()) + 1, 0);
  for (Var w : wrt) {
    if (w.id() <= output.id()) reach[w.id()] = 1;
  }
  for (NodeId id = 0; id <= output.id(); ++id) {
    if (reach[id]) continue;
    for (NodeId in : tape.node(id).inputs) {
      if (reach[in]) {
        reach[id] = 1;
        break;
      }
    }
  }

  std::vector<Var> adj(static_cast<std::size_t>(output.id()) + 1);
  auto acc = [&](NodeId in, Var g) {
    if (!tape.node(in).requires_grad || !reach[in]) return;
    adj[in] = adj[in].valid() ? add(adj[in], g) : g;
  };

  if (output.requires_grad() && reach[output.id()]) {
    adj[output.id()] = tape.constant(Tensor::full(output.shape().rows,
                                                  output.shape().cols, 1.0));
    for (NodeId id = output.id() + 1; id-- > 0;) {
      if (!adj[id].valid()) continue;
      // By value: recording backward nodes may reallocate the tape's storage.
      const Node n = tape.node(id);
      if (!n.requires_grad || n.op == Op::kInput || n.op == Op::kConstant) continue;
      const Var g = adj[id];
      const Var out_v(&tape, id);
      const NodeId ia = n.inputs.empty() ? 0 : n.inputs[0];
      const Var va(&tape, ia);
      switch (n.op) {
        case Op::kAdd:
          acc(n.inputs[0], g);
          acc(n.inputs[1], g);
          break;
        case Op::kSub:
          acc(n.inputs[0], g);
          acc(n.inputs[1], neg(g));
          break;
        case Op::kMul: {
          const Var vb(&tape, n.inputs[1]);
          acc(n.inputs[0], mul(g, vb));
          acc(n.inputs[1], mul(g, va));
          break;
        }
        case Op::kDiv: {
          const Var vb(&tape, n.inputs[1]);
          acc(n.inputs[0], div(g, vb));
          acc(n.inputs[1], neg(div(mul(g, out_v), vb)));
          break;
        }
        case Op::kNeg:
          acc(n.inputs[0], neg(g));
          break;
        case Op::kMatMul: {
          const Var vb(&tape, n.inputs[1]);
          if (!n.trans_a && !n.trans_b) {
            acc(n.inputs[0], matmul(g, vb, false, true));
            acc(n.inputs[1], matmul(va, g, true, false));
          } else if (n.trans_a && !n.trans_b) {
            acc(n.inputs[0], matmul(vb, g, false, true));
            acc(n.inputs[1], matmul(va, g, false, false));
          } else if (!n.trans_a && n.trans_b) {
            acc(n.inputs[0], matmul(g, vb, false, false));
            acc(n.inputs[1], matmul(g, va, true, false));
          } else {
            acc(n.inputs[0], matmul(vb, g, true, true));
            acc(n.inputs[1], matmul(g, va, true, true));
          }
          break;
        }
        case Op::kExp:
          acc(n.inputs[0], mul(g, out_v));
          break;
        case Op::kLog:
          acc(n.inputs[0], div(g, va));
          break;
        case Op::kSin:
          acc(n.inputs[0], mul(g, cos(va)));
          break;
        case Op::kCos:
          acc(n.inputs[0], neg(mul(g, sin(va))));
          break;
        case Op::kSqrt:
          acc(n.inputs[0], div(scale(g, 0.5), out_v));
          break;
        case Op::kTanh:
          acc(n.inputs[0], mul(g, one_minus_square(out_v)));
          break;
        case Op::kSoftplus:
          acc(n.inputs[0], mul(g, sigmoid_expr(va)));
          break;
        case Op::kMish: {
          // d/dx x*tanh(softplus(x)) = t + x*(1-t^2)*sigmoid(x),
          // t = tanh(softplus(x)).
          const Var t = tanh(softplus(va));
          const Var d = add(t, mul(mul(va, one_minus_square(t)), sigmoid_expr(va)));
          acc(n.inputs[0], mul(g, d));
          break;
        }
        case Op::kLogCosh:
          acc(n.inputs[0], mul(g, tanh(va)));
          break;
        case Op::kSum:
          acc(n.inputs[0], broadcast_to(g, va.shape()));
          break;
        case Op::kMean:
          acc(n.inputs[0],
              broadcast_to(scale(g, 1.0 / static_cast<double>(va.value().numel())),
                           va.shape()));
          break;
        case Op::kConcat: {
          std::size_t off = 0;
          for (NodeId in : n.inputs) {
            const Shape s = tape.node(in).value.shape();
            if (n.axis == 0) {
              acc(in, rows(g, off, off + s.rows));
              off += s.rows;
            } else {
              acc(in, cols(g, off, off + s.cols));
              off += s.cols;
            }
          }
          break;
        }
        case Op::kSlice: {
          // Embed g back at [r0,r1)x[c0,c1) inside zeros of the source shape.
          const Shape src = va.shape();
          Var strip = g;
          if (n.c0 > 0 || n.c1 < src.cols) {
            std::vector<Var> parts;
            if (n.c0 > 0)
              parts.push_back(tape.constant(Tensor::zeros(n.r1 - n.r0, n.c0)));
            parts.push_back(strip);
            if (n.c1 < src.cols)
              parts.push_back(tape.constant(Tensor::zeros(n.r1 - n.r0, src.cols - n.c1)));
            strip = concat(parts, 1);
          }
          if (n.r0 > 0 || n.r1 < src.rows) {
            std::vector<Var> parts;
            if (n.r0 > 0) parts.push_back(tape.constant(Tensor::zeros(n.r0, src.cols)));
            parts.push_back(strip);
            if (n.r1 < src.rows)
              parts.push_back(tape.constant(Tensor::zeros(src.rows - n.r1, src.cols)));
            strip = concat(parts, 0);
          }
          acc(n.inputs[0], strip);
          break;
        }
        case Op::kBroadcast: {
          const Shape src = va.shape();
          if (src.is_scalar()) {
            acc(n.inputs[0], sum(g));
          } else {
            // 1xC -> RxC: column sums via ones(1,R) @ g
            const Var ones = tape.constant(Tensor::full(1, n.value.rows(), 1.0));
            acc(n.inputs[0], matmul(ones, g));
          }
          break;
        }
        case Op::kInput:
        case Op::kConstant:
          break;
      }
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (Var w : wrt) {
    Var g = (w.id() <= output.id() && adj[w.id()].valid())
                ? adj[w.id()]
                : tape.constant(Tensor(w.shape()));
    result.push_back(create_graph ? g : detach(g));
  }
  return result;
}

inline Var gradient_single(Var output, Var wrt, bool create_graph = true) {
  const Var w[] = {wrt};
  return gradient(output, std::span<const Var>(w, 1), create_graph)[0];
}

// ---------------------------------------------------------------------------
// Re-evaluate a recorded tape under fresh input bindings. Returns the value
// of every node, index-aligned with node ids. The tape itself is untouched.
inline std::vector<Tensor> evaluate(
    const Tape& tape, const std::unordered_map<std::string, Tensor>& bindings) {
  std::vector<Tensor> values;
  values.reserve(tape.size());
  for (NodeId id = 0; id < tape.size(); ++id) {
    const Node& n = tape.node(id);
    if (n.op == Op::kInput) {
      auto it = bindings.find(n.name);
      if (it == bindings.end()) {
        throw TapeError("evaluate: unbound input '" + n.name + "' (node #" +
                        std::to_string(id) + ")");
      }
      if (!(it->second.shape() == n.value.shape())) {
        throw ShapeError("evaluate: binding for '" + n.name + "' has shape " +
                         it->second.shape().str() + ", expected " +
                         n.value.shape().str());
      }
      values.push_back(it->second);
    } else if (n.op == Op::kConstant) {
      values.push_back(n.value);
    } else {
      try {
        values.push_back(
            eval_op(n, [&](NodeId i) -> const Tensor& { return values[i]; }));
      } catch (const TapeError&) {
        throw;
      } catch (const std::runtime_error& e) {
        throw ShapeError("evaluate: node #" + std::to_string(id) + " (" +
                         op_name(n.op) + "): " + e.what());
      }
    }
  }
  return values;
}

// ---------------------------------------------------------------------------
// Central-difference audit of gradient(). `wrt` must be named inputs. Returns
// the worst relative deviation max(|fd-ad|) / max(1, |fd|, |ad|).
inline double finite_diff_check(Var output, std::span<const Var> wrt, double h) {
  if (h <= 0.0) throw DomainError("finite_diff_check: h must be positive");
  Tape& tape = output.tape();

  std::unordered_map<std::string, Tensor> bindings;
  for (const auto& [name, id] : tape.inputs_by_name()) {
    bindings.emplace(name, tape.node(id).value);
  }
  std::vector<Var> grads = gradient(output, wrt, false);

  double worst = 0.0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    const Node& n = tape.node(wrt[k].id());
    if (n.op != Op::kInput) {
      throw TapeError("finite_diff_check: wrt must be named inputs");
    }
    const Tensor& base = n.value;
    for (std::size_t i = 0; i < base.numel(); ++i) {
      Tensor plus = base, minus = base;
      plus.set_flat(i, base.flat(i) + h);
      minus.set_flat(i, base.flat(i) - h);

      bindings[n.name] = plus;
      const double fp = evaluate(tape, bindings)[output.id()].item();
      bindings[n.name] = minus;
      const double fm = evaluate(tape, bindings)[output.id()].item();
      bindings[n.name] = base;

      const double fd = (fp - fm) / (2.0 * h);
      const double ad = grads[k].value().flat(i);
      if (!std::isfinite(fd) || !std::isfinite(ad)) {
        throw NumericError("finite_diff_check: non-finite derivative");
      }
      const double dev =
          std::abs(fd - ad) / std::max({1.0, std::abs(fd), std::abs(ad)});
      worst = std::max(worst, dev);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Scalar view over 1x1 tape nodes, so closed-form physics can be written once
// and instantiated for either doubles or tape values.
struct Sc {
  Var v;
};

inline Sc wrap(Var v) { return Sc{v}; }
inline double value_of(double x) { return x; }
inline double value_of(Sc x) { return x.v.value().item(); }

inline Sc operator+(Sc a, Sc b) { return {add(a.v, b.v)}; }
inline Sc operator-(Sc a, Sc b) { return {sub(a.v, b.v)}; }
inline Sc operator*(Sc a, Sc b) { return {mul(a.v, b.v)}; }
inline Sc operator/(Sc a, Sc b) { return {div(a.v, b.v)}; }
inline Sc operator-(Sc a) { return {neg(a.v)}; }
inline Sc operator+(Sc a, double b) { return {add_scalar(a.v, b)}; }
inline Sc operator+(double a, Sc b) { return b + a; }
inline Sc operator-(Sc a, double b) { return {add_scalar(a.v, -b)}; }
inline Sc operator-(double a, Sc b) { return {add_scalar(neg(b.v), a)}; }
inline Sc operator*(Sc a, double b) { return {scale(a.v, b)}; }
inline Sc operator*(double a, Sc b) { return b * a; }
inline Sc operator/(Sc a, double b) { return {scale(a.v, 1.0 / b)}; }
inline Sc operator/(double a, Sc b) { return {div(broadcast_to(b.v.tape().scalar(a), b.v.shape()), b.v)}; }
inline Sc sin(Sc a) { return {sin(a.v)}; }
inline Sc cos(Sc a) { return {cos(a.v)}; }
inline Sc sqrt(Sc a) { return {sqrt(a.v)}; }

}  // namespace hammeta::ad
