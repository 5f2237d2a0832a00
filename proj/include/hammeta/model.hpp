// The Hamiltonian network: three graph-convolution layers, global mean pool,
// three dense layers, mish throughout (including after the scalar head), and
// the symplectic-gradient wrapper that turns the scalar into a vector field.
#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hammeta/common.hpp"
#include "hammeta/rng.hpp"
#include "hammeta/systems.hpp"
#include "hammeta/tape.hpp"

namespace hammeta::nn {

using ad::Shape;
using ad::Tensor;
using ad::Var;

constexpr std::size_t kFeatureDim = 4;
constexpr std::size_t kHidden = 200;

struct LayerDef {
  const char* name;
  std::size_t in, out;
};

// Flatten/checkpoint order.
constexpr std::array<LayerDef, 6> kLayers = {{
    {"gc1", kFeatureDim, kHidden},
    {"gc2", kHidden, kHidden},
    {"gc3", kHidden, kFeatureDim},
    {"fc1", kFeatureDim, kHidden},
    {"fc2", kHidden, kHidden},
    {"fc3", kHidden, 1},
}};

constexpr std::size_t parameter_count() {
  std::size_t n = 0;
  for (const LayerDef& l : kLayers) n += l.in * l.out + l.out;
  return n;
}
static_assert(parameter_count() == 83405);

struct ModelParams {
  // weights are (in x out); biases are rows (1 x out)
  std::vector<Tensor> weights;  // 6
  std::vector<Tensor> biases;   // 6

  static ModelParams zeros() {
    ModelParams p;
    for (const LayerDef& l : kLayers) {
      p.weights.push_back(Tensor::zeros(l.in, l.out));
      p.biases.push_back(Tensor::zeros(1, l.out));
    }
    return p;
  }

  // Interleaved [w0, b0, w1, b1, ...]; the order the optimizer flattens.
  std::vector<Tensor> as_list() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < kLayers.size(); ++i) {
      out.push_back(weights[i]);
      out.push_back(biases[i]);
    }
    return out;
  }
  static ModelParams from_list(std::span<const Tensor> list) {
    if (list.size() != 2 * kLayers.size()) {
      throw ShapeError("ModelParams::from_list: expected 12 tensors");
    }
    ModelParams p;
    for (std::size_t i = 0; i < kLayers.size(); ++i) {
      p.weights.push_back(list[2 * i]);
      p.biases.push_back(list[2 * i + 1]);
    }
    return p;
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const Tensor& t : as_list()) {
      flat.insert(flat.end(), t.data().begin(), t.data().end());
    }
    return flat;
  }
  static ModelParams unflatten(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
      throw ShapeError("unflatten: expected " + std::to_string(parameter_count()) +
                       " values, got " + std::to_string(flat.size()));
    }
    ModelParams p;
    std::size_t off = 0;
    for (const LayerDef& l : kLayers) {
      p.weights.emplace_back(Shape{l.in, l.out},
                             std::vector<double>(flat.begin() + off,
                                                 flat.begin() + off + l.in * l.out));
      off += l.in * l.out;
      p.biases.emplace_back(Shape{1, l.out},
                            std::vector<double>(flat.begin() + off,
                                                flat.begin() + off + l.out));
      off += l.out;
    }
    return p;
  }

  bool all_finite() const {
    for (const Tensor& t : as_list()) {
      if (!t.all_finite()) return false;
    }
    return true;
  }
};

// U[-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, weights then bias,
// deterministic in the seed.
inline ModelParams init_params(std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  for (const LayerDef& l : kLayers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    Tensor w(Shape{l.in, l.out});
    double* wd = w.mutable_data();
    for (std::size_t i = 0; i < l.in * l.out; ++i) wd[i] = rng.uniform(-bound, bound);
    Tensor b(Shape{1, l.out});
    double* bd = b.mutable_data();
    for (std::size_t i = 0; i < l.out; ++i) bd[i] = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

// ---------------------------------------------------------------------------
// A batch of graphs stacked node-major: block-diagonal normalized adjacency
// and a per-graph mean-pooling matrix.

struct GraphBatch {
  Tensor features;   // (total nodes) x 4
  Tensor adjacency;  // (total nodes)^2, block-diagonal
  Tensor pooling;    // n_graphs x (total nodes), rows sum to 1
  std::size_t n_graphs{0};
  std::size_t nodes_per_graph{1};
};

inline GraphBatch make_graph_batch(const phys::SystemSpec& sys,
                                   std::span<const phys::PhasePoint> points) {
  const std::size_t n = static_cast<std::size_t>(sys.n_particles);
  const std::size_t total = n * points.size();
  GraphBatch b;
  b.n_graphs = points.size();
  b.nodes_per_graph = n;
  b.features = Tensor(Shape{total, kFeatureDim});
  b.adjacency = Tensor(Shape{total, total});
  b.pooling = Tensor(Shape{points.size(), total});
  double* f = b.features.mutable_data();
  double* a = b.adjacency.mutable_data();
  double* p = b.pooling.mutable_data();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t g = 0; g < points.size(); ++g) {
    const Tensor gf = phys::graph_features(sys, points[g]);
    std::copy(gf.data().begin(), gf.data().end(), f + g * n * kFeatureDim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        a[(g * n + i) * total + (g * n + j)] = inv_n;
      }
      p[g * total + (g * n + i)] = inv_n;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Forward pass recorded on a tape.

struct ParamVars {
  std::vector<Var> weights;  // 6
  std::vector<Var> biases;   // 6

  std::vector<Var> as_list() const {
    std::vector<Var> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      out.push_back(weights[i]);
      out.push_back(biases[i]);
    }
    return out;
  }
  static ParamVars from_list(std::span<const Var> list) {
    ParamVars pv;
    for (std::size_t i = 0; i + 1 < list.size(); i += 2) {
      pv.weights.push_back(list[i]);
      pv.biases.push_back(list[i + 1]);
    }
    return pv;
  }
};

inline ParamVars param_inputs(ad::Tape& tape, const ModelParams& params) {
  ParamVars pv;
  for (std::size_t i = 0; i < kLayers.size(); ++i) {
    pv.weights.push_back(
        tape.input(std::string(kLayers[i].name) + ".w", params.weights[i]));
    pv.biases.push_back(
        tape.input(std::string(kLayers[i].name) + ".b", params.biases[i]));
  }
  return pv;
}

// Post-activation values at every stage. `output` is the per-graph scalar,
// i.e. fc3 after its mish.
struct ForwardTrace {
  Var features;           // the input node
  Var gc1, gc2, gc3;      // node-level, post-mish
  Var pool;               // graph-level mean of gc3
  Var fc1, fc2, fc3;      // graph-level, post-mish
  Var output;             // == fc3, (n_graphs x 1)
};

inline ForwardTrace forward(ad::Tape& tape, const ParamVars& pv,
                            const GraphBatch& batch, Var features) {
  using namespace ad;
  // single-particle graphs have identity adjacency and pooling; skip the
  // products so the (higher-order) backward tree stays small
  const bool trivial_graph = batch.nodes_per_graph == 1;
  Var a, p;
  if (!trivial_graph) {
    a = tape.constant(batch.adjacency);
    p = tape.constant(batch.pooling);
  }

  auto gc = [&](Var x, std::size_t i) {
    Var z = matmul(x, pv.weights[i]);
    if (!trivial_graph) z = matmul(a, z);
    return mish(add(z, broadcast_to(pv.biases[i], z.shape())));
  };
  auto fc = [&](Var x, std::size_t i) {
    Var z = matmul(x, pv.weights[i]);
    return mish(add(z, broadcast_to(pv.biases[i], z.shape())));
  };

  ForwardTrace t;
  t.features = features;
  t.gc1 = gc(features, 0);
  t.gc2 = gc(t.gc1, 1);
  t.gc3 = gc(t.gc2, 2);
  t.pool = trivial_graph ? t.gc3 : matmul(p, t.gc3);
  t.fc1 = fc(t.pool, 3);
  t.fc2 = fc(t.fc1, 4);
  t.fc3 = fc(t.fc2, 5);
  t.output = t.fc3;
  return t;
}

inline ForwardTrace forward(ad::Tape& tape, const ParamVars& pv,
                            const GraphBatch& batch) {
  // a tape may carry several forward passes (inner/outer loops), so the
  // feature input gets a unique name per recording
  Var features = tape.input("features#" + std::to_string(tape.size()),
                            batch.features);
  return forward(tape, pv, batch, features);
}

// (Sum of nodes) x 4 gradient of the summed per-graph energies w.r.t. the
// input features, rearranged by J: columns (dH/dq1, dH/dq2, dH/dp1, dH/dp2)
// become rows of (qdot1, qdot2, pdot1, pdot2) = (dH/dp, -dH/dq).
inline Var symplectic_from_feature_grad(Var feature_grad) {
  using namespace ad;
  return concat({cols(feature_grad, 2, 4), neg(cols(feature_grad, 0, 2))}, 1);
}

// Predicted field rows for every node in the batch; differentiable w.r.t.
// the parameter inputs (the feature gradient is recorded on the tape).
inline Var predicted_field(ad::Tape& tape, const ParamVars& pv,
                           const GraphBatch& batch) {
  ForwardTrace t = forward(tape, pv, batch);
  Var total_energy = ad::sum(t.output);
  Var g = ad::gradient_single(total_energy, t.features, true);
  return symplectic_from_feature_grad(g);
}

// Value-level field at one phase point: (qdot, pdot).
inline std::pair<std::vector<double>, std::vector<double>> symplectic_field(
    const ModelParams& params, const phys::SystemSpec& sys, const phys::PhasePoint& x) {
  ad::Tape tape;
  ParamVars pv = param_inputs(tape, params);
  const phys::PhasePoint pts[] = {x};
  const GraphBatch batch = make_graph_batch(sys, pts);
  const Var field = predicted_field(tape, pv, batch);
  const phys::PhasePoint f = phys::phase_from_features(sys, field.value());
  return {f.q, f.p};  // rows were (qdot, pdot) in feature layout
}

// Adapter for the integrator.
inline auto make_learned_field(const ModelParams& params, const phys::SystemSpec& sys) {
  return [params, sys](double t, std::span<const double> state,
                       std::span<double> dxdt) {
    const phys::PhasePoint x = phys::PhasePoint::from_state(t, state);
    auto [qd, pd] = symplectic_field(params, sys, x);
    std::copy(qd.begin(), qd.end(), dxdt.begin());
    std::copy(pd.begin(), pd.end(),
              dxdt.begin() + static_cast<std::ptrdiff_t>(qd.size()));
  };
}

// Post-activation matrix at a named layer, one row per graph; node-level
// layers are mean-pooled per graph so rows align across layers.
inline Tensor layer_activations(const ModelParams& params, const GraphBatch& batch,
                                std::string_view layer) {
  ad::Tape tape;
  ParamVars pv = param_inputs(tape, params);
  ForwardTrace t = forward(tape, pv, batch);
  auto pooled = [&](Var node_level) {
    return ad::matmul(tape.constant(batch.pooling), node_level).value();
  };
  if (layer == "gc1") return pooled(t.gc1);
  if (layer == "gc2") return pooled(t.gc2);
  if (layer == "gc3") return pooled(t.gc3);
  if (layer == "pool") return t.pool.value();
  if (layer == "fc1") return t.fc1.value();
  if (layer == "fc2") return t.fc2.value();
  if (layer == "fc3") return t.fc3.value();
  throw DomainError("unknown layer '" + std::string(layer) + "'");
}

}  // namespace hammeta::nn
