// Losses over the symplectic prediction, the Adam optimizer, the MAML
// inner/outer loops, and the joint pre-training baseline.
//
// The meta-learning core is generic over a "problem" (parameter tensors plus
// a tape-level loss builder) so the same inner/outer machinery runs both the
// production Hamiltonian network and the small closed-form problems the
// meta-gradient oracles use.
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hammeta/common.hpp"
#include "hammeta/model.hpp"
#include "hammeta/rng.hpp"
#include "hammeta/systems.hpp"
#include "hammeta/tape.hpp"

namespace hammeta::train {

using ad::Tensor;
using ad::Var;

// K support points with ground-truth derivatives, drawn without replacement
// from a single trajectory.
struct TaskBatch {
  phys::SystemSpec system;
  std::vector<phys::PhasePoint> points;
  std::vector<std::vector<double>> derivs;
};

inline TaskBatch sample_task(const phys::Trajectory& traj, std::size_t k, Rng& rng) {
  if (k > traj.points.size()) {
    throw DomainError("task size K=" + std::to_string(k) + " exceeds trajectory length " +
                      std::to_string(traj.points.size()));
  }
  // partial Fisher-Yates over the point indices
  std::vector<std::size_t> idx(traj.points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  TaskBatch task;
  task.system = traj.system;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.next_below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    task.points.push_back(traj.points[idx[i]]);
    task.derivs.push_back(traj.derivs[idx[i]]);
  }
  return task;
}

enum class LossKind { kLogCosh, kHnnL2 };

inline LossKind loss_kind_from_name(std::string_view name) {
  if (name == "logcosh") return LossKind::kLogCosh;
  if (name == "hnn_l2") return LossKind::kHnnL2;
  throw DomainError("unknown loss '" + std::string(name) + "'");
}

// Ground-truth field rows in the node-major feature layout.
inline Tensor field_targets(const TaskBatch& task) {
  const std::size_t n = static_cast<std::size_t>(task.system.n_particles);
  const std::size_t half = task.system.coord_dim();
  Tensor t(ad::Shape{n * task.points.size(), 4});
  double* d = t.mutable_data();
  for (std::size_t k = 0; k < task.points.size(); ++k) {
    const auto& deriv = task.derivs[k];
    for (std::size_t i = 0; i < n; ++i) {
      d[(k * n + i) * 4 + 0] = deriv[2 * i];
      d[(k * n + i) * 4 + 1] = deriv[2 * i + 1];
      d[(k * n + i) * 4 + 2] = deriv[half + 2 * i];
      d[(k * n + i) * 4 + 3] = deriv[half + 2 * i + 1];
    }
  }
  return t;
}

// Residual between the model's symplectic field and the stored derivatives,
// one row per node.
inline Var field_residual(ad::Tape& tape, const nn::ParamVars& pv,
                          const TaskBatch& task) {
  const nn::GraphBatch batch = nn::make_graph_batch(task.system, task.points);
  Var pred = nn::predicted_field(tape, pv, batch);
  return ad::sub(pred, tape.constant(field_targets(task)));
}

// Sum over points and components of logcosh(residual).
inline Var loss_logcosh(ad::Tape& tape, const nn::ParamVars& pv, const TaskBatch& task) {
  return ad::sum(ad::logcosh(field_residual(tape, pv, task)));
}

// Per point ||r_q||_2 + ||r_p||_2, summed over the task.
inline Var loss_hnn_l2(ad::Tape& tape, const nn::ParamVars& pv, const TaskBatch& task) {
  Var r = field_residual(tape, pv, task);
  Var sq = ad::mul(r, r);
  const std::size_t n = static_cast<std::size_t>(task.system.n_particles);
  const std::size_t total = n * task.points.size();
  // 1s over each point's node rows
  Tensor point_sum(ad::Shape{task.points.size(), total});
  double* ps = point_sum.mutable_data();
  for (std::size_t k = 0; k < task.points.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) ps[k * total + k * n + i] = 1.0;
  }
  Var m = tape.constant(point_sum);
  Var ones2 = tape.constant(Tensor::full(2, 1, 1.0));
  Var q_norm = ad::sqrt(ad::matmul(m, ad::matmul(ad::cols(sq, 0, 2), ones2)));
  Var p_norm = ad::sqrt(ad::matmul(m, ad::matmul(ad::cols(sq, 2, 4), ones2)));
  return ad::add(ad::sum(q_norm), ad::sum(p_norm));
}

inline Var task_loss(ad::Tape& tape, const nn::ParamVars& pv, const TaskBatch& task,
                     LossKind kind) {
  return kind == LossKind::kLogCosh ? loss_logcosh(tape, pv, task)
                                    : loss_hnn_l2(tape, pv, task);
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  std::vector<double> m, v;
  long step{0};
  double beta1{0.9}, beta2{0.999}, eps{1e-8};

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_update(std::vector<double>& params, std::span<const double> grad,
                        AdamState& st, double lr) {
  if (params.size() != grad.size() || st.m.size() != params.size()) {
    throw ShapeError("adam_update: parameter/gradient/moment size mismatch");
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    params[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + st.eps);
  }
}

// ---------------------------------------------------------------------------
// Meta-learning configuration (defaults for the single-particle scenarios).

struct MetaConfig {
  double inner_lr{0.001};
  double outer_lr{0.0005};
  int inner_steps{1};
  long outer_iterations{5000};
  int task_batch_size{10};
  std::size_t k_support{50};
  bool first_order{false};
  LossKind loss{LossKind::kLogCosh};

  void validate() const {
    if (inner_lr <= 0 || outer_lr <= 0 || inner_steps < 1 || outer_iterations < 1 ||
        task_batch_size < 1 || k_support < 1) {
      throw DomainError("MetaConfig fields must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Generic parameter-vector plumbing.

inline std::size_t total_numel(std::span<const Tensor> params) {
  std::size_t n = 0;
  for (const Tensor& t : params) n += t.numel();
  return n;
}

inline std::vector<Var> make_param_inputs(ad::Tape& tape,
                                          std::span<const Tensor> params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars.push_back(tape.input("theta" + std::to_string(i), params[i]));
  }
  return vars;
}

inline void accumulate_flat(std::span<const Var> grads, std::vector<double>& out) {
  std::size_t off = 0;
  for (const Var& g : grads) {
    const auto d = g.value().data();
    for (std::size_t i = 0; i < d.size(); ++i) out[off + i] += d[i];
    off += d.size();
  }
}

inline std::vector<double> flatten_tensors(std::span<const Tensor> params) {
  std::vector<double> flat;
  flat.reserve(total_numel(params));
  for (const Tensor& t : params) {
    flat.insert(flat.end(), t.data().begin(), t.data().end());
  }
  return flat;
}

inline void unflatten_into(std::span<const double> flat, std::vector<Tensor>& params) {
  std::size_t off = 0;
  for (Tensor& t : params) {
    t = Tensor(t.shape(), std::vector<double>(flat.begin() + off,
                                              flat.begin() + off + t.numel()));
    off += t.numel();
  }
}

// ---------------------------------------------------------------------------
// Inner loop (plain gradient descent, Adam is outer-loop only).
//
// A Problem provides: Var loss(Tape&, std::span<const Var> params, const Task&).
// With track_meta_path the adapted parameters keep the differentiable path to
// the initial ones (full second-order MAML); otherwise the inner gradients are
// detached (first-order MAML).
template <class Problem, class Task>
std::vector<Var> inner_adapt(Problem& prob, ad::Tape& tape, std::vector<Var> theta,
                             const Task& task, double alpha, int steps,
                             bool track_meta_path, double* pre_loss = nullptr) {
  if (steps < 1) throw DomainError("inner_adapt: steps must be >= 1");
  for (int s = 0; s < steps; ++s) {
    Var loss = prob.loss(tape, theta, task);
    if (s == 0 && pre_loss != nullptr) *pre_loss = loss.value().item();
    std::vector<Var> g = ad::gradient(loss, theta, track_meta_path);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] = ad::sub(theta[i], ad::scale(g[i], alpha));
    }
  }
  return theta;
}

struct MetaStepInfo {
  double mean_pre_loss{0.0};    // inner loss before adaptation
  double mean_outer_loss{0.0};  // loss after the inner step(s)
};

// Gradient of the summed post-adaptation loss w.r.t. the initial parameters
// (through the inner step unless first_order).
template <class Problem, class Tasks>
std::vector<double> meta_gradient(Problem& prob, std::span<const Tensor> params,
                                  const Tasks& tasks, const MetaConfig& cfg,
                                  MetaStepInfo* info = nullptr) {
  if (tasks.empty()) throw DomainError("meta_gradient: no tasks");
  std::vector<double> grad(total_numel(params), 0.0);
  MetaStepInfo local;
  for (const auto& task : tasks) {
    ad::Tape tape;
    std::vector<Var> theta = make_param_inputs(tape, params);
    double pre = 0.0;
    std::vector<Var> adapted = inner_adapt(prob, tape, theta, task, cfg.inner_lr,
                                           cfg.inner_steps, !cfg.first_order, &pre);
    Var outer = prob.loss(tape, adapted, task);
    const double outer_val = outer.value().item();
    if (!std::isfinite(outer_val) || !std::isfinite(pre)) {
      throw NumericError("non-finite meta loss (pre=" + std::to_string(pre) +
                         ", outer=" + std::to_string(outer_val) + ")");
    }
    std::vector<Var> g = ad::gradient(outer, theta, false);
    accumulate_flat(g, grad);
    local.mean_pre_loss += pre;
    local.mean_outer_loss += outer_val;
  }
  local.mean_pre_loss /= static_cast<double>(tasks.size());
  local.mean_outer_loss /= static_cast<double>(tasks.size());
  if (info != nullptr) *info = local;
  return grad;
}

// Value of the composed objective sum_tau L_tau(U_tau(theta)); the quantity
// meta_gradient differentiates. Used by the finite-difference oracles.
template <class Problem, class Tasks>
double meta_objective(Problem& prob, std::span<const Tensor> params,
                      const Tasks& tasks, const MetaConfig& cfg) {
  double total = 0.0;
  for (const auto& task : tasks) {
    ad::Tape tape;
    std::vector<Var> theta = make_param_inputs(tape, params);
    std::vector<Var> adapted =
        inner_adapt(prob, tape, theta, task, cfg.inner_lr, cfg.inner_steps, false);
    total += prob.loss(tape, adapted, task).value().item();
  }
  return total;
}

// One meta-iteration: adapt on each task, differentiate the summed
// post-adaptation loss back to the initial parameters, apply Adam.
template <class Problem, class Tasks>
MetaStepInfo maml_outer_step(Problem& prob, std::vector<Tensor>& params,
                             const Tasks& tasks, const MetaConfig& cfg,
                             AdamState& adam) {
  MetaStepInfo info;
  std::vector<double> grad = meta_gradient(prob, params, tasks, cfg, &info);
  std::vector<double> flat = flatten_tensors(params);
  adam_update(flat, grad, adam, cfg.outer_lr);
  unflatten_into(flat, params);
  return info;
}

// Joint-training baseline: the pooled loss over the same task draw, no inner
// adaptation, identical data budget per iteration.
template <class Problem, class Tasks>
MetaStepInfo pretrain_step(Problem& prob, std::vector<Tensor>& params,
                           const Tasks& tasks, const MetaConfig& cfg,
                           AdamState& adam) {
  if (tasks.empty()) throw DomainError("pretrain_step: no tasks");
  std::vector<double> grad(total_numel(params), 0.0);
  MetaStepInfo info;
  for (const auto& task : tasks) {
    ad::Tape tape;
    std::vector<Var> theta = make_param_inputs(tape, params);
    Var loss = prob.loss(tape, theta, task);
    const double val = loss.value().item();
    if (!std::isfinite(val)) {
      throw NumericError("non-finite training loss " + std::to_string(val));
    }
    std::vector<Var> g = ad::gradient(loss, theta, false);
    accumulate_flat(g, grad);
    info.mean_pre_loss += val;
    info.mean_outer_loss += val;
  }
  info.mean_pre_loss /= static_cast<double>(tasks.size());
  info.mean_outer_loss /= static_cast<double>(tasks.size());

  std::vector<double> flat = flatten_tensors(params);
  adam_update(flat, grad, adam, cfg.outer_lr);
  unflatten_into(flat, params);
  return info;
}

// The production problem: the graph Hamiltonian network under an HNN loss.
struct HnnProblem {
  LossKind kind{LossKind::kLogCosh};

  Var loss(ad::Tape& tape, std::span<const Var> params, const TaskBatch& task) const {
    return task_loss(tape, nn::ParamVars::from_list(params), task, kind);
  }
};

// Value-level convenience for reporting.
inline double hnn_loss_value(const nn::ModelParams& params, const TaskBatch& task,
                             LossKind kind = LossKind::kLogCosh) {
  ad::Tape tape;
  nn::ParamVars pv = nn::param_inputs(tape, params);
  return task_loss(tape, pv, task, kind).value().item();
}

// ---------------------------------------------------------------------------
// Table of per-scenario settings: meta-training systems, outer-loop budget,
// and the evaluation-time Adam learning rate.

struct ScenarioConfig {
  phys::SystemSpec held_out;
  std::vector<phys::SystemSpec> train_systems;
  MetaConfig meta;
  double eval_lr{0.0001};
};

inline ScenarioConfig scenario_for(phys::SystemKind held_out) {
  using phys::SystemKind;
  using phys::SystemSpec;
  auto sys = [](SystemKind k) { return SystemSpec::make(k); };
  ScenarioConfig sc;
  sc.held_out = sys(held_out);
  switch (held_out) {
    case SystemKind::kMassSpring:
      sc.train_systems = {sys(SystemKind::kPendulum), sys(SystemKind::kHenonHeiles),
                          sys(SystemKind::kMagneticMirror)};
      sc.meta.outer_iterations = 5000;
      break;
    case SystemKind::kPendulum:
      sc.train_systems = {sys(SystemKind::kMassSpring), sys(SystemKind::kHenonHeiles),
                          sys(SystemKind::kMagneticMirror)};
      sc.meta.outer_iterations = 5000;
      break;
    case SystemKind::kHenonHeiles:
      sc.train_systems = {sys(SystemKind::kMassSpring), sys(SystemKind::kPendulum),
                          sys(SystemKind::kMagneticMirror)};
      sc.meta.outer_iterations = 10000;
      break;
    case SystemKind::kMagneticMirror:
      sc.train_systems = {sys(SystemKind::kMassSpring), sys(SystemKind::kPendulum),
                          sys(SystemKind::kHenonHeiles)};
      sc.meta.outer_iterations = 30000;
      break;
    case SystemKind::kTwoBody:
      sc.train_systems = {sys(SystemKind::kMassSpring), sys(SystemKind::kPendulum),
                          sys(SystemKind::kHenonHeiles),
                          sys(SystemKind::kMagneticMirror)};
      sc.meta.outer_iterations = 5000;
      sc.meta.outer_lr = 0.00005;
      sc.eval_lr = 0.00001;
      break;
    case SystemKind::kThreeBody:
      sc.train_systems = {sys(SystemKind::kMassSpring), sys(SystemKind::kPendulum),
                          sys(SystemKind::kHenonHeiles),
                          sys(SystemKind::kMagneticMirror)};
      sc.meta.outer_iterations = 30000;
      sc.meta.outer_lr = 0.00005;
      sc.eval_lr = 0.00005;
      break;
  }
  return sc;
}

}  // namespace hammeta::train
