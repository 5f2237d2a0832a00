// Held-out adaptation, learned-field rollouts, the bounded relative-error
// metric with its geometric moving average, and linear CKA representation
// analysis.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hammeta/common.hpp"
#include "hammeta/model.hpp"
#include "hammeta/ode.hpp"
#include "hammeta/systems.hpp"
#include "hammeta/training.hpp"

namespace hammeta::eval {

using json = nlohmann::json;

// Err = ||pred - truth|| / (||pred|| + ||truth||), in [0, 1]; 0 when both
// states vanish.
inline double relative_error(std::span<const double> pred,
                             std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("relative_error: dimension mismatch");
  }
  double diff = 0.0, np = 0.0, nt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    diff += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    np += pred[i] * pred[i];
    nt += truth[i] * truth[i];
  }
  const double denom = std::sqrt(np) + std::sqrt(nt);
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

// Cumulative geometric mean: GMA(t) = exp(mean_{tau<=t} ln(err + eps)).
inline std::vector<double> geometric_moving_average(std::span<const double> errs) {
  constexpr double kEps = 1e-12;
  std::vector<double> out(errs.size());
  double log_sum = 0.0;
  for (std::size_t i = 0; i < errs.size(); ++i) {
    log_sum += std::log(errs[i] + kEps);
    out[i] = std::exp(log_sum / static_cast<double>(i + 1));
  }
  return out;
}

// Linear CKA between two examples x features matrices:
// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) after column centering.
inline double linear_cka(const ad::Tensor& x, const ad::Tensor& y) {
  if (x.rows() != y.rows() || x.rows() < 2) {
    throw ShapeError("linear_cka: need matching example counts >= 2");
  }
  using Mat = Eigen::MatrixXd;
  Mat xc = x.map();
  Mat yc = y.map();
  xc.rowwise() -= xc.colwise().mean();
  yc.rowwise() -= yc.colwise().mean();
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (xx == 0.0 || yy == 0.0) {
    throw DomainError("linear_cka: zero-variance activations");
  }
  const double cross = (yc.transpose() * xc).squaredNorm();
  return cross / (xx * yy);
}

// ---------------------------------------------------------------------------
// Evaluation-time adaptation: Adam on the task loss, fixed support points.

struct AdaptOptions {
  double lr{0.0001};
  int steps{50};
  train::LossKind loss{train::LossKind::kLogCosh};
};

// Calls `visit(step, params)` with the starting parameters (step 0) and after
// every Adam step.
inline void adapt_visit(
    const nn::ModelParams& start, const train::TaskBatch& task,
    const AdaptOptions& opt,
    const std::function<void(int, const nn::ModelParams&)>& visit) {
  nn::ModelParams params = start;
  visit(0, params);
  train::AdamState adam(nn::parameter_count());
  for (int s = 1; s <= opt.steps; ++s) {
    ad::Tape tape;
    std::vector<ad::Var> theta = train::make_param_inputs(tape, params.as_list());
    ad::Var loss =
        train::task_loss(tape, nn::ParamVars::from_list(theta), task, opt.loss);
    if (!std::isfinite(loss.value().item())) {
      throw NumericError("non-finite adaptation loss at step " + std::to_string(s));
    }
    std::vector<ad::Var> g = ad::gradient(loss, theta, false);
    std::vector<double> grad(nn::parameter_count(), 0.0);
    train::accumulate_flat(g, grad);
    std::vector<double> flat = params.flatten();
    train::adam_update(flat, grad, adam, opt.lr);
    params = nn::ModelParams::unflatten(flat);
    visit(s, params);
  }
}

struct AdaptResult {
  std::vector<nn::ModelParams> checkpoints;  // steps + 1, starting params first
  std::vector<double> losses;                // pre-step loss per checkpoint
};

inline AdaptResult adapt(const nn::ModelParams& start, const train::TaskBatch& task,
                         const AdaptOptions& opt) {
  AdaptResult out;
  adapt_visit(start, task, opt, [&](int, const nn::ModelParams& p) {
    out.checkpoints.push_back(p);
    out.losses.push_back(train::hnn_loss_value(p, task, opt.loss));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Rollout of a learned (or analytic) field at the dataset's output times.

struct RolloutResult {
  std::vector<std::vector<double>> states;
  std::size_t n_requested{0};
  bool truncated{false};
  std::string failure;
};

inline RolloutResult rollout_field(const ode::VectorField& field,
                                   const phys::PhasePoint& x0,
                                   std::span<const double> t_eval,
                                   const ode::IntegratorConfig& cfg) {
  RolloutResult out;
  out.n_requested = t_eval.size();
  ode::IntegrationResult r = ode::try_integrate(field, x0.to_state(), t_eval, cfg);
  out.states = std::move(r.states);
  if (r.failure) {
    out.truncated = true;
    out.failure = r.failure->reason;
  }
  return out;
}

inline RolloutResult rollout(const nn::ModelParams& params,
                             const phys::SystemSpec& sys, const phys::PhasePoint& x0,
                             std::span<const double> t_eval,
                             const ode::IntegratorConfig& cfg = ode::rollout_tolerances()) {
  return rollout_field(nn::make_learned_field(params, sys), x0, t_eval, cfg);
}

// Per-time relative errors against the ground-truth trajectory; missing
// (truncated) points count as total error 1.0.
inline std::vector<double> rollout_errors(const RolloutResult& r,
                                          const phys::Trajectory& truth) {
  std::vector<double> errs(truth.points.size(), 1.0);
  for (std::size_t i = 0; i < r.states.size() && i < truth.points.size(); ++i) {
    errs[i] = relative_error(r.states[i], truth.points[i].to_state());
  }
  return errs;
}

// ---------------------------------------------------------------------------
// 1 - CKA of the last layer between the starting model and every adaptation
// step, on a fixed probe batch.

inline std::vector<double> cka_adaptation_curve(const nn::ModelParams& start,
                                                const train::TaskBatch& adapt_task,
                                                const nn::GraphBatch& probe,
                                                const AdaptOptions& opt) {
  const ad::Tensor base = nn::layer_activations(start, probe, "fc3");
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(opt.steps) + 1);
  adapt_visit(start, adapt_task, opt, [&](int step, const nn::ModelParams& p) {
    if (step == 0) {
      curve.push_back(0.0);  // model against itself
      return;
    }
    const ad::Tensor acts = nn::layer_activations(p, probe, "fc3");
    curve.push_back(1.0 - linear_cka(base, acts));
  });
  return curve;
}

// ---------------------------------------------------------------------------
// Report assembly: long-form CSV rows plus a JSON summary with mean and
// standard error over seeds.

struct EvalRecord {
  int seed{0};
  std::string system;
  int adaptation_step{0};
  double rollout_time{0.0};
  double err{0.0};
  double gma{0.0};
};

inline void write_eval_csv(const std::filesystem::path& path,
                           std::span<const EvalRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "seed,system,adaptation_step,rollout_time,err,gma\n";
  out.precision(17);
  for (const EvalRecord& r : records) {
    out << r.seed << ',' << r.system << ',' << r.adaptation_step << ','
        << r.rollout_time << ',' << r.err << ',' << r.gma << '\n';
  }
}

struct MeanStderr {
  double mean{0.0};
  double stderr_{0.0};
  int n{0};
};

inline MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr m;
  m.n = static_cast<int>(values.size());
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.stderr_ = std::sqrt(ss / static_cast<double>(values.size() - 1)) /
                std::sqrt(static_cast<double>(values.size()));
  }
  return m;
}

// Mean and standard error per (adaptation_step, rollout_time) across seeds.
inline json summarize_records(std::span<const EvalRecord> records) {
  // group by (step, time); records are seed-major so a map keeps this small
  std::map<std::pair<int, double>, std::vector<const EvalRecord*>> groups;
  for (const EvalRecord& r : records) {
    groups[{r.adaptation_step, r.rollout_time}].push_back(&r);
  }
  json per_point = json::array();
  std::map<int, std::vector<double>> final_gma_by_step;
  for (const auto& [key, rows] : groups) {
    std::vector<double> errs, gmas;
    for (const EvalRecord* r : rows) {
      errs.push_back(r->err);
      gmas.push_back(r->gma);
    }
    const MeanStderr me = mean_stderr(errs);
    const MeanStderr mg = mean_stderr(gmas);
    per_point.push_back(json{{"adaptation_step", key.first},
                             {"rollout_time", key.second},
                             {"err_mean", me.mean},
                             {"err_stderr", me.stderr_},
                             {"gma_mean", mg.mean},
                             {"gma_stderr", mg.stderr_},
                             {"n_seeds", me.n}});
  }
  // per-step scalar: the final GMA value of each seed's rollout
  std::map<std::pair<int, int>, std::pair<double, double>> last_per_seed_step;
  for (const EvalRecord& r : records) {
    auto& slot = last_per_seed_step[{r.adaptation_step, r.seed}];
    if (r.rollout_time >= slot.first) slot = {r.rollout_time, r.gma};
  }
  for (const auto& [key, tg] : last_per_seed_step) {
    final_gma_by_step[key.first].push_back(tg.second);
  }
  json per_step = json::array();
  for (const auto& [step, gmas] : final_gma_by_step) {
    const MeanStderr m = mean_stderr(gmas);
    per_step.push_back(json{{"adaptation_step", step},
                            {"final_gma_mean", m.mean},
                            {"final_gma_stderr", m.stderr_},
                            {"final_gma_per_seed", gmas}});
  }
  return json{{"per_point", per_point}, {"per_step_final_gma", per_step}};
}

}  // namespace hammeta::eval
