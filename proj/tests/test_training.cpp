// Losses, Adam, and the MAML inner/outer loops, including the closed-form
// and finite-difference meta-gradient oracles.
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "hammeta/dataset.hpp"
#include "hammeta/training.hpp"

using namespace hammeta;
using namespace hammeta::train;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using phys::PhasePoint;
using phys::SystemKind;
using phys::SystemSpec;

namespace {

// L(theta) = (theta - c)^2 over 1x1 parameters.
struct QuadraticProblem {
  Var loss(Tape&, std::span<const Var> params, const double& c) const {
    Var d = ad::add_scalar(params[0], -c);
    return ad::mul(d, d);
  }
};

// 9-parameter MLP (2-2-1, tanh) under a squared loss; tasks carry (X, Y).
struct TinyMlpProblem {
  struct Task {
    Tensor x;  // 3x2
    Tensor y;  // 3x1
  };
  Var loss(Tape& tape, std::span<const Var> p, const Task& task) const {
    Var x = tape.constant(task.x);
    Var y = tape.constant(task.y);
    Var h = ad::tanh(ad::add(ad::matmul(x, p[0]),
                             ad::broadcast_to(p[1], ad::Shape{3, 2})));
    Var pred = ad::add(ad::matmul(h, p[2]), ad::broadcast_to(p[3], ad::Shape{3, 1}));
    Var r = ad::sub(pred, y);
    return ad::sum(ad::mul(r, r));
  }
};

// A task whose targets are the model's own predicted field plus an offset,
// so the residual is exactly -offset at every component.
TaskBatch task_with_offset(const nn::ModelParams& params, const SystemSpec& sys,
                           std::span<const PhasePoint> pts, double offset) {
  TaskBatch task;
  task.system = sys;
  for (const PhasePoint& x : pts) {
    auto [qd, pd] = nn::symplectic_field(params, sys, x);
    std::vector<double> d(qd);
    d.insert(d.end(), pd.begin(), pd.end());
    for (auto& v : d) v += offset;
    task.points.push_back(x);
    task.derivs.push_back(std::move(d));
  }
  return task;
}

std::vector<PhasePoint> some_pendulum_points() {
  return {PhasePoint{0.0, {0.3, 1.0}, {0.4, 0.0}},
          PhasePoint{0.0, {-0.8, 1.0}, {0.1, 0.0}},
          PhasePoint{0.0, {1.1, 1.0}, {-0.6, 0.0}}};
}

}  // namespace

TEST(LossTest, PerfectPredictionGivesZero) {
  const auto sys = SystemSpec::make(SystemKind::kPendulum);
  const nn::ModelParams params = nn::init_params(5);
  const auto pts = some_pendulum_points();
  const TaskBatch task = task_with_offset(params, sys, pts, 0.0);
  EXPECT_NEAR(hnn_loss_value(params, task, LossKind::kLogCosh), 0.0, 1e-12);
  EXPECT_NEAR(hnn_loss_value(params, task, LossKind::kHnnL2), 0.0, 1e-12);
}

TEST(LossTest, ConstantOffsetIsAdditive) {
  // every residual component equals -delta: loss = count * logcosh(delta)
  const auto sys = SystemSpec::make(SystemKind::kPendulum);
  const nn::ModelParams params = nn::init_params(6);
  const auto pts = some_pendulum_points();
  const double delta = 0.37;
  const TaskBatch task = task_with_offset(params, sys, pts, delta);
  const double count = 4.0 * static_cast<double>(pts.size());
  EXPECT_NEAR(hnn_loss_value(params, task, LossKind::kLogCosh),
              count * ad::logcosh_scalar(delta), 1e-10);
}

TEST(LossTest, HnnL2IsPerPointNormSum) {
  // single point: loss = ||r_q||_2 + ||r_p||_2 with every component -delta
  const auto sys = SystemSpec::make(SystemKind::kPendulum);
  const nn::ModelParams params = nn::init_params(7);
  const auto pts = std::vector<PhasePoint>{some_pendulum_points()[0]};
  const double delta = 0.25;
  const TaskBatch task = task_with_offset(params, sys, pts, delta);
  const double expected = 2.0 * std::sqrt(2.0 * delta * delta);
  EXPECT_NEAR(hnn_loss_value(params, task, LossKind::kHnnL2), expected, 1e-10);
}

TEST(LossTest, NonNegativeAndGradientMatchesFiniteDifferences) {
  const auto sys = SystemSpec::make(SystemKind::kPendulum);
  const nn::ModelParams params = nn::init_params(8);
  Rng rng(2);
  const phys::Trajectory traj =
      io::generate_trajectory(sys, rng, ode::dataset_tolerances());
  const TaskBatch task = sample_task(traj, 3, rng);

  EXPECT_GT(hnn_loss_value(params, task, LossKind::kLogCosh), 0.0);
  EXPECT_GT(hnn_loss_value(params, task, LossKind::kHnnL2), 0.0);

  Tape tape;
  nn::ParamVars pv = nn::param_inputs(tape, params);
  Var loss = task_loss(tape, pv, task, LossKind::kLogCosh);
  const Var wrt[] = {pv.biases[2], pv.biases[5]};
  EXPECT_LT(ad::finite_diff_check(loss, wrt, 1e-6), 1e-4);
}

TEST(LossTest, ArgminAgreementOnOneParameterToy) {
  // Both loss shapes are minimized where the residual vanishes; scan a
  // 1-parameter residual theta - c.
  const double c = 0.6180339887;
  auto scan_argmin = [&](bool use_logcosh) {
    double best_theta = 0.0, best = 1e300;
    for (int i = 0; i <= 2000; ++i) {
      const double theta = -1.0 + 2.0 * i / 2000.0;
      Tape tape;
      Var th = tape.input("theta", Tensor::scalar(theta));
      Var r = ad::add_scalar(th, -c);
      Var loss = use_logcosh ? ad::sum(ad::logcosh(r))
                             : ad::sqrt(ad::sum(ad::mul(r, r)));
      if (loss.value().item() < best) {
        best = loss.value().item();
        best_theta = theta;
      }
    }
    return best_theta;
  };
  EXPECT_NEAR(scan_argmin(true), scan_argmin(false), 1e-9);
  EXPECT_NEAR(scan_argmin(true), c, 1e-3);
}

TEST(TaskTest, SampleWithoutReplacement) {
  const auto sys = SystemSpec::make(SystemKind::kMassSpring);
  Rng rng(11);
  const phys::Trajectory traj =
      io::generate_trajectory(sys, rng, ode::dataset_tolerances());
  const TaskBatch task = sample_task(traj, 50, rng);
  EXPECT_EQ(task.points.size(), 50u);
  // distinct support points (trajectory times are unique)
  std::vector<double> times;
  for (const auto& p : task.points) times.push_back(p.t);
  std::sort(times.begin(), times.end());
  EXPECT_TRUE(std::adjacent_find(times.begin(), times.end()) == times.end());
  EXPECT_THROW(sample_task(traj, 201, rng), DomainError);
}

TEST(AdamTest, ZeroGradientLeavesParamsUnchanged) {
  std::vector<double> params = {1.0, -2.0};
  AdamState st(2);
  const std::vector<double> zero = {0.0, 0.0};
  adam_update(params, zero, st, 0.1);
  EXPECT_EQ(params[0], 1.0);
  EXPECT_EQ(params[1], -2.0);
  EXPECT_EQ(st.step, 1);
}

TEST(AdamTest, FirstStepHasLearningRateMagnitude) {
  for (double g : {1e-6, 0.5, 3.0, -40.0}) {
    std::vector<double> params = {0.0};
    AdamState st(1);
    const std::vector<double> grad = {g};
    adam_update(params, grad, st, 0.01);
    EXPECT_NEAR(std::abs(params[0]), 0.01, 0.01 * 0.011) << "g=" << g;
    EXPECT_EQ(params[0] < 0, g > 0);
  }
}

TEST(AdamTest, MatchesHandComputedTrace) {
  // three steps of loss theta^2 from theta=1, lr=0.1 (hand-computed trace)
  std::vector<double> theta = {1.0};
  AdamState st(1);
  const double expected[] = {0.9000000005000000, 0.8004122286917928,
                             0.7015862729460303};
  for (double e : expected) {
    const std::vector<double> grad = {2.0 * theta[0]};
    adam_update(theta, grad, st, 0.1);
    EXPECT_NEAR(theta[0], e, 1e-15);
  }
  std::vector<double> wrong_size = {0.0, 0.0};
  EXPECT_THROW(adam_update(theta, wrong_size, st, 0.1), ShapeError);
}

TEST(InnerAdaptTest, ScalarQuadraticClosedForm) {
  QuadraticProblem prob;
  const double c = 0.0;  // L = theta^2
  {
    Tape tape;
    std::vector<Var> theta = {tape.input("theta0", Tensor::scalar(1.0))};
    auto out = inner_adapt(prob, tape, theta, c, 0.1, 1, true);
    EXPECT_NEAR(out[0].value().item(), 0.8, 1e-15);
  }
  {
    Tape tape;
    std::vector<Var> theta = {tape.input("theta0", Tensor::scalar(1.0))};
    auto out = inner_adapt(prob, tape, theta, c, 0.1, 2, true);
    EXPECT_NEAR(out[0].value().item(), 0.64, 1e-15);
  }
  {
    // zero gradient (loss is flat): adapted params equal the originals
    struct FlatProblem {
      Var loss(Tape&, std::span<const Var> p, const int&) const {
        return ad::scale(ad::sum(p[0]), 0.0);
      }
    } flat;
    Tape tape;
    std::vector<Var> theta = {tape.input("theta0", Tensor::scalar(1.25))};
    auto out = inner_adapt(flat, tape, theta, 0, 0.1, 1, true);
    EXPECT_EQ(out[0].value().item(), 1.25);
  }
}

TEST(MetaGradientTest, QuadraticClosedFormAndFirstOrderFactor) {
  // L_tau = (theta - c)^2, one inner step:
  //   full MAML gradient: 2 (1-2a)^2 (theta - c)
  //   first-order:        2 (1-2a)   (theta - c)
  QuadraticProblem prob;
  const double alpha = 0.1, theta0 = 0.7, c = -0.3;
  std::vector<Tensor> params = {Tensor::scalar(theta0)};
  const std::vector<double> tasks = {c};
  MetaConfig cfg;
  cfg.inner_lr = alpha;

  cfg.first_order = false;
  const double g_full = meta_gradient(prob, params, tasks, cfg)[0];
  cfg.first_order = true;
  const double g_first = meta_gradient(prob, params, tasks, cfg)[0];

  EXPECT_NEAR(g_full, 2.0 * (1 - 2 * alpha) * (1 - 2 * alpha) * (theta0 - c), 1e-12);
  EXPECT_NEAR(g_first, 2.0 * (1 - 2 * alpha) * (theta0 - c), 1e-12);
  EXPECT_NEAR(g_first / g_full, 1.0 / (1 - 2 * alpha), 1e-12);

  // finite differences of the composed objective
  cfg.first_order = false;
  const double h = 1e-6;
  std::vector<Tensor> plus = {Tensor::scalar(theta0 + h)};
  std::vector<Tensor> minus = {Tensor::scalar(theta0 - h)};
  const double fd = (meta_objective(prob, plus, tasks, cfg) -
                     meta_objective(prob, minus, tasks, cfg)) /
                    (2 * h);
  EXPECT_NEAR(g_full, fd, 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST(MetaGradientTest, TinyMlpMatchesFiniteDifferences) {
  // 9-parameter network, 2 tasks, K=3: full-MAML meta-gradient vs central
  // differences of the composed objective, relative 1e-4.
  TinyMlpProblem prob;
  Rng rng(21);
  auto rnd = [&](std::size_t r, std::size_t c) {
    Tensor t(ad::Shape{r, c});
    double* d = t.mutable_data();
    for (std::size_t i = 0; i < r * c; ++i) d[i] = rng.uniform(-1.0, 1.0);
    return t;
  };
  std::vector<Tensor> params = {rnd(2, 2), rnd(1, 2), rnd(2, 1), rnd(1, 1)};
  std::vector<TinyMlpProblem::Task> tasks = {{rnd(3, 2), rnd(3, 1)},
                                             {rnd(3, 2), rnd(3, 1)}};
  MetaConfig cfg;
  cfg.inner_lr = 0.05;

  const std::vector<double> g = meta_gradient(prob, params, tasks, cfg);
  ASSERT_EQ(g.size(), 9u);

  const std::vector<double> flat = flatten_tensors(params);
  const double h = 1e-5;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    auto perturbed = [&](double eps) {
      std::vector<double> f = flat;
      f[i] += eps;
      std::vector<Tensor> p = params;
      unflatten_into(f, p);
      return meta_objective(prob, p, tasks, cfg);
    };
    const double fd = (perturbed(h) - perturbed(-h)) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-4 * std::max({1.0, std::abs(fd), std::abs(g[i])}))
        << "param " << i;
  }
}

TEST(MetaGradientTest, ZeroInnerRateReducesToPlainTraining) {
  // alpha ~ 0 collapses the inner step; one meta step must equal one
  // pretraining (plain Adam) step on the same tasks.
  TinyMlpProblem prob;
  Rng rng(31);
  auto rnd = [&](std::size_t r, std::size_t c) {
    Tensor t(ad::Shape{r, c});
    double* d = t.mutable_data();
    for (std::size_t i = 0; i < r * c; ++i) d[i] = rng.uniform(-1.0, 1.0);
    return t;
  };
  std::vector<Tensor> a = {rnd(2, 2), rnd(1, 2), rnd(2, 1), rnd(1, 1)};
  std::vector<Tensor> b = a;
  std::vector<TinyMlpProblem::Task> tasks = {{rnd(3, 2), rnd(3, 1)},
                                             {rnd(3, 2), rnd(3, 1)}};
  MetaConfig cfg;
  cfg.inner_lr = 1e-300;  // effectively zero, keeps the validate() contract
  cfg.outer_lr = 0.01;

  AdamState adam_a(9), adam_b(9);
  maml_outer_step(prob, a, tasks, cfg, adam_a);
  pretrain_step(prob, b, tasks, cfg, adam_b);
  const auto fa = flatten_tensors(a), fb = flatten_tensors(b);
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], fb[i], 1e-12);
}

TEST(MetaGradientTest, TaskOrderInvariance) {
  QuadraticProblem prob;
  std::vector<Tensor> a = {Tensor::scalar(0.9)};
  std::vector<Tensor> b = a;
  const std::vector<double> tasks_fwd = {0.1, -0.7, 0.4};
  const std::vector<double> tasks_rev = {0.4, -0.7, 0.1};
  MetaConfig cfg;
  cfg.inner_lr = 0.05;
  cfg.outer_lr = 0.01;
  AdamState sa(1), sb(1);
  maml_outer_step(prob, a, tasks_fwd, cfg, sa);
  maml_outer_step(prob, b, tasks_rev, cfg, sb);
  EXPECT_NEAR(a[0].item(), b[0].item(), 1e-12);
}

TEST(TrainingSmokeTest, HnnLossDecreasesUnderPretraining) {
  // 100 short iterations of plain training on mass-spring tasks.
  const auto sys = SystemSpec::make(SystemKind::kMassSpring);
  Rng rng(41);
  std::vector<phys::Trajectory> trajs;
  for (int i = 0; i < 5; ++i) {
    trajs.push_back(io::generate_trajectory(sys, rng, ode::dataset_tolerances()));
  }
  HnnProblem prob;
  std::vector<Tensor> params = nn::init_params(1).as_list();
  MetaConfig cfg;
  cfg.task_batch_size = 2;
  cfg.k_support = 10;
  cfg.outer_lr = 0.001;
  AdamState adam(nn::parameter_count());

  double first = 0.0, last = 0.0;
  for (int it = 0; it < 100; ++it) {
    std::vector<TaskBatch> tasks;
    for (int b = 0; b < cfg.task_batch_size; ++b) {
      tasks.push_back(sample_task(trajs[rng.next_below(trajs.size())],
                                  cfg.k_support, rng));
    }
    const MetaStepInfo info = pretrain_step(prob, params, tasks, cfg, adam);
    if (it == 0) first = info.mean_outer_loss;
    last = info.mean_outer_loss;
    ASSERT_TRUE(std::isfinite(info.mean_outer_loss));
  }
  EXPECT_LT(last, first);
}

TEST(TrainingSmokeTest, MamlStepIsDeterministic) {
  const auto sys = SystemSpec::make(SystemKind::kPendulum);
  Rng data_rng(51);
  const phys::Trajectory traj =
      io::generate_trajectory(sys, data_rng, ode::dataset_tolerances());

  auto run_once = [&](std::uint64_t seed) {
    Rng rng(seed);
    HnnProblem prob;
    std::vector<Tensor> params = nn::init_params(seed).as_list();
    MetaConfig cfg;
    cfg.task_batch_size = 2;
    cfg.k_support = 8;
    AdamState adam(nn::parameter_count());
    std::vector<TaskBatch> tasks;
    for (int b = 0; b < cfg.task_batch_size; ++b) {
      tasks.push_back(sample_task(traj, cfg.k_support, rng));
    }
    maml_outer_step(prob, params, tasks, cfg, adam);
    return flatten_tensors(params);
  };
  EXPECT_EQ(run_once(9), run_once(9));  // bit-identical
}

TEST(BudgetParityTest, MetaAndPretrainConsumeSameTaskCount) {
  // the controlled comparison: identical task draws per iteration
  struct CountingProblem {
    mutable int calls = 0;
    mutable std::vector<double> seen;
    Var loss(Tape&, std::span<const Var> p, const double& c) const {
      ++calls;
      seen.push_back(c);
      Var d = ad::add_scalar(p[0], -c);
      return ad::mul(d, d);
    }
  };
  CountingProblem meta_prob, pre_prob;
  std::vector<Tensor> a = {Tensor::scalar(0.5)};
  std::vector<Tensor> b = a;
  const std::vector<double> tasks = {0.2, 0.4, 0.8};
  MetaConfig cfg;
  AdamState sa(1), sb(1);
  maml_outer_step(meta_prob, a, tasks, cfg, sa);
  pretrain_step(pre_prob, b, tasks, cfg, sb);
  // meta evaluates each task twice (inner + outer) on the same data;
  // both consume exactly the same task batch
  EXPECT_EQ(meta_prob.calls, 6);
  EXPECT_EQ(pre_prob.calls, 3);
  std::vector<double> meta_unique = meta_prob.seen;
  std::sort(meta_unique.begin(), meta_unique.end());
  meta_unique.erase(std::unique(meta_unique.begin(), meta_unique.end()),
                    meta_unique.end());
  std::vector<double> pre_sorted = pre_prob.seen;
  std::sort(pre_sorted.begin(), pre_sorted.end());
  EXPECT_EQ(meta_unique, pre_sorted);
}
