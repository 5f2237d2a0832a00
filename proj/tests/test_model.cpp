// Hamiltonian network: initialization, forward structure, the symplectic
// wrapper, activation probes, and the structural invariants (permutation
// equivariance, divergence-free field).
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "hammeta/model.hpp"
#include "hammeta/rng.hpp"

using namespace hammeta;
using namespace hammeta::nn;
using phys::PhasePoint;
using phys::SystemKind;
using phys::SystemSpec;

namespace {

PhasePoint pendulum_point(double theta, double ptheta) {
  return PhasePoint{0.0, {theta, 1.0}, {ptheta, 0.0}};
}

GraphBatch one_point_batch(const SystemSpec& sys, const PhasePoint& x) {
  const PhasePoint pts[] = {x};
  return make_graph_batch(sys, pts);
}

// Central difference of a scalar tape output w.r.t. one element of a named
// input, via re-evaluation.
double fd_wrt_input(const ad::Tape& tape, ad::Var output, const std::string& name,
                    std::size_t flat_index, double h) {
  std::unordered_map<std::string, ad::Tensor> bind;
  for (const auto& [nm, id] : tape.inputs_by_name()) {
    bind.emplace(nm, tape.node(id).value);
  }
  ad::Tensor plus = bind.at(name), minus = bind.at(name);
  plus.set_flat(flat_index, plus.flat(flat_index) + h);
  minus.set_flat(flat_index, minus.flat(flat_index) - h);
  bind[name] = plus;
  const double fp = ad::evaluate(tape, bind)[output.id()].item();
  bind[name] = minus;
  const double fm = ad::evaluate(tape, bind)[output.id()].item();
  return (fp - fm) / (2.0 * h);
}

}  // namespace

TEST(InitTest, DeterministicAndBounded) {
  const ModelParams a = init_params(7);
  const ModelParams b = init_params(7);
  const ModelParams c = init_params(8);
  const auto fa = a.flatten(), fb = b.flatten(), fc = c.flatten();
  ASSERT_EQ(fa.size(), parameter_count());
  EXPECT_EQ(fa, fb);  // bit-identical
  EXPECT_NE(fa, fc);
  // gc1 has fan_in 4: every entry within +/- 1/2
  for (double v : a.weights[0].data()) EXPECT_LE(std::abs(v), 0.5);
  for (double v : a.biases[0].data()) EXPECT_LE(std::abs(v), 0.5);
}

TEST(InitTest, FlattenRoundTripExact) {
  const ModelParams a = init_params(3);
  const ModelParams b = ModelParams::unflatten(a.flatten());
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_THROW(ModelParams::unflatten(std::vector<double>(10)), ShapeError);
}

TEST(ForwardTest, ZeroFeaturesZeroBiasesGiveZero) {
  // mish(0) = 0 propagates through every layer regardless of the weights.
  ModelParams p = init_params(11);
  for (auto& b : p.biases) b = ad::Tensor(b.shape());
  const auto sys = SystemSpec::make(SystemKind::kMassSpring);
  GraphBatch batch = one_point_batch(sys, PhasePoint{0.0, {0, 0}, {0, 0}});
  ad::Tape tape;
  ForwardTrace t = forward(tape, param_inputs(tape, p), batch);
  EXPECT_NEAR(t.output.value().item(), 0.0, 1e-15);
}

TEST(ForwardTest, SingleNodePoolingIsIdentity) {
  const ModelParams p = init_params(12);
  const auto sys = SystemSpec::make(SystemKind::kPendulum);
  GraphBatch batch = one_point_batch(sys, pendulum_point(0.3, -0.2));
  ad::Tape tape;
  ForwardTrace t = forward(tape, param_inputs(tape, p), batch);
  ASSERT_EQ(t.pool.value().rows(), 1u);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_DOUBLE_EQ(t.pool.value()(0, c), t.gc3.value()(0, c));
  }
}

TEST(ForwardTest, DuplicatedGraphGetsIdenticalScalar) {
  const ModelParams p = init_params(13);
  const auto sys = SystemSpec::make(SystemKind::kHenonHeiles);
  const PhasePoint x{0.0, {0.4, -0.1}, {0.2, 0.5}};
  const PhasePoint pts[] = {x, x, PhasePoint{0.0, {0.1, 0.2}, {-0.3, 0.1}}};
  GraphBatch batch = make_graph_batch(sys, pts);
  ad::Tape tape;
  ForwardTrace t = forward(tape, param_inputs(tape, p), batch);
  ASSERT_EQ(t.output.value().rows(), 3u);
  EXPECT_DOUBLE_EQ(t.output.value()(0, 0), t.output.value()(1, 0));
  EXPECT_NE(t.output.value()(0, 0), t.output.value()(2, 0));
}

TEST(SymplecticTest, QuadraticStandInHeadGivesHarmonicField) {
  // H = 0.5 * sum(features^2) through the same J-mapping machinery:
  // field must be (p1, p2, -q1, -q2) per node.
  ad::Tape tape;
  ad::Var f = tape.input("features", ad::Tensor(ad::Shape{1, 4}, {0.3, -0.7, 0.9, 0.4}));
  ad::Var h = ad::scale(ad::sum(ad::mul(f, f)), 0.5);
  ad::Var g = ad::gradient_single(h, f, true);
  ad::Var field = symplectic_from_feature_grad(g);
  EXPECT_NEAR(field.value()(0, 0), 0.9, 1e-14);   // qdot1 = p1
  EXPECT_NEAR(field.value()(0, 1), 0.4, 1e-14);   // qdot2 = p2
  EXPECT_NEAR(field.value()(0, 2), -0.3, 1e-14);  // pdot1 = -q1
  EXPECT_NEAR(field.value()(0, 3), 0.7, 1e-14);   // pdot2 = -q2
}

TEST(SymplecticTest, FieldBlocksMatchFiniteDifferencesOfForward) {
  // qdot == +dH/dp and pdot == -dH/dq, against central differences of the
  // scalar head w.r.t. the input features.
  const ModelParams p = init_params(21);
  const auto sys = SystemSpec::make(SystemKind::kMagneticMirror);
  const PhasePoint x{0.0, {0.5, -0.3}, {0.2, 0.7}};
  GraphBatch batch = one_point_batch(sys, x);

  ad::Tape tape;
  ParamVars pv = param_inputs(tape, p);
  ForwardTrace t = forward(tape, pv, batch);
  ad::Var energy = ad::sum(t.output);
  ad::Var field = symplectic_from_feature_grad(
      ad::gradient_single(energy, t.features, true));

  // feature order (q1, q2, p1, p2); field order (qd1, qd2, pd1, pd2)
  for (std::size_t j = 0; j < 4; ++j) {
    const std::string fname = tape.node(t.features.id()).name;
    const double fd = fd_wrt_input(tape, energy, fname, j, 1e-6);
    const double mapped = j < 2 ? -field.value()(0, j + 2) : field.value()(0, j - 2);
    EXPECT_NEAR(mapped, fd, 1e-5 * std::max(1.0, std::abs(fd))) << "coord " << j;
  }
}

TEST(SymplecticTest, FieldIsDivergenceFree) {
  // Liouville: sum_i d xdot_i / d x_i == 0 for any J-gradient field.
  const ModelParams p = init_params(31);
  const auto sys = SystemSpec::make(SystemKind::kHenonHeiles);
  const std::vector<double> base = {0.4, 0.1, -0.2, 0.3};
  const double h = 1e-5;
  double divergence = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    auto at = [&](double eps) {
      std::vector<double> s = base;
      s[i] += eps;
      const PhasePoint x = PhasePoint::from_state(0.0, s);
      auto [qd, pd] = symplectic_field(p, sys, x);
      std::vector<double> f(qd);
      f.insert(f.end(), pd.begin(), pd.end());
      return f[i];
    };
    divergence += (at(h) - at(-h)) / (2.0 * h);
  }
  EXPECT_NEAR(divergence, 0.0, 1e-4);
}

TEST(SymplecticTest, PermutationEquivariance) {
  const ModelParams p = init_params(41);
  const auto sys = SystemSpec::make(SystemKind::kTwoBody);
  Rng rng(3);
  const PhasePoint x = phys::sample_initial(sys, rng);
  PhasePoint swapped = x;
  std::swap(swapped.q[0], swapped.q[2]);
  std::swap(swapped.q[1], swapped.q[3]);
  std::swap(swapped.p[0], swapped.p[2]);
  std::swap(swapped.p[1], swapped.p[3]);

  ad::Tape t1, t2;
  GraphBatch b1 = one_point_batch(sys, x);
  GraphBatch b2 = one_point_batch(sys, swapped);
  const double h1 = forward(t1, param_inputs(t1, p), b1).output.value().item();
  const double h2 = forward(t2, param_inputs(t2, p), b2).output.value().item();
  EXPECT_NEAR(h1, h2, 1e-12);

  auto [qd1, pd1] = symplectic_field(p, sys, x);
  auto [qd2, pd2] = symplectic_field(p, sys, swapped);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(qd1[c], qd2[c + 2], 1e-12);
    EXPECT_NEAR(qd1[c + 2], qd2[c], 1e-12);
    EXPECT_NEAR(pd1[c], pd2[c + 2], 1e-12);
    EXPECT_NEAR(pd1[c + 2], pd2[c], 1e-12);
  }
}

TEST(SymplecticTest, DifferentiableInParams) {
  // The field (hence any loss built on it) must be C^1 in the parameters:
  // check d(sum of field)/d(small param blocks) against central differences.
  const ModelParams p = init_params(51);
  const auto sys = SystemSpec::make(SystemKind::kPendulum);
  const PhasePoint pts[] = {pendulum_point(0.2, 0.4), pendulum_point(-0.5, 0.1)};
  GraphBatch batch = make_graph_batch(sys, pts);

  ad::Tape tape;
  ParamVars pv = param_inputs(tape, p);
  ad::Var s = ad::sum(predicted_field(tape, pv, batch));
  const ad::Var wrt[] = {pv.biases[2], pv.biases[5]};  // gc3.b (4), fc3.b (1)
  EXPECT_LT(ad::finite_diff_check(s, wrt, 1e-6), 1e-4);
}

TEST(ActivationsTest, ShapesAndDefinitions) {
  const ModelParams p = init_params(61);
  const auto sys = SystemSpec::make(SystemKind::kTwoBody);
  Rng rng(8);
  std::vector<PhasePoint> pts;
  for (int i = 0; i < 5; ++i) pts.push_back(phys::sample_initial(sys, rng));
  GraphBatch batch = make_graph_batch(sys, pts);

  const ad::Tensor fc3 = layer_activations(p, batch, "fc3");
  EXPECT_EQ(fc3.rows(), 5u);
  EXPECT_EQ(fc3.cols(), 1u);

  // pool == per-graph mean of gc3 rows
  const ad::Tensor pool = layer_activations(p, batch, "pool");
  ad::Tape tape;
  ForwardTrace t = forward(tape, param_inputs(tape, p), batch);
  for (std::size_t g = 0; g < 5; ++g) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double mean_row =
          0.5 * (t.gc3.value()(2 * g, c) + t.gc3.value()(2 * g + 1, c));
      EXPECT_NEAR(pool(g, c), mean_row, 1e-14);
    }
  }

  // identical params + batch -> identical activations
  const ad::Tensor again = layer_activations(p, batch, "fc3");
  EXPECT_EQ(std::vector<double>(fc3.data().begin(), fc3.data().end()),
            std::vector<double>(again.data().begin(), again.data().end()));

  EXPECT_THROW(layer_activations(p, batch, "fc9"), DomainError);
}
