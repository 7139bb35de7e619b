// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scoter/common.hpp"
#include "scoter/theory.hpp"

using namespace scoter;
using namespace scoter::theory;

TEST_CASE("tv_distance closed forms and metric properties") {
  CHECK(tv_distance({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(tv_distance({1, 0, 0}, {0, 0.5, 0.5}) == 1.0);  // disjoint supports
  CHECK(tv_distance({0.5, 0.5}, {1.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(tv_distance({0.5, 0.2}, {0.5, 0.5}), ScoterError);

  // triangle inequality on random triples
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto draw = [&rng]() {
      std::vector<double> p(4);
      double total = 0.0;
      for (auto& v : p) {
        v = -std::log(1.0 - rng.uniform());
        total += v;
      }
      for (auto& v : p) v /= total;
      return p;
    };
    auto p = draw(), q = draw(), r = draw();
    CHECK(tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12);
  }
}

TEST_CASE("conditional MI: independence, identity, chain-rule oracle") {
  // C independent of Y given S: p(s,c,y) = p(s) p(c|s) p(y|s)
  Rng rng(5);
  DiscreteJoint indep(3, 4, 3);
  for (int s = 0; s < 3; ++s) {
    std::vector<double> pc(4), py(3);
    double zc = 0.0, zy = 0.0;
    for (auto& v : pc) { v = rng.uniform() + 0.05; zc += v; }
    for (auto& v : py) { v = rng.uniform() + 0.05; zy += v; }
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 3; ++y)
        indep.at(s, c, y) = (1.0 / 3.0) * pc[static_cast<std::size_t>(c)] / zc *
                            py[static_cast<std::size_t>(y)] / zy;
  }
  indep.validate(1e-9);
  CHECK(std::abs(indep.conditional_mi(Axis::kC, Axis::kS)) <= 1e-12);

  // C = Y uniform binary, S constant -> exactly 1 bit
  DiscreteJoint copy(1, 2, 2);
  copy.at(0, 0, 0) = 0.5;
  copy.at(0, 1, 1) = 0.5;
  CHECK(copy.conditional_mi(Axis::kC, Axis::kS) == doctest::Approx(1.0).epsilon(1e-12));

  // chain-rule oracle on random 3x3x2 joints: I(C;Y|S) = I(C;(Y,S)) - I(C;S)
  for (int trial = 0; trial < 10; ++trial) {
    auto joint = DiscreteJoint::random(3, 3, 2, rng);
    const double direct = joint.conditional_mi(Axis::kC, Axis::kS);

    DiscreteJoint merged(1, 3, 6);  // W = (Y,S) packed into one axis
    DiscreteJoint cs(1, 3, 3);
    for (int s = 0; s < 3; ++s)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 2; ++y) {
          merged.at(0, c, y * 3 + s) += joint.at(s, c, y);
          cs.at(0, c, s) += joint.at(s, c, y);
        }
    const double oracle = merged.conditional_mi(Axis::kC, Axis::kS) -
                          cs.conditional_mi(Axis::kC, Axis::kS);
    CHECK(direct == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("conditional MI is nonnegative and symmetric in its arguments") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto joint = DiscreteJoint::random(3, 4, 3, rng);
    const double a = joint.conditional_mi(Axis::kC, Axis::kS);  // I(C;Y|S)
    const double b = joint.conditional_mi(Axis::kY, Axis::kS);  // I(Y;C|S)
    CHECK(a >= -1e-12);
    CHECK(a == doctest::Approx(b).epsilon(1e-10));
  }
}

TEST_CASE("DPI edge semantics: identity and constant coarsenings") {
  Rng rng(11);
  auto joint = DiscreteJoint::random(3, 6, 3, rng);
  // identity coarsening: same joint, equality within 1e-12
  const double lhs = joint.conditional_mi(Axis::kC, Axis::kS);
  CHECK(lhs == doctest::Approx(lhs).epsilon(1e-12));

  // constant coarsening: one bucket -> RHS exactly 0 <= LHS
  DiscreteJoint constant(3, 1, 3);
  for (int s = 0; s < 3; ++s)
    for (int h = 0; h < 6; ++h)
      for (int y = 0; y < 3; ++y) constant.at(s, 0, y) += joint.at(s, h, y);
  const double rhs = constant.conditional_mi(Axis::kC, Axis::kS);
  CHECK(std::abs(rhs) <= 1e-12);
  CHECK(lhs >= rhs - 1e-10);
}

TEST_CASE("DPI holds across seeded random trials") {
  auto report = verify_dpi(100, 2024);
  CHECK(report.trials == 100);
  CHECK(report.violations == 0);
  CHECK(report.min_margin >= -1e-10);
  CHECK(report.holds());
}

TEST_CASE("recall lower bound: zero-TV case reads recall >= m_K with equality") {
  Rng rng(13);
  auto joint = DiscreteJoint::random(2, 2, 6, rng);
  ConditionalModel perfect(2, std::vector<std::vector<double>>(2, std::vector<double>(6)));
  for (int s = 0; s < 2; ++s)
    for (int c = 0; c < 2; ++c) {
      double p_sc = 0.0;
      for (int y = 0; y < 6; ++y) p_sc += joint.at(s, c, y);
      for (int y = 0; y < 6; ++y)
        perfect[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)][static_cast<std::size_t>(y)] =
            joint.at(s, c, y) / p_sc;
    }
  auto inst = verify_lower_bound(joint, perfect, 3);
  CHECK(inst.holds);
  CHECK(inst.expected_tv == doctest::Approx(0.0).epsilon(1e-12));
  // both sides equal the expected top-K true mass
  CHECK(inst.expected_recall == doctest::Approx(inst.expected_mk).epsilon(1e-12));

  // uniform q: bound holds with slack
  ConditionalModel uniform(2, std::vector<std::vector<double>>(2, std::vector<double>(6, 1.0 / 6.0)));
  auto uinst = verify_lower_bound(joint, uniform, 3);
  CHECK(uinst.holds);
  CHECK(uinst.margin >= 0.0);
}

TEST_CASE("recall lower bound: 100 random instances, zero violations") {
  auto report = verify_lower_bound_trials(100, 3, 777);
  CHECK(report.instances == 100);
  CHECK(report.violations == 0);
  CHECK(report.min_margin >= -1e-10);
}

TEST_CASE("collision penalty: disjoint delta=1 pair forces max TV >= 1/2") {
  auto report = verify_collision_penalty(2, 1.0, 1.0, 10, 31);
  CHECK(report.violations == 0);
  CHECK(report.min_max_tv >= 0.5 - 1e-10);
  CHECK(report.pointwise_holds());
}

TEST_CASE("collision penalty: delta=0 is vacuous, mixed population corollary") {
  auto vacuous = verify_collision_penalty(3, 1.0, 0.0, 5, 32);
  CHECK(vacuous.pointwise_holds());
  CHECK(vacuous.expectation_holds());  // E[TV] >= 0

  // rho=0.5, delta=0.4 -> E[TV] >= 0.1 for the best order-agnostic q
  auto mixed = verify_collision_penalty(3, 0.5, 0.4, 40, 33);
  CHECK(mixed.violations == 0);
  CHECK(mixed.expected_tv >= 0.1 - 1e-9);
  CHECK(mixed.rho_delta_half == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(mixed.expectation_holds());
}

TEST_CASE("collision penalty uses convex minimization above |Y|=3") {
  auto report = verify_collision_penalty(8, 1.0, 0.6, 20, 34);
  CHECK(report.expected_tv >= 0.3 - 1e-9);  // delta/2 with rho=1
  CHECK(report.expectation_holds());
}

TEST_CASE("order task construction: exact TV gap and clean structure") {
  OrderTaskSpec spec;
  spec.seed = 9;
  spec.n_users = 64;
  auto task = build_order_task(spec);

  CHECK(task.bundle.train.size() == 64);
  CHECK(task.bundle.vocab.size() == 51);

  // each conditional is a distribution and permuting the order flips mass
  // by exactly delta in TV
  for (int cls = 0; cls < 8; ++cls) {
    double mass = 0.0;
    for (double v : task.conditional[static_cast<std::size_t>(cls)]) mass += v;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    const double gap = tv_distance(task.conditional[static_cast<std::size_t>(cls)],
                                   task.conditional[static_cast<std::size_t>(cls ^ 1)]);
    CHECK(gap == doctest::Approx(spec.delta).epsilon(1e-12));
  }

  // same seed -> identical corpus
  auto again = build_order_task(spec);
  for (std::size_t u = 0; u < task.bundle.test.size(); ++u) {
    CHECK(task.bundle.test[u].items == again.bundle.test[u].items);
    CHECK(task.matrices[u].rows == again.matrices[u].rows);
  }

  // step matrices: same (f,p) with opposite o are row-swaps of each other
  // (classes 2m and 2m+1 sit at user indices cls and cls^1 mod 8)
  const auto& m0 = task.matrices[0];  // class 0 = (f0,p0,o0)
  const auto& m1 = task.matrices[1];  // class 1 = (f0,p0,o1)
  for (int j = 0; j < m0.d; ++j) {
    CHECK(m0.row(0)[j] == m1.row(1)[j]);
    CHECK(m0.row(1)[j] == m1.row(0)[j]);
  }

  // k > 2 pads with a constant filler row shared across users
  OrderTaskSpec wide = spec;
  wide.k = 4;
  auto wide_task = build_order_task(wide);
  CHECK(wide_task.matrices[0].k == 4);
  for (int j = 0; j < 8; ++j) {
    CHECK(wide_task.matrices[0].row(2)[j] == wide_task.matrices[5].row(2)[j]);
    CHECK(wide_task.matrices[0].row(3)[j] == wide_task.matrices[5].row(3)[j]);
  }
}

TEST_CASE("mean-collision embeddings hide the pair from row means") {
  OrderTaskSpec spec;
  spec.seed = 10;
  spec.n_users = 16;
  spec.mean_collision = true;
  auto task = build_order_task(spec);
  // class 0 = (f0,p0,o0), class 2 = (f0,p1,o0): same family
  const auto& a = task.matrices[0];
  const auto& b = task.matrices[2];
  for (int j = 0; j < a.d; ++j) {
    const double mean_a = 0.5 * (a.row(0)[j] + a.row(1)[j]);
    const double mean_b = 0.5 * (b.row(0)[j] + b.row(1)[j]);
    CHECK(mean_a == doctest::Approx(mean_b).epsilon(1e-12));
  }
  // but the row multisets differ
  bool rows_differ = false;
  for (int j = 0; j < a.d; ++j) {
    rows_differ = rows_differ || (a.row(0)[j] != b.row(0)[j] && a.row(0)[j] != b.row(1)[j]);
  }
  CHECK(rows_differ);
}

TEST_CASE("order-advantage experiment: full beats mean_pooled") {
  OrderTaskSpec spec;
  spec.rho = 1.0;
  spec.delta = 0.8;
  spec.catalog = 50;
  spec.seed = 1000;
  spec.n_users = 256;
  spec.mean_collision = true;

  OrderTrainParams params;
  params.max_epochs = 80;
  params.patience = 15;
  params.batch_size = 48;
  params.lr = 5e-3;

  auto report = order_advantage_experiment(
      spec, {fusion::Variant::kFull, fusion::Variant::kMeanPooled}, 1, params);
  REQUIRE(report.runs.size() == 1);
  const auto& run = report.runs[0];
  MESSAGE("full recall5 = ", run.variants.at("full").recall5,
          ", mean_pooled recall5 = ", run.variants.at("mean_pooled").recall5,
          ", gap = ", run.gap, ", rhs = ", run.rhs);
  CHECK(run.variants.at("full").recall5 > run.variants.at("mean_pooled").recall5);
  CHECK(run.mean_pooled_perm_invariant);
  CHECK(run.full_perm_max_diff > 1e-6);
  CHECK(report.full_wins_every_seed);
  CHECK(report.bound_holds);
  CHECK(!report.to_json().empty());
}

TEST_CASE("order-advantage experiment: rho=0 leaves no usable order signal") {
  OrderTaskSpec spec;
  spec.rho = 0.0;
  spec.delta = 0.8;
  spec.catalog = 50;
  spec.seed = 2000;
  spec.n_users = 256;

  OrderTrainParams params;
  params.max_epochs = 80;
  params.patience = 20;
  params.batch_size = 48;
  params.lr = 5e-3;

  auto report = order_advantage_experiment(
      spec, {fusion::Variant::kFull, fusion::Variant::kMeanPooled}, 2, params);
  // both encoders see the same usable information; the gap must sit within
  // 3 sigma of zero (finite-sample floor on sigma)
  const double sigma = std::max(report.gap_std, 0.03);
  MESSAGE("rho=0 mean gap = ", report.mean_gap, " sigma = ", sigma);
  CHECK(std::abs(report.mean_gap) <= 3.0 * sigma);
}
