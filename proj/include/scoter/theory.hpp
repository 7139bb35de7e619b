#pragma once

// SPDX-License-Identifier: Apache-2.0

// Executable verification of the information-theoretic guarantees: exact
// TV distance and conditional mutual information on finite joints, the
// data-processing inequality check, the recall lower bound, the collision
// penalty for order-agnostic predictors, and the order-advantage
// experiment that trains order-sensitive vs order-agnostic fusion models
// on a fully enumerable synthetic task.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scoter/datasets.hpp"
#include "scoter/distill.hpp"
#include "scoter/fusion.hpp"
#include "scoter/rng.hpp"

namespace scoter::theory {

// ---------------------------------------------------------------------------
// Exact finite-distribution machinery
// ---------------------------------------------------------------------------

/// Half-L1 distance of two aligned distributions. Each input must sum to
/// 1 within `norm_tol`.
double tv_distance(const std::vector<double>& p, const std::vector<double>& q,
                   double norm_tol = 1e-9);

enum class Axis { kS = 0, kC = 1, kY = 2 };

/// Exact joint over (S, C, Y); entries >= 0, total mass 1.
class DiscreteJoint {
 public:
  DiscreteJoint(int n_s, int n_c, int n_y);
  static DiscreteJoint random(int n_s, int n_c, int n_y, Rng& rng);

  double& at(int s, int c, int y);
  double at(int s, int c, int y) const;
  int size(Axis axis) const;
  double total_mass() const;
  void normalize();
  void validate(double tol = 1e-12) const;

  /// I(of ; third | given) in bits, exact summation; the "third" axis is
  /// whichever of S/C/Y is neither `of` nor `given`.
  double conditional_mi(Axis of, Axis given) const;

  std::string to_json() const;

 private:
  int dims_[3];
  std::vector<double> p_;  // [s][c][y] row-major
};

// ---------------------------------------------------------------------------
// Bound checks
// ---------------------------------------------------------------------------

struct DpiReport {
  int trials = 0;
  int violations = 0;
  double min_margin = 0.0;  // min over trials of I(Hseq;Y|S) - I(Hbag;Y|S)
  std::vector<std::string> failing_joints;  // serialized offenders
  bool holds() const { return violations == 0; }
};

/// Random joints over (S, H_seq, Y); H_bag = deterministic bucketing of
/// H_seq. Asserts I(H_seq;Y|S) >= I(H_bag;Y|S) - 1e-10 per trial.
DpiReport verify_dpi(int n_trials, std::uint64_t seed);

struct LowerBoundInstance {
  double expected_recall = 0.0;  // E[Recall@K], exact
  double expected_mk = 0.0;      // E[m_K] under the model
  double expected_tv = 0.0;      // E[TV(p*(.|s,c), q(.|s,c))]
  double margin = 0.0;           // recall - (mk - tv)
  bool holds = false;
};

/// Model distribution q(y|s,c) aligned with a joint's (S,C) supports.
using ConditionalModel = std::vector<std::vector<std::vector<double>>>;

/// Exact enumeration of the recall lower bound for one (joint, model, K).
/// Top-K sets break score ties by ascending y.
LowerBoundInstance verify_lower_bound(const DiscreteJoint& joint,
                                      const ConditionalModel& model, int top_k);

struct LowerBoundReport {
  int instances = 0;
  int violations = 0;
  double min_margin = 0.0;
  std::vector<std::string> failing_instances;  // serialized offenders
  bool holds() const { return violations == 0; }
};

/// Random (joint, q) pairs including the q = p* and q = uniform edges.
LowerBoundReport verify_lower_bound_trials(int n_instances, int top_k,
                                           std::uint64_t seed);

struct OrderTaskSpec {
  double rho = 1.0;    // fraction of order-sensitive sequences
  double delta = 0.8;  // TV gap under step permutation
  int k = 2;           // reasoning steps
  int catalog = 50;
  std::uint64_t seed = 1;
  int n_users = 384;
  int history_len = 5;  // uninformative noise prefix per user
  /// true: pairs within a family share their step-embedding mean (the
  /// graded task where mean pooling also loses the pair identity);
  /// false: means stay distinct, so only step order separates encoders.
  bool mean_collision = false;
};

struct CollisionReport {
  int sequences = 0;
  int grid_points = 0;
  int violations = 0;          // grid q below the delta/2 bound
  double min_max_tv = 0.0;     // min over q of max(TV(p_C,q), TV(p_Cpi,q))
  double expected_tv = 0.0;    // E[TV] under the best order-agnostic q
  double rho_delta_half = 0.0;
  bool pointwise_holds() const { return violations == 0; }
  bool expectation_holds() const { return expected_tv >= rho_delta_half - 1e-9; }
};

/// Grid check (|Y| in {2,3}, step 0.01) of the delta/2 collision bound,
/// plus the expected-fitting-error corollary E[TV] >= rho*delta/2 using
/// the best order-agnostic q found per sequence (convex minimization for
/// |Y| > 3). Constructions failing TV >= delta throw.
CollisionReport verify_collision_penalty(int n_y, double rho, double delta,
                                         int n_sequences, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Order-advantage experiment
// ---------------------------------------------------------------------------

/// Fully enumerable synthetic task: the chain's step order shifts the
/// target distribution by exactly delta in TV for sensitive users; user
/// histories are class-independent noise, so the class signal reaches the
/// model only through the step-embedding matrix.
struct OrderTask {
  OrderTaskSpec spec;
  datasets::SplitBundle bundle;
  std::vector<distill::StepEmbeddingMatrix> matrices;  // aligned with users
  std::vector<int> user_class;       // f*4 + p*2 + o
  std::vector<bool> user_sensitive;
  std::vector<std::vector<double>> conditional;    // 8 x catalog, sensitive p*
  std::vector<std::vector<double>> order_averaged; // 8 x catalog, o-averaged
  std::vector<double> marginal;                    // population p*(y)

  const std::vector<double>& target_dist(std::size_t user_index) const;
};

OrderTask build_order_task(const OrderTaskSpec& spec);

struct OrderTrainParams {
  int d_model = 16;
  int n_heads = 2;
  int head_dim = 8;
  int n_layers = 1;
  int mlp_hidden = 32;
  double dropout = 0.0;
  double lr = 5e-3;
  double weight_decay = 5e-5;
  int max_epochs = 150;
  int patience = 20;
  int batch_size = 48;
  double lambda = 0.1;
  double tau = 0.07;
};

struct OrderVariantMetrics {
  double recall5 = 0.0;
  double expected_m5 = 0.0;        // top-5 mass under the model's softmax
  double tv_vs_marginal = 0.0;     // E[TV(p*(.|S), q)]
  double tv_vs_conditional = 0.0;  // E[TV(p*(.|S,C), q)] (diagnostic)
};

struct OrderSeedRun {
  std::uint64_t seed = 0;
  std::map<std::string, OrderVariantMetrics> variants;  // keyed by name
  double gap = 0.0;  // recall5 full - mean_pooled
  double rhs = 0.0;  // (m5_full - m5_mean) + rho*delta/2 - tv_marginal_full
  bool mean_pooled_perm_invariant = false;
  double full_perm_max_diff = 0.0;
};

struct OrderExperimentReport {
  OrderTaskSpec spec;
  std::vector<OrderSeedRun> runs;
  double mean_gap = 0.0;
  double mean_rhs = 0.0;
  double margin_std = 0.0;   // std of per-seed (gap - rhs)
  double gap_std = 0.0;
  bool bound_holds = false;  // mean gap >= mean rhs - 3*margin_std
  bool full_wins_every_seed = false;

  std::string to_json() const;
};

/// Trains the requested variants with matched budgets on `n_seeds` fresh
/// tasks (seed, seed+1, ...) and enumerates the bound quantities.
/// `variants` must include "full" and "mean_pooled".
OrderExperimentReport order_advantage_experiment(
    const OrderTaskSpec& spec, const std::vector<fusion::Variant>& variants,
    int n_seeds, const OrderTrainParams& params);

}  // namespace scoter::theory
