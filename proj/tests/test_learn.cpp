#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cheaptalk/harness/metrics.hpp"
#include "support/gradcheck_suite.hpp"

using namespace cheaptalk;
using learn::Algorithm;
using nn::Matrix;
using nn::Tensor;

namespace {

EnvState comm_state(const Maze& m) {
  EnvState s = m.initial_state(Goal::kUp, m.config().fixed_decoys());
  s.sender_pos = m.functional_booths().at(0).position;
  s.receiver_pos = m.config().receiver_booth;
  return s;
}

// E[logistic(m + sigma Z)] by Simpson's rule over z in [-12, 12].
double expected_logistic(double m, double sigma) {
  const int n = 4000;
  const double a = -12.0, b = 12.0, h = (b - a) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    double z = a + i * h;
    double f = learn::logistic(m + sigma * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    acc += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return acc * h / 3.0;
}

learn::TrainerConfig tiny_config(Algorithm a, int total, int discovery, unsigned long long seed = 1) {
  learn::TrainerConfig c;
  c.algorithm = a;
  c.total_episodes = total;
  c.num_discovery_episodes = discovery;
  c.hidden_size = 8;
  c.batch_size = 4;
  c.buffer_capacity = 400;
  c.initial_exploration_steps = 20;
  c.train_every = 4;
  c.target_update_C = 5;
  c.eval_every = 5;
  c.belief_max_attempts = 200;
  c.seed = seed;
  return c;
}

std::shared_ptr<const Maze> mpb() { return std::make_shared<const Maze>(mpbmaze(0.3)); }

learn::Trainer trained(Algorithm a, int total, int discovery, unsigned long long seed = 1) {
  learn::Trainer t(mpb(), tiny_config(a, total, discovery, seed));
  t.run([](const learn::EvalPoint&) {});
  return t;
}

}  // namespace

// ------------------------------------------------------------------ rewards

TEST(ShapedReward, Examples) {
  Maze m(spbmaze());
  EnvState comm = comm_state(m);
  EXPECT_EQ(learn::shaped_reward(0.7, m, comm, 0.0), 0.7);
  EXPECT_NEAR(learn::shaped_reward(0.0, m, comm, 2.0), 1.5926, 1e-4);
  EXPECT_NEAR(learn::shaped_reward(0.0, m, comm, 2.0), 2.0 * mi::pairwise_mi(m, comm), 1e-15);
  EnvState away = m.initial_state(Goal::kUp, m.config().fixed_decoys());
  EXPECT_EQ(learn::shaped_reward(-0.5, m, away, 2.0), -0.5);
}

TEST(IntermediateReward, OnlyInCommState) {
  Maze m(spbmaze());
  EXPECT_EQ(learn::intermediate_reward_bonus(m, comm_state(m), 1.0), 1.0);
  EXPECT_EQ(learn::intermediate_reward_bonus(
                m, m.initial_state(Goal::kDown, m.config().fixed_decoys()), 1.0),
            0.0);
  learn::StepRecord s;
  s.task_reward = 0.25;
  s.mi = 0.5;
  s.in_comm = true;
  EXPECT_DOUBLE_EQ((learn::RewardWeights{2.0, 1.0})(s), 0.25 + 1.0 + 1.0);
  s.in_comm = false;
  EXPECT_DOUBLE_EQ((learn::RewardWeights{0.0, 1.0})(s), 0.25);
}

// ------------------------------------------------------------------ DRU

TEST(Dru, ExecutionAndNoiselessModes) {
  Rng rng(0);
  using learn::DruMode;
  EXPECT_EQ(learn::dru(0.3, 2.0, DruMode::kExecution, rng), 1.0);
  EXPECT_EQ(learn::dru(-0.2, 2.0, DruMode::kExecution, rng), 0.0);
  EXPECT_EQ(learn::dru(0.0, 2.0, DruMode::kExecution, rng), 0.0);
  EXPECT_EQ(learn::dru(0.0, 0.0, DruMode::kTraining, rng), 0.5);
  EXPECT_THROW(learn::dru(0.0, -1.0, DruMode::kTraining, rng), UsageError);
  EXPECT_EQ(learn::hint_for_message(0.3), Action::kHintDown);
  EXPECT_EQ(learn::hint_for_message(-0.2), Action::kHintUp);
}

TEST(Dru, TrainingMeanMatchesQuadrature) {
  Rng rng(11);
  const int n = 100000;
  for (double m : {0.0, 0.7, -1.3}) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = learn::dru(m, 2.0, learn::DruMode::kTraining, rng);
      ASSERT_GT(d, 0.0);
      ASSERT_LT(d, 1.0);
      sum += d;
      sq += d * d;
    }
    double mean = sum / n;
    double se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_NEAR(mean, expected_logistic(m, 2.0), 5.0 * se) << m;
  }
  EXPECT_NEAR(expected_logistic(0.0, 2.0), 0.5, 1e-12);
}

TEST(Dru, TensorFormMatchesScalarAndMapsToTokenRange) {
  Matrix m(3, 1), z(3, 1);
  m << 0.4, -2.0, 5.0;
  z << 0.1, -0.3, 1.2;
  Tensor tok = learn::token_from_dru(learn::dru_tensor(Tensor(m), 2.0, z));
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(tok.value()(i, 0), 2.0 * learn::logistic(m(i, 0) + 2.0 * z(i, 0)) - 1.0, 1e-15);
    EXPECT_GT(tok.value()(i, 0), -1.0);
    EXPECT_LT(tok.value()(i, 0), 1.0);
  }
}

// ------------------------------------------------------------------ config

TEST(TrainerConfig, EpsilonSchedule) {
  learn::EpsilonSchedule e;
  EXPECT_DOUBLE_EQ(e.at(0), 1.0);
  EXPECT_DOUBLE_EQ(e.at(50000), 0.5);
  EXPECT_DOUBLE_EQ(e.at(90000), 0.1);
  EXPECT_DOUBLE_EQ(e.at(1000000), 0.1);
  for (long s = 0; s < 200000; s += 997) EXPECT_GE(e.at(s), e.at(s + 997));
}

TEST(TrainerConfig, DefaultsAndValidation) {
  learn::TrainerConfig c;
  EXPECT_EQ(c.beta, 2.0);
  EXPECT_EQ(c.kappa, 1.0);
  EXPECT_EQ(c.gamma, 0.99);
  EXPECT_EQ(c.batch_size, 32);
  EXPECT_EQ(c.buffer_capacity, 10000);
  EXPECT_EQ(c.initial_exploration_steps, 1000);
  EXPECT_EQ(c.intermediate_reward, 1.0);
  EXPECT_EQ(c.sigma, 2.0);
  EXPECT_EQ(c.num_discovery_episodes, 12000);
  c.validate();
  auto bad = [](auto mutate) {
    learn::TrainerConfig x;
    mutate(x);
    EXPECT_THROW(x.validate(), ConfigError);
  };
  bad([](auto& x) { x.beta = -1.0; });
  bad([](auto& x) { x.kappa = -0.1; });
  bad([](auto& x) { x.gamma = 1.0; });
  bad([](auto& x) { x.gamma = 0.0; });
  bad([](auto& x) { x.epsilon.decay_per_step = -1e-5; });
  bad([](auto& x) { x.epsilon.min = 2.0; });
  bad([](auto& x) { x.sigma = -2.0; });
  bad([](auto& x) { x.batch_size = 0; });
}

TEST(TrainerConfig, JsonRoundTripAndErrors) {
  learn::TrainerConfig c;
  c.algorithm = Algorithm::kCTDUL_no_DIAL;
  c.beta = 0.5;
  c.seed = 42;
  c.epsilon.min = 0.05;
  auto back = learn::trainer_config_from_json(learn::to_json(c));
  EXPECT_EQ(learn::to_json(back), learn::to_json(c));
  EXPECT_EQ(learn::trainer_config_from_json(nlohmann::json::object()).beta, 2.0);
  EXPECT_THROW(learn::trainer_config_from_json({{"algorithm", "QMIX"}}), ConfigError);
  EXPECT_THROW(learn::trainer_config_from_json({{"beta", "two"}}), ConfigError);
  EXPECT_THROW(learn::trainer_config_from_json({{"gamma", 1.5}}), ConfigError);
  for (Algorithm a : learn::kAllAlgorithms)
    EXPECT_EQ(learn::parse_algorithm(learn::algorithm_name(a)), a);
}

TEST(TrainerConfig, AlgorithmTraits) {
  auto t = learn::traits(Algorithm::kIQL);
  EXPECT_FALSE(t.obl_discovery || t.mi_reward || t.mi_loss || t.utilization_stage);
  EXPECT_TRUE(learn::traits(Algorithm::kIQL_IR).intermediate_reward);
  t = learn::traits(Algorithm::kCTDL);
  EXPECT_TRUE(t.obl_discovery && t.mi_reward && t.mi_loss);
  EXPECT_FALSE(t.utilization_stage);
  t = learn::traits(Algorithm::kCTDUL);
  EXPECT_TRUE(t.obl_discovery && t.mi_reward && t.mi_loss && t.utilization_stage && t.dial);
  t = learn::traits(Algorithm::kCTDUL_no_MI);
  EXPECT_FALSE(t.mi_reward || t.mi_loss);
  EXPECT_TRUE(t.dial);
  EXPECT_FALSE(learn::traits(Algorithm::kCTDUL_no_DIAL).dial);
  t = learn::traits(Algorithm::kCTDUL_IQL_discovery);
  EXPECT_FALSE(t.obl_discovery);
  EXPECT_TRUE(t.mi_reward && t.dial);
}

// ------------------------------------------------------------------ replay

TEST(Replay, WholeEpisodesEvictedOldestFirst) {
  learn::EpisodeReplay r(10);
  auto ep = [](int len, double tag) {
    learn::EpisodeRecord e;
    e.steps.resize(len);
    e.steps[0].task_reward = tag;
    return e;
  };
  r.add(ep(4, 1));
  r.add(ep(4, 2));
  EXPECT_EQ(r.transitions(), 8);
  r.add(ep(3, 3));
  EXPECT_EQ(r.episodes(), 2);
  EXPECT_EQ(r.transitions(), 7);
  EXPECT_EQ(r.contents().front().steps[0].task_reward, 2);
  r.add(ep(25, 4));  // larger than capacity: kept alone
  EXPECT_EQ(r.episodes(), 1);
  EXPECT_EQ(r.contents().front().length(), 25);
  EXPECT_THROW(r.add(learn::EpisodeRecord{}), UsageError);
  EXPECT_THROW(learn::EpisodeReplay(0), ConfigError);
}

TEST(Replay, SampleIsDistinctAndCoversBuffer) {
  learn::EpisodeReplay r(1000);
  for (int i = 0; i < 20; ++i) {
    learn::EpisodeRecord e;
    e.steps.resize(1);
    e.steps[0].task_reward = i;
    r.add(e);
  }
  Rng rng(3);
  std::set<int> seen;
  for (int k = 0; k < 200; ++k) {
    auto s = r.sample(5, rng);
    ASSERT_EQ(s.size(), 5u);
    std::set<const learn::EpisodeRecord*> uniq(s.begin(), s.end());
    EXPECT_EQ(uniq.size(), 5u);
    for (auto* e : s) seen.insert(static_cast<int>(e->steps[0].task_reward));
  }
  EXPECT_EQ(seen.size(), 20u);
  EXPECT_EQ(r.sample(50, rng).size(), 20u);
}

TEST(Replay, DialReplayOnlyTakesSoundDeliveries) {
  Maze m(spbmaze());
  learn::DialReplay d(100);
  auto ep = oracle::scripted_episode(m, Goal::kUp);
  ASSERT_TRUE(ep.has_delivery());
  d.add(ep);
  EXPECT_EQ(d.episodes(), 1);
  auto none = ep;
  for (auto& s : none.steps) s.delivered = false;
  EXPECT_THROW(d.add(none), UsageError);
  auto unsound = ep;
  for (auto& s : unsound.steps)
    if (s.delivered) s.in_comm = false;
  EXPECT_THROW(d.add(unsound), InconsistencyError);
}

// ------------------------------------------------------------------ losses

TEST(IqlLoss, TerminalAndRegressionExamples) {
  Maze m(spbmaze());
  auto ep = oracle::scripted_episode(m, Goal::kUp);
  auto b = learn::make_batch({&ep});
  const int T = b.length;
  const int ri = index_of(Role::kReceiver);
  std::vector<nn::NetOutput> outs(T);
  std::vector<Matrix> rewards, next(T, Matrix::Constant(1, 1, 3.0));
  for (int t = 0; t < T; ++t) {
    outs[t].q = Tensor(Matrix::Constant(1, kNumActions, ep.steps[t].task_reward));
    rewards.push_back(Matrix::Constant(1, 1, ep.steps[t].task_reward));
  }
  ASSERT_TRUE(ep.steps.back().terminal);
  ASSERT_EQ(ep.steps.back().task_reward, 1.0);
  // gamma = 0: Q equal to r everywhere gives zero loss.
  EXPECT_EQ(learn::td_loss(outs, b, Role::kReceiver, rewards, next, 0.0).item(), 0.0);
  // Only the terminal step (r = 1, Q = 1) has no bootstrap; others see 0.5 * 3^2 * gamma^2.
  double g = 0.5;
  double expected = 0.5 * (T - 1) * (g * 3.0) * (g * 3.0) / T;
  EXPECT_NEAR(learn::td_loss(outs, b, Role::kReceiver, rewards, next, g).item(), expected, 1e-12);
  (void)ri;
}

TEST(IqlLoss, GradientMatchesFiniteDifferences) {
  Maze m(spbmaze());
  auto e1 = oracle::scripted_episode(m, Goal::kUp);
  auto e2 = oracle::scripted_episode(m, Goal::kDown);
  auto b = learn::make_batch({&e1, &e2});
  Rng rng(5);
  for (Role r : kRoles) {
    nn::AgentNet net(oracle::small_net(m.observation_size(r)));
    net.init_xavier(rng);
    nn::AgentNet target = net.clone();
    for (auto& p : net.parameters())
      p.mutable_value().array() += oracle::random_matrix(p.rows(), p.cols(), rng, 0.1).array();
    auto res = oracle::grad_check(
        [&] { return learn::iql_loss(b, r, net, target, 0.99, {2.0, 0.0}); }, net.parameters(),
        48);
    EXPECT_LT(res.max_rel_error, 1e-4);
  }
}

TEST(CtdlLoss, ReducesToOblLoss) {
  Maze m(spbmaze());
  auto e1 = oracle::scripted_episode(m, Goal::kUp);
  auto e2 = oracle::scripted_episode(m, Goal::kDown);
  for (auto* e : {&e1, &e2})
    for (auto& s : e->steps) s.obl[0].bootstrap = 0.3 * s.task_reward + 0.1;
  auto b = learn::make_batch({&e1, &e2});
  Rng rng(6);
  nn::AgentNet net(oracle::small_net(m.observation_size(Role::kSender)));
  net.init_xavier(rng);
  const double obl = learn::obl_loss(b, Role::kSender, net).item();
  EXPECT_EQ(learn::ctdl_loss(b, Role::kSender, net, 0.0, 0.1).item(), obl);
  EXPECT_LT(learn::ctdl_loss(b, Role::kSender, net, 1.0, 0.1).item(), obl);

  // Strip the communicative steps: the MI term vanishes for any kappa.
  auto strip = [](learn::EpisodeRecord e) {
    for (auto& s : e.steps) s.mi_terms = {};
    return e;
  };
  auto o1 = strip(e1), o2 = strip(e2);
  auto outside = learn::make_batch({&o1, &o2});
  EXPECT_EQ(learn::ctdl_loss(outside, Role::kSender, net, 5.0, 0.1).item(),
            learn::obl_loss(outside, Role::kSender, net).item());
  auto outs = learn::unroll_batch(net, learn::input_tensors(outside, Role::kSender));
  EXPECT_FALSE(learn::mi_objective(outs, outside, 0.1).defined());
}

TEST(CtdlLoss, MiObjectiveIsBatchMeanOverCommSteps) {
  Maze m(spbmaze());
  auto e1 = oracle::scripted_episode(m, Goal::kUp);
  auto b = learn::make_batch({&e1});
  Rng rng(7);
  nn::AgentNet net(oracle::small_net(m.observation_size(Role::kSender)));
  net.init_xavier(rng);
  auto outs = learn::unroll_batch(net, learn::input_tensors(b, Role::kSender));
  double expected = 0.0;
  int count = 0;
  for (int t = 0; t < b.length; ++t) {
    if (!e1.steps[t].mi_terms.active) continue;
    auto pi = belief::obl_policy(belief::q_row(outs[t].q), 0.1);
    expected += mi::mutual_information(e1.steps[t].mi_terms, pi);
    ++count;
  }
  ASSERT_GT(count, 0);
  EXPECT_NEAR(learn::mi_objective(outs, b, 0.1).item(), expected / count, 1e-12);
}

// Gradient ascent on I(A; O; softmax(logits)) alone at a noiseless
// communicative state.
TEST(MiLossOptimisation, ConvergesToTheMaximiser) {
  Maze m(spbmaze());
  auto terms = mi::mi_loss_terms(m, comm_state(m));
  ASSERT_TRUE(terms.active);
  std::vector<std::array<mi::TokenDist, kNumActions>> cond{terms.cond};
  Rng rng(8);
  auto logits = Tensor::parameter(oracle::random_matrix(1, kNumActions, rng));
  nn::Adam opt({logits}, {0.05});
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 3000; ++it) {
    opt.zero_grad();
    Tensor mi_val = learn::policy_mutual_information(nn::softmax_rows(logits), cond);
    if (it == 0) first = mi_val.item();
    last = mi_val.item();
    nn::scale(nn::sum(mi_val), -1.0).backward();
    opt.step();
  }
  Matrix p = nn::softmax_rows(logits).value();
  const double up = p(0, index_of(Action::kHintUp)), down = p(0, index_of(Action::kHintDown));
  EXPECT_GT(last, first);
  EXPECT_NEAR(last, std::log(3.0), 1e-4);
  EXPECT_NEAR(up, down, 0.01);
  EXPECT_NEAR(up + down, 2.0 / 3.0, 0.01);
}

// ------------------------------------------------------------------ DIAL

TEST(Dial, LinkOnlyAfterDeliveries) {
  Maze m(spbmaze());
  auto e1 = oracle::scripted_episode(m, Goal::kUp, 0.4);
  auto e2 = oracle::scripted_episode(m, Goal::kDown, -0.4);
  for (auto& s : e2.steps) s.delivered = false;  // same trajectory, nothing delivered
  auto b = learn::make_batch({&e1, &e2});
  int k = -1;
  for (int t = 0; t < e1.length(); ++t)
    if (e1.steps[t].delivered) k = t;
  ASSERT_GE(k, 0);

  std::vector<nn::NetOutput> sender(b.length);
  std::vector<Tensor> msgs;
  Rng rng(9);
  for (int t = 0; t < b.length; ++t) {
    msgs.push_back(Tensor::parameter(oracle::random_matrix(2, 1, rng)));
    sender[t].message = msgs.back();
  }
  auto noise = learn::draw_dru_noise(b, rng);
  auto xs = learn::dial_receiver_inputs(b, sender, 2.0, noise);
  ASSERT_EQ(static_cast<int>(xs.size()), b.length);
  const int rr = index_of(Role::kReceiver);
  const auto token_col = b.inputs[rr][0].cols() - 1;
  for (int t = 0; t < b.length; ++t) {
    EXPECT_EQ(xs[t].value().row(1), b.inputs[rr][t].row(1)) << t;
    if (t <= k) {
      EXPECT_EQ(xs[t].value().row(0), b.inputs[rr][t].row(0)) << t;
    } else {
      double m0 = msgs[k].value()(0, 0);
      if (t >= e1.length()) continue;  // padding
      EXPECT_NEAR(xs[t].value()(0, token_col),
                  2.0 * learn::logistic(m0 + 2.0 * noise[k](0, 0)) - 1.0, 1e-15);
      EXPECT_EQ(xs[t].value().row(0).head(token_col), b.inputs[rr][t].row(0).head(token_col));
    }
  }
  Tensor total;
  for (auto& x : xs) total = total.defined() ? nn::add(total, nn::sum(x)) : nn::sum(x);
  total.backward();
  for (int t = 0; t < b.length; ++t) {
    if (t == k) {
      EXPECT_NE(msgs[t].grad()(0, 0), 0.0);
    } else {
      EXPECT_FALSE(msgs[t].has_grad() && msgs[t].grad()(0, 0) != 0.0) << t;
    }
    if (msgs[t].has_grad()) {
      EXPECT_EQ(msgs[t].grad()(1, 0), 0.0);
    }
  }
}

TEST(Dial, ReceiverLossReachesSenderMessageHead) {
  Maze m(spbmaze());
  auto e1 = oracle::scripted_episode(m, Goal::kUp);
  auto e2 = oracle::scripted_episode(m, Goal::kDown);
  auto b = learn::make_batch({&e1, &e2});
  Rng rng(10);
  nn::AgentNet s(oracle::small_net(m.observation_size(Role::kSender)));
  nn::AgentNet r(oracle::small_net(m.observation_size(Role::kReceiver)));
  s.init_xavier(rng);
  r.init_xavier(rng);
  nn::AgentNet st = s.clone(), rt = r.clone();
  learn::DialNets nets{&s, &st, &r, &rt};
  auto noise = learn::draw_dru_noise(b, rng);
  auto losses = learn::dial_losses(b, nets, 0.99, 2.0, noise, {});
  EXPECT_EQ(losses.flagged_steps, 2);
  losses.receiver.backward();
  auto names = nn::AgentNet::parameter_names();
  bool head_grad = false;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i].starts_with("message") && s.parameters()[i].has_grad() &&
        !s.parameters()[i].grad().isZero(0.0))
      head_grad = true;
  EXPECT_TRUE(head_grad);
  EXPECT_NEAR(losses.total.item(), losses.sender.item() + losses.receiver.item(), 1e-15);
}

TEST(Dial, ZeroReceiverLossGivesZeroSenderGradient) {
  Maze m(spbmaze());
  auto e1 = oracle::scripted_episode(m, Goal::kUp);
  for (auto& s : e1.steps) s.task_reward = 0.0;
  auto b = learn::make_batch({&e1});
  Rng rng(12);
  nn::AgentNet s(oracle::small_net(m.observation_size(Role::kSender)));
  s.init_xavier(rng);
  nn::AgentNet r(oracle::small_net(m.observation_size(Role::kReceiver)));  // Q == 0
  nn::AgentNet st = s.clone(), rt = r.clone();
  auto losses = learn::dial_losses(b, {&s, &st, &r, &rt}, 0.99, 2.0, learn::draw_dru_noise(b, rng), {});
  EXPECT_EQ(losses.receiver.item(), 0.0);
  losses.receiver.backward();
  for (const auto& p : s.parameters())
    EXPECT_TRUE(!p.has_grad() || p.grad().isZero(0.0));
}

TEST(Dial, BatchWithoutDeliveryIsAUsageError) {
  Maze m(spbmaze());
  auto e1 = oracle::scripted_episode(m, Goal::kUp);
  for (auto& s : e1.steps) s.delivered = false;
  auto b = learn::make_batch({&e1});
  nn::AgentNet s(oracle::small_net(m.observation_size(Role::kSender)));
  nn::AgentNet r(oracle::small_net(m.observation_size(Role::kReceiver)));
  Rng rng(1);
  EXPECT_THROW(learn::dial_losses(b, {&s, &s, &r, &r}, 0.99, 2.0, learn::draw_dru_noise(b, rng), {}),
               UsageError);
}

// ------------------------------------------------------------------ trainer

TEST(Trainer, StageDisciplineAndFlagSoundness) {
  auto t = trained(Algorithm::kCTDUL, 40, 20);
  const auto& st = t.stats();
  EXPECT_EQ(st.episodes, 40);
  EXPECT_EQ(t.stage(), learn::Stage::kUtilization);
  ASSERT_GT(st.dial_updates, 0);
  ASSERT_GT(st.mi_loss_updates, 0);
  EXPECT_GE(*st.first_dial_episode, 20);
  EXPECT_LT(*st.last_mi_loss_episode, 20);
  EXPECT_EQ(t.reward_weights(learn::Stage::kUtilization).beta, 0.0);
  EXPECT_EQ(t.reward_weights(learn::Stage::kDiscovery).beta, 2.0);

  int with_delivery = 0;
  for (const auto& ep : t.obl_replay().contents())
    if (ep.has_delivery()) ++with_delivery;
  EXPECT_EQ(with_delivery, t.dial_replay().episodes());
  for (const auto& ep : t.dial_replay().contents())
    for (const auto& s : ep.steps)
      if (s.delivered) {
        EXPECT_TRUE(s.in_comm);
        EXPECT_TRUE(is_comm(action_at(s.action[0])));
      }
}

TEST(Trainer, LoggedRewardExcludesShaping) {
  auto t = trained(Algorithm::kCTDL, 15, 15);
  // Every MPBMaze step reward is a sum of an exit payoff and the costly booth's charge.
  std::set<double> allowed;
  for (double exit : {0.0, 1.0, -0.5})
    for (double cost : {0.0, -0.4}) allowed.insert(exit + cost);
  int comm_steps = 0;
  for (const auto& ep : t.obl_replay().contents())
    for (const auto& s : ep.steps) {
      bool ok = false;
      for (double a : allowed) ok = ok || std::abs(s.task_reward - a) < 1e-12;
      EXPECT_TRUE(ok) << s.task_reward;
      if (s.mi > 0.0) ++comm_steps;
      EXPECT_TRUE(s.has_obl);
    }
  EXPECT_GT(comm_steps, 0);
}

TEST(Trainer, ExplorationAndSchedules) {
  learn::Trainer t(mpb(), tiny_config(Algorithm::kIQL, 10, 10));
  while (t.stats().env_steps < 20) t.run_episode();
  EXPECT_DOUBLE_EQ(t.epsilon(), learn::EpsilonSchedule{}.at(t.stats().env_steps));
  for (int i = 0; i < 5; ++i) t.run_episode();
  EXPECT_GT(t.stats().train_steps, 0);
  for (const auto& ep : t.obl_replay().contents())
    for (const auto& s : ep.steps) EXPECT_FALSE(s.has_obl);
  EXPECT_EQ(t.stage(), learn::Stage::kDiscovery);

  learn::Trainer idle(mpb(), [] {
    auto c = tiny_config(Algorithm::kIQL, 3, 3);
    c.initial_exploration_steps = 1000000;
    return c;
  }());
  idle.run([](const learn::EvalPoint&) {});
  EXPECT_EQ(idle.stats().train_steps, 0);
}

TEST(Trainer, SameSeedSameMetrics) {
  auto lines = [](unsigned long long seed) {
    learn::Trainer t(mpb(), tiny_config(Algorithm::kCTDUL, 10, 5, seed));
    std::string out;
    t.run([&](const learn::EvalPoint& p) {
      out += harness::csv_line(harness::make_row(p, t.config())) + "\n";
    });
    return out;
  };
  auto a = lines(3);
  EXPECT_EQ(a, lines(3));
  EXPECT_NE(a, lines(4));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 2);
}

TEST(Evaluate, PolicyAtBoothAndGreedyMetrics) {
  Maze m(spbmaze());
  nn::AgentNet s(oracle::small_net(m.observation_size(Role::kSender)));
  nn::AgentNet r(oracle::small_net(m.observation_size(Role::kReceiver)));
  // Zero nets: uniform booth policy, greedy always UP (lowest index).
  auto pol = learn::policy_at_booth(m, s, 0.1);
  for (const auto& d : pol)
    for (double p : d) EXPECT_NEAR(p, 1.0 / kNumActions, 1e-15);
  Rng rng(2);
  learn::EvalOptions opt;
  auto res = learn::evaluate_greedy(m, s, r, opt, rng);
  // The receiver walks UP into the up exit after two steps, before the sender
  // reaches any booth: a correct guess for one goal only.
  EXPECT_DOUBLE_EQ(res.test_reward, 0.25);
  EXPECT_EQ(res.steps_to_first_booth, 20.0);
  EXPECT_EQ(res.booth_labels.back(), "decoy");
  EXPECT_EQ(learn::sender_shortest_path(m, {0, 1}).size(), 5u);
}
