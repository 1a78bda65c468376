#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cheaptalk/env/types.hpp"
#include "cheaptalk/nn/tensor.hpp"

namespace cheaptalk::nn {

struct AgentNetConfig {
  int input_size = 0;
  int hidden_size = 128;  // LSTM width
  int trunk_size = 128;   // width of the two fully connected layers
  int num_actions = kNumActions;

  friend bool operator==(const AgentNetConfig&, const AgentNetConfig&) = default;
};

struct RecurrentState {
  Tensor h;
  Tensor c;
};

struct NetOutput {
  Tensor q;          // batch x num_actions
  Tensor value;      // batch x 1
  Tensor advantage;  // batch x num_actions
  Tensor message;    // batch x 1, unbounded
  RecurrentState state;
};

// Recurrent dueling Q-network with a message head:
//   x -> LSTM -> relu(fc1) -> relu(fc2) -> {value, advantage, message}
//   Q(a) = value + advantage(a) - mean_a advantage(a)
// Freshly constructed nets have all-zero weights; call init_xavier().
class AgentNet {
 public:
  AgentNet() = default;
  explicit AgentNet(AgentNetConfig cfg) : cfg_(cfg) {
    const int in = cfg.input_size, h = cfg.hidden_size, f = cfg.trunk_size;
    lstm_w_ = Tensor::parameter(Matrix::Zero(in + h, 4 * h));
    lstm_b_ = Tensor::parameter(Matrix::Zero(1, 4 * h));
    fc1_w_ = Tensor::parameter(Matrix::Zero(h, f));
    fc1_b_ = Tensor::parameter(Matrix::Zero(1, f));
    fc2_w_ = Tensor::parameter(Matrix::Zero(f, f));
    fc2_b_ = Tensor::parameter(Matrix::Zero(1, f));
    value_w_ = Tensor::parameter(Matrix::Zero(f, 1));
    value_b_ = Tensor::parameter(Matrix::Zero(1, 1));
    adv_w_ = Tensor::parameter(Matrix::Zero(f, cfg.num_actions));
    adv_b_ = Tensor::parameter(Matrix::Zero(1, cfg.num_actions));
    msg_w_ = Tensor::parameter(Matrix::Zero(f, 1));
    msg_b_ = Tensor::parameter(Matrix::Zero(1, 1));
  }

  const AgentNetConfig& config() const { return cfg_; }

  // Deep copy with fresh parameter leaves (no shared storage or gradients).
  AgentNet clone() const {
    AgentNet out(cfg_);
    out.copy_from(*this);
    return out;
  }

  void copy_from(const AgentNet& other) {
    auto dst = parameters();
    auto src = other.parameters();
    if (!(cfg_ == other.cfg_)) throw UsageError("copy_from: architecture mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].mutable_value() = src[i].value();
  }

  // Weights ~ U(+-sqrt(6 / (fan_in + fan_out))), biases 0.
  void init_xavier(Rng& rng) {
    for (Tensor* w : weights()) {
      double bound = std::sqrt(6.0 / static_cast<double>(w->rows() + w->cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Index i = 0; i < w->value().size(); ++i) w->mutable_value().data()[i] = u(rng);
    }
    for (Tensor* b : biases()) b->mutable_value().setZero();
  }

  std::vector<Tensor> parameters() const {
    return {lstm_w_, lstm_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_,
            value_w_, value_b_, adv_w_, adv_b_, msg_w_, msg_b_};
  }

  static std::vector<std::string> parameter_names() {
    return {"lstm.weight", "lstm.bias",      "fc1.weight",     "fc1.bias",
            "fc2.weight",  "fc2.bias",       "value.weight",   "value.bias",
            "advantage.weight", "advantage.bias", "message.weight", "message.bias"};
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

  RecurrentState initial_state(Index batch) const {
    return {Tensor::zeros(batch, cfg_.hidden_size), Tensor::zeros(batch, cfg_.hidden_size)};
  }

  NetOutput step(const Tensor& x, const RecurrentState& st) const {
    if (x.cols() != cfg_.input_size)
      throw UsageError("AgentNet: expected input width " + std::to_string(cfg_.input_size) +
                       ", got " + std::to_string(x.cols()));
    if (st.h.rows() != x.rows()) throw UsageError("AgentNet: batch size mismatch");
    const Index h = cfg_.hidden_size;
    Tensor gates = add_row(matmul(concat_cols({x, st.h}), lstm_w_), lstm_b_);
    Tensor in_gate = sigmoid(slice_cols(gates, 0, h));
    Tensor forget_gate = sigmoid(slice_cols(gates, h, h));
    Tensor cell_in = tanh(slice_cols(gates, 2 * h, h));
    Tensor out_gate = sigmoid(slice_cols(gates, 3 * h, h));
    Tensor c = add(mul(forget_gate, st.c), mul(in_gate, cell_in));
    Tensor hidden = mul(out_gate, tanh(c));

    Tensor z = relu(add_row(matmul(hidden, fc1_w_), fc1_b_));
    z = relu(add_row(matmul(z, fc2_w_), fc2_b_));
    NetOutput out;
    out.value = add_row(matmul(z, value_w_), value_b_);
    out.advantage = add_row(matmul(z, adv_w_), adv_b_);
    Tensor centered = add_col(out.advantage, scale(row_mean(out.advantage), -1.0));
    out.q = add_col(centered, out.value);
    out.message = add_row(matmul(z, msg_w_), msg_b_);
    out.state = {hidden, c};
    return out;
  }

  std::vector<NetOutput> unroll(const std::vector<Tensor>& inputs, RecurrentState st) const {
    std::vector<NetOutput> outs;
    outs.reserve(inputs.size());
    for (const auto& x : inputs) {
      outs.push_back(step(x, st));
      st = outs.back().state;
    }
    return outs;
  }

 private:
  std::vector<Tensor*> weights() {
    return {&lstm_w_, &fc1_w_, &fc2_w_, &value_w_, &adv_w_, &msg_w_};
  }
  std::vector<Tensor*> biases() {
    return {&lstm_b_, &fc1_b_, &fc2_b_, &value_b_, &adv_b_, &msg_b_};
  }

  AgentNetConfig cfg_;
  Tensor lstm_w_, lstm_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  Tensor value_w_, value_b_, adv_w_, adv_b_, msg_w_, msg_b_;
};

// Row vector from a feature list.
inline Tensor row_tensor(const std::vector<double>& v) {
  Matrix m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return Tensor(std::move(m));
}

}  // namespace cheaptalk::nn
