#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "provoc/common.hpp"
#include "provoc/tensor.hpp"

namespace provoc::nn {

// Named parameter registry. std::map keeps iteration order stable, which makes
// checkpoints, checksums and optimizer sweeps deterministic.
class ParameterStore {
public:
  ag::Tensor create(const std::string& name, std::vector<int> shape, std::vector<double> values) {
    check(!params_.count(name), "duplicate parameter: ", name);
    auto t = ag::Tensor::leaf(std::move(shape), std::move(values), true, name);
    params_.emplace(name, t);
    return t;
  }

  ag::Tensor create_uniform(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng) {
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    std::vector<double> v(ag::numel(shape));
    for (auto& x : v) x = (rng.uniform() * 2.0 - 1.0) * bound;
    return create(name, std::move(shape), std::move(v));
  }

  ag::Tensor create_constant(const std::string& name, std::vector<int> shape, double fill) {
    std::vector<double> v(ag::numel(shape), fill);
    return create(name, std::move(shape), std::move(v));
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }

  ag::Tensor get(const std::string& name) const {
    auto it = params_.find(name);
    check(it != params_.end(), "unknown parameter: ", name);
    return it->second;
  }

  const std::map<std::string, ag::Tensor>& all() const { return params_; }

  // Freezing is one-way for the lifetime of the store.
  void freeze_prefix(const std::string& prefix) {
    bool any = false;
    for (const auto& [name, t] : params_) {
      if (name.rfind(prefix, 0) == 0) {
        frozen_.insert(name);
        any = true;
      }
    }
    check(any, "freeze_prefix matched no parameters: ", prefix);
  }

  void freeze_name(const std::string& name) {
    check(params_.count(name), "freeze_name: unknown parameter ", name);
    frozen_.insert(name);
  }

  bool is_frozen(const std::string& name) const { return frozen_.count(name) > 0; }
  const std::set<std::string>& frozen() const { return frozen_; }
  void set_frozen(std::set<std::string> names) { frozen_ = std::move(names); }

  void zero_grads() {
    for (auto& [name, t] : params_) {
      t.node()->ensure_grad();
      t.node()->zero_grad();
    }
  }

  size_t total_count() const {
    size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  size_t count_prefix(const std::string& prefix) const {
    size_t n = 0;
    for (const auto& [name, t] : params_) {
      if (name.rfind(prefix, 0) == 0) n += t.size();
    }
    return n;
  }

  // Order-sensitive digest of every name and value; any drift shows up here.
  uint64_t checksum() const {
    uint64_t h = kFnvOffset;
    for (const auto& [name, t] : params_) {
      h = fnv1a(name.data(), name.size(), h);
      h = fnv1a(t.data().data(), t.size() * sizeof(double), h);
    }
    return h;
  }

private:
  std::map<std::string, ag::Tensor> params_;
  std::set<std::string> frozen_;
};

class Linear {
public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, int in, int out, Rng& rng,
         bool bias = true)
      : in_(in), out_(out), has_bias_(bias) {
    weight_ = store.create_uniform(prefix + ".weight", {in, out}, in, rng);
    if (bias) bias_ = store.create_uniform(prefix + ".bias", {out}, in, rng);
  }

  ag::Tensor forward(const ag::Tensor& x) const {
    auto y = ag::matmul(x, weight_);
    if (has_bias_) y = ag::add_rowvec(y, bias_);
    return y;
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  static size_t param_count(int in, int out, bool bias = true) {
    return static_cast<size_t>(in) * out + (bias ? out : 0);
  }

private:
  int in_ = 0, out_ = 0;
  bool has_bias_ = true;
  ag::Tensor weight_, bias_;
};

class LayerNorm {
public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, int dim) : dim_(dim) {
    gain_ = store.create_constant(prefix + ".gain", {dim}, 1.0);
    bias_ = store.create_constant(prefix + ".bias", {dim}, 0.0);
  }

  ag::Tensor forward(const ag::Tensor& x) const { return ag::layer_norm_rows(x, gain_, bias_); }

  static size_t param_count(int dim) { return 2 * static_cast<size_t>(dim); }

private:
  int dim_ = 0;
  ag::Tensor gain_, bias_;
};

class Conv1d {
public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& prefix, int c_in, int c_out, int k,
         int pad_left, int pad_right, Rng& rng)
      : c_in_(c_in), c_out_(c_out), k_(k), pad_left_(pad_left), pad_right_(pad_right) {
    weight_ = store.create_uniform(prefix + ".weight", {c_out, c_in, k}, c_in * k, rng);
    bias_ = store.create_uniform(prefix + ".bias", {c_out}, c_in * k, rng);
  }

  ag::Tensor forward(const ag::Tensor& x) const {
    return ag::conv1d(x, weight_, bias_, c_in_, c_out_, k_, pad_left_, pad_right_);
  }

  static size_t param_count(int c_in, int c_out, int k) {
    return static_cast<size_t>(c_out) * c_in * k + c_out;
  }

private:
  int c_in_ = 0, c_out_ = 0, k_ = 0, pad_left_ = 0, pad_right_ = 0;
  ag::Tensor weight_, bias_;
};

class Conv2d {
public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& prefix, int c_in, int c_out, Rng& rng)
      : c_in_(c_in), c_out_(c_out) {
    weight_ = store.create_uniform(prefix + ".weight", {c_out, c_in, 3, 3}, c_in * 9, rng);
    bias_ = store.create_uniform(prefix + ".bias", {c_out}, c_in * 9, rng);
  }

  ag::Tensor forward(const ag::Tensor& x) const {
    return ag::conv2d_s2(x, weight_, bias_, c_in_, c_out_);
  }

  static size_t param_count(int c_in, int c_out) {
    return static_cast<size_t>(c_out) * c_in * 9 + c_out;
  }

private:
  int c_in_ = 0, c_out_ = 0;
  ag::Tensor weight_, bias_;
};

// Single-layer GRU with one bias per gate: 3 * (I*G + G*G + G) parameters.
class GRU {
public:
  GRU() = default;
  GRU(ParameterStore& store, const std::string& prefix, int input, int hidden, Rng& rng)
      : input_(input), hidden_(hidden) {
    wz_ = store.create_uniform(prefix + ".wz", {input, hidden}, input, rng);
    uz_ = store.create_uniform(prefix + ".uz", {hidden, hidden}, hidden, rng);
    bz_ = store.create_constant(prefix + ".bz", {hidden}, 0.0);
    wr_ = store.create_uniform(prefix + ".wr", {input, hidden}, input, rng);
    ur_ = store.create_uniform(prefix + ".ur", {hidden, hidden}, hidden, rng);
    br_ = store.create_constant(prefix + ".br", {hidden}, 0.0);
    wh_ = store.create_uniform(prefix + ".wh", {input, hidden}, input, rng);
    uh_ = store.create_uniform(prefix + ".uh", {hidden, hidden}, hidden, rng);
    bh_ = store.create_constant(prefix + ".bh", {hidden}, 0.0);
  }

  // x: [1, input], h: [1, hidden] -> next hidden [1, hidden]
  ag::Tensor step(const ag::Tensor& x, const ag::Tensor& h) const {
    auto z = ag::sigmoid(ag::add_rowvec(ag::add(ag::matmul(x, wz_), ag::matmul(h, uz_)), bz_));
    auto r = ag::sigmoid(ag::add_rowvec(ag::add(ag::matmul(x, wr_), ag::matmul(h, ur_)), br_));
    auto cand =
        ag::tanh_op(ag::add_rowvec(ag::add(ag::matmul(x, wh_), ag::matmul(ag::mul(r, h), uh_)), bh_));
    // h' = (1-z)*h + z*cand
    auto keep = ag::mul(ag::add_scalar(ag::neg(z), 1.0), h);
    return ag::add(keep, ag::mul(z, cand));
  }

  // sequence [T, input] -> final hidden state [1, hidden]
  ag::Tensor run(const ag::Tensor& seq) const {
    check(seq.cols() == input_, "GRU input width mismatch");
    auto h = ag::Tensor::zeros({1, hidden_});
    for (int t = 0; t < seq.rows(); ++t) h = step(ag::row_slice(seq, t, t + 1), h);
    return h;
  }

  int hidden_size() const { return hidden_; }
  static size_t param_count(int input, int hidden) {
    return 3 * (static_cast<size_t>(input) * hidden + static_cast<size_t>(hidden) * hidden +
                hidden);
  }

private:
  int input_ = 0, hidden_ = 0;
  ag::Tensor wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_;
};

}  // namespace provoc::nn
