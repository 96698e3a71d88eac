/*
 * Copyright 2026 The GradOPS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Shared-bottom multi-task MLP: a stack of affine+ReLU layers shared by every
// task, followed by one affine logit head per task. Gradients are computed by
// hand so that each task's gradient with respect to the shared parameters can
// be handed to an aggregator separately.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "gradops/densecore.hpp"
#include "gradops/errors.hpp"

namespace gradops {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  std::size_t param_count() const {
    return static_cast<std::size_t>(weight.size() + bias.size());
  }
};

struct ForwardBackwardResult {
  std::vector<double> losses;  // per task, mean binary cross-entropy
  std::vector<Vec> shared;     // per task, flattened d loss_i / d shared params
  std::vector<Vec> heads;      // per task, flattened d loss_i / d head_i params
};

// Numerically stable binary cross-entropy on a logit.
inline double bce_with_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class MtlNetwork {
 public:
  MtlNetwork() = default;

  // He-uniform shared layers. Every head starts from the same small draw
  // (0.1 of the He bound), so predictions start near 1/2 and the initial
  // task-gradient geometry reflects how the labels relate, not the head init.
  MtlNetwork(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t tasks,
             std::uint64_t seed) {
    if (inputs == 0 || tasks == 0) throw UsageError("MtlNetwork: inputs and tasks must be positive");
    if (hidden.empty()) throw UsageError("MtlNetwork: need at least one shared hidden layer");
    std::mt19937_64 rng(seed);
    std::size_t fan_in = inputs;
    for (std::size_t width : hidden) {
      if (width == 0) throw UsageError("MtlNetwork: zero-width hidden layer");
      shared_.push_back(make_layer(fan_in, width, rng));
      fan_in = width;
    }
    const DenseLayer head = make_layer(fan_in, 1, rng, kHeadGain);
    heads_.assign(tasks, head);
  }

  std::size_t num_tasks() const { return heads_.size(); }
  std::size_t num_inputs() const { return static_cast<std::size_t>(shared_.front().weight.cols()); }
  const std::vector<DenseLayer>& shared_layers() const { return shared_; }
  const std::vector<DenseLayer>& heads() const { return heads_; }
  std::vector<DenseLayer>& mutable_heads() { return heads_; }

  std::size_t shared_param_count() const {
    std::size_t n = 0;
    for (const auto& l : shared_) n += l.param_count();
    return n;
  }
  std::size_t head_param_count() const { return heads_.front().param_count(); }

  Vec shared_params() const { return flatten(shared_); }
  void set_shared_params(ConstVecView p) { unflatten(p, shared_); }
  Vec head_params(std::size_t task) const { return flatten(std::vector<DenseLayer>{heads_.at(task)}); }
  void set_head_params(std::size_t task, ConstVecView p) {
    std::vector<DenseLayer> one{heads_.at(task)};
    unflatten(p, one);
    heads_[task] = std::move(one.front());
  }

  // N x T logits.
  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd h = forward_shared(x).back();
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(heads_.size()));
    for (std::size_t t = 0; t < heads_.size(); ++t) {
      out.col(static_cast<Eigen::Index>(t)) =
          (h * heads_[t].weight.transpose()).col(0).array() + heads_[t].bias(0);
    }
    return out;
  }

  // Per-task mean BCE losses and exact reverse-mode gradients. `y` is N x T.
  ForwardBackwardResult forward_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) const {
    if (x.rows() == 0) throw UsageError("forward_backward: empty batch");
    if (y.rows() != x.rows() || y.cols() != static_cast<Eigen::Index>(heads_.size())) {
      throw UsageError("forward_backward: label shape mismatch");
    }
    const std::vector<Eigen::MatrixXd> acts = forward_shared(x);
    const Eigen::MatrixXd& top = acts.back();
    const double n = static_cast<double>(x.rows());

    ForwardBackwardResult res;
    for (std::size_t t = 0; t < heads_.size(); ++t) {
      const DenseLayer& head = heads_[t];
      const Eigen::VectorXd z = (top * head.weight.transpose()).col(0).array() + head.bias(0);
      const auto col = static_cast<Eigen::Index>(t);
      double loss = 0.0;
      Eigen::VectorXd dz(z.size());
      for (Eigen::Index r = 0; r < z.size(); ++r) {
        loss += bce_with_logit(z(r), y(r, col));
        dz(r) = (sigmoid(z(r)) - y(r, col)) / n;
      }
      res.losses.push_back(loss / n);

      DenseLayer head_grad{dz.transpose() * top, Eigen::VectorXd::Constant(1, dz.sum())};
      res.heads.push_back(flatten(std::vector<DenseLayer>{head_grad}));

      Eigen::MatrixXd delta = dz * head.weight;  // N x H_last
      std::vector<DenseLayer> grads(shared_.size());
      for (std::size_t l = shared_.size(); l-- > 0;) {
        // acts[l + 1] = relu(acts[l] W^T + b)
        delta = delta.array() * (acts[l + 1].array() > 0.0).cast<double>();
        grads[l].weight = delta.transpose() * acts[l];
        grads[l].bias = delta.colwise().sum().transpose();
        if (l > 0) delta = delta * shared_[l].weight;
      }
      res.shared.push_back(flatten(grads));
    }
    return res;
  }

  // Gradient of the summed loss sum_t loss_t with respect to the shared
  // parameters, from a single backward pass.
  Vec summed_shared_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) const {
    const std::vector<Eigen::MatrixXd> acts = forward_shared(x);
    const Eigen::MatrixXd& top = acts.back();
    const double n = static_cast<double>(x.rows());
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(x.rows(), top.cols());
    for (std::size_t t = 0; t < heads_.size(); ++t) {
      const Eigen::VectorXd z = (top * heads_[t].weight.transpose()).col(0).array() + heads_[t].bias(0);
      Eigen::VectorXd dz(z.size());
      for (Eigen::Index r = 0; r < z.size(); ++r) {
        dz(r) = (sigmoid(z(r)) - y(r, static_cast<Eigen::Index>(t))) / n;
      }
      delta += dz * heads_[t].weight;
    }
    std::vector<DenseLayer> grads(shared_.size());
    for (std::size_t l = shared_.size(); l-- > 0;) {
      delta = delta.array() * (acts[l + 1].array() > 0.0).cast<double>();
      grads[l].weight = delta.transpose() * acts[l];
      grads[l].bias = delta.colwise().sum().transpose();
      if (l > 0) delta = delta * shared_[l].weight;
    }
    return flatten(grads);
  }

 private:
  static constexpr double kHeadGain = 0.1;

  static DenseLayer make_layer(std::size_t in, std::size_t out, std::mt19937_64& rng,
                               double gain = 1.0) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = u(rng);
    }
    return l;
  }

  std::vector<Eigen::MatrixXd> forward_shared(const Eigen::MatrixXd& x) const {
    if (x.cols() != shared_.front().weight.cols()) throw UsageError("MtlNetwork: input width mismatch");
    std::vector<Eigen::MatrixXd> acts{x};
    for (const auto& layer : shared_) {
      Eigen::MatrixXd a = acts.back() * layer.weight.transpose();
      a.rowwise() += layer.bias.transpose();
      acts.push_back(a.cwiseMax(0.0));
    }
    return acts;
  }

  // Row-major weights then bias, layer by layer.
  static Vec flatten(const std::vector<DenseLayer>& layers) {
    Vec out;
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
      }
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
    }
    return out;
  }

  static void unflatten(ConstVecView p, std::vector<DenseLayer>& layers) {
    std::size_t need = 0;
    for (const auto& l : layers) need += l.param_count();
    if (p.size() != need) throw UsageError("MtlNetwork: parameter vector has wrong length");
    std::size_t k = 0;
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = p[k++];
      }
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = p[k++];
    }
  }

  std::vector<DenseLayer> shared_;
  std::vector<DenseLayer> heads_;
};

}  // namespace gradops
