#include "clrnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace clrnn {

void optimizer_step(Optimizer& opt, std::span<Tensor> params, double lr) {
  if (std::holds_alternative<Sgd>(opt)) {
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      auto v = p.values();
      auto g = p.grad();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
    return;
  }
  Adam& adam = std::get<Adam>(opt);
  if (adam.m.size() != params.size()) {
    adam.m.assign(params.size(), {});
    adam.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam.m[i].assign(params[i].numel(), 0.0);
      adam.v[i].assign(params[i].numel(), 0.0);
    }
    adam.t = 0;
  }
  ++adam.t;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto v = params[i].values();
    std::span<const double> g = params[i].has_grad()
                                    ? params[i].grad()
                                    : std::span<const double>{};
    auto& m1 = adam.m[i];
    auto& m2 = adam.v[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m1[j] = adam.beta1 * m1[j] + (1.0 - adam.beta1) * gj;
      m2[j] = adam.beta2 * m2[j] + (1.0 - adam.beta2) * gj * gj;
      const double mhat = m1[j] / bc1;
      const double vhat = m2[j] / bc2;
      v[j] -= lr * mhat / (std::sqrt(vhat) + adam.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  if (max_norm <= 0.0) throw ContractError("clip_grad_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.grad()) g *= scale;
    }
  }
  return norm;
}

bool LrDecay::observe(double& lr, double new_loss) {
  bool decayed = false;
  if (window.size() == 3 &&
      new_loss > *std::max_element(window.begin(), window.end())) {
    lr /= 10.0;
    decayed = true;
  }
  window.push_back(new_loss);
  if (window.size() > 3) window.erase(window.begin());
  return decayed;
}

namespace {

void clear_grads(std::span<Tensor> params) {
  for (Tensor& p : params) p.clear_grad();
}

[[noreturn]] void abort_nan(std::size_t batch_index, double lr,
                            double grad_norm) {
  char msg[160];
  std::snprintf(msg, sizeof msg,
                "NaN loss at batch %zu (lr=%g, last grad norm=%g)",
                batch_index, lr, grad_norm);
  throw TrainAbort(msg);
}

// Gathers dataset items [n,1] into one [B, n, 1] tensor.
Tensor gather_batch(const ClassificationDataset& data,
                    std::span<const std::size_t> idx) {
  const std::size_t n = data.inputs[idx[0]].dim(0);
  std::vector<double> v;
  v.reserve(idx.size() * n);
  for (std::size_t i : idx) {
    const Tensor& t = data.inputs[i];
    if (t.dim(0) != n) {
      throw ContractError("classification batch needs uniform lengths");
    }
    v.insert(v.end(), t.values().begin(), t.values().end());
  }
  return Tensor::from({idx.size(), n, 1}, std::move(v));
}

}  // namespace

double train_epoch_classification(const ClassifierForward& forward,
                                  std::span<Tensor> params,
                                  const ClassificationDataset& data,
                                  Optimizer& opt, const TrainSettings& s,
                                  Rng& shuffle_rng, Rng& dropout_rng) {
  if (data.size() == 0) throw ContractError("train_epoch: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, shuffle_rng);

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  double last_grad_norm = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t at = 0; at < order.size(); at += s.batch_size, ++batch_index) {
    const std::size_t b = std::min(s.batch_size, order.size() - at);
    const std::span<const std::size_t> idx(order.data() + at, b);
    Tensor x = gather_batch(data, idx);
    std::vector<std::int64_t> targets;
    targets.reserve(b);
    for (std::size_t i : idx) targets.push_back(data.targets[i]);

    Tape tape;
    Tensor log_probs = forward(tape, x, /*training=*/true, &dropout_rng);
    Tensor loss = cross_entropy(tape, log_probs, targets);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) abort_nan(batch_index, s.lr, last_grad_norm);
    tape.backward(loss);
    if (s.grad_clip) {
      last_grad_norm = clip_grad_norm(params, *s.grad_clip);
    }
    optimizer_step(opt, params, s.lr);
    clear_grads(params);
    loss_sum += loss_value * static_cast<double>(b);
    loss_count += b;
  }
  return loss_sum / static_cast<double>(loss_count);
}

double train_epoch_classification(Model& model,
                                  const ClassificationDataset& data,
                                  Optimizer& opt, const TrainSettings& s,
                                  Rng& shuffle_rng, Rng& dropout_rng) {
  auto params = model.parameters();
  const ClassifierForward forward = [&model](Tape& tape, const Tensor& x,
                                             bool training, Rng* rng) {
    return model_forward(tape, model, x, training, rng);
  };
  return train_epoch_classification(forward, params, data, opt, s,
                                    shuffle_rng, dropout_rng);
}

double train_epoch_lm(Model& model, const std::vector<SequenceBatch>& batches,
                      Optimizer& opt, const TrainSettings& s,
                      Rng& dropout_rng) {
  if (batches.empty()) throw ContractError("train_epoch: no batches");
  auto params = model.parameters();
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  double last_grad_norm = 0.0;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const SequenceBatch& batch = batches[bi];
    Tape tape;
    Tensor log_probs =
        model_forward_tokens(tape, model, batch.inputs, batch.batch,
                             batch.seq_len, /*training=*/true, &dropout_rng);
    const auto mask = batch.loss_mask();
    Tensor loss = cross_entropy(tape, log_probs, batch.targets, mask);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) abort_nan(bi, s.lr, last_grad_norm);
    tape.backward(loss);
    if (s.grad_clip) {
      last_grad_norm = clip_grad_norm(params, *s.grad_clip);
    }
    optimizer_step(opt, params, s.lr);
    clear_grads(params);
    const std::size_t rows = batch.batch * batch.valid_len;
    loss_sum += loss_value * static_cast<double>(rows);
    loss_count += rows;
  }
  return loss_sum / static_cast<double>(loss_count);
}

EvalMetrics evaluate_classification(const ClassifierForward& forward,
                                    const ClassificationDataset& data,
                                    std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t at = 0; at < idx.size(); at += batch_size) {
    const std::size_t b = std::min(batch_size, idx.size() - at);
    const std::span<const std::size_t> part(idx.data() + at, b);
    Tensor x = gather_batch(data, part);
    std::vector<std::int64_t> targets;
    for (std::size_t i : part) targets.push_back(data.targets[i]);
    Tape tape(false);
    Tensor log_probs = forward(tape, x, false, nullptr);
    Tensor loss = cross_entropy(tape, log_probs, targets);
    loss_sum += loss.item() * static_cast<double>(b);
    const std::size_t c = log_probs.dim(1);
    for (std::size_t r = 0; r < b; ++r) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (log_probs.at(r * c + j) > log_probs.at(r * c + best)) best = j;
      }
      if (static_cast<std::int64_t>(best) == targets[r]) ++correct;
    }
  }
  EvalMetrics m;
  m.mean_loss = loss_sum / static_cast<double>(data.size());
  m.top1_accuracy =
      static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

EvalMetrics evaluate_classification(const Model& model,
                                    const ClassificationDataset& data,
                                    std::size_t batch_size) {
  const ClassifierForward forward = [&model](Tape& tape, const Tensor& x,
                                             bool training, Rng* rng) {
    return model_forward(tape, model, x, training, rng);
  };
  return evaluate_classification(forward, data, batch_size);
}

EvalMetrics evaluate_lm(const Model& model,
                        const std::vector<SequenceBatch>& batches) {
  if (batches.empty()) throw ContractError("evaluate: no batches");
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (const SequenceBatch& batch : batches) {
    Tape tape(false);
    Tensor log_probs = model_forward_tokens(tape, model, batch.inputs,
                                            batch.batch, batch.seq_len);
    const auto mask = batch.loss_mask();
    Tensor loss = cross_entropy(tape, log_probs, batch.targets, mask);
    const std::size_t rows = batch.batch * batch.valid_len;
    loss_sum += loss.item() * static_cast<double>(rows);
    loss_count += rows;
  }
  EvalMetrics m;
  m.mean_loss = loss_sum / static_cast<double>(loss_count);
  m.bpc = bpc_from_loss(m.mean_loss);
  return m;
}

double bpc_from_loss(double mean_loss) { return mean_loss / std::log(2.0); }

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows,
                       const std::string& metric_name) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ContractError("cannot write metrics csv: " + path);
  f << "epoch,train_loss,valid_loss,lr," << metric_name << ",wall_seconds\n";
  char line[256];
  for (const MetricsRow& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                  r.epoch, r.train_loss, r.valid_loss, r.lr, r.metric,
                  r.wall_seconds);
    f << line;
  }
}

}  // namespace clrnn
