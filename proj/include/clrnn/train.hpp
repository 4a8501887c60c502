#pragma once

// Optimizers, gradient clipping, the divide-by-10 learning-rate decay rule,
// epoch loops for both task kinds, and evaluation metrics.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clrnn/data.hpp"
#include "clrnn/model.hpp"

namespace clrnn {

struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Sgd {};

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m, v;  // lazily sized to the params
  std::int64_t t = 0;
};

using Optimizer = std::variant<Sgd, Adam>;

// p -= lr * g (SGD) or the bias-corrected Adam update. Missing grads count
// as zero.
void optimizer_step(Optimizer& opt, std::span<Tensor> params, double lr);

// Global L2 norm across all grads; scales them to max_norm when above.
// Returns the observed (pre-clip) norm.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

// "When the test loss is greater than the maximum of the last three times,
// the learning rate will be divided by 10."
struct LrDecay {
  std::vector<double> window;  // at most 3, most recent last

  // Applies the rule against the prior window, then shifts in new_loss.
  // Returns true when lr was decayed.
  bool observe(double& lr, double new_loss);
};

struct TrainSettings {
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::optional<double> grad_clip;
};

// Any classifier is trainable through the same loop: a forward function
// from [batch, n, E] input to [batch, classes] log-probs plus its leaves.
using ClassifierForward =
    std::function<Tensor(Tape&, const Tensor& x, bool training, Rng* rng)>;

// One pass over the dataset: forward, loss, backward, optional clip, step.
// Deterministic under fixed rngs. Aborts with diagnostics on NaN loss.
double train_epoch_classification(const ClassifierForward& forward,
                                  std::span<Tensor> params,
                                  const ClassificationDataset& data,
                                  Optimizer& opt, const TrainSettings& s,
                                  Rng& shuffle_rng, Rng& dropout_rng);

double train_epoch_classification(Model& model,
                                  const ClassificationDataset& data,
                                  Optimizer& opt, const TrainSettings& s,
                                  Rng& shuffle_rng, Rng& dropout_rng);

double train_epoch_lm(Model& model, const std::vector<SequenceBatch>& batches,
                      Optimizer& opt, const TrainSettings& s,
                      Rng& dropout_rng);

struct EvalMetrics {
  double mean_loss = 0.0;
  double top1_accuracy = 0.0;  // classification only
  double bpc = 0.0;            // language model only
};

EvalMetrics evaluate_classification(const ClassifierForward& forward,
                                    const ClassificationDataset& data,
                                    std::size_t batch_size = 64);

EvalMetrics evaluate_classification(const Model& model,
                                    const ClassificationDataset& data,
                                    std::size_t batch_size = 64);

EvalMetrics evaluate_lm(const Model& model,
                        const std::vector<SequenceBatch>& batches);

double bpc_from_loss(double mean_loss);

// One CSV row per epoch. metric is accuracy or bpc depending on the task.
struct MetricsRow {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;
  double metric = 0.0;
  double wall_seconds = 0.0;
};

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows,
                       const std::string& metric_name);

}  // namespace clrnn
