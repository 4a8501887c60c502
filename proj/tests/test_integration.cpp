// End-to-end run on the bundled 8x8 handwritten-digit set (UCI test digits
// in IDX format): ingestion, training, evaluation, and the comparison
// against the step-by-step recurrent baseline at a matched parameter budget.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <string>

#include "clrnn/data.hpp"
#include "clrnn/presets.hpp"
#include "clrnn/train.hpp"

using namespace clrnn;

namespace {

std::string digits_dir() {
  if (const char* env = std::getenv("CLRNN_DIGITS_DIR")) return env;
  return "../tests/data/digits";  // relative to the build tree
}

}  // namespace

TEST_CASE("digit sequences train to useful accuracy and beat the baseline") {
  ClassificationDataset train_set, test_set;
  try {
    train_set = load_idx_sequences(digits_dir(), "train", 0, 1);
    test_set = load_idx_sequences(digits_dir(), "t10k", 0, 1);
  } catch (const FormatError& e) {
    FAIL("digit fixture not found: ", e.what());
    return;
  }
  REQUIRE(train_set.size() == 1297);
  REQUIRE(test_set.size() == 500);
  REQUIRE(train_set.inputs[0].shape() == Shape{64, 1});

  // carry-lookahead model, width-1 cell, full head over the 64 positions
  CLRNNConfig cfg = presets::mnist_desk(1);
  cfg.cl.num_layers = 6;  // receptive field 379 covers the 64-step sequence
  cfg.cl.channels.assign(6, 1);
  cfg.fixed_length = 64;
  Rng rng(7);
  Model model = build_model(cfg, rng);

  Optimizer opt = Adam{};
  TrainSettings s;
  s.batch_size = 64;
  s.lr = 2e-3;
  Rng shuffle_rng(8), dropout_rng(9);
  double first_loss = 0.0, last_loss = 0.0;
  for (int epoch = 0; epoch < 12; ++epoch) {
    const double loss = train_epoch_classification(model, train_set, opt, s,
                                                   shuffle_rng, dropout_rng);
    if (epoch == 0) first_loss = loss;
    last_loss = loss;
  }
  CHECK(last_loss < first_loss);
  const EvalMetrics cl_metrics = evaluate_classification(model, test_set);
  CHECK(cl_metrics.top1_accuracy >= 0.8);

  // matched-budget serial baseline
  const std::size_t cl_params = parameter_count(model);
  int hidden = 4;
  while (parameter_count(build_serial_baseline(1, hidden + 1, 10, rng)) <=
         cl_params) {
    ++hidden;
  }
  Rng brng(7);
  SerialBaseline baseline = build_serial_baseline(1, hidden, 10, brng);
  auto bparams = baseline.parameters();
  const ClassifierForward bforward = [&baseline](Tape& t, const Tensor& x,
                                                 bool, Rng*) {
    return serial_baseline_forward(t, baseline, x);
  };
  Optimizer bopt = Adam{};
  Rng bshuffle(8), bdrop(9);
  for (int epoch = 0; epoch < 12; ++epoch) {
    train_epoch_classification(bforward, bparams, train_set, bopt, s,
                               bshuffle, bdrop);
  }
  const EvalMetrics base_metrics = evaluate_classification(bforward, test_set);
  MESSAGE("cl accuracy ", cl_metrics.top1_accuracy, " baseline ",
          base_metrics.top1_accuracy);
  CHECK(base_metrics.top1_accuracy <= cl_metrics.top1_accuracy);
}
