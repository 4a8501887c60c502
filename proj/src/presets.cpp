#include "clrnn/presets.hpp"

namespace clrnn::presets {

namespace {

CLRNNConfig mnist_base(int length, int hidden) {
  CLRNNConfig cfg;
  cfg.cl.num_layers = 8;
  cfg.cl.kernel_size = 7;
  cfg.cl.dilation_multiple = 2;
  cfg.cl.channels.assign(8, 1);
  cfg.cl.channels.back() = hidden;
  cfg.cl.dropout = 0.05;
  cfg.cl.shift_mode = ShiftMode::exclusive;
  cfg.input_dim = 1;
  cfg.head_mode = HeadMode::full;
  cfg.num_classes = 10;
  cfg.task = TaskKind::classification;
  cfg.fixed_length = length;
  return cfg;
}

}  // namespace

CLRNNConfig mnist_small() { return mnist_base(784, 1); }

CLRNNConfig mnist_wide() { return mnist_base(784, 128); }

CLRNNConfig mnist_desk(int stride) {
  const int side = 28 / stride;
  return mnist_base(side * side, 1);
}

CLRNNConfig char_lm(int vocab) {
  CLRNNConfig cfg;
  cfg.cl.num_layers = 3;
  cfg.cl.kernel_size = 3;
  cfg.cl.dilation_multiple = 2;
  cfg.cl.channels.assign(3, 450);
  cfg.cl.dropout = 0.1;
  cfg.cl.shift_mode = ShiftMode::exclusive;
  cfg.embedding = EmbeddingSpec{vocab, 100};
  cfg.head_mode = HeadMode::full;
  cfg.num_classes = vocab;
  cfg.task = TaskKind::language_model;
  return cfg;
}

CLRNNConfig char_lm_small(int vocab) {
  CLRNNConfig cfg = char_lm(vocab);
  cfg.cl.channels.assign(3, 64);
  return cfg;
}

CLRNNConfig copy_task(int seq_len) {
  CLRNNConfig cfg;
  cfg.cl.num_layers = 2;
  cfg.cl.kernel_size = 2;
  cfg.cl.dilation_multiple = 2;
  cfg.cl.channels.assign(2, 8);
  cfg.cl.dropout = 0.0;
  cfg.cl.shift_mode = ShiftMode::exclusive;
  cfg.input_dim = 1;
  cfg.head_mode = HeadMode::last;
  cfg.num_classes = 2;
  cfg.task = TaskKind::classification;
  cfg.fixed_length = seq_len;
  return cfg;
}

}  // namespace clrnn::presets
