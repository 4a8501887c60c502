#pragma once

// Named model configurations. The two sequential-image presets mirror the
// reference architecture family: an 8-layer k=7 dilated stack over the
// 784-step pixel sequence with either a width-1 cell (small) or a width-128
// cell (wide), both classifying from the flattened whole output sequence.

#include "clrnn/model.hpp"

namespace clrnn::presets {

// ~8K parameters; cell width 1.
CLRNNConfig mnist_small();

// ~1M parameters; last conv layer widens to a 128-wide cell.
CLRNNConfig mnist_wide();

// Desk-scale variant: stride-2 pixels (length 196), otherwise the small
// architecture.
CLRNNConfig mnist_desk(int stride);

// Character LM defaults: kernel 3, 3 layers, 450 kernels, embedding 100.
CLRNNConfig char_lm(int vocab);

// Small character LM for quick runs: 64 kernels per layer.
CLRNNConfig char_lm_small(int vocab);

// Tiny classifier for the synthetic copy task.
CLRNNConfig copy_task(int seq_len);

}  // namespace clrnn::presets
