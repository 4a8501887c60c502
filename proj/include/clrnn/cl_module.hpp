#pragma once

// Carry-lookahead module: a stack of dilated causal conv blocks
// (conv -> relu -> dropout) that precomputes the whole hidden-state
// sequence in one pass. Layer i uses dilation m^i, so the receptive field
// grows exponentially with depth while output length equals input length.

#include <vector>

#include "clrnn/layers.hpp"
#include "clrnn/tensor.hpp"

namespace clrnn {

// exclusive: the output is shifted one step right (zero row in front), so
// position i depends only on inputs before i. inclusive: no shift,
// position i may also see input i.
enum class ShiftMode { exclusive, inclusive };

struct CLModuleConfig {
  int num_layers = 1;
  int kernel_size = 2;
  int dilation_multiple = 2;
  std::vector<int> channels;  // out channels per layer; back() feeds the cell
  double dropout = 0.0;
  ShiftMode shift_mode = ShiftMode::exclusive;

  void validate() const;
  long module_receptive_field() const {
    return receptive_field(num_layers, kernel_size, dilation_multiple);
  }
  CausalConvSpec layer_spec(int layer, int in_channels) const;
};

struct ConvLayer {
  Tensor w;  // [k, c_in, c_out]
  Tensor b;  // [c_out]
};

std::vector<ConvLayer> cl_build_params(const CLModuleConfig& cfg,
                                       int in_channels, Rng& rng);

// All weights one, all biases zero; used by the receptive-field probes.
std::vector<ConvLayer> cl_ones_params(const CLModuleConfig& cfg,
                                      int in_channels);

// x: [n, E] or [batch, n, E]; output keeps the layout with channels.back()
// channels. dropout_rng may be null when cfg.dropout == 0 or !training.
Tensor cl_forward(Tape& tape, const Tensor& x, const CLModuleConfig& cfg,
                  const std::vector<ConvLayer>& params, bool training,
                  Rng* dropout_rng);

// Earliest input index with nonzero gradient into output position t of an
// all-ones-weight instance over a length-n ones input; -1 when position t
// sees no input at all (exclusive mode, t == 0).
long cl_receptive_probe(const CLModuleConfig& cfg, int in_channels,
                        std::size_t t, std::size_t n);

}  // namespace clrnn
