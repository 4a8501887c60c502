#include "clrnn/cl_module.hpp"

#include <cmath>

namespace clrnn {

void CLModuleConfig::validate() const {
  if (num_layers < 1) throw ContractError("cl module: num_layers must be >= 1");
  if (kernel_size < 1) throw ContractError("cl module: kernel_size must be >= 1");
  if (dilation_multiple < 1) {
    throw ContractError("cl module: dilation_multiple must be >= 1");
  }
  if (channels.size() != static_cast<std::size_t>(num_layers)) {
    throw ContractError("cl module: need one channel count per layer, got " +
                        std::to_string(channels.size()) + " for " +
                        std::to_string(num_layers) + " layers");
  }
  for (int c : channels) {
    if (c < 1) throw ContractError("cl module: channels must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ContractError("cl module: dropout must be in [0,1)");
  }
}

CausalConvSpec CLModuleConfig::layer_spec(int layer, int in_channels) const {
  CausalConvSpec spec;
  spec.kernel_size = kernel_size;
  int d = 1;
  for (int i = 0; i < layer; ++i) d *= dilation_multiple;
  spec.dilation = d;
  spec.in_channels = layer == 0 ? in_channels : channels[layer - 1];
  spec.out_channels = channels[layer];
  return spec;
}

std::vector<ConvLayer> cl_build_params(const CLModuleConfig& cfg,
                                       int in_channels, Rng& rng) {
  cfg.validate();
  std::vector<ConvLayer> params;
  params.reserve(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const CausalConvSpec spec = cfg.layer_spec(l, in_channels);
    const std::size_t fan_in =
        static_cast<std::size_t>(spec.kernel_size) * spec.in_channels;
    ConvLayer layer;
    layer.w = init_weight({static_cast<std::size_t>(spec.kernel_size),
                           static_cast<std::size_t>(spec.in_channels),
                           static_cast<std::size_t>(spec.out_channels)},
                          fan_in, rng);
    layer.b = Tensor::zeros({static_cast<std::size_t>(spec.out_channels)}, true);
    params.push_back(std::move(layer));
  }
  return params;
}

std::vector<ConvLayer> cl_ones_params(const CLModuleConfig& cfg,
                                      int in_channels) {
  cfg.validate();
  std::vector<ConvLayer> params;
  params.reserve(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const CausalConvSpec spec = cfg.layer_spec(l, in_channels);
    ConvLayer layer;
    layer.w = Tensor::full({static_cast<std::size_t>(spec.kernel_size),
                            static_cast<std::size_t>(spec.in_channels),
                            static_cast<std::size_t>(spec.out_channels)},
                           1.0);
    layer.b = Tensor::zeros({static_cast<std::size_t>(spec.out_channels)});
    params.push_back(std::move(layer));
  }
  return params;
}

Tensor cl_forward(Tape& tape, const Tensor& x, const CLModuleConfig& cfg,
                  const std::vector<ConvLayer>& params, bool training,
                  Rng* dropout_rng) {
  cfg.validate();
  if (params.size() != static_cast<std::size_t>(cfg.num_layers)) {
    throw ContractError("cl_forward: parameter count does not match config");
  }
  const bool batched = x.ndim() == 3;
  if (!batched && x.ndim() != 2) {
    throw DimensionError("cl_forward: input must be 2-D or 3-D, got " +
                         shape_str(x.shape()));
  }
  const std::size_t n = batched ? x.dim(1) : x.dim(0);
  if (n == 0) throw ContractError("cl_forward: empty sequence");
  const int in_channels = static_cast<int>(batched ? x.dim(2) : x.dim(1));
  const bool use_dropout = training && cfg.dropout > 0.0;
  if (use_dropout && !dropout_rng) {
    throw ContractError("cl_forward: dropout requires an rng");
  }

  // The one-step output shift of exclusive mode rides on the last conv node
  // unless dropout has to run between them.
  const bool shift_in_conv =
      cfg.shift_mode == ShiftMode::exclusive && !use_dropout;
  Tensor h = batched ? x : reshape(tape, x, {1, n, x.dim(1)});
  for (int l = 0; l < cfg.num_layers; ++l) {
    const CausalConvSpec spec = cfg.layer_spec(l, in_channels);
    const bool last = l + 1 == cfg.num_layers;
    h = causal_conv1d(tape, h, spec, params[l].w, params[l].b,
                      /*fuse_relu=*/true,
                      /*shift_down=*/last && shift_in_conv);
    if (use_dropout) h = dropout(tape, h, cfg.dropout, training, *dropout_rng);
  }
  if (cfg.shift_mode == ShiftMode::exclusive && !shift_in_conv) {
    h = shift_time_down(tape, h);
  }
  if (!batched) h = reshape(tape, h, {n, h.dim(2)});
  return h;
}

long cl_receptive_probe(const CLModuleConfig& cfg, int in_channels,
                        std::size_t t, std::size_t n) {
  if (t >= n) throw IndexError("cl_receptive_probe: t out of range");
  const auto params = cl_ones_params(cfg, in_channels);
  Tape tape;
  Tensor x = Tensor::full({1, n, static_cast<std::size_t>(in_channels)}, 1.0,
                          /*requires_grad=*/true);
  Tensor h = cl_forward(tape, x, cfg, params, /*training=*/false, nullptr);
  Tensor at_t = slice_time(tape, h, t, t + 1);
  Tensor loss = sum(tape, at_t);
  tape.backward(loss);
  if (!x.has_grad()) return -1;
  const std::size_t c = static_cast<std::size_t>(in_channels);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < c; ++j) {
      if (x.grad()[s * c + j] != 0.0) return static_cast<long>(s);
    }
  }
  return -1;
}

}  // namespace clrnn
