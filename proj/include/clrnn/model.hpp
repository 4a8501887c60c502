#pragma once

// Full CL-RNN: optional embedding -> carry-lookahead module -> parallel RNN
// module -> linear head with log-softmax. The head either reads the last
// time position, the flattened whole sequence (fixed-length tasks), or is
// applied position-wise for language modeling.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clrnn/cl_module.hpp"
#include "clrnn/parallel_rnn.hpp"

namespace clrnn {

struct ConfigurationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class HeadMode { last, full };
enum class TaskKind { classification, language_model };

struct EmbeddingSpec {
  int vocab = 0;
  int dim = 0;
};

struct CLRNNConfig {
  CLModuleConfig cl;                      // channels.back() is the hidden size
  int input_dim = 1;                      // feature width when no embedding
  std::optional<EmbeddingSpec> embedding; // token inputs iff present
  HeadMode head_mode = HeadMode::last;
  int num_classes = 10;                   // classes, or output vocab for LM
  TaskKind task = TaskKind::classification;
  int fixed_length = 0;                   // required by the full head
  bool post_relu = false;                 // ablation hooks, off by default
  double post_dropout = 0.0;

  int hidden() const { return cl.channels.back(); }
  int cell_input_dim() const { return embedding ? embedding->dim : input_dim; }
  void validate() const;
};

struct Model {
  CLRNNConfig cfg;
  Tensor embed;  // [V, E], defined iff cfg.embedding
  std::vector<ConvLayer> cl_layers;
  RNNCellParams cell;
  Tensor head_w;
  Tensor head_b;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

Model build_model(const CLRNNConfig& cfg, Rng& rng);
std::size_t parameter_count(const Model& model);

// Real-valued sequences, classification tasks. x: [batch, n, E] or [n, E].
// Returns per-item class log-probabilities [batch, num_classes].
Tensor model_forward(Tape& tape, const Model& model, const Tensor& x,
                     bool training = false, Rng* dropout_rng = nullptr);

// Token sequences (embedding required). Returns position-wise
// log-probabilities [batch * n, vocab_out].
Tensor model_forward_tokens(Tape& tape, const Model& model,
                            std::span<const std::int64_t> tokens,
                            std::size_t batch, std::size_t n,
                            bool training = false, Rng* dropout_rng = nullptr);

// Classic step-by-step recurrent classifier, the training baseline the
// carry-lookahead model is compared against: cell applied along the
// sequence, linear head on the last hidden state.
struct SerialBaseline {
  int hidden = 32;
  RNNCellParams cell;
  Tensor head_w;
  Tensor head_b;

  std::vector<Tensor> parameters() const;
};

SerialBaseline build_serial_baseline(int input_dim, int hidden,
                                     int num_classes, Rng& rng);
std::size_t parameter_count(const SerialBaseline& model);

// x: [batch, n, E] -> [batch, num_classes] log-probs.
Tensor serial_baseline_forward(Tape& tape, const SerialBaseline& model,
                               const Tensor& x);

// Versioned binary container: config record plus named parameter arrays,
// 64-bit little-endian values. Round-trips bit-exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

std::string config_to_json(const CLRNNConfig& cfg);
CLRNNConfig config_from_json(const std::string& json_text);

}  // namespace clrnn
