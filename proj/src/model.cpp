#include "clrnn/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace clrnn {

void CLRNNConfig::validate() const {
  cl.validate();
  if (embedding) {
    if (embedding->vocab < 1 || embedding->dim < 1) {
      throw ConfigurationError("embedding vocab and dim must be positive");
    }
  } else if (input_dim < 1) {
    throw ConfigurationError("input_dim must be positive");
  }
  if (num_classes < 1) {
    throw ConfigurationError("num_classes must be positive");
  }
  if (task == TaskKind::language_model && !embedding) {
    throw ConfigurationError("language model task requires an embedding");
  }
  if (task == TaskKind::classification && head_mode == HeadMode::full &&
      fixed_length < 1) {
    throw ConfigurationError(
        "full head needs fixed_length; it flattens the whole sequence");
  }
  if (post_dropout < 0.0 || post_dropout >= 1.0) {
    throw ConfigurationError("post_dropout must be in [0,1)");
  }
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> named;
  if (embed.defined()) named.emplace_back("embedding.table", embed);
  for (std::size_t l = 0; l < cl_layers.size(); ++l) {
    named.emplace_back("cl." + std::to_string(l) + ".w", cl_layers[l].w);
    named.emplace_back("cl." + std::to_string(l) + ".b", cl_layers[l].b);
  }
  named.emplace_back("cell.w_ih", cell.w_ih);
  named.emplace_back("cell.w_hh", cell.w_hh);
  named.emplace_back("cell.b_ih", cell.b_ih);
  named.emplace_back("cell.b_hh", cell.b_hh);
  named.emplace_back("head.w", head_w);
  named.emplace_back("head.b", head_b);
  return named;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> params;
  for (auto& [name, t] : named_parameters()) params.push_back(t);
  return params;
}

Model build_model(const CLRNNConfig& cfg, Rng& rng) {
  cfg.validate();
  Model model;
  model.cfg = cfg;
  if (cfg.embedding) {
    model.embed = Tensor::uniform({static_cast<std::size_t>(cfg.embedding->vocab),
                                   static_cast<std::size_t>(cfg.embedding->dim)},
                                  rng, -0.1, 0.1, /*requires_grad=*/true);
  }
  const int e = cfg.cell_input_dim();
  model.cl_layers = cl_build_params(cfg.cl, e, rng);
  model.cell = rnncell_init(e, cfg.hidden(), rng);

  std::size_t head_in = static_cast<std::size_t>(cfg.hidden());
  if (cfg.task == TaskKind::classification && cfg.head_mode == HeadMode::full) {
    head_in = static_cast<std::size_t>(cfg.fixed_length) *
              static_cast<std::size_t>(cfg.hidden());
  }
  model.head_w = init_weight({head_in, static_cast<std::size_t>(cfg.num_classes)},
                             head_in, rng);
  model.head_b =
      Tensor::zeros({static_cast<std::size_t>(cfg.num_classes)}, true);
  return model;
}

std::size_t parameter_count(const Model& model) {
  std::size_t count = 0;
  for (auto& [name, t] : model.named_parameters()) count += t.numel();
  return count;
}

namespace {

// cl module + cell + hooks, shared by both entry points. x3: [B, n, E].
Tensor backbone(Tape& tape, const Model& model, const Tensor& x3,
                bool training, Rng* dropout_rng) {
  Tensor h = cl_forward(tape, x3, model.cfg.cl, model.cl_layers, training,
                        dropout_rng);
  Tensor o = parallel_rnn_forward(tape, x3, h, model.cell);
  if (model.cfg.post_relu) o = relu(tape, o);
  if (model.cfg.post_dropout > 0.0 && training) {
    if (!dropout_rng) throw ContractError("post_dropout requires an rng");
    o = dropout(tape, o, model.cfg.post_dropout, training, *dropout_rng);
  }
  return o;
}

Tensor head_log_probs(Tape& tape, const Model& model, const Tensor& flat) {
  return log_softmax(
      tape, linear_forward(tape, flat, model.head_w, model.head_b));
}

}  // namespace

Tensor model_forward(Tape& tape, const Model& model, const Tensor& x,
                     bool training, Rng* dropout_rng) {
  const CLRNNConfig& cfg = model.cfg;
  if (cfg.embedding) {
    throw ConfigurationError(
        "model takes token input; use model_forward_tokens");
  }
  if (cfg.task != TaskKind::classification) {
    throw ConfigurationError("model_forward is for classification tasks");
  }
  Tensor x3 = x.ndim() == 2 ? reshape(tape, x, {1, x.dim(0), x.dim(1)}) : x;
  if (x3.ndim() != 3 || x3.dim(2) != static_cast<std::size_t>(cfg.input_dim)) {
    throw DimensionError("model_forward: expected [batch, n, " +
                         std::to_string(cfg.input_dim) + "], got " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x3.dim(0), n = x3.dim(1);
  Tensor o = backbone(tape, model, x3, training, dropout_rng);
  if (cfg.head_mode == HeadMode::last) {
    Tensor last = reshape(tape, slice_time(tape, o, n - 1, n),
                          {b, static_cast<std::size_t>(cfg.hidden())});
    return head_log_probs(tape, model, last);
  }
  if (n != static_cast<std::size_t>(cfg.fixed_length)) {
    throw DimensionError("full head built for length " +
                         std::to_string(cfg.fixed_length) + ", got " +
                         std::to_string(n));
  }
  Tensor flat =
      reshape(tape, o, {b, n * static_cast<std::size_t>(cfg.hidden())});
  return head_log_probs(tape, model, flat);
}

Tensor model_forward_tokens(Tape& tape, const Model& model,
                            std::span<const std::int64_t> tokens,
                            std::size_t batch, std::size_t n, bool training,
                            Rng* dropout_rng) {
  const CLRNNConfig& cfg = model.cfg;
  if (!cfg.embedding) {
    throw ConfigurationError("model has no embedding; token input unsupported");
  }
  if (tokens.size() != batch * n) {
    throw DimensionError("token count " + std::to_string(tokens.size()) +
                         " != batch * n = " + std::to_string(batch * n));
  }
  Tensor emb = embedding_forward(tape, model.embed, tokens);
  Tensor x3 = reshape(tape, emb,
                      {batch, n, static_cast<std::size_t>(cfg.embedding->dim)});
  Tensor o = backbone(tape, model, x3, training, dropout_rng);
  Tensor flat =
      reshape(tape, o, {batch * n, static_cast<std::size_t>(cfg.hidden())});
  return head_log_probs(tape, model, flat);
}

// ---- serial baseline ----------------------------------------------------------

std::vector<Tensor> SerialBaseline::parameters() const {
  return {cell.w_ih, cell.w_hh, cell.b_ih, cell.b_hh, head_w, head_b};
}

SerialBaseline build_serial_baseline(int input_dim, int hidden,
                                     int num_classes, Rng& rng) {
  SerialBaseline model;
  model.hidden = hidden;
  model.cell = rnncell_init(input_dim, hidden, rng);
  model.head_w = init_weight({static_cast<std::size_t>(hidden),
                              static_cast<std::size_t>(num_classes)},
                             hidden, rng);
  model.head_b =
      Tensor::zeros({static_cast<std::size_t>(num_classes)}, true);
  return model;
}

std::size_t parameter_count(const SerialBaseline& model) {
  std::size_t count = 0;
  for (const Tensor& p : model.parameters()) count += p.numel();
  return count;
}

Tensor serial_baseline_forward(Tape& tape, const SerialBaseline& model,
                               const Tensor& x) {
  Tensor x3 = x.ndim() == 2 ? reshape(tape, x, {1, x.dim(0), x.dim(1)}) : x;
  const std::size_t b = x3.dim(0), n = x3.dim(1);
  Tensor h0 =
      Tensor::zeros({b, static_cast<std::size_t>(model.hidden)});
  Tensor o = serial_recurrent_forward(tape, x3, h0, model.cell);
  Tensor last = reshape(tape, slice_time(tape, o, n - 1, n),
                        {b, static_cast<std::size_t>(model.hidden)});
  return log_softmax(
      tape, linear_forward(tape, last, model.head_w, model.head_b));
}

// ---- config json ------------------------------------------------------------

std::string config_to_json(const CLRNNConfig& cfg) {
  nlohmann::json j;
  j["num_layers"] = cfg.cl.num_layers;
  j["kernel_size"] = cfg.cl.kernel_size;
  j["dilation_multiple"] = cfg.cl.dilation_multiple;
  j["channels"] = cfg.cl.channels;
  j["dropout"] = cfg.cl.dropout;
  j["shift_mode"] =
      cfg.cl.shift_mode == ShiftMode::exclusive ? "exclusive" : "inclusive";
  j["input_dim"] = cfg.input_dim;
  if (cfg.embedding) {
    j["embedding"] = {{"vocab", cfg.embedding->vocab},
                      {"dim", cfg.embedding->dim}};
  } else {
    j["embedding"] = nullptr;
  }
  j["head_mode"] = cfg.head_mode == HeadMode::last ? "last" : "full";
  j["num_classes"] = cfg.num_classes;
  j["task"] = cfg.task == TaskKind::classification ? "classification"
                                                   : "language-model";
  j["fixed_length"] = cfg.fixed_length;
  j["post_relu"] = cfg.post_relu;
  j["post_dropout"] = cfg.post_dropout;
  return j.dump(2);
}

CLRNNConfig config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("bad model config json: ") + e.what());
  }
  static const char* known[] = {
      "num_layers", "kernel_size", "dilation_multiple", "channels",
      "dropout",    "shift_mode",  "input_dim",         "embedding",
      "head_mode",  "num_classes", "task",              "fixed_length",
      "post_relu",  "post_dropout"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigurationError("unknown model config key: " + it.key());
  }
  try {
    CLRNNConfig cfg;
    cfg.cl.num_layers = j.at("num_layers").get<int>();
    cfg.cl.kernel_size = j.at("kernel_size").get<int>();
    cfg.cl.dilation_multiple = j.at("dilation_multiple").get<int>();
    if (j.at("channels").is_array()) {
      cfg.cl.channels = j.at("channels").get<std::vector<int>>();
    } else {
      cfg.cl.channels.assign(cfg.cl.num_layers, j.at("channels").get<int>());
    }
    cfg.cl.dropout = j.at("dropout").get<double>();
    const std::string shift = j.at("shift_mode").get<std::string>();
    if (shift == "exclusive") {
      cfg.cl.shift_mode = ShiftMode::exclusive;
    } else if (shift == "inclusive") {
      cfg.cl.shift_mode = ShiftMode::inclusive;
    } else {
      throw ConfigurationError("shift_mode must be exclusive or inclusive");
    }
    cfg.input_dim = j.at("input_dim").get<int>();
    if (!j.at("embedding").is_null()) {
      EmbeddingSpec emb;
      emb.vocab = j.at("embedding").at("vocab").get<int>();
      emb.dim = j.at("embedding").at("dim").get<int>();
      cfg.embedding = emb;
    }
    const std::string head = j.at("head_mode").get<std::string>();
    if (head == "last") {
      cfg.head_mode = HeadMode::last;
    } else if (head == "full") {
      cfg.head_mode = HeadMode::full;
    } else {
      throw ConfigurationError("head_mode must be last or full");
    }
    cfg.num_classes = j.at("num_classes").get<int>();
    const std::string task = j.at("task").get<std::string>();
    if (task == "classification") {
      cfg.task = TaskKind::classification;
    } else if (task == "language-model") {
      cfg.task = TaskKind::language_model;
    } else {
      throw ConfigurationError("task must be classification or language-model");
    }
    cfg.fixed_length = j.at("fixed_length").get<int>();
    cfg.post_relu = j.at("post_relu").get<bool>();
    cfg.post_dropout = j.at("post_dropout").get<double>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("bad model config json: ") + e.what());
  }
}

// ---- checkpoint io ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'L', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw ContractError("checkpoint truncated at offset " +
                          std::to_string(pos));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    }
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  const std::string cfg = config_to_json(model.cfg);
  put_u64(out, cfg.size());
  out += cfg;
  const auto named = model.named_parameters();
  put_u32(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ContractError("short write to checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw ContractError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ContractError("unsupported checkpoint version " +
                        std::to_string(version));
  }
  const std::uint64_t cfg_len = r.u64();
  const CLRNNConfig cfg = config_from_json(r.bytes(cfg_len));
  Rng scratch(0);
  Model model = build_model(cfg, scratch);
  auto named = model.named_parameters();
  const std::uint32_t nparams = r.u32();
  if (nparams != named.size()) {
    throw ContractError("checkpoint has " + std::to_string(nparams) +
                        " parameters, model wants " +
                        std::to_string(named.size()));
  }
  for (std::uint32_t i = 0; i < nparams; ++i) {
    const std::string name = r.bytes(r.u32());
    if (name != named[i].first) {
      throw ContractError("checkpoint parameter " + name +
                          " does not match model parameter " + named[i].first);
    }
    Tensor& t = named[i].second;
    const std::uint32_t ndim = r.u32();
    Shape shape(ndim);
    for (auto& d : shape) d = r.u64();
    if (shape != t.shape()) {
      throw ContractError("checkpoint shape mismatch for " + name);
    }
    for (double& v : t.values()) v = r.f64();
  }
  return model;
}

}  // namespace clrnn
