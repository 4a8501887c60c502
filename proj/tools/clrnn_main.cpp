// clrnn: train / eval / bench / gradcheck / adder-demo.
//
// Configuration is a flat JSON document; every key can also be given as a
// command-line flag (flags win over the file, the file wins over task
// defaults). Unknown keys are errors. Exit codes: 0 ok, 1 runtime failure,
// 2 configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "clrnn/adder.hpp"
#include "clrnn/bench.hpp"
#include "clrnn/data.hpp"
#include "clrnn/gradcheck.hpp"
#include "clrnn/kernels.hpp"
#include "clrnn/parallel.hpp"
#include "clrnn/presets.hpp"
#include "clrnn/train.hpp"

namespace fs = std::filesystem;
using clrnn::ConfigurationError;

namespace {

struct RunConfig {
  std::string task = "seq-mnist";
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string data_dir;
  std::string corpus;

  int batch_size = 64;
  int epochs = 12;
  double lr = 2e-3;
  std::string optimizer = "adam";
  double grad_clip = 0.0;  // 0 = off
  double dropout = 0.05;

  int kernel_size = 7;
  int num_layers = 8;
  int channels = 1;
  int hidden = 0;  // 0 = same as channels
  int dilation_multiple = 2;
  std::string shift_mode = "exclusive";
  std::string head_mode = "full";
  int embedding_dim = 100;

  int seq_len = 400;
  int valid_len = 320;
  double train_frac = 0.8;
  double valid_frac = 0.1;

  int stride = 1;
  int train_limit = 0;
  int test_limit = 0;

  int copy_len = 16;
  int copy_delay = 1;
  int copy_items = 200;

  int threads = 0;  // 0 = auto
  std::string kernels = "auto";
};

void apply_task_defaults(RunConfig& rc) {
  if (rc.task == "seq-mnist") {
    // table defaults: batch 64, 12 epochs, adam 2e-3, k=7, 8 layers,
    // 1 kernel per layer, dropout 0.05
    rc.batch_size = 64;
    rc.epochs = 12;
    rc.lr = 2e-3;
    rc.optimizer = "adam";
    rc.grad_clip = 0.0;
    rc.dropout = 0.05;
    rc.kernel_size = 7;
    rc.num_layers = 8;
    rc.channels = 1;
    rc.head_mode = "full";
  } else if (rc.task == "char-lm") {
    // table defaults: batch 32, 100 epochs, sgd lr 4, clip 0.15, k=3,
    // 3 layers, 450 kernels, dropout 0.1, embedding 100, seq 400/valid 320
    rc.batch_size = 32;
    rc.epochs = 100;
    rc.lr = 4.0;
    rc.optimizer = "sgd";
    rc.grad_clip = 0.15;
    rc.dropout = 0.1;
    rc.kernel_size = 3;
    rc.num_layers = 3;
    rc.channels = 450;
    rc.embedding_dim = 100;
    rc.seq_len = 400;
    rc.valid_len = 320;
    rc.head_mode = "full";
  } else if (rc.task == "copy-task") {
    rc.batch_size = 16;
    rc.epochs = 20;
    rc.lr = 5e-3;
    rc.optimizer = "adam";
    rc.grad_clip = 0.0;
    rc.dropout = 0.0;
    rc.kernel_size = 2;
    rc.num_layers = 2;
    rc.channels = 8;
    rc.head_mode = "last";
  } else {
    throw ConfigurationError("task must be seq-mnist, char-lm or copy-task");
  }
}

nlohmann::json config_json(const RunConfig& rc) {
  return nlohmann::json{{"task", rc.task},
                        {"seed", rc.seed},
                        {"out_dir", rc.out_dir},
                        {"data_dir", rc.data_dir},
                        {"corpus", rc.corpus},
                        {"batch_size", rc.batch_size},
                        {"epochs", rc.epochs},
                        {"lr", rc.lr},
                        {"optimizer", rc.optimizer},
                        {"grad_clip", rc.grad_clip},
                        {"dropout", rc.dropout},
                        {"kernel_size", rc.kernel_size},
                        {"num_layers", rc.num_layers},
                        {"channels", rc.channels},
                        {"hidden", rc.hidden},
                        {"dilation_multiple", rc.dilation_multiple},
                        {"shift_mode", rc.shift_mode},
                        {"head_mode", rc.head_mode},
                        {"embedding_dim", rc.embedding_dim},
                        {"seq_len", rc.seq_len},
                        {"valid_len", rc.valid_len},
                        {"train_frac", rc.train_frac},
                        {"valid_frac", rc.valid_frac},
                        {"stride", rc.stride},
                        {"train_limit", rc.train_limit},
                        {"test_limit", rc.test_limit},
                        {"copy_len", rc.copy_len},
                        {"copy_delay", rc.copy_delay},
                        {"copy_items", rc.copy_items},
                        {"threads", rc.threads},
                        {"kernels", rc.kernels}};
}

void apply_config_json(RunConfig& rc, const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "task") {
        rc.task = v.get<std::string>();
      } else if (k == "seed") {
        rc.seed = v.get<std::uint64_t>();
      } else if (k == "out_dir") {
        rc.out_dir = v.get<std::string>();
      } else if (k == "data_dir") {
        rc.data_dir = v.get<std::string>();
      } else if (k == "corpus") {
        rc.corpus = v.get<std::string>();
      } else if (k == "batch_size") {
        rc.batch_size = v.get<int>();
      } else if (k == "epochs") {
        rc.epochs = v.get<int>();
      } else if (k == "lr") {
        rc.lr = v.get<double>();
      } else if (k == "optimizer") {
        rc.optimizer = v.get<std::string>();
      } else if (k == "grad_clip") {
        rc.grad_clip = v.get<double>();
      } else if (k == "dropout") {
        rc.dropout = v.get<double>();
      } else if (k == "kernel_size") {
        rc.kernel_size = v.get<int>();
      } else if (k == "num_layers") {
        rc.num_layers = v.get<int>();
      } else if (k == "channels") {
        rc.channels = v.get<int>();
      } else if (k == "hidden") {
        rc.hidden = v.get<int>();
      } else if (k == "dilation_multiple") {
        rc.dilation_multiple = v.get<int>();
      } else if (k == "shift_mode") {
        rc.shift_mode = v.get<std::string>();
      } else if (k == "head_mode") {
        rc.head_mode = v.get<std::string>();
      } else if (k == "embedding_dim") {
        rc.embedding_dim = v.get<int>();
      } else if (k == "seq_len") {
        rc.seq_len = v.get<int>();
      } else if (k == "valid_len") {
        rc.valid_len = v.get<int>();
      } else if (k == "train_frac") {
        rc.train_frac = v.get<double>();
      } else if (k == "valid_frac") {
        rc.valid_frac = v.get<double>();
      } else if (k == "stride") {
        rc.stride = v.get<int>();
      } else if (k == "train_limit") {
        rc.train_limit = v.get<int>();
      } else if (k == "test_limit") {
        rc.test_limit = v.get<int>();
      } else if (k == "copy_len") {
        rc.copy_len = v.get<int>();
      } else if (k == "copy_delay") {
        rc.copy_delay = v.get<int>();
      } else if (k == "copy_items") {
        rc.copy_items = v.get<int>();
      } else if (k == "threads") {
        rc.threads = v.get<int>();
      } else if (k == "kernels") {
        rc.kernels = v.get<std::string>();
      } else {
        throw ConfigurationError("unknown config key: " + k);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError("bad value for config key " + k + ": " +
                               e.what());
    }
  }
}

clrnn::ShiftMode parse_shift(const std::string& s) {
  if (s == "exclusive") return clrnn::ShiftMode::exclusive;
  if (s == "inclusive") return clrnn::ShiftMode::inclusive;
  throw ConfigurationError("shift_mode must be exclusive or inclusive");
}

clrnn::HeadMode parse_head(const std::string& s) {
  if (s == "last") return clrnn::HeadMode::last;
  if (s == "full") return clrnn::HeadMode::full;
  throw ConfigurationError("head_mode must be last or full");
}

clrnn::Optimizer make_optimizer(const std::string& name) {
  if (name == "sgd") return clrnn::Sgd{};
  if (name == "adam") return clrnn::Adam{};
  throw ConfigurationError("optimizer must be sgd or adam");
}

clrnn::CLRNNConfig model_config(const RunConfig& rc, int vocab) {
  clrnn::CLRNNConfig cfg;
  cfg.cl.num_layers = rc.num_layers;
  cfg.cl.kernel_size = rc.kernel_size;
  cfg.cl.dilation_multiple = rc.dilation_multiple;
  cfg.cl.channels.assign(rc.num_layers, rc.channels);
  if (rc.hidden > 0) cfg.cl.channels.back() = rc.hidden;
  cfg.cl.dropout = rc.dropout;
  cfg.cl.shift_mode = parse_shift(rc.shift_mode);
  cfg.head_mode = parse_head(rc.head_mode);
  if (rc.task == "char-lm") {
    cfg.embedding = clrnn::EmbeddingSpec{vocab, rc.embedding_dim};
    cfg.num_classes = vocab;
    cfg.task = clrnn::TaskKind::language_model;
  } else if (rc.task == "seq-mnist") {
    cfg.input_dim = 1;
    cfg.num_classes = 10;
    cfg.task = clrnn::TaskKind::classification;
    const int side = 28 / rc.stride;
    cfg.fixed_length = side * side;
  } else {
    cfg.input_dim = 1;
    cfg.num_classes = 2;
    cfg.task = clrnn::TaskKind::classification;
    cfg.fixed_length = rc.copy_len;
  }
  cfg.validate();
  return cfg;
}

std::string resolve_data_dir(const RunConfig& rc) {
  if (!rc.data_dir.empty()) return rc.data_dir;
  if (const char* env = std::getenv("CLRNN_DATA_DIR")) return env;
  return "data/mnist";
}

void echo_config(const RunConfig& rc) {
  fs::create_directories(rc.out_dir);
  std::ofstream f(rc.out_dir + "/config.json", std::ios::trunc);
  f << config_json(rc).dump(2) << "\n";
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct EpochLogger {
  std::vector<clrnn::MetricsRow> rows;
  std::string path;
  std::string metric_name;

  void add(int epoch, double train_loss, double valid_loss, double lr,
           double metric, double wall) {
    rows.push_back({epoch, train_loss, valid_loss, lr, metric, wall});
    clrnn::write_metrics_csv(path, rows, metric_name);
  }
};

int run_train_classification(const RunConfig& rc,
                             clrnn::ClassificationDataset train_all,
                             clrnn::ClassificationDataset test_set) {
  // hold out a tail of the training items for the decay rule
  const std::size_t n_valid =
      std::max<std::size_t>(1, train_all.size() / 10);
  clrnn::ClassificationDataset train_set, valid_set;
  train_set.num_classes = valid_set.num_classes = train_all.num_classes;
  for (std::size_t i = 0; i < train_all.size(); ++i) {
    auto& dst = i + n_valid < train_all.size() ? train_set : valid_set;
    dst.inputs.push_back(train_all.inputs[i]);
    dst.targets.push_back(train_all.targets[i]);
  }

  clrnn::Rng rng(rc.seed);
  clrnn::Model model = clrnn::build_model(model_config(rc, 0), rng);
  std::cout << "model parameters: " << clrnn::parameter_count(model) << "\n";

  clrnn::Optimizer opt = make_optimizer(rc.optimizer);
  clrnn::TrainSettings settings;
  settings.batch_size = static_cast<std::size_t>(rc.batch_size);
  settings.lr = rc.lr;
  if (rc.grad_clip > 0.0) settings.grad_clip = rc.grad_clip;
  clrnn::Rng shuffle_rng = rng.split(1), dropout_rng = rng.split(2);
  clrnn::LrDecay decay;
  EpochLogger log{{}, rc.out_dir + "/metrics.csv", "accuracy"};
  double best_valid = 0.0;
  bool have_best = false;

  for (int epoch = 1; epoch <= rc.epochs; ++epoch) {
    const double t0 = now_seconds();
    const double train_loss = clrnn::train_epoch_classification(
        model, train_set, opt, settings, shuffle_rng, dropout_rng);
    const clrnn::EvalMetrics valid =
        clrnn::evaluate_classification(model, valid_set);
    decay.observe(settings.lr, valid.mean_loss);
    const double wall = now_seconds() - t0;
    log.add(epoch, train_loss, valid.mean_loss, settings.lr,
            valid.top1_accuracy, wall);
    std::cout << "epoch " << epoch << " train_loss " << train_loss
              << " valid_loss " << valid.mean_loss << " valid_acc "
              << valid.top1_accuracy << " lr " << settings.lr << "\n";
    clrnn::save_checkpoint(model, rc.out_dir + "/last.ckpt");
    if (!have_best || valid.mean_loss < best_valid) {
      best_valid = valid.mean_loss;
      have_best = true;
      clrnn::save_checkpoint(model, rc.out_dir + "/best.ckpt");
    }
  }

  const clrnn::EvalMetrics test = clrnn::evaluate_classification(model, test_set);
  nlohmann::json out = {{"test_loss", test.mean_loss},
                        {"test_accuracy", test.top1_accuracy}};
  std::cout << out.dump() << "\n";
  {
    std::ofstream f(rc.out_dir + "/test_metrics.json", std::ios::trunc);
    f << out.dump(2) << "\n";
  }
  return 0;
}

int run_train_seq_mnist(const RunConfig& rc) {
  const std::string dir = resolve_data_dir(rc);
  auto train_all = clrnn::load_idx_sequences(
      dir, "train", static_cast<std::size_t>(rc.train_limit), rc.stride);
  auto test_set = clrnn::load_idx_sequences(
      dir, "t10k", static_cast<std::size_t>(rc.test_limit), rc.stride);
  return run_train_classification(rc, std::move(train_all),
                                  std::move(test_set));
}

int run_train_copy(const RunConfig& rc) {
  clrnn::Rng data_rng(rc.seed + 1000);
  auto train_all = clrnn::synthetic_copy_task(
      static_cast<std::size_t>(rc.copy_items),
      static_cast<std::size_t>(rc.copy_len),
      static_cast<std::size_t>(rc.copy_delay), data_rng);
  auto test_set = clrnn::synthetic_copy_task(
      static_cast<std::size_t>(rc.copy_items) / 4,
      static_cast<std::size_t>(rc.copy_len),
      static_cast<std::size_t>(rc.copy_delay), data_rng);
  return run_train_classification(rc, std::move(train_all),
                                  std::move(test_set));
}

int run_train_char_lm(const RunConfig& rc) {
  if (rc.corpus.empty()) {
    throw ConfigurationError("char-lm needs --corpus <text file>");
  }
  const clrnn::CharCorpus corpus =
      clrnn::load_char_corpus(rc.corpus, rc.train_frac, rc.valid_frac);
  const int vocab = static_cast<int>(corpus.vocab_size());
  std::cout << "corpus vocabulary: " << vocab << " characters\n";

  clrnn::Rng rng(rc.seed);
  clrnn::Model model = clrnn::build_model(model_config(rc, vocab), rng);
  std::cout << "model parameters: " << clrnn::parameter_count(model) << "\n";

  clrnn::Optimizer opt = make_optimizer(rc.optimizer);
  clrnn::TrainSettings settings;
  settings.batch_size = static_cast<std::size_t>(rc.batch_size);
  settings.lr = rc.lr;
  if (rc.grad_clip > 0.0) settings.grad_clip = rc.grad_clip;
  clrnn::Rng batch_rng = rng.split(1), dropout_rng = rng.split(2),
             eval_rng = rng.split(3);
  const auto seq = static_cast<std::size_t>(rc.seq_len);
  const auto valid_len = static_cast<std::size_t>(rc.valid_len);
  const auto bsz = static_cast<std::size_t>(rc.batch_size);
  auto valid_batches = clrnn::lm_batches(corpus.valid, seq, valid_len, bsz,
                                         eval_rng);
  clrnn::LrDecay decay;
  EpochLogger log{{}, rc.out_dir + "/metrics.csv", "bpc"};
  double best_valid = 0.0;
  bool have_best = false;

  for (int epoch = 1; epoch <= rc.epochs; ++epoch) {
    const double t0 = now_seconds();
    auto train_batches =
        clrnn::lm_batches(corpus.train, seq, valid_len, bsz, batch_rng);
    const double train_loss = clrnn::train_epoch_lm(model, train_batches, opt,
                                                    settings, dropout_rng);
    const clrnn::EvalMetrics valid = clrnn::evaluate_lm(model, valid_batches);
    decay.observe(settings.lr, valid.mean_loss);
    const double wall = now_seconds() - t0;
    log.add(epoch, train_loss, valid.mean_loss, settings.lr, valid.bpc, wall);
    std::cout << "epoch " << epoch << " train_loss " << train_loss
              << " valid_loss " << valid.mean_loss << " valid_bpc "
              << valid.bpc << " lr " << settings.lr << "\n";
    clrnn::save_checkpoint(model, rc.out_dir + "/last.ckpt");
    if (!have_best || valid.mean_loss < best_valid) {
      best_valid = valid.mean_loss;
      have_best = true;
      clrnn::save_checkpoint(model, rc.out_dir + "/best.ckpt");
    }
  }

  clrnn::Rng test_rng(777);
  auto test_batches =
      clrnn::lm_batches(corpus.test, seq, valid_len, bsz, test_rng);
  const clrnn::EvalMetrics test = clrnn::evaluate_lm(model, test_batches);
  nlohmann::json out = {{"test_loss", test.mean_loss}, {"test_bpc", test.bpc}};
  std::cout << out.dump() << "\n";
  {
    std::ofstream f(rc.out_dir + "/test_metrics.json", std::ios::trunc);
    f << out.dump(2) << "\n";
  }
  return 0;
}

int run_eval(const RunConfig& rc, const std::string& checkpoint) {
  clrnn::Model model = clrnn::load_checkpoint(checkpoint);
  nlohmann::json out;
  if (model.cfg.task == clrnn::TaskKind::classification) {
    clrnn::ClassificationDataset data;
    if (rc.task == "seq-mnist") {
      data = clrnn::load_idx_sequences(resolve_data_dir(rc), "t10k",
                                       static_cast<std::size_t>(rc.test_limit),
                                       rc.stride);
    } else {
      clrnn::Rng data_rng(rc.seed + 1000);
      data = clrnn::synthetic_copy_task(
          static_cast<std::size_t>(rc.copy_items),
          static_cast<std::size_t>(rc.copy_len),
          static_cast<std::size_t>(rc.copy_delay), data_rng);
    }
    const auto m = clrnn::evaluate_classification(model, data);
    out = {{"loss", m.mean_loss}, {"accuracy", m.top1_accuracy}};
  } else {
    if (rc.corpus.empty()) {
      throw ConfigurationError("eval of a language model needs --corpus");
    }
    const auto corpus =
        clrnn::load_char_corpus(rc.corpus, rc.train_frac, rc.valid_frac);
    clrnn::Rng rng(rc.seed);
    auto batches = clrnn::lm_batches(
        corpus.test, static_cast<std::size_t>(rc.seq_len),
        static_cast<std::size_t>(rc.valid_len),
        static_cast<std::size_t>(rc.batch_size), rng);
    const auto m = clrnn::evaluate_lm(model, batches);
    out = {{"loss", m.mean_loss}, {"bpc", m.bpc}};
  }
  std::cout << out.dump() << "\n";
  return 0;
}

int run_adder_demo(int bits, std::uint64_t a, std::uint64_t b, int carry,
                   bool exhaustive, int random_cases) {
  std::cout << clrnn::cla_trace(clrnn::BitWord(bits, a),
                                clrnn::BitWord(bits, b),
                                static_cast<std::uint8_t>(carry));
  if (exhaustive) {
    int matches = 0, total = 0;
    for (std::uint64_t x = 0; x < 16; ++x) {
      for (std::uint64_t y = 0; y < 16; ++y) {
        for (std::uint8_t c0 = 0; c0 < 2; ++c0) {
          ++total;
          const auto cla = clrnn::cla_add(clrnn::BitWord(4, x),
                                          clrnn::BitWord(4, y), c0);
          const auto rip = clrnn::ripple_add(clrnn::BitWord(4, x),
                                             clrnn::BitWord(4, y), c0);
          const std::uint64_t want = x + y + c0;
          const bool ok = cla.sum.to_u64() == (want & 0xf) &&
                          cla.carry_out == ((want >> 4) & 1) &&
                          rip.sum.to_u64() == cla.sum.to_u64() &&
                          rip.carry_out == cla.carry_out;
          matches += ok ? 1 : 0;
        }
      }
    }
    std::cout << "exhaustive 4-bit sweep: " << matches << "/" << total
              << " matches\n";
    if (matches != total) return 1;
  }
  if (random_cases > 0) {
    clrnn::Rng rng(12345);
    int ok = 0;
    for (int i = 0; i < random_cases; ++i) {
      const std::uint64_t x = rng.next_u64();
      const std::uint64_t y = rng.next_u64();
      const std::uint8_t c0 = static_cast<std::uint8_t>(rng.next_u64() & 1);
      const auto sum =
          clrnn::cla_add(clrnn::BitWord(64, x), clrnn::BitWord(64, y), c0);
      const std::uint64_t low = x + y + c0;
      const bool carry_out =
          (x + y < x) || (x + y == ~std::uint64_t{0} && c0);
      if (sum.sum.to_u64() == low && sum.carry_out == (carry_out ? 1 : 0)) {
        ++ok;
      }
    }
    std::cout << "random 64-bit sweep: " << ok << "/" << random_cases
              << " matches\n";
    if (ok != random_cases) return 1;
  }
  return 0;
}

int run_gradcheck() {
  bool all_pass = true;
  for (const auto& [name, report] : clrnn::standard_gradcheck_suite()) {
    std::printf("%-28s max_rel_err=%.3e tol=%.0e %s\n", name.c_str(),
                report.max_rel_err, report.tol,
                report.pass ? "PASS" : "FAIL");
    all_pass = all_pass && report.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // large tensor buffers churn through mmap/munmap otherwise, and the
  // resulting page faults dominate training and benchmark loops
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
#endif
  CLI::App app{"carry-lookahead sequence model trainer and benchmarks"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path;
  bool dry_run = false;
  std::string checkpoint;

  // train + eval share the config surface
  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat JSON config file");
    cmd->add_option("--task", rc.task, "seq-mnist | char-lm | copy-task");
    cmd->add_option("--seed", rc.seed, "seed for all randomness");
    cmd->add_option("--out", rc.out_dir, "output directory");
    cmd->add_option("--data-dir", rc.data_dir,
                    "IDX data directory (or CLRNN_DATA_DIR)");
    cmd->add_option("--corpus", rc.corpus, "text corpus for char-lm");
    cmd->add_option("--batch-size", rc.batch_size, "");
    cmd->add_option("--epochs", rc.epochs, "");
    cmd->add_option("--lr", rc.lr, "initial learning rate");
    cmd->add_option("--optimizer", rc.optimizer, "sgd | adam");
    cmd->add_option("--grad-clip", rc.grad_clip, "0 disables clipping");
    cmd->add_option("--dropout", rc.dropout, "");
    cmd->add_option("--kernel-size", rc.kernel_size, "");
    cmd->add_option("--num-layers", rc.num_layers, "");
    cmd->add_option("--channels", rc.channels, "kernels per layer");
    cmd->add_option("--hidden", rc.hidden,
                    "cell width (defaults to channels)");
    cmd->add_option("--dilation-multiple", rc.dilation_multiple, "");
    cmd->add_option("--shift-mode", rc.shift_mode, "exclusive | inclusive");
    cmd->add_option("--head-mode", rc.head_mode, "last | full");
    cmd->add_option("--embedding-dim", rc.embedding_dim, "");
    cmd->add_option("--seq-len", rc.seq_len, "");
    cmd->add_option("--valid-len", rc.valid_len, "");
    cmd->add_option("--train-frac", rc.train_frac, "");
    cmd->add_option("--valid-frac", rc.valid_frac, "");
    cmd->add_option("--stride", rc.stride, "pixel stride: 1, 2 or 4");
    cmd->add_option("--train-limit", rc.train_limit, "0 = all");
    cmd->add_option("--test-limit", rc.test_limit, "0 = all");
    cmd->add_option("--copy-len", rc.copy_len, "");
    cmd->add_option("--copy-delay", rc.copy_delay, "");
    cmd->add_option("--copy-items", rc.copy_items, "");
    cmd->add_option("--threads", rc.threads, "0 = hardware");
    cmd->add_option("--kernels", rc.kernels, "auto | scalar | avx2");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_config_flags(train);
  train->add_flag("--dry-run", dry_run,
                  "echo the effective config and exit");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config_flags(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")
      ->required();

  CLI::App* bench = app.add_subcommand("bench", "forward-pass benchmark");
  clrnn::BenchConfig bench_cfg;
  std::string bench_out = "bench_report.json";
  bench->add_option("--out", bench_out, "report path");
  bench->add_option("--repeats", bench_cfg.repeats, "timed repetitions (>=5)");
  bench->add_option("--warmup", bench_cfg.warmup, "");
  bench->add_option("--hidden", bench_cfg.hidden, "");
  bench->add_option("--batch", bench_cfg.batch, "");
  bench->add_option("--input-dim", bench_cfg.input_dim, "");
  bench->add_option("--lengths", bench_cfg.lengths, "sequence lengths");
  bench->add_option("--seed", bench_cfg.seed, "");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient suite");

  CLI::App* adder = app.add_subcommand("adder-demo", "carry-lookahead adder");
  int bits = 4;
  std::uint64_t adder_a = 11, adder_b = 6;
  int adder_carry = 0;
  bool exhaustive = false;
  int random_cases = 0;
  adder->add_option("--bits", bits, "word width");
  adder->add_option("--a", adder_a, "");
  adder->add_option("--b", adder_b, "");
  adder->add_option("--carry", adder_carry, "carry-in bit");
  adder->add_flag("--exhaustive", exhaustive, "512-case 4-bit sweep");
  adder->add_option("--random", random_cases, "random 64-bit cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // CLI11 returns 0 for --help; anything else is a config error here.
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed() || eval->parsed()) {
      CLI::App* cmd = train->parsed() ? train : eval;
      // precedence: task defaults, then config file, then explicit flags
      RunConfig flag_values = rc;
      RunConfig resolved;
      resolved.task = rc.task;
      if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw ConfigurationError("cannot open config " + config_path);
        nlohmann::json j;
        try {
          f >> j;
        } catch (const nlohmann::json::exception& e) {
          throw ConfigurationError(std::string("bad config json: ") + e.what());
        }
        if (j.contains("task")) resolved.task = j["task"].get<std::string>();
        if (cmd->count("--task")) resolved.task = flag_values.task;
        apply_task_defaults(resolved);
        apply_config_json(resolved, j);
      } else {
        apply_task_defaults(resolved);
      }
      // explicit flags win
      const auto flag_given = [&](const std::string& name) {
        return cmd->count(name) > 0;
      };
      if (flag_given("--task")) resolved.task = flag_values.task;
      if (flag_given("--seed")) resolved.seed = flag_values.seed;
      if (flag_given("--out")) resolved.out_dir = flag_values.out_dir;
      if (flag_given("--data-dir")) resolved.data_dir = flag_values.data_dir;
      if (flag_given("--corpus")) resolved.corpus = flag_values.corpus;
      if (flag_given("--batch-size")) resolved.batch_size = flag_values.batch_size;
      if (flag_given("--epochs")) resolved.epochs = flag_values.epochs;
      if (flag_given("--lr")) resolved.lr = flag_values.lr;
      if (flag_given("--optimizer")) resolved.optimizer = flag_values.optimizer;
      if (flag_given("--grad-clip")) resolved.grad_clip = flag_values.grad_clip;
      if (flag_given("--dropout")) resolved.dropout = flag_values.dropout;
      if (flag_given("--kernel-size")) resolved.kernel_size = flag_values.kernel_size;
      if (flag_given("--num-layers")) resolved.num_layers = flag_values.num_layers;
      if (flag_given("--channels")) resolved.channels = flag_values.channels;
      if (flag_given("--hidden")) resolved.hidden = flag_values.hidden;
      if (flag_given("--dilation-multiple")) resolved.dilation_multiple = flag_values.dilation_multiple;
      if (flag_given("--shift-mode")) resolved.shift_mode = flag_values.shift_mode;
      if (flag_given("--head-mode")) resolved.head_mode = flag_values.head_mode;
      if (flag_given("--embedding-dim")) resolved.embedding_dim = flag_values.embedding_dim;
      if (flag_given("--seq-len")) resolved.seq_len = flag_values.seq_len;
      if (flag_given("--valid-len")) resolved.valid_len = flag_values.valid_len;
      if (flag_given("--train-frac")) resolved.train_frac = flag_values.train_frac;
      if (flag_given("--valid-frac")) resolved.valid_frac = flag_values.valid_frac;
      if (flag_given("--stride")) resolved.stride = flag_values.stride;
      if (flag_given("--train-limit")) resolved.train_limit = flag_values.train_limit;
      if (flag_given("--test-limit")) resolved.test_limit = flag_values.test_limit;
      if (flag_given("--copy-len")) resolved.copy_len = flag_values.copy_len;
      if (flag_given("--copy-delay")) resolved.copy_delay = flag_values.copy_delay;
      if (flag_given("--copy-items")) resolved.copy_items = flag_values.copy_items;
      if (flag_given("--threads")) resolved.threads = flag_values.threads;
      if (flag_given("--kernels")) resolved.kernels = flag_values.kernels;

      if (resolved.out_dir.empty()) resolved.out_dir = "runs/" + resolved.task;
      if (resolved.stride != 1 && resolved.stride != 2 && resolved.stride != 4) {
        throw ConfigurationError("stride must be 1, 2 or 4");
      }
      if (resolved.threads > 0) clrnn::set_max_threads(resolved.threads);
      if (!clrnn::kernels::select(resolved.kernels)) {
        throw ConfigurationError("kernel backend not available: " +
                                 resolved.kernels);
      }
      // validate the model config early so config errors exit with 2
      (void)model_config(resolved, resolved.task == "char-lm" ? 64 : 0);

      if (train->parsed()) {
        echo_config(resolved);
        if (dry_run) {
          std::cout << config_json(resolved).dump(2) << "\n";
          return 0;
        }
        if (resolved.task == "seq-mnist") return run_train_seq_mnist(resolved);
        if (resolved.task == "char-lm") return run_train_char_lm(resolved);
        return run_train_copy(resolved);
      }
      return run_eval(resolved, checkpoint);
    }
    if (bench->parsed()) {
      clrnn::Rng rng(bench_cfg.seed);
      const auto records = clrnn::bench_forward(bench_cfg, rng);
      clrnn::write_bench_report(bench_out, bench_cfg, records);
      for (const auto& r : records) {
        std::printf("%-10s n=%-4zu threads=%d median=%.6fs speedup=%.2f\n",
                    r.model.c_str(), r.n, r.threads, r.median_s, r.speedup);
      }
      std::cout << "report written to " << bench_out << "\n";
      return 0;
    }
    if (gradcheck->parsed()) return run_gradcheck();
    if (adder->parsed()) {
      if (bits < 1 || bits > 64) {
        throw ConfigurationError("bits must be in [1, 64]");
      }
      return run_adder_demo(bits, adder_a, adder_b, adder_carry, exhaustive,
                            random_cases);
    }
    return 2;
  } catch (const ConfigurationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
