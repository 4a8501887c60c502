#include "clrnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "clrnn/kernels.hpp"
#include "clrnn/parallel.hpp"

namespace clrnn {
namespace {

struct Timing {
  double median_s, mean_s, stddev_s;
};

template <class F>
Timing time_repeated(F&& fn, int warmup, int repeats) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> secs;
  secs.reserve(repeats);
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    secs.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::vector<double> sorted = secs;
  std::sort(sorted.begin(), sorted.end());
  Timing t;
  t.median_s = sorted[sorted.size() / 2];
  double sum = 0.0;
  for (double s : secs) sum += s;
  t.mean_s = sum / static_cast<double>(secs.size());
  double var = 0.0;
  for (double s : secs) var += (s - t.mean_s) * (s - t.mean_s);
  t.stddev_s = std::sqrt(var / static_cast<double>(secs.size()));
  return t;
}

CLModuleConfig bench_cl_config(std::size_t hidden) {
  CLModuleConfig cl;
  cl.num_layers = 8;
  cl.kernel_size = 7;
  cl.dilation_multiple = 2;
  cl.channels.assign(8, 1);
  cl.channels.back() = static_cast<int>(hidden);
  cl.dropout = 0.0;
  cl.shift_mode = ShiftMode::exclusive;
  return cl;
}

double read_cpu_mhz() {
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("cpu MHz", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        return std::atof(line.c_str() + colon + 1);
      }
    }
  }
  return 0.0;
}

}  // namespace

std::vector<BenchRecord> bench_forward(const BenchConfig& cfg, Rng& rng) {
  if (cfg.repeats < 5) throw ContractError("bench: repeats must be >= 5");
  const CLModuleConfig cl_cfg = bench_cl_config(cfg.hidden);
  const auto cl_params =
      cl_build_params(cl_cfg, static_cast<int>(cfg.input_dim), rng);
  const RNNCellParams cell = rnncell_init(static_cast<int>(cfg.input_dim),
                                          static_cast<int>(cfg.hidden), rng);

  const int hw = max_threads();
  std::vector<int> thread_modes = {1};
  if (hw > 1) thread_modes.push_back(hw);

  std::vector<BenchRecord> records;
  for (std::size_t n : cfg.lengths) {
    // Inputs are generated outside the timed region.
    Tensor x = Tensor::uniform({cfg.batch, n, cfg.input_dim}, rng, -1.0, 1.0);
    Tensor h0 = Tensor::zeros({cfg.batch, static_cast<std::size_t>(cfg.hidden)});

    // Correctness gate: both paths must produce the same output shape.
    {
      Tape tape(false);
      Tensor serial_out = serial_recurrent_forward(tape, x, h0, cell);
      Tensor h = cl_forward(tape, x, cl_cfg, cl_params, false, nullptr);
      Tensor par_out = parallel_rnn_forward(tape, x, h, cell);
      if (serial_out.shape() != par_out.shape()) {
        throw ContractError("bench: output shapes differ");
      }
    }

    double best_serial = 0.0;
    for (int threads : thread_modes) {
      set_max_threads(threads);
      const Timing t = time_repeated(
          [&] {
            Tape tape(false);
            (void)serial_recurrent_forward(tape, x, h0, cell);
          },
          cfg.warmup, cfg.repeats);
      BenchRecord r;
      r.model = "serial-rnn";
      r.threads = threads;
      r.n = n;
      r.hidden = cfg.hidden;
      r.batch = cfg.batch;
      r.repeats = cfg.repeats;
      r.median_s = t.median_s;
      r.mean_s = t.mean_s;
      r.stddev_s = t.stddev_s;
      records.push_back(r);
      if (best_serial == 0.0 || t.median_s < best_serial) {
        best_serial = t.median_s;
      }
    }
    for (int threads : thread_modes) {
      set_max_threads(threads);
      const Timing t = time_repeated(
          [&] {
            Tape tape(false);
            Tensor h = cl_forward(tape, x, cl_cfg, cl_params, false, nullptr);
            (void)parallel_rnn_forward(tape, x, h, cell);
          },
          cfg.warmup, cfg.repeats);
      BenchRecord r;
      r.model = "cl-rnn";
      r.threads = threads;
      r.n = n;
      r.hidden = cfg.hidden;
      r.batch = cfg.batch;
      r.repeats = cfg.repeats;
      r.median_s = t.median_s;
      r.mean_s = t.mean_s;
      r.stddev_s = t.stddev_s;
      r.speedup = best_serial / t.median_s;
      records.push_back(r);
    }
    set_max_threads(hw);
  }
  return records;
}

std::vector<double> speedups_by_length(
    const BenchConfig& cfg, const std::vector<BenchRecord>& records) {
  std::vector<double> out;
  for (std::size_t n : cfg.lengths) {
    double best = 0.0;
    for (const BenchRecord& r : records) {
      if (r.model == "cl-rnn" && r.n == n) best = std::max(best, r.speedup);
    }
    out.push_back(best);
  }
  return out;
}

void write_bench_report(const std::string& path, const BenchConfig& cfg,
                        const std::vector<BenchRecord>& records) {
  nlohmann::json j;
  j["machine"] = {
      {"cores", std::thread::hardware_concurrency()},
      {"cpu_mhz", read_cpu_mhz()},
      {"kernels", kernels::active().name},
  };
  j["config"] = {
      {"hidden", cfg.hidden},   {"batch", cfg.batch},
      {"input_dim", cfg.input_dim}, {"repeats", cfg.repeats},
      {"warmup", cfg.warmup},   {"lengths", cfg.lengths},
  };
  j["records"] = nlohmann::json::array();
  for (const BenchRecord& r : records) {
    j["records"].push_back({{"model", r.model},
                            {"threads", r.threads},
                            {"n", r.n},
                            {"hidden", r.hidden},
                            {"batch", r.batch},
                            {"repeats", r.repeats},
                            {"median_s", r.median_s},
                            {"mean_s", r.mean_s},
                            {"stddev_s", r.stddev_s},
                            {"speedup", r.speedup}});
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ContractError("cannot write bench report: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace clrnn
