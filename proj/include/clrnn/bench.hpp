#pragma once

// Wall-clock comparison of the step-by-step recurrence against the
// carry-lookahead path (conv stack + whole-sequence cell) on identical
// inputs and identical cell parameters. Forward passes only.

#include <string>
#include <vector>

#include "clrnn/cl_module.hpp"
#include "clrnn/parallel_rnn.hpp"

namespace clrnn {

struct BenchConfig {
  std::vector<std::size_t> lengths = {98, 196, 392, 784};
  std::size_t hidden = 128;
  std::size_t batch = 16;
  std::size_t input_dim = 16;
  int repeats = 7;  // timed repetitions, median reported
  int warmup = 2;
  std::uint64_t seed = 1;
};

struct BenchRecord {
  std::string model;  // "serial-rnn" or "cl-rnn"
  int threads = 1;
  std::size_t n = 0, hidden = 0, batch = 0;
  int repeats = 0;
  double median_s = 0.0, mean_s = 0.0, stddev_s = 0.0;
  // For cl-rnn records: best serial median at this n / this median.
  double speedup = 0.0;
};

std::vector<BenchRecord> bench_forward(const BenchConfig& cfg, Rng& rng);

// Best cl-rnn speedup per length, in cfg.lengths order.
std::vector<double> speedups_by_length(const BenchConfig& cfg,
                                       const std::vector<BenchRecord>& records);

// JSON report: machine descriptor (cores, reported MHz when available,
// kernel backend) plus one object per record.
void write_bench_report(const std::string& path, const BenchConfig& cfg,
                        const std::vector<BenchRecord>& records);

}  // namespace clrnn
