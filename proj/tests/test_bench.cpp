#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "clrnn/bench.hpp"

using namespace clrnn;

TEST_CASE("bench produces records for both models and all lengths") {
  BenchConfig cfg;
  cfg.lengths = {8, 16};
  cfg.hidden = 8;
  cfg.batch = 2;
  cfg.input_dim = 4;
  cfg.repeats = 5;
  cfg.warmup = 1;
  Rng rng(1);
  const auto records = bench_forward(cfg, rng);
  std::size_t serial = 0, parallel = 0;
  for (const auto& r : records) {
    CHECK(r.repeats == 5);
    CHECK(r.median_s > 0.0);
    if (r.model == "serial-rnn") ++serial;
    if (r.model == "cl-rnn") {
      ++parallel;
      CHECK(r.speedup > 0.0);
    }
  }
  CHECK(serial == parallel);
  CHECK(serial >= cfg.lengths.size());

  const auto speedups = speedups_by_length(cfg, records);
  REQUIRE(speedups.size() == 2);
  for (double s : speedups) CHECK(s > 0.0);

  write_bench_report("tmp_bench.json", cfg, records);
  std::ifstream f("tmp_bench.json");
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("\"machine\"") != std::string::npos);
  CHECK(text.find("\"records\"") != std::string::npos);
  CHECK(text.find("cl-rnn") != std::string::npos);
  std::remove("tmp_bench.json");
}

TEST_CASE("bench rejects too few repeats") {
  BenchConfig cfg;
  cfg.repeats = 3;
  Rng rng(2);
  CHECK_THROWS_AS(bench_forward(cfg, rng), ContractError);
}
