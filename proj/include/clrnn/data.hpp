#pragma once

// Dataset ingestion: IDX-format image files flattened to pixel sequences,
// character corpora with windowed next-character batches, and synthetic
// generators for hermetic tests.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clrnn/rng.hpp"
#include "clrnn/tensor.hpp"

namespace clrnn {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- IDX ------------------------------------------------------------------

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
  const std::uint8_t* image(std::size_t i) const {
    return pixels.data() + i * rows * cols;
  }
};

struct IdxLabels {
  std::vector<std::uint8_t> labels;
};

IdxImages parse_idx_images(const std::string& path);
IdxLabels parse_idx_labels(const std::string& path);

// Row-major flatten to [len, 1], values scaled to [0,1]. stride s keeps
// every s-th pixel per axis, so a 28x28 image becomes a (28/s)^2 sequence.
Tensor image_to_sequence(const std::uint8_t* img, std::size_t rows,
                         std::size_t cols, int stride = 1);

// ---- classification datasets ------------------------------------------------

struct ClassificationDataset {
  std::vector<Tensor> inputs;  // each [n, 1]
  std::vector<std::int64_t> targets;
  int num_classes = 0;
  std::size_t size() const { return inputs.size(); }
};

// Reads <prefix>-images-idx3-ubyte / <prefix>-labels-idx1-ubyte from dir.
// limit == 0 keeps everything.
ClassificationDataset load_idx_sequences(const std::string& dir,
                                         const std::string& prefix,
                                         std::size_t limit, int stride);

// Input: random +-1 sequence of length n as [n, 1]; target: 1 if the value
// delay steps before the end is positive. Solvable only when the model's
// receptive field reaches back that far.
ClassificationDataset synthetic_copy_task(std::size_t items, std::size_t n,
                                          std::size_t delay, Rng& rng);

// ---- character corpora ---------------------------------------------------------

struct CharCorpus {
  std::vector<std::uint8_t> vocab;  // sorted distinct bytes
  std::array<std::int32_t, 256> index_of{};
  std::vector<std::int64_t> train, valid, test;

  std::size_t vocab_size() const { return vocab.size(); }
  std::vector<std::int64_t> encode(std::span<const std::uint8_t> text) const;
  std::vector<std::uint8_t> decode(std::span<const std::int64_t> ids) const;
};

// Vocabulary = distinct characters, contiguous train/valid/test splits.
CharCorpus build_char_corpus(std::span<const std::uint8_t> text,
                             double train_frac, double valid_frac);

CharCorpus load_char_corpus(const std::string& path, double train_frac,
                            double valid_frac);

struct SequenceBatch {
  std::vector<std::int64_t> inputs;   // [batch * seq_len]
  std::vector<std::int64_t> targets;  // [batch * seq_len], next character
  std::size_t batch = 0, seq_len = 0, valid_len = 0;

  // 1 for the last valid_len positions of each row; the loss sees only
  // positions with enough history.
  std::vector<std::uint8_t> loss_mask() const;
};

// Windows of seq_len with next-character targets, stepped by valid_len so
// every position lands in exactly one valid suffix; window order shuffled.
std::vector<SequenceBatch> lm_batches(std::span<const std::int64_t> stream,
                                      std::size_t seq_len,
                                      std::size_t valid_len,
                                      std::size_t batch_size, Rng& rng);

// ---- synthetic corpus & manifest ---------------------------------------------

// Deterministic english-like filler text (lowercase words, Zipf-ish ranks,
// sentence punctuation); at least min_bytes long.
std::string synthetic_text(std::size_t min_bytes, std::uint64_t seed);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a64_file(const std::string& path);

struct ManifestEntry {
  std::string path;
  std::uint64_t bytes = 0;
  std::uint64_t checksum = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> files;
  double train_frac = 0.0, valid_frac = 0.0, test_frac = 0.0;
};

void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

}  // namespace clrnn
