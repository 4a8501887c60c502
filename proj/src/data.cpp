#include "clrnn/data.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace clrnn {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf,
                        std::size_t offset, const std::string& path) {
  if (offset + 4 > buf.size()) {
    throw FormatError(path + ": truncated at offset " +
                      std::to_string(offset));
  }
  return (std::uint32_t(buf[offset]) << 24) |
         (std::uint32_t(buf[offset + 1]) << 16) |
         (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

}  // namespace

IdxImages parse_idx_images(const std::string& path) {
  const auto buf = read_file(path);
  const std::uint32_t magic = read_be32(buf, 0, path);
  if (magic != 0x00000803u) {
    throw FormatError(path + ": bad image magic at offset 0 (got 0x" +
                      [&] {
                        char hex[16];
                        std::snprintf(hex, sizeof hex, "%08x", magic);
                        return std::string(hex);
                      }() +
                      ", want 0x00000803)");
  }
  IdxImages out;
  out.count = read_be32(buf, 4, path);
  out.rows = read_be32(buf, 8, path);
  out.cols = read_be32(buf, 12, path);
  const std::size_t want = out.count * out.rows * out.cols;
  if (buf.size() != 16 + want) {
    throw FormatError(path + ": payload is " + std::to_string(buf.size() - 16) +
                      " bytes, header promises " + std::to_string(want));
  }
  out.pixels.assign(buf.begin() + 16, buf.end());
  return out;
}

IdxLabels parse_idx_labels(const std::string& path) {
  const auto buf = read_file(path);
  const std::uint32_t magic = read_be32(buf, 0, path);
  if (magic != 0x00000801u) {
    throw FormatError(path + ": bad label magic at offset 0");
  }
  const std::size_t count = read_be32(buf, 4, path);
  if (buf.size() != 8 + count) {
    throw FormatError(path + ": payload is " + std::to_string(buf.size() - 8) +
                      " labels, header promises " + std::to_string(count));
  }
  IdxLabels out;
  out.labels.assign(buf.begin() + 8, buf.end());
  return out;
}

Tensor image_to_sequence(const std::uint8_t* img, std::size_t rows,
                         std::size_t cols, int stride) {
  if (stride != 1 && stride != 2 && stride != 4) {
    throw ContractError("image stride must be 1, 2 or 4");
  }
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t r2 = rows / s, c2 = cols / s;
  std::vector<double> v;
  v.reserve(r2 * c2);
  for (std::size_t r = 0; r < r2; ++r) {
    for (std::size_t c = 0; c < c2; ++c) {
      v.push_back(static_cast<double>(img[r * s * cols + c * s]) / 255.0);
    }
  }
  return Tensor::from({r2 * c2, 1}, std::move(v));
}

ClassificationDataset load_idx_sequences(const std::string& dir,
                                         const std::string& prefix,
                                         std::size_t limit, int stride) {
  const IdxImages images =
      parse_idx_images(dir + "/" + prefix + "-images-idx3-ubyte");
  const IdxLabels labels =
      parse_idx_labels(dir + "/" + prefix + "-labels-idx1-ubyte");
  if (images.count != labels.labels.size()) {
    throw FormatError(dir + "/" + prefix + ": " + std::to_string(images.count) +
                      " images vs " + std::to_string(labels.labels.size()) +
                      " labels");
  }
  const std::size_t n =
      limit == 0 ? images.count : std::min(limit, images.count);
  ClassificationDataset ds;
  ds.num_classes = 10;
  ds.inputs.reserve(n);
  ds.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.inputs.push_back(
        image_to_sequence(images.image(i), images.rows, images.cols, stride));
    ds.targets.push_back(labels.labels[i]);
  }
  return ds;
}

ClassificationDataset synthetic_copy_task(std::size_t items, std::size_t n,
                                          std::size_t delay, Rng& rng) {
  if (delay >= n) {
    throw ContractError("copy task: delay " + std::to_string(delay) +
                        " must be smaller than sequence length " +
                        std::to_string(n));
  }
  ClassificationDataset ds;
  ds.num_classes = 2;
  ds.inputs.reserve(items);
  ds.targets.reserve(items);
  for (std::size_t i = 0; i < items; ++i) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double probe = v[n - 1 - delay];
    ds.inputs.push_back(Tensor::from({n, 1}, std::move(v)));
    ds.targets.push_back(probe > 0.0 ? 1 : 0);
  }
  return ds;
}

// ---- character corpora ---------------------------------------------------------

std::vector<std::int64_t> CharCorpus::encode(
    std::span<const std::uint8_t> text) const {
  std::vector<std::int64_t> ids;
  ids.reserve(text.size());
  for (std::uint8_t b : text) {
    const std::int32_t idx = index_of[b];
    if (idx < 0) {
      throw ContractError("byte " + std::to_string(int(b)) +
                          " not in corpus vocabulary");
    }
    ids.push_back(idx);
  }
  return ids;
}

std::vector<std::uint8_t> CharCorpus::decode(
    std::span<const std::int64_t> ids) const {
  std::vector<std::uint8_t> text;
  text.reserve(ids.size());
  for (std::int64_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw ContractError("token id " + std::to_string(id) +
                          " outside vocabulary");
    }
    text.push_back(vocab[static_cast<std::size_t>(id)]);
  }
  return text;
}

CharCorpus build_char_corpus(std::span<const std::uint8_t> text,
                             double train_frac, double valid_frac) {
  if (text.empty()) throw ContractError("corpus text is empty");
  if (train_frac <= 0.0 || valid_frac < 0.0 || train_frac + valid_frac >= 1.0) {
    throw ContractError("corpus splits must satisfy 0 < train, 0 <= valid, "
                        "train + valid < 1");
  }
  CharCorpus corpus;
  bool seen[256] = {false};
  for (std::uint8_t b : text) seen[b] = true;
  corpus.index_of.fill(-1);
  for (int b = 0; b < 256; ++b) {
    if (seen[b]) {
      corpus.index_of[b] = static_cast<std::int32_t>(corpus.vocab.size());
      corpus.vocab.push_back(static_cast<std::uint8_t>(b));
    }
  }
  const auto all = corpus.encode(text);
  const std::size_t n_train =
      static_cast<std::size_t>(train_frac * static_cast<double>(all.size()));
  const std::size_t n_valid =
      static_cast<std::size_t>(valid_frac * static_cast<double>(all.size()));
  corpus.train.assign(all.begin(), all.begin() + n_train);
  corpus.valid.assign(all.begin() + n_train, all.begin() + n_train + n_valid);
  corpus.test.assign(all.begin() + n_train + n_valid, all.end());
  return corpus;
}

CharCorpus load_char_corpus(const std::string& path, double train_frac,
                            double valid_frac) {
  const auto bytes = read_file(path);
  return build_char_corpus(bytes, train_frac, valid_frac);
}

std::vector<std::uint8_t> SequenceBatch::loss_mask() const {
  std::vector<std::uint8_t> mask(batch * seq_len, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = seq_len - valid_len; t < seq_len; ++t) {
      mask[b * seq_len + t] = 1;
    }
  }
  return mask;
}

std::vector<SequenceBatch> lm_batches(std::span<const std::int64_t> stream,
                                      std::size_t seq_len,
                                      std::size_t valid_len,
                                      std::size_t batch_size, Rng& rng) {
  if (valid_len == 0 || valid_len > seq_len) {
    throw ContractError("valid_len must be in [1, seq_len]");
  }
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (stream.size() < seq_len + 1) {
    throw ContractError("corpus split has " + std::to_string(stream.size()) +
                        " tokens; needs at least seq_len + 1 = " +
                        std::to_string(seq_len + 1));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + seq_len + 1 <= stream.size(); s += valid_len) {
    starts.push_back(s);
  }
  shuffle(starts, rng);
  std::vector<SequenceBatch> batches;
  for (std::size_t i = 0; i < starts.size(); i += batch_size) {
    const std::size_t b = std::min(batch_size, starts.size() - i);
    SequenceBatch batch;
    batch.batch = b;
    batch.seq_len = seq_len;
    batch.valid_len = valid_len;
    batch.inputs.reserve(b * seq_len);
    batch.targets.reserve(b * seq_len);
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t s = starts[i + j];
      for (std::size_t t = 0; t < seq_len; ++t) {
        batch.inputs.push_back(stream[s + t]);
        batch.targets.push_back(stream[s + t + 1]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ---- synthetic corpus -----------------------------------------------------------

std::string synthetic_text(std::size_t min_bytes, std::uint64_t seed) {
  Rng rng(seed);
  // Fixed syllable inventory; the word list is sampled once per seed so the
  // character statistics stay stable across the whole stream.
  static const char* syllables[] = {
      "ba", "ce", "di", "fo", "gu", "han", "jel", "kim", "lor", "mun",
      "nar", "per", "qui", "ros", "sul", "tam", "ven", "wex", "yon", "zed",
      "ar",  "en",  "is",  "ot",  "ul"};
  const std::size_t n_syll = sizeof(syllables) / sizeof(syllables[0]);
  std::vector<std::string> words;
  words.reserve(600);
  for (int i = 0; i < 600; ++i) {
    std::string w;
    const int parts = 1 + static_cast<int>(rng.below(3));
    for (int p = 0; p < parts; ++p) w += syllables[rng.below(n_syll)];
    words.push_back(std::move(w));
  }
  std::string text;
  text.reserve(min_bytes + 256);
  while (text.size() < min_bytes) {
    const int sentence_words = 4 + static_cast<int>(rng.below(10));
    for (int i = 0; i < sentence_words; ++i) {
      // Zipf-ish rank choice: repeatedly halve the candidate range.
      std::size_t hi = words.size();
      while (hi > 1 && rng.uniform() < 0.55) hi /= 2;
      text += words[rng.below(hi)];
      text.push_back(i + 1 == sentence_words ? '.' : ' ');
    }
    text.push_back(rng.uniform() < 0.2 ? '\n' : ' ');
  }
  return text;
}

// ---- manifest ---------------------------------------------------------------------

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  return fnv1a64(read_file(path));
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["splits"] = {{"train", m.train_frac},
                 {"valid", m.valid_frac},
                 {"test", m.test_frac}};
  j["files"] = nlohmann::json::array();
  for (const auto& e : m.files) {
    char hex[24];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(e.checksum));
    j["files"].push_back(
        {{"path", e.path}, {"bytes", e.bytes}, {"fnv1a", std::string(hex)}});
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write manifest " + path);
  f << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    f >> j;
    DatasetManifest m;
    m.train_frac = j.at("splits").at("train").get<double>();
    m.valid_frac = j.at("splits").at("valid").get<double>();
    m.test_frac = j.at("splits").at("test").get<double>();
    for (const auto& e : j.at("files")) {
      ManifestEntry entry;
      entry.path = e.at("path").get<std::string>();
      entry.bytes = e.at("bytes").get<std::uint64_t>();
      entry.checksum =
          std::stoull(e.at("fnv1a").get<std::string>(), nullptr, 16);
      m.files.push_back(std::move(entry));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest " + path + ": " + e.what());
  }
}

}  // namespace clrnn
