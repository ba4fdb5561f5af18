#include "cbe/embed.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "cbe/error.hpp"
#include "cbe/rng.hpp"
#include "cbe/text.hpp"

namespace cbe::embed {

std::vector<std::string> tokenize(std::string_view clean_text) { return text::tokenize(clean_text); }

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::uint64_t> counts)
    : tokens_(std::move(tokens)), counts_(std::move(counts)) {
  if (tokens_.size() != counts_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "vocabulary tokens and counts differ in length");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw Error(ErrorCode::ParseError, "duplicate vocabulary token '" + tokens_[i] + "'");
    }
    total_ += counts_[i];
  }
}

std::ptrdiff_t Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::uint64_t Vocabulary::count(std::string_view token) const {
  const auto i = index_of(token);
  return i < 0 ? 0 : counts_[static_cast<std::size_t>(i)];
}

Vocabulary build_vocab(const std::vector<Sequence>& sequences, std::uint64_t min_count) {
  if (min_count < 1) throw Error(ErrorCode::InvalidConfig, "min_count must be at least 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& seq : sequences) {
    for (const auto& tok : seq) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, c] : counts) {
    if (c >= min_count) kept.emplace_back(tok, c);
  }
  if (kept.empty()) {
    throw Error(ErrorCode::EmptyAfterFiltering,
                "no token reaches min_count " + std::to_string(min_count));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  std::vector<std::uint64_t> freq;
  for (auto& [tok, c] : kept) {
    tokens.push_back(std::move(tok));
    freq.push_back(c);
  }
  return Vocabulary(std::move(tokens), std::move(freq));
}

std::span<const double> EmbeddingTable::find(std::string_view token) const {
  const auto i = vocab.index_of(token);
  if (i < 0) return {};
  return vector(static_cast<std::size_t>(i));
}

void SgnsConfig::validate() const {
  if (dim < 1 || window < 1 || negatives < 1) {
    throw Error(ErrorCode::InvalidConfig, "sgns dim, window and negatives must be positive");
  }
  if (!(learning_rate > 0) || !(min_learning_rate > 0)) {
    throw Error(ErrorCode::InvalidConfig, "sgns learning rates must be positive");
  }
  if (subsample_threshold < 0) {
    throw Error(ErrorCode::InvalidConfig, "sgns subsample threshold must be >= 0");
  }
  if (min_count < 1 || threads < 1) {
    throw Error(ErrorCode::InvalidConfig, "sgns min_count and threads must be positive");
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

SgnsResult sgns_loss_and_grad(std::span<const double> center, std::span<const double> context,
                              const std::vector<std::span<const double>>& negatives) {
  const std::size_t d = center.size();
  if (context.size() != d) throw Error(ErrorCode::DimensionMismatch, "context dim differs from center");
  for (const auto& n : negatives) {
    if (n.size() != d) throw Error(ErrorCode::DimensionMismatch, "negative dim differs from center");
  }
  SgnsResult r;
  r.grad_center.assign(d, 0.0);
  r.grad_context.assign(d, 0.0);

  const double pos = dot(context, center);
  r.loss = -log_sigmoid(pos);
  const double g_pos = sigmoid(pos) - 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    r.grad_center[i] += g_pos * context[i];
    r.grad_context[i] = g_pos * center[i];
  }
  for (const auto& n : negatives) {
    const double s = dot(n, center);
    r.loss -= log_sigmoid(-s);
    const double g = sigmoid(s);
    std::vector<double> gn(d);
    for (std::size_t i = 0; i < d; ++i) {
      r.grad_center[i] += g * n[i];
      gn[i] = g * center[i];
    }
    r.grad_negatives.push_back(std::move(gn));
  }
  return r;
}

namespace {

class NegativeSampler {
 public:
  explicit NegativeSampler(const Vocabulary& vocab) {
    cumulative_.reserve(vocab.size());
    double acc = 0.0;
    for (auto c : vocab.counts()) {
      acc += std::pow(static_cast<double>(c), 0.75);
      cumulative_.push_back(acc);
    }
  }

  std::size_t draw(Rng& rng) const {
    const double x = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                 cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

struct Trainer {
  const SgnsConfig& cfg;
  EmbeddingTable& table;
  const NegativeSampler& sampler;
  std::vector<double> keep_prob;
  std::uint64_t total_steps = 0;
  std::atomic<std::uint64_t> processed{0};

  double learning_rate() const {
    const double progress =
        static_cast<double>(processed.load(std::memory_order_relaxed)) /
        static_cast<double>(total_steps + 1);
    return std::max(cfg.min_learning_rate, cfg.learning_rate * (1.0 - progress));
  }

  void pair_update(std::size_t center, std::size_t context, double lr, Rng& rng,
                   std::vector<double>& accum) {
    const std::size_t d = table.dim;
    double* v = table.input.data() + center * d;
    std::fill(accum.begin(), accum.end(), 0.0);
    auto step = [&](std::size_t target, double label) {
      double* u = table.output.data() + target * d;
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += u[i] * v[i];
      // d(loss)/d(score) for the positive (label 1) or negative (label 0) term.
      const double g = sigmoid(s) - label;
      for (std::size_t i = 0; i < d; ++i) {
        accum[i] += g * u[i];
        u[i] -= lr * g * v[i];
      }
    };
    step(context, 1.0);
    for (std::size_t n = 0; n < cfg.negatives; ++n) {
      const std::size_t neg = sampler.draw(rng);
      if (neg == context) continue;
      step(neg, 0.0);
    }
    for (std::size_t i = 0; i < d; ++i) v[i] -= lr * accum[i];
  }

  void run_sequence(const std::vector<std::size_t>& ids, Rng& rng, std::vector<double>& accum,
                    std::vector<std::size_t>& kept) {
    kept.clear();
    for (auto id : ids) {
      if (keep_prob[id] >= 1.0 || rng.uniform() < keep_prob[id]) kept.push_back(id);
    }
    for (std::size_t pos = 0; pos < kept.size(); ++pos) {
      const double lr = learning_rate();
      const std::size_t reach = cfg.window - rng.below(cfg.window);
      const std::size_t lo = pos >= reach ? pos - reach : 0;
      const std::size_t hi = std::min(kept.size() - 1, pos + reach);
      for (std::size_t c = lo; c <= hi; ++c) {
        if (c != pos) pair_update(kept[pos], kept[c], lr, rng, accum);
      }
    }
    processed.fetch_add(ids.size(), std::memory_order_relaxed);
  }
};

void check_finite(const EmbeddingTable& t, std::size_t epoch) {
  auto bad = [](double x) { return !std::isfinite(x); };
  if (std::any_of(t.input.begin(), t.input.end(), bad) ||
      std::any_of(t.output.begin(), t.output.end(), bad)) {
    throw Error(ErrorCode::NumericalError,
                "non-finite embedding value after epoch " + std::to_string(epoch + 1));
  }
}

}  // namespace

EmbeddingTable train_skipgram(const std::vector<Sequence>& sequences, const SgnsConfig& cfg) {
  cfg.validate();
  EmbeddingTable table;
  table.vocab = build_vocab(sequences, cfg.min_count);
  table.dim = cfg.dim;
  const std::size_t n = table.vocab.size();
  table.input.resize(n * cfg.dim);
  table.output.assign(n * cfg.dim, 0.0);
  Rng init(cfg.seed);
  const double half = 0.5 / static_cast<double>(cfg.dim);
  for (auto& x : table.input) x = init.uniform(-half, half);
  if (cfg.epochs == 0) return table;

  std::vector<std::vector<std::size_t>> ids;
  ids.reserve(sequences.size());
  std::uint64_t words = 0;
  for (const auto& seq : sequences) {
    std::vector<std::size_t> row;
    for (const auto& tok : seq) {
      const auto i = table.vocab.index_of(tok);
      if (i >= 0) row.push_back(static_cast<std::size_t>(i));
    }
    words += row.size();
    ids.push_back(std::move(row));
  }

  NegativeSampler sampler(table.vocab);
  Trainer trainer{cfg, table, sampler, {}, words * cfg.epochs};
  trainer.keep_prob.assign(n, 1.0);
  if (cfg.subsample_threshold > 0) {
    const double t = cfg.subsample_threshold * static_cast<double>(table.vocab.total_count());
    for (std::size_t i = 0; i < n; ++i) {
      const double c = static_cast<double>(table.vocab.counts()[i]);
      trainer.keep_prob[i] = (std::sqrt(c / t) + 1.0) * t / c;
    }
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.threads <= 1) {
      Rng rng(derive_seed(cfg.seed, "sgns-epoch-" + std::to_string(epoch)));
      std::vector<double> accum(cfg.dim);
      std::vector<std::size_t> kept;
      for (const auto& row : ids) trainer.run_sequence(row, rng, accum, kept);
    } else {
      std::vector<std::thread> workers;
      for (std::size_t w = 0; w < cfg.threads; ++w) {
        workers.emplace_back([&, w] {
          Rng rng(derive_seed(cfg.seed, "sgns-epoch-" + std::to_string(epoch) + "-worker-" +
                                            std::to_string(w)));
          std::vector<double> accum(cfg.dim);
          std::vector<std::size_t> kept;
          for (std::size_t s = w; s < ids.size(); s += cfg.threads) {
            trainer.run_sequence(ids[s], rng, accum, kept);
          }
        });
      }
      for (auto& t : workers) t.join();
    }
    check_finite(table, epoch);
  }
  return table;
}

void SifConfig::validate() const {
  if (!(a > 0)) throw Error(ErrorCode::InvalidConfig, "SIF parameter a must be positive");
}

WordFreq word_frequencies(const std::vector<Sequence>& sentences) {
  WordFreq freq;
  double total = 0.0;
  for (const auto& s : sentences) {
    for (const auto& tok : s) {
      freq[tok] += 1.0;
      total += 1.0;
    }
  }
  for (auto& [_, p] : freq) p /= total;
  return freq;
}

double sif_weight(double a, double p) { return a / (a + p); }

std::vector<double> first_singular_vector(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t d = rows.front().size();
  // Gram matrix X^T X.
  std::vector<double> gram(d * d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) {
      if (r[i] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) gram[i * d + j] += r[i] * r[j];
    }
  }
  auto frob = [&](const std::vector<double>& m) {
    double s = 0.0;
    for (double x : m) s += x * x;
    return std::sqrt(s);
  };
  const double scale = frob(gram);
  if (scale == 0.0) return {};
  for (auto& x : gram) x /= scale;
  // Iterating on a power of the Gram matrix widens the eigenvalue gap.
  for (int sq = 0; sq < 5; ++sq) {
    std::vector<double> next(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double a = gram[i * d + k];
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) next[i * d + j] += a * gram[k * d + j];
      }
    }
    const double f = frob(next);
    if (f == 0.0 || !std::isfinite(f)) break;
    for (auto& x : next) x /= f;
    gram = std::move(next);
  }

  std::vector<double> v(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) v[i] += r[i];
  }
  Rng jitter(0x5151);
  for (auto& x : v) x += 1e-3 * jitter.uniform(-1.0, 1.0);
  auto normalize = [](std::vector<double>& x) {
    double n = 0.0;
    for (double e : x) n += e * e;
    n = std::sqrt(n);
    if (n == 0.0) return false;
    for (double& e : x) e /= n;
    return true;
  };
  if (!normalize(v)) return {};
  std::vector<double> next(d);
  for (int it = 0; it < 1000; ++it) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += gram[i * d + j] * v[j];
      next[i] = s;
    }
    if (!normalize(next)) return {};
    double delta = 0.0;
    for (std::size_t i = 0; i < d; ++i) delta += (next[i] - v[i]) * (next[i] - v[i]);
    v.swap(next);
    if (std::sqrt(delta) < 1e-9) break;
  }
  return v;
}

std::vector<double> SifModel::weighted_average(const Sequence& s, const EmbeddingTable& table,
                                               bool& missing) const {
  std::vector<double> out(table.dim, 0.0);
  std::size_t used = 0;
  for (const auto& tok : s) {
    const auto vec = table.find(tok);
    if (vec.empty()) continue;
    const auto it = freq_.find(tok);
    const double w = it == freq_.end() ? 1.0 : sif_weight(cfg_.a, it->second);
    for (std::size_t i = 0; i < table.dim; ++i) out[i] += w * vec[i];
    ++used;
  }
  missing = used == 0;
  if (used > 0) {
    for (auto& x : out) x /= static_cast<double>(used);
  }
  return out;
}

SifModel SifModel::fit(const std::vector<Sequence>& sentences, const EmbeddingTable& table,
                       WordFreq word_freq, const SifConfig& cfg) {
  cfg.validate();
  if (sentences.empty()) throw Error(ErrorCode::NoSentences, "SIF needs at least one sentence");
  for (const auto& [tok, p] : word_freq) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "word frequency for '" + tok + "' outside (0,1]");
    }
  }
  SifModel m;
  m.cfg_ = cfg;
  m.freq_ = std::move(word_freq);
  if (cfg.remove_pc && sentences.size() >= 2) {
    std::vector<std::vector<double>> rows;
    rows.reserve(sentences.size());
    bool missing = false;
    for (const auto& s : sentences) rows.push_back(m.weighted_average(s, table, missing));
    m.pc_ = first_singular_vector(rows);
  }
  return m;
}

SifOutput SifModel::transform(const std::vector<Sequence>& sentences,
                              const EmbeddingTable& table) const {
  if (!pc_.empty() && pc_.size() != table.dim) {
    throw Error(ErrorCode::DimensionMismatch, "SIF component dim differs from table dim");
  }
  SifOutput out;
  out.vectors.reserve(sentences.size());
  for (const auto& s : sentences) {
    bool missing = false;
    auto v = weighted_average(s, table, missing);
    if (!pc_.empty()) {
      double proj = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) proj += v[i] * pc_[i];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * pc_[i];
    }
    out.vectors.push_back(std::move(v));
    out.missing.push_back(missing);
  }
  return out;
}

SifOutput sif_embed(const std::vector<Sequence>& sentences, const EmbeddingTable& table,
                    const WordFreq& word_freq, const SifConfig& cfg) {
  return SifModel::fit(sentences, table, word_freq, cfg).transform(sentences, table);
}

namespace {

void append_double(std::string& out, double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, end);
}

}  // namespace

std::string serialize_embeddings(const EmbeddingTable& table) {
  std::string out = std::to_string(table.vocab.size()) + " " + std::to_string(table.dim) + "\n";
  for (std::size_t r = 0; r < table.vocab.size(); ++r) {
    const auto& tok = table.vocab.tokens()[r];
    if (tok.empty() || tok.find_first_of(" \t\n") != std::string::npos) {
      throw Error(ErrorCode::ParseError, "token '" + tok + "' cannot be written to an embedding file");
    }
    out += tok;
    for (double x : table.vector(r)) {
      out.push_back(' ');
      append_double(out, x);
    }
    out.push_back('\n');
  }
  return out;
}

EmbeddingTable parse_embeddings(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    if (nl == std::string_view::npos) nl = content.size();
    auto line = content.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = nl + 1;
  }
  if (lines.empty()) throw Error(ErrorCode::ParseError, "embedding file has no header");
  auto parse_size = [](std::string_view s, std::size_t line_no) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw Error(ErrorCode::ParseError, "bad integer at line " + std::to_string(line_no));
    }
    return v;
  };
  const auto header = text::split_whitespace(lines[0]);
  if (header.size() != 2) throw Error(ErrorCode::ParseError, "header must be '<vocab_size> <dim>'");
  const std::size_t rows = parse_size(header[0], 1);
  const std::size_t dim = parse_size(header[1], 1);
  if (dim == 0) throw Error(ErrorCode::ParseError, "embedding dim must be positive");
  if (lines.size() - 1 != rows) {
    throw Error(ErrorCode::ParseError, "header announces " + std::to_string(rows) +
                                           " rows, file has " + std::to_string(lines.size() - 1));
  }
  EmbeddingTable t;
  t.dim = dim;
  t.input.reserve(rows * dim);
  std::vector<std::string> tokens;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = text::split_whitespace(lines[r]);
    if (fields.size() != dim + 1) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(r + 1) + " has " +
                                             std::to_string(fields.size() - 1) + " values, expected " +
                                             std::to_string(dim));
    }
    tokens.emplace_back(fields[0]);
    for (std::size_t k = 1; k < fields.size(); ++k) {
      double x = 0.0;
      auto [p, ec] = std::from_chars(fields[k].data(), fields[k].data() + fields[k].size(), x);
      if (ec != std::errc() || p != fields[k].data() + fields[k].size() || !std::isfinite(x)) {
        throw Error(ErrorCode::ParseError, "bad value at line " + std::to_string(r + 1));
      }
      t.input.push_back(x);
    }
  }
  std::vector<std::uint64_t> counts(tokens.size(), 1);
  t.vocab = Vocabulary(std::move(tokens), std::move(counts));
  t.output.assign(t.input.size(), 0.0);
  return t;
}

void export_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << serialize_embeddings(table);
}

EmbeddingTable import_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_embeddings(ss.str());
}

}  // namespace cbe::embed
