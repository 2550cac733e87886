#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qamatch/common.hpp"
#include "qamatch/rng.hpp"
#include "qamatch/tensor.hpp"
#include "qamatch/vocab.hpp"

namespace qamatch {

struct SkipgramConfig {
  int dim = 100;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double lr = 0.025;
  double noise_power = 0.75;  // unigram^0.75 noise distribution
  std::uint64_t seed = 1;
};

/// Vocabulary plus word vectors; lookup is total (unknown tokens resolve to
/// the <unk> row, which is set to the mean of all trained rows).
struct EmbeddingMatrix {
  Vocabulary vocab;
  nn::Tensor matrix;  // {V, dim}

  int dim() const { return static_cast<int>(matrix.cols()); }

  std::span<const double> row(int id) const {
    return {matrix.data.data() + static_cast<std::size_t>(id) * matrix.cols(),
            matrix.cols()};
  }

  std::span<const double> lookup(const std::string& token) const {
    return row(vocab.id(token));
  }
};

struct SkipgramStats {
  std::vector<double> epoch_mean_loss;  // mean negative-sampling objective
  std::size_t train_tokens = 0;
  std::vector<std::string> warnings;
};

inline EmbeddingMatrix init_embeddings(const Vocabulary& vocab, int dim,
                                       Rng& rng) {
  EmbeddingMatrix e;
  e.vocab = vocab;
  e.matrix = nn::Tensor::zeros({vocab.size(), static_cast<std::size_t>(dim)});
  const double k = 0.5 / dim;
  for (std::size_t id = 2; id < vocab.size(); ++id) {
    for (int c = 0; c < dim; ++c) {
      e.matrix.data[id * static_cast<std::size_t>(dim) + c] = rng.uniform(-k, k);
    }
  }
  return e;
}

/// Skip-gram with negative sampling, single-threaded for determinism.
/// Out-of-vocabulary tokens are dropped from the stream before windowing.
/// Learning rate decays linearly over the planned token count, floored at
/// lr/10000. Zero epochs returns the initialization untouched.
inline EmbeddingMatrix train_skipgram(
    const std::vector<std::vector<std::string>>& corpus, const Vocabulary& vocab,
    const SkipgramConfig& cfg, SkipgramStats* stats = nullptr) {
  Rng rng = Rng(cfg.seed).substream("skipgram");
  EmbeddingMatrix emb = init_embeddings(vocab, cfg.dim, rng);
  const std::size_t V = vocab.size();
  const std::size_t D = static_cast<std::size_t>(cfg.dim);

  std::vector<std::vector<int>> sentences;
  std::size_t total_tokens = 0;
  for (const auto& sent : corpus) {
    std::vector<int> ids;
    for (const auto& tok : sent) {
      const int id = vocab.id(tok);
      if (id >= 2) ids.push_back(id);
    }
    total_tokens += ids.size();
    if (!ids.empty()) sentences.push_back(std::move(ids));
  }
  if (stats) stats->train_tokens = total_tokens;
  if (total_tokens < static_cast<std::size_t>(cfg.window) && stats) {
    stats->warnings.push_back("corpus shorter than the context window (" +
                              std::to_string(total_tokens) + " trainable tokens)");
  }
  if (cfg.epochs <= 0 || total_tokens == 0) return emb;

  // Cumulative unigram^power table for negative sampling.
  std::vector<double> cumulative(V, 0.0);
  double mass = 0.0;
  for (std::size_t id = 2; id < V; ++id) {
    mass += std::pow(static_cast<double>(vocab.frequency(static_cast<int>(id))),
                     cfg.noise_power);
    cumulative[id] = mass;
  }
  auto sample_noise = [&]() -> int {
    const double u = rng.uniform01() * mass;
    const auto it = std::lower_bound(cumulative.begin() + 2, cumulative.end(), u);
    return static_cast<int>(it - cumulative.begin());
  };

  // Context (output) vectors start at zero, as in the classic trainer.
  std::vector<double> ctx(V * D, 0.0);
  const double lr0 = cfg.lr;
  const double min_lr = lr0 * 1e-4;
  const double planned = static_cast<double>(cfg.epochs) * static_cast<double>(total_tokens);
  std::size_t seen = 0;

  std::vector<double> grad_center(D);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const auto& sent : sentences) {
      const int n = static_cast<int>(sent.size());
      for (int i = 0; i < n; ++i, ++seen) {
        const double lr = std::max(min_lr, lr0 * (1.0 - static_cast<double>(seen) / planned));
        const int reach = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.window)));
        double* vc = emb.matrix.data.data() + static_cast<std::size_t>(sent[i]) * D;
        for (int off = -reach; off <= reach; ++off) {
          const int j = i + off;
          if (off == 0 || j < 0 || j >= n) continue;
          std::fill(grad_center.begin(), grad_center.end(), 0.0);
          double pair_loss = 0.0;
          for (int neg = 0; neg <= cfg.negatives; ++neg) {
            int target;
            double label;
            if (neg == 0) {
              target = sent[j];
              label = 1.0;
            } else {
              target = sample_noise();
              if (target == sent[j]) continue;
              label = 0.0;
            }
            double* vo = ctx.data() + static_cast<std::size_t>(target) * D;
            double s = 0.0;
            for (std::size_t c = 0; c < D; ++c) s += vc[c] * vo[c];
            const double sig = 1.0 / (1.0 + std::exp(-s));
            pair_loss += label > 0.5 ? -std::log(std::max(sig, 1e-12))
                                     : -std::log(std::max(1.0 - sig, 1e-12));
            const double g = (label - sig) * lr;
            for (std::size_t c = 0; c < D; ++c) {
              grad_center[c] += g * vo[c];
              vo[c] += g * vc[c];
            }
          }
          for (std::size_t c = 0; c < D; ++c) vc[c] += grad_center[c];
          loss_sum += pair_loss;
          ++loss_count;
        }
      }
    }
    if (stats) {
      stats->epoch_mean_loss.push_back(loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0);
    }
  }

  // <unk> becomes the mean of all trained rows; <pad> stays zero.
  if (V > 2) {
    for (std::size_t c = 0; c < D; ++c) {
      double m = 0.0;
      for (std::size_t id = 2; id < V; ++id) m += emb.matrix.data[id * D + c];
      emb.matrix.data[static_cast<std::size_t>(Vocabulary::kUnk) * D + c] =
          m / static_cast<double>(V - 2);
    }
  }
  return emb;
}

// ---- text format ------------------------------------------------------
// Header line "<V> <dim>", then one line per token: the token followed by
// dim floats. Interoperable with common word-vector files; the reader
// recognizes the reserved rows by name in any position and synthesizes them
// when a third-party file lacks them.

inline void save_embeddings(std::ostream& out, const EmbeddingMatrix& emb) {
  out << emb.vocab.size() << ' ' << emb.dim() << '\n';
  std::ostringstream os;
  os.precision(17);
  for (std::size_t id = 0; id < emb.vocab.size(); ++id) {
    os.str("");
    os << emb.vocab.token(static_cast<int>(id));
    for (double v : emb.row(static_cast<int>(id))) os << ' ' << v;
    out << os.str() << '\n';
  }
}

inline EmbeddingMatrix load_embeddings(std::istream& in) {
  std::size_t v = 0, dim = 0;
  if (!(in >> v >> dim) || dim == 0) throw DataError("embedding file: bad header");
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  rows.reserve(v);
  for (std::size_t r = 0; r < v; ++r) {
    std::string tok;
    if (!(in >> tok)) throw DataError("embedding file: truncated at row " + std::to_string(r));
    std::vector<double> vals(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      if (!(in >> vals[c])) {
        throw DataError("embedding file: truncated row for token \"" + tok + "\"");
      }
    }
    rows.emplace_back(std::move(tok), std::move(vals));
  }

  EmbeddingMatrix emb;
  emb.matrix = nn::Tensor::zeros({0, dim});
  std::vector<std::vector<double>> ordered(2, std::vector<double>(dim, 0.0));
  bool saw_unk = false;
  for (auto& [tok, vals] : rows) {
    if (tok == Vocabulary::kUnkToken) {
      ordered[Vocabulary::kUnk] = std::move(vals);
      saw_unk = true;
    } else if (tok == Vocabulary::kPadToken) {
      ordered[Vocabulary::kPad] = std::move(vals);
    } else {
      emb.vocab.add(tok);
      ordered.push_back(std::move(vals));
    }
  }
  if (!saw_unk && ordered.size() > 2) {
    for (std::size_t c = 0; c < dim; ++c) {
      double m = 0.0;
      for (std::size_t id = 2; id < ordered.size(); ++id) m += ordered[id][c];
      ordered[Vocabulary::kUnk][c] = m / static_cast<double>(ordered.size() - 2);
    }
  }
  emb.matrix = nn::Tensor::zeros({ordered.size(), dim});
  for (std::size_t id = 0; id < ordered.size(); ++id) {
    std::copy(ordered[id].begin(), ordered[id].end(),
              emb.matrix.data.begin() + id * dim);
  }
  return emb;
}

inline void save_embeddings_file(const std::string& path, const EmbeddingMatrix& emb) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embedding file: " + path);
  save_embeddings(out, emb);
}

inline EmbeddingMatrix load_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path);
  return load_embeddings(in);
}

}  // namespace qamatch
