#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qamatch/model.hpp"

namespace qamatch {

// Checkpoint container: an 8-byte magic, a JSON header (variant, full model
// config, vocabulary, parameter manifest, arbitrary "extra" metadata), then
// the embedding matrix and every parameter as raw little-endian IEEE-754
// doubles in manifest order. 64-bit values round-trip bit-exactly.

namespace detail {

constexpr char kCkptMagic[8] = {'Q', 'A', 'M', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kCkptVersion = 1;

inline void write_u64(std::ostream& out, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) write_u64(out, std::bit_cast<std::uint64_t>(d));
}

inline void read_doubles(std::istream& in, std::vector<double>& v) {
  for (double& d : v) d = std::bit_cast<double>(read_u64(in));
}

}  // namespace detail

inline nlohmann::json model_config_json(const ModelConfig& cfg) {
  return {{"variant", to_string(cfg.variant)},
          {"embedding_dim", cfg.embedding_dim},
          {"encoder_hidden", cfg.encoder_hidden},
          {"match_hidden", cfg.match_hidden},
          {"dropout", cfg.dropout},
          {"distance_dims", cfg.distance_dims},
          {"classification_threshold", cfg.classification_threshold}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.embedding_dim = j.at("embedding_dim").get<int>();
  cfg.encoder_hidden = j.at("encoder_hidden").get<int>();
  cfg.match_hidden = j.at("match_hidden").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.distance_dims = j.at("distance_dims").get<int>();
  cfg.classification_threshold = j.at("classification_threshold").get<double>();
  return cfg;
}

inline void save_checkpoint(const std::string& path, const Model& model,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);

  nlohmann::json header;
  header["format"] = "qamatch-checkpoint";
  header["variant"] = to_string(model.config().variant);
  header["config"] = model_config_json(model.config());
  header["extra"] = extra;
  const Vocabulary& vocab = model.embeddings().vocab;
  nlohmann::json vocab_list = nlohmann::json::array();
  for (std::size_t i = 0; i < vocab.size(); ++i) vocab_list.push_back(vocab.token(static_cast<int>(i)));
  header["vocab"] = vocab_list;
  header["embedding_shape"] = model.embeddings().matrix.shape;
  nlohmann::json manifest = nlohmann::json::array();
  for (const nn::Parameter& p : model.params()) {
    manifest.push_back({{"name", p.name}, {"shape", p.value.shape}});
  }
  header["params"] = manifest;

  const std::string hs = header.dump();
  out.write(detail::kCkptMagic, 8);
  detail::write_u64(out, detail::kCkptVersion);
  detail::write_u64(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  detail::write_doubles(out, model.embeddings().matrix.data);
  for (const nn::Parameter& p : model.params()) detail::write_doubles(out, p.value.data);
  if (!out) throw DataError("short write on checkpoint: " + path);
}

inline nlohmann::json read_checkpoint_header(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0) {
    throw DataError("not a qamatch checkpoint");
  }
  const std::uint64_t version = detail::read_u64(in);
  if (version != detail::kCkptVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t len = detail::read_u64(in);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header");
  return nlohmann::json::parse(hs);
}

inline nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return read_checkpoint_header(in);
}

/// Loads a checkpoint. When `expected` is given, refuses a file whose
/// variant or dimensions do not match it.
inline std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                              const ModelConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  const nlohmann::json header = read_checkpoint_header(in);
  const ModelConfig cfg = model_config_from_json(header.at("config"));
  if (expected) {
    if (cfg.variant != expected->variant) {
      throw DataError("checkpoint variant " + std::string(to_string(cfg.variant)) +
                      " does not match requested " + to_string(expected->variant));
    }
    if (cfg.embedding_dim != expected->embedding_dim ||
        cfg.encoder_hidden != expected->encoder_hidden ||
        cfg.match_hidden != expected->match_hidden ||
        cfg.distance_dims != expected->distance_dims) {
      throw DataError("checkpoint dimensions do not match the requested config");
    }
  }

  EmbeddingMatrix emb;
  for (const auto& tok : header.at("vocab")) {
    const std::string t = tok.get<std::string>();
    if (t != Vocabulary::kUnkToken && t != Vocabulary::kPadToken) emb.vocab.add(t);
  }
  const std::vector<std::size_t> eshape =
      header.at("embedding_shape").get<std::vector<std::size_t>>();
  if (eshape.size() != 2 || eshape[0] != emb.vocab.size()) {
    throw DataError("checkpoint embedding shape does not match its vocabulary");
  }
  emb.matrix = nn::Tensor::zeros(eshape);
  detail::read_doubles(in, emb.matrix.data);

  auto model = std::make_unique<Model>(cfg, std::move(emb), /*init_seed=*/0);
  const auto& manifest = header.at("params");
  if (manifest.size() != model->params().size()) {
    throw DataError("checkpoint parameter manifest does not match the model");
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    nn::Parameter& p = model->params()[i];
    if (manifest[i].at("name").get<std::string>() != p.name ||
        manifest[i].at("shape").get<std::vector<std::size_t>>() != p.value.shape) {
      throw DataError("checkpoint parameter \"" +
                      manifest[i].at("name").get<std::string>() +
                      "\" does not match the model layout");
    }
    detail::read_doubles(in, p.value.data);
  }
  if (!in) throw DataError("truncated checkpoint payload: " + path);
  return model;
}

}  // namespace qamatch
