#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tscl/nn.hpp"
#include "tscl/ssl.hpp"

namespace tscl {

struct ModelConfig {
  nn::EncoderConfig encoder;
  nn::Index projection_hidden = 512;
  nn::Index projection_dim = 128;
  nn::Index predictor_hidden = 512;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Encoder + projection head, plus the predictor head for BYOL.
template <class S>
struct SslModel {
  nn::Encoder<S> encoder;
  nn::Mlp<S> projector;
  std::optional<nn::Mlp<S>> predictor;

  SslModel() = default;
  SslModel(const ModelConfig& cfg, bool with_predictor, RngStream& rng)
      : encoder(cfg.encoder, rng),
        projector("projector", cfg.encoder.embedding_dim(), cfg.projection_hidden,
                  cfg.projection_dim, rng) {
    if (with_predictor)
      predictor.emplace("predictor", cfg.projection_dim, cfg.predictor_hidden, cfg.projection_dim,
                        rng);
  }

  void collect(nn::ParamRefs<S>& refs) {
    encoder.collect(refs);
    projector.collect(refs);
    if (predictor) predictor->collect(refs);
  }
  void collect(nn::ConstParamRefs<S>& refs) const {
    encoder.collect(refs);
    projector.collect(refs);
    if (predictor) predictor->collect(refs);
  }
  // Encoder and projector only: the part mirrored by a momentum target.
  void collect_backbone(nn::ParamRefs<S>& refs) {
    encoder.collect(refs);
    projector.collect(refs);
  }
  void collect_backbone(nn::ConstParamRefs<S>& refs) const {
    encoder.collect(refs);
    projector.collect(refs);
  }
};

// Encoder + classifier head (hidden 256, ReLU, dropout) for finetuning.
template <class S>
struct ClassifierModel {
  nn::Encoder<S> encoder;
  nn::Mlp<S> head;

  void collect(nn::ParamRefs<S>& refs) {
    encoder.collect(refs);
    head.collect(refs);
  }
  void collect(nn::ConstParamRefs<S>& refs) const {
    encoder.collect(refs);
    head.collect(refs);
  }
};

// Checkpoint file: "TSCK", u32 version, u32 config length + JSON config,
// u32 blob count, then per blob: u32 name length, name, u32 ndim, u32 dims,
// f32 data. Parameters come before buffers, each in module order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedBlob {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json config;
  std::vector<NamedBlob> blobs;

  const NamedBlob* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const nlohmann::json& config,
                                            const nn::ConstParamRefs<float>& refs);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const nn::ConstParamRefs<float>& refs);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copy blobs into matching parameters/buffers by name. Every target entry
// must be present with the same shape; extra blobs are allowed only when
// allow_extra is set.
void assign_checkpoint(const Checkpoint& ckpt, nn::ParamRefs<float>& refs, bool allow_extra);

// Rebuild the pretrained model stored in a checkpoint written by the
// pretraining loop (config keys "model" and "ssl.framework").
SslModel<float> ssl_model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace tscl
