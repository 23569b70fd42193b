#include "tcfoley/model.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

namespace tcfoley {

void DenoiserConfig::validate() const {
  if (latent_dim < 1 || width < 2 || depth < 1 || text_dim < 1 || key_dim < 1)
    throw usage_error("denoiser config: all sizes must be positive (width >= 2)");
}

nlohmann::json to_json(const DenoiserConfig& c) {
  return {{"latent_dim", c.latent_dim}, {"width", c.width},     {"depth", c.depth},
          {"text_dim", c.text_dim},     {"key_dim", c.key_dim}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.width = j.value("width", c.width);
  c.depth = j.value("depth", c.depth);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.key_dim = j.value("key_dim", c.key_dim);
  c.validate();
  return c;
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_.push_back("<unk>");
  for (auto& w : words)
    if (w != "<unk>") words_.push_back(std::move(w));
}

std::vector<int> Vocabulary::tokenize(const std::string& caption) const {
  std::istringstream in(caption);
  std::vector<int> ids;
  std::string word;
  while (in >> word) {
    for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    int id = 0;
    for (std::size_t i = 1; i < words_.size(); ++i)
      if (words_[i] == word) {
        id = static_cast<int>(i);
        break;
      }
    ids.push_back(id);
  }
  if (ids.empty()) ids.push_back(0);
  return ids;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"denoiser", to_json(c.denoiser)},
          {"cond_encoder",
           {{"hidden_channels", c.cond_encoder.hidden_channels},
            {"out_channels", c.cond_encoder.out_channels},
            {"pooling_fallback", c.cond_encoder.pooling_fallback}}},
          {"adapter",
           {{"conditioning_scale", c.adapter.conditioning_scale},
            {"literal_middle_fusion", c.adapter.literal_middle_fusion}}},
          {"n_mels", c.n_mels},
          {"vocabulary", c.vocabulary}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("denoiser")) c.denoiser = denoiser_config_from_json(j.at("denoiser"));
  if (j.contains("cond_encoder")) {
    const auto& e = j.at("cond_encoder");
    c.cond_encoder.hidden_channels = e.value("hidden_channels", c.cond_encoder.hidden_channels);
    c.cond_encoder.out_channels = e.value("out_channels", c.cond_encoder.out_channels);
    c.cond_encoder.pooling_fallback = e.value("pooling_fallback", c.cond_encoder.pooling_fallback);
  }
  if (j.contains("adapter")) {
    const auto& a = j.at("adapter");
    c.adapter.conditioning_scale = a.value("conditioning_scale", c.adapter.conditioning_scale);
    c.adapter.literal_middle_fusion = a.value("literal_middle_fusion", c.adapter.literal_middle_fusion);
  }
  c.n_mels = j.value("n_mels", c.n_mels);
  if (j.contains("vocabulary")) c.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  return c;
}

}  // namespace tcfoley
