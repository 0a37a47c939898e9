#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sake/model.hpp"
#include "sake/tensor.hpp"

namespace sake {

using MetaMap = std::vector<std::pair<std::string, std::string>>;

/// Textual manifest of (name, shape, byte-offset) entries, then raw
/// little-endian 64-bit floats in manifest order.
void save_checkpoint(const std::string& path, const MetaMap& meta,
                     const std::vector<std::pair<std::string, Tensor>>& params);

struct LoadedCheckpoint {
  MetaMap meta;
  std::map<std::string, Tensor> tensors;

  std::string meta_value(const std::string& key) const;
  bool has_meta(const std::string& key) const;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

void save_model(const std::string& path, const SakeModelParams& model);
/// Rebuilds the model from the checkpoint's metadata, then validates every
/// manifest shape against it; mismatches and missing entries are rejected.
SakeModelParams load_model(const std::string& path);

MetaMap sake_config_meta(const SakeConfig& config);
SakeConfig sake_config_from_meta(const LoadedCheckpoint& ckpt);
/// Copies checkpoint tensors into the model's named parameters.
void fill_parameters(const LoadedCheckpoint& ckpt,
                     const std::vector<std::pair<std::string, Tensor>>& params,
                     const std::string& prefix = "");

}  // namespace sake
