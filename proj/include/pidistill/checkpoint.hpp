#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "pidistill/heads.hpp"

namespace pidistill {

inline constexpr int kCheckpointFormatVersion = 1;

/// Saved model parameters. Parameters are held at float32 precision so the
/// in-memory checkpoint and its file are interchangeable.
struct Checkpoint {
  Model model;
  std::string method;  // training method that produced it
  std::size_t epoch = 0;
  double val_auc = 0.0;
  std::string config_fingerprint;

  /// Rounds every parameter to the nearest float32.
  static Checkpoint from_model(Model model, std::string method, std::size_t epoch, double val_auc,
                               std::string fingerprint);
};

/// Writes "<stem>.manifest.json" + "<stem>.blob" (little-endian float32).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& stem);
/// Accepts either the manifest path or the stem.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pidistill
