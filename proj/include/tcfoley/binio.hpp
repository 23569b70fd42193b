#pragma once

#include "tcfoley/dsp.hpp"

#include <filesystem>

namespace tcfoley::binio {

/// Mel grid container: {n_mels: u32, n_frames: u32, frame_rate: f64} then
/// row-major little-endian f32 values. The normalization range travels in a
/// JSON sidecar next to it (`<path>.json`).
void write_mel(const std::filesystem::path& path, const dsp::MelSpectrogram& m);
dsp::MelSpectrogram read_mel(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Per-frame visual features: {T: u32, D: u32, fps: f64} then row-major f32
/// (T rows of D values).
struct FrameFeatureSequence {
  MatrixXd features;  // T x D
  double fps = 25.0;

  Eigen::Index length() const { return features.rows(); }
  Eigen::Index width() const { return features.cols(); }
};

void write_features(const std::filesystem::path& path, const FrameFeatureSequence& f);
FrameFeatureSequence read_features(const std::filesystem::path& path);

}  // namespace tcfoley::binio
