#include "tcfoley/binio.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace tcfoley::binio {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

struct GridHeader {
  std::uint32_t rows;
  std::uint32_t cols;
  double rate;
};

void write_grid(const std::filesystem::path& path, const MatrixXd& rowmajor_src, double rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const auto rows = static_cast<std::uint32_t>(rowmajor_src.rows());
  const auto cols = static_cast<std::uint32_t>(rowmajor_src.cols());
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  out.write(reinterpret_cast<const char*>(&rate), 8);
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) buf[static_cast<std::size_t>(i) * cols + j] = static_cast<float>(rowmajor_src(i, j));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

MatrixXd read_grid(const std::filesystem::path& path, double& rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  GridHeader h{};
  in.read(reinterpret_cast<char*>(&h.rows), 4);
  in.read(reinterpret_cast<char*>(&h.cols), 4);
  in.read(reinterpret_cast<char*>(&h.rate), 8);
  if (!in) throw data_error(path.string() + ": truncated header");
  std::vector<float> buf(static_cast<std::size_t>(h.rows) * h.cols);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!in) throw data_error(path.string() + ": truncated payload");
  MatrixXd m(h.rows, h.cols);
  for (std::uint32_t i = 0; i < h.rows; ++i)
    for (std::uint32_t j = 0; j < h.cols; ++j) m(i, j) = buf[static_cast<std::size_t>(i) * h.cols + j];
  rate = h.rate;
  return m;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void write_mel(const std::filesystem::path& path, const dsp::MelSpectrogram& m) {
  write_grid(path, m.values, m.frame_rate);
  nlohmann::json side = {{"normalized", m.normalized}, {"min", m.norm_min}, {"max", m.norm_max}};
  std::ofstream out(sidecar_path(path));
  if (!out) throw Error(ErrorKind::kIo, "cannot write sidecar for " + path.string());
  out << side.dump(2) << "\n";
}

dsp::MelSpectrogram read_mel(const std::filesystem::path& path) {
  dsp::MelSpectrogram m;
  m.values = read_grid(path, m.frame_rate);
  std::ifstream side(sidecar_path(path));
  if (side) {
    try {
      auto j = nlohmann::json::parse(side);
      m.normalized = j.at("normalized").get<bool>();
      m.norm_min = j.at("min").get<double>();
      m.norm_max = j.at("max").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw data_error(sidecar_path(path).string() + ": " + e.what());
    }
  }
  return m;
}

void write_features(const std::filesystem::path& path, const FrameFeatureSequence& f) {
  write_grid(path, f.features, f.fps);
}

FrameFeatureSequence read_features(const std::filesystem::path& path) {
  FrameFeatureSequence f;
  f.features = read_grid(path, f.fps);
  if (f.length() < 1 || f.width() < 1) throw data_error(path.string() + ": empty feature sequence");
  return f;
}

}  // namespace tcfoley::binio
