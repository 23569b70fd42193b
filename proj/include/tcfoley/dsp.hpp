#pragma once

#include "tcfoley/common.hpp"

#include <filesystem>
#include <vector>

namespace tcfoley::dsp {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct SpectralConfig {
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop = 256;
  int n_mels = 64;
  double f_min = 0.0;
  double f_max = 8000.0;

  int n_bins() const { return n_fft / 2 + 1; }
  double frame_rate() const { return static_cast<double>(sample_rate) / hop; }
  void validate() const;
};

/// Mel grid, rows are mel bins and columns are frames. When `normalized` is
/// set, `norm_min`/`norm_max` hold the log-domain range used for scaling.
struct MelSpectrogram {
  MatrixXd values;
  double frame_rate = 62.5;
  bool normalized = false;
  double norm_min = 0.0;
  double norm_max = 0.0;

  Eigen::Index n_mels() const { return values.rows(); }
  Eigen::Index n_frames() const { return values.cols(); }
};

enum class WavErrorCode { kMalformedHeader, kUnsupportedCodec, kIo };

class WavError : public Error {
 public:
  WavError(WavErrorCode code, const std::string& what)
      : Error(code == WavErrorCode::kIo ? ErrorKind::kIo : ErrorKind::kData, what), code_(code) {}
  WavErrorCode code() const { return code_; }

 private:
  WavErrorCode code_;
};

enum class WavEncoding { kPcm16, kFloat32 };

Waveform load_wav(const std::filesystem::path& path);
void save_wav(const std::filesystem::path& path, const Waveform& w,
              WavEncoding encoding = WavEncoding::kPcm16);
/// Encodes to an in-memory RIFF image (what save_wav writes).
std::vector<std::uint8_t> encode_wav(const Waveform& w, WavEncoding encoding);
Waveform decode_wav(const std::vector<std::uint8_t>& bytes);

/// Periodic Hann window of length n.
VectorXd hann_window(int n);

/// Complex STFT, bins x frames, centered with reflection padding.
Eigen::MatrixXcd stft(const std::vector<double>& x, int n_fft, int hop);
/// Windowed overlap-add inverse of `stft`; returns exactly `length` samples.
std::vector<double> istft(const Eigen::MatrixXcd& spec, int n_fft, int hop, std::size_t length);

/// Triangular filterbank (n_mels x n_bins) on the HTK mel scale, unit peaks.
MatrixXd mel_filterbank(const SpectralConfig& cfg);
/// Center frequency in Hz of each mel triangle.
VectorXd mel_center_frequencies(const SpectralConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MatrixXd magnitude_spectrogram(const Waveform& w, const SpectralConfig& cfg);
MelSpectrogram mel_spectrogram(const Waveform& w, const SpectralConfig& cfg);

/// log(1 + x) then per-grid min-max scaling to [0, 1]; constant grids map to 0.
MelSpectrogram normalize_mel(const MelSpectrogram& m);
/// Inverse of normalize_mel using the stored range.
MelSpectrogram denormalize_mel(const MelSpectrogram& m);

/// Non-negative least-squares pseudo-inverse of the filterbank, solved with
/// multiplicative updates seeded from the row-normalized transpose. Zeros in
/// the seed stay zero, so the support never leaves the active filters.
MatrixXd mel_to_magnitude(const MelSpectrogram& m, const SpectralConfig& cfg, int iterations = 60);

/// Fast Griffin-Lim (momentum 0.99) from seeded uniform random phase.
Waveform griffin_lim(const MatrixXd& magnitude, const SpectralConfig& cfg, int iterations,
                     std::uint64_t seed, std::size_t length = 0);

/// ||mag - |STFT(w)||_F / ||mag||_F
double spectral_convergence(const MatrixXd& magnitude, const Waveform& w, const SpectralConfig& cfg);

double rms_dbfs(const double* begin, std::size_t n);

}  // namespace tcfoley::dsp
