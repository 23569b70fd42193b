#include "tcfoley/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>

namespace tcfoley::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::vector<double> reflect_pad(const std::vector<double>& x, int pad) {
  const int n = static_cast<int>(x.size());
  std::vector<double> out(x.size() + 2 * static_cast<std::size_t>(pad));
  for (int i = 0; i < pad; ++i) {
    out[i] = x[pad - i];
    out[pad + n + i] = x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), out.begin() + pad);
  return out;
}

}  // namespace

void SpectralConfig::validate() const {
  if (sample_rate <= 0) throw usage_error("sample_rate must be positive");
  if (n_fft <= 0 || hop <= 0 || hop > n_fft) throw usage_error("need 0 < hop <= n_fft");
  if (n_mels < 1) throw usage_error("n_mels must be >= 1");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw usage_error("need 0 <= f_min < f_max <= sample_rate / 2");
}

// ---------------------------------------------------------------- WAV

Waveform decode_wav(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError(WavErrorCode::kMalformedHeader, "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    std::uint32_t len = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      // Tolerate a truncated data chunk written by streaming encoders.
      if (std::memcmp(chunk, "data", 4) == 0) len = static_cast<std::uint32_t>(bytes.size() - body);
      else throw WavError(WavErrorCode::kMalformedHeader, "chunk overruns file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw WavError(WavErrorCode::kMalformedHeader, "fmt chunk too short");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE) {
        if (len < 40) throw WavError(WavErrorCode::kMalformedHeader, "extensible fmt chunk too short");
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data == nullptr) throw WavError(WavErrorCode::kMalformedHeader, "missing fmt or data chunk");
  if (channels < 1 || channels > 2 || rate == 0)
    throw WavError(WavErrorCode::kUnsupportedCodec, "only mono/stereo with a positive rate");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw WavError(WavErrorCode::kUnsupportedCodec,
                   "unsupported codec (format " + std::to_string(format) + ", " + std::to_string(bits) + " bits)");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t n = data_len / frame_bytes;
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float v;
        std::uint32_t u = read_u32(p);
        std::memcpy(&v, &u, 4);
        acc += v;
      }
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const Waveform& w, WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::kPcm16 ? 1 : 3);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (double s : w.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    if (encoding == WavEncoding::kPcm16) {
      auto q = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
      put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      float f = static_cast<float>(c);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(out, u);
    }
  }
  return out;
}

void save_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding) {
  auto bytes = encode_wav(w, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WavError(WavErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------- STFT

VectorXd hann_window(int n) {
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

Eigen::MatrixXcd stft(const std::vector<double>& x, int n_fft, int hop) {
  if (static_cast<int>(x.size()) < n_fft) throw data_error("signal shorter than one STFT window");
  const int pad = n_fft / 2;
  const std::vector<double> padded = reflect_pad(x, pad);
  const int n_frames = 1 + static_cast<int>(x.size()) / hop;
  const VectorXd window = hann_window(n_fft);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Eigen::MatrixXcd out(n_fft / 2 + 1, n_frames);
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> spec;
  for (int t = 0; t < n_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < n_fft; ++i) frame[i] = padded[start + i] * window[i];
    fft.fwd(spec, frame);
    for (int k = 0; k <= n_fft / 2; ++k) out(k, t) = spec[k];
  }
  return out;
}

std::vector<double> istft(const Eigen::MatrixXcd& spec, int n_fft, int hop, std::size_t length) {
  const int pad = n_fft / 2;
  const Eigen::Index n_frames = spec.cols();
  const std::size_t total = static_cast<std::size_t>(n_frames - 1) * hop + n_fft;
  std::vector<double> ola(total, 0.0), wsum(total, 0.0);
  const VectorXd window = hann_window(n_fft);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> half(n_fft / 2 + 1);
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    for (int k = 0; k <= n_fft / 2; ++k) half[k] = spec(k, t);
    fft.inv(frame, half, n_fft);
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < n_fft; ++i) {
      ola[start + i] += frame[i] * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length && i + pad < total; ++i) {
    const double ws = wsum[i + pad];
    out[i] = ws > 1e-10 ? ola[i + pad] / ws : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------- mel

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {
VectorXd mel_edges(const SpectralConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  VectorXd edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges;
}
}  // namespace

VectorXd mel_center_frequencies(const SpectralConfig& cfg) {
  return mel_edges(cfg).segment(1, cfg.n_mels);
}

MatrixXd mel_filterbank(const SpectralConfig& cfg) {
  cfg.validate();
  const VectorXd edges = mel_edges(cfg);
  MatrixXd fb = MatrixXd::Zero(cfg.n_mels, cfg.n_bins());
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    for (int k = 0; k < cfg.n_bins(); ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double up = (f - l) / (c - l), down = (r - f) / (r - c);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

MatrixXd magnitude_spectrogram(const Waveform& w, const SpectralConfig& cfg) {
  return stft(w.samples, cfg.n_fft, cfg.hop).cwiseAbs();
}

MelSpectrogram mel_spectrogram(const Waveform& w, const SpectralConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate)
    throw data_error("waveform rate " + std::to_string(w.sample_rate) + " != configured " +
                     std::to_string(cfg.sample_rate));
  if (static_cast<int>(w.samples.size()) < cfg.n_fft) throw data_error("waveform shorter than one window");
  MelSpectrogram m;
  m.values = mel_filterbank(cfg) * magnitude_spectrogram(w, cfg);
  m.frame_rate = cfg.frame_rate();
  return m;
}

MelSpectrogram normalize_mel(const MelSpectrogram& m) {
  if (m.normalized) throw usage_error("mel spectrogram is already normalized");
  MelSpectrogram out = m;
  MatrixXd logv = m.values.array().max(0.0).log1p().matrix();
  const double lo = logv.minCoeff(), hi = logv.maxCoeff();
  out.normalized = true;
  out.norm_min = lo;
  out.norm_max = hi;
  if (hi - lo <= 0.0) {
    out.values.setZero();
  } else {
    out.values = ((logv.array() - lo) / (hi - lo)).matrix();
  }
  return out;
}

MelSpectrogram denormalize_mel(const MelSpectrogram& m) {
  if (!m.normalized) throw usage_error("mel spectrogram is not normalized");
  MelSpectrogram out = m;
  out.values = ((m.values.array() * (m.norm_max - m.norm_min) + m.norm_min).exp() - 1.0).max(0.0).matrix();
  out.normalized = false;
  return out;
}

MatrixXd mel_to_magnitude(const MelSpectrogram& m, const SpectralConfig& cfg, int iterations) {
  if (m.normalized) throw usage_error("mel_to_magnitude expects a denormalized grid");
  const MatrixXd fb = mel_filterbank(cfg);
  if (fb.rows() != m.n_mels()) throw data_error("mel bin count does not match configuration");
  const MatrixXd& y = m.values;
  // Seed: transpose weighted by each bin's total filter weight.
  const VectorXd col_weight = fb.colwise().sum().transpose();
  MatrixXd x = fb.transpose() * y;
  for (Eigen::Index k = 0; k < x.rows(); ++k)
    x.row(k) /= std::max(col_weight[k] * col_weight[k], 1e-12);
  const MatrixXd target = fb.transpose() * y;
  for (int it = 0; it < iterations; ++it) {
    const MatrixXd denom = fb.transpose() * (fb * x);
    x = (x.array() * target.array() / (denom.array() + 1e-12)).matrix();
  }
  return x;
}

double rms_dbfs(const double* begin, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += begin[i] * begin[i];
  const double rms = std::sqrt(acc / static_cast<double>(n));
  return rms > 0.0 ? 20.0 * std::log10(rms) : -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------- Griffin-Lim

Waveform griffin_lim(const MatrixXd& magnitude, const SpectralConfig& cfg, int iterations, std::uint64_t seed,
                     std::size_t length) {
  if (iterations < 1) throw usage_error("griffin_lim needs at least one iteration");
  if (magnitude.rows() != cfg.n_bins()) throw data_error("magnitude bin count does not match n_fft");
  const auto min_length = static_cast<std::size_t>(magnitude.cols() - 1) * cfg.hop;
  length = std::max({length, min_length, static_cast<std::size_t>(cfg.n_fft)});

  constexpr double kMomentum = 0.99;
  Rng rng(seed);
  Eigen::MatrixXcd angles(magnitude.rows(), magnitude.cols());
  for (Eigen::Index j = 0; j < angles.cols(); ++j)
    for (Eigen::Index i = 0; i < angles.rows(); ++i) angles(i, j) = std::polar(1.0, 2.0 * kPi * uniform_draw(rng));

  Eigen::MatrixXcd rebuilt = Eigen::MatrixXcd::Zero(angles.rows(), angles.cols());
  for (int it = 0; it < iterations; ++it) {
    const Eigen::MatrixXcd tprev = rebuilt;
    const auto inverse = istft((magnitude.array() * angles.array()).matrix(), cfg.n_fft, cfg.hop, length);
    rebuilt = stft(inverse, cfg.n_fft, cfg.hop).leftCols(angles.cols());
    angles = rebuilt - (kMomentum / (1.0 + kMomentum)) * tprev;
    for (Eigen::Index j = 0; j < angles.cols(); ++j)
      for (Eigen::Index i = 0; i < angles.rows(); ++i) {
        const double a = std::abs(angles(i, j));
        angles(i, j) = a > 1e-16 ? angles(i, j) / a : std::complex<double>(1.0, 0.0);
      }
  }
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples = istft((magnitude.array() * angles.array()).matrix(), cfg.n_fft, cfg.hop, length);
  return w;
}

double spectral_convergence(const MatrixXd& magnitude, const Waveform& w, const SpectralConfig& cfg) {
  const MatrixXd got = magnitude_spectrogram(w, cfg);
  const Eigen::Index cols = std::min(got.cols(), magnitude.cols());
  const double denom = magnitude.leftCols(cols).norm();
  if (denom == 0.0) return 0.0;
  return (magnitude.leftCols(cols) - got.leftCols(cols)).norm() / denom;
}

}  // namespace tcfoley::dsp
