#include "tcfoley/binio.hpp"
#include "tcfoley/dsp.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace tcfoley;
using namespace tcfoley::dsp;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform sine(double hz, double seconds, double amp = 0.5, int sr = 16000) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = amp * std::sin(2 * kPi * hz * i / sr);
  return w;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tcfoley_test_" + name);
}

// Minimal RIFF writer independent of encode_wav.
void write_raw_wav(const std::filesystem::path& path, int channels, int bits, int format,
                   const std::vector<std::uint8_t>& payload, int sr = 16000) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(static_cast<std::uint32_t>(36 + payload.size()));
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(static_cast<std::uint16_t>(format));
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(sr));
  u32(static_cast<std::uint32_t>(sr * channels * bits / 8));
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(static_cast<std::uint16_t>(bits));
  out.write("data", 4);
  u32(static_cast<std::uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

void push16(std::vector<std::uint8_t>& b, std::int16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xFF));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

}  // namespace

TEST_CASE("load_wav: silence, square wave and stereo averaging") {
  const auto path = temp_file("wav.wav");
  {
    std::vector<std::uint8_t> b;
    for (int i = 0; i < 16000; ++i) push16(b, 0);
    write_raw_wav(path, 1, 16, 1, b);
    const Waveform w = load_wav(path);
    CHECK(w.sample_rate == 16000);
    REQUIRE(w.samples.size() == 16000);
    CHECK(std::all_of(w.samples.begin(), w.samples.end(), [](double x) { return x == 0.0; }));
  }
  {
    std::vector<std::uint8_t> b;
    for (int i = 0; i < 200; ++i) push16(b, i % 2 ? -32767 : 32767);
    write_raw_wav(path, 1, 16, 1, b);
    const Waveform w = load_wav(path);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      CHECK(std::abs(std::abs(w.samples[i]) - 32767.0 / 32768.0) < 1e-6);
  }
  {
    std::vector<std::uint8_t> b;
    for (int i = 0; i < 100; ++i) {
      push16(b, 16384);
      push16(b, -16384);
    }
    write_raw_wav(path, 2, 16, 1, b);
    const Waveform w = load_wav(path);
    REQUIRE(w.samples.size() == 100);
    for (double x : w.samples) CHECK(x == 0.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("load_wav: malformed header and unsupported codec are distinct errors") {
  const auto path = temp_file("bad.wav");
  {
    std::ofstream(path, std::ios::binary) << "not a riff file at all";
    try {
      load_wav(path);
      FAIL("expected an error");
    } catch (const WavError& e) {
      CHECK(e.code() == WavErrorCode::kMalformedHeader);
    }
  }
  {
    write_raw_wav(path, 1, 8, 6, std::vector<std::uint8_t>(100, 0));  // A-law
    try {
      load_wav(path);
      FAIL("expected an error");
    } catch (const WavError& e) {
      CHECK(e.code() == WavErrorCode::kUnsupportedCodec);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("wav round trip in both encodings") {
  Waveform w = sine(440, 0.1);
  const auto f32 = decode_wav(encode_wav(w, WavEncoding::kFloat32));
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(f32.samples[i] == doctest::Approx(w.samples[i]).epsilon(1e-7));
  const auto p16 = decode_wav(encode_wav(w, WavEncoding::kPcm16));
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(p16.samples[i] - w.samples[i]) < 1.0 / 32768.0 + 1e-12);
}

TEST_CASE("mel filterbank: non-negative rows covering every bin in range") {
  SpectralConfig cfg;
  const MatrixXd fb = mel_filterbank(cfg);
  CHECK(fb.rows() == 64);
  CHECK(fb.cols() == 513);
  CHECK(fb.minCoeff() >= 0.0);
  for (int k = 0; k < cfg.n_bins(); ++k) {
    const double hz = k * static_cast<double>(cfg.sample_rate) / cfg.n_fft;
    if (hz > cfg.f_min && hz < cfg.f_max) CHECK(fb.col(k).sum() > 0.0);
  }
}

TEST_CASE("mel_spectrogram: 440 Hz lands in the triangle peaking nearest 440 Hz") {
  SpectralConfig cfg;
  const auto m = mel_spectrogram(sine(440, 1.0), cfg);
  CHECK(m.n_frames() == 1 + 16000 / 256);
  Eigen::Index got;
  m.values.rowwise().mean().maxCoeff(&got);
  // Oracle: triangle centres straight from the HTK mel formula.
  const double lo = 2595.0 * std::log10(1.0 + cfg.f_min / 700.0);
  const double hi = 2595.0 * std::log10(1.0 + cfg.f_max / 700.0);
  Eigen::Index want = 0;
  double best = 1e9;
  for (int i = 0; i < cfg.n_mels; ++i) {
    const double mel = lo + (hi - lo) * (i + 1) / (cfg.n_mels + 1);
    const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    if (std::abs(hz - 440.0) < best) {
      best = std::abs(hz - 440.0);
      want = i;
    }
  }
  CHECK(got == want);
}

TEST_CASE("mel_spectrogram: silence, determinism, linearity and short input") {
  SpectralConfig cfg;
  Waveform silent;
  silent.samples.assign(4000, 0.0);
  CHECK(mel_spectrogram(silent, cfg).values.isZero(0.0));

  Rng rng(3);
  Waveform noise;
  for (int i = 0; i < 8000; ++i) noise.samples.push_back(2.0 * uniform_draw(rng) - 1.0);
  CHECK(mel_spectrogram(noise, cfg).values == mel_spectrogram(noise, cfg).values);

  const MatrixXd fb = mel_filterbank(cfg);
  const MatrixXd mag = magnitude_spectrogram(noise, cfg);
  CHECK(((fb * (2.5 * mag)) - 2.5 * (fb * mag)).cwiseAbs().maxCoeff() < 1e-9);

  Waveform tiny;
  tiny.samples.assign(100, 0.1);
  CHECK_THROWS_AS(mel_spectrogram(tiny, cfg), Error);
}

TEST_CASE("normalize_mel: degenerate grid, range ends, round trip, precondition") {
  MelSpectrogram m;
  m.values = MatrixXd::Constant(4, 5, 3.0);
  CHECK(normalize_mel(m).values.isZero(0.0));

  m.values = MatrixXd::Zero(3, 3);
  m.values(1, 2) = 7.0;
  const auto n = normalize_mel(m);
  CHECK(n.values.minCoeff() == 0.0);
  CHECK(n.values(1, 2) == 1.0);

  Rng rng(9);
  m.values = MatrixXd(6, 7);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = 10.0 * uniform_draw(rng);
  const auto norm = normalize_mel(m);
  CHECK(norm.values.minCoeff() >= 0.0);
  CHECK(norm.values.maxCoeff() <= 1.0);
  const MatrixXd back = norm.norm_min + norm.values.array() * (norm.norm_max - norm.norm_min);
  CHECK((back.array() - m.values.array().log1p()).abs().maxCoeff() < 1e-9);
  CHECK((denormalize_mel(norm).values - m.values).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(normalize_mel(norm), Error);
}

TEST_CASE("mel_to_magnitude: reconstruction, zero grid and impulse support") {
  SpectralConfig cfg;
  const MatrixXd fb = mel_filterbank(cfg);
  Rng rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Waveform w = sine(200 + 1500 * uniform_draw(rng), 0.5, 0.3);
    const Waveform extra = sine(300 + 3000 * uniform_draw(rng), 0.5, 0.2);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] += extra.samples[i];
    const auto mel = mel_spectrogram(w, cfg);
    const MatrixXd mag = mel_to_magnitude(mel, cfg);
    CHECK(mag.minCoeff() >= 0.0);
    worst = std::max(worst, (fb * mag - mel.values).norm() / mel.values.norm());
  }
  CHECK(worst < 0.15);

  MelSpectrogram zero;
  zero.values = MatrixXd::Zero(64, 10);
  CHECK(mel_to_magnitude(zero, cfg).isZero(0.0));

  MelSpectrogram impulse;
  impulse.values = MatrixXd::Zero(64, 1);
  impulse.values(20, 0) = 1.0;
  const MatrixXd mag = mel_to_magnitude(impulse, cfg);
  for (int k = 0; k < cfg.n_bins(); ++k)
    if (fb(20, k) == 0.0) CHECK(mag(k, 0) == 0.0);
  CHECK(mag.col(0).sum() > 0.0);
}

TEST_CASE("griffin_lim: converges, zero input, determinism") {
  SpectralConfig cfg;
  const Waveform w = sine(440, 0.5);
  const MatrixXd mag = magnitude_spectrogram(w, cfg);
  const auto one = griffin_lim(mag, cfg, 1, 5, w.samples.size());
  const auto many = griffin_lim(mag, cfg, 32, 5, w.samples.size());
  CHECK(spectral_convergence(mag, many, cfg) < spectral_convergence(mag, one, cfg));
  CHECK(many.samples == griffin_lim(mag, cfg, 32, 5, w.samples.size()).samples);

  const auto silent = griffin_lim(MatrixXd::Zero(mag.rows(), mag.cols()), cfg, 8, 1);
  CHECK(std::all_of(silent.samples.begin(), silent.samples.end(), [](double x) { return x == 0.0; }));
  CHECK_THROWS_AS(griffin_lim(mag, cfg, 0, 1), Error);
}

TEST_CASE("mel container round trip keeps the normalization sidecar") {
  MelSpectrogram m;
  m.values = MatrixXd::Random(5, 7).cwiseAbs();
  m.frame_rate = 62.5;
  m.normalized = true;
  m.norm_min = 0.25;
  m.norm_max = 3.5;
  const auto path = temp_file("mel.bin");
  binio::write_mel(path, m);
  const auto back = binio::read_mel(path);
  CHECK(back.values.rows() == 5);
  CHECK(back.values.cols() == 7);
  CHECK((back.values - m.values).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(back.normalized);
  CHECK(back.norm_min == 0.25);
  CHECK(back.norm_max == 3.5);
  std::filesystem::remove(path);
  std::filesystem::remove(binio::sidecar_path(path));
}
