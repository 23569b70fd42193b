#pragma once

#include "tcfoley/dsp.hpp"
#include "tcfoley/timeline.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace tcfoley::data {

/// The 23 sound-effect categories with their corpus share in percent.
struct CategoryShare {
  const char* name;
  double percent;
};
const std::array<CategoryShare, 23>& category_table();
bool is_known_category(const std::string& name);

struct ManifestEntry {
  std::string id;
  std::string audio_path;
  std::string caption;
  std::string category;
  std::vector<timeline::EventInterval> events;
  double duration_s = 0.0;
};

nlohmann::json to_json(const ManifestEntry& e);
/// Canonical one-line form (sorted keys, compact).
std::string to_jsonl_line(const ManifestEntry& e);

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ManifestLoad {
  std::vector<ManifestEntry> entries;  // lines that parsed, order preserved
  std::vector<LineError> errors;
};

/// JSON-Lines, one entry per line; blank lines are skipped. Parse failures and
/// unknown categories are collected per line instead of aborting.
ManifestLoad load_manifest(const std::filesystem::path& path);
ManifestLoad parse_manifest(const std::string& text);
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct ValidationReport {
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> histogram;

  bool ok() const { return errors.empty(); }
  double share(const std::string& category) const;
};

/// Clips over 10 s are warnings; invariant violations are errors.
ValidationReport validate_manifest(const std::vector<ManifestEntry>& entries);

// ---------------------------------------------------------------- synthetic corpus

enum class SoundKind { kTone, kNoise, kClicks };

struct SyntheticSpec {
  std::size_t clips = 100;
  double clip_duration_s = 2.0;
  int sample_rate = 16000;
  int min_events = 1;
  int max_events = 3;
  double min_event_s = 0.2;
  double max_event_s = 0.6;
  double min_gap_s = 0.15;   // between events, and to the clip edges
  double level_dbfs = -6.0;  // peak level of every event
  std::vector<SoundKind> kinds = {SoundKind::kTone, SoundKind::kNoise, SoundKind::kClicks};
  double video_fps = 25.0;
  int feature_dim = 8;
  double feature_noise = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

struct SyntheticClip {
  ManifestEntry entry;
  SoundKind kind = SoundKind::kTone;
  dsp::Waveform audio;
  timeline::EventTrack track;
};

/// Words used by synthetic captions, in a fixed order.
std::vector<std::string> caption_vocabulary();

/// Renders clip `index` of the corpus; a pure function of (spec, index).
SyntheticClip synth_clip(const SyntheticSpec& spec, std::size_t index);

/// Writes audio/<id>.wav, timelines/<id>.json, features/<id>.bin and
/// manifest.jsonl under `out_dir`.
std::vector<ManifestEntry> synth_generate(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------- captions

struct CaptionRequest {
  std::vector<std::string> frames;  // exactly four frame identifiers
  std::string task_identifier = "[foley]";
  std::string instruction = "Describe the sounds these frames would make, in order.";
};

/// Four temporal-cue lines, one per frame, then "<task identifier> <instruction>".
std::string build_caption_prompt(const CaptionRequest& req);

enum class CaptionErrorCode { kNetwork, kStatus, kTimeout, kBadResponse, kUnknownRequest };

class CaptionError : public Error {
 public:
  CaptionError(CaptionErrorCode code, const std::string& what) : Error(ErrorKind::kNetwork, what), code_(code) {}
  CaptionErrorCode code() const { return code_; }

 private:
  CaptionErrorCode code_;
};

class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::string describe(const CaptionRequest& req) = 0;
};

/// Canned captions keyed by the comma-joined frame identifiers.
class MockCaptionProvider : public CaptionProvider {
 public:
  explicit MockCaptionProvider(std::map<std::string, std::string> table) : table_(std::move(table)) {}
  std::string describe(const CaptionRequest& req) override;
  static std::string key(const CaptionRequest& req);

 private:
  std::map<std::string, std::string> table_;
};

/// POSTs {"prompt": ...} to `url` and reads {"caption": ...}.
class HttpCaptionProvider : public CaptionProvider {
 public:
  HttpCaptionProvider(std::string url, std::chrono::milliseconds timeout, std::string bearer_token = {});
  std::string describe(const CaptionRequest& req) override;

 private:
  std::string url_;
  std::chrono::milliseconds timeout_;
  std::string token_;
};

/// Environment variable naming the caption endpoint.
inline constexpr const char* kCaptionEndpointEnv = "TCFOLEY_CAPTION_ENDPOINT";
inline constexpr const char* kCaptionTokenEnv = "TCFOLEY_CAPTION_TOKEN";

}  // namespace tcfoley::data
