#include "tcfoley/data.hpp"

#include "tcfoley/binio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace tcfoley::data {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<CategoryShare, 23>& category_table() {
  static const std::array<CategoryShare, 23> kTable = {{
      {"Household Daily", 14.11},
      {"Transportation Vehicles", 10.42},
      {"Impacts Crashes", 10.10},
      {"Foley", 8.24},
      {"Human Elements", 7.77},
      {"Industrial", 6.58},
      {"Weapons War", 5.83},
      {"Cartoon Comical", 4.90},
      {"Sports", 4.43},
      {"Animals Insects", 4.04},
      {"Instruments", 3.68},
      {"Water Liquid", 3.27},
      {"Technology", 2.70},
      {"Horror", 2.41},
      {"Emergency", 2.20},
      {"Public Places", 1.87},
      {"Sound Design Effects", 1.69},
      {"Doors Windows", 1.56},
      {"Fire Explosions", 1.49},
      {"Nature Weather", 1.02},
      {"Leisure", 0.84},
      {"Multimedia", 0.47},
      {"Bells", 0.37},
  }};
  return kTable;
}

bool is_known_category(const std::string& name) {
  const auto& t = category_table();
  return std::any_of(t.begin(), t.end(), [&](const CategoryShare& c) { return name == c.name; });
}

// ---------------------------------------------------------------- manifest

json to_json(const ManifestEntry& e) {
  json events = json::array();
  for (const auto& iv : e.events) events.push_back({{"start_s", iv.start_s}, {"end_s", iv.end_s}});
  return {{"id", e.id},         {"audio_path", e.audio_path}, {"caption", e.caption},
          {"category", e.category}, {"events", events},       {"duration_s", e.duration_s}};
}

std::string to_jsonl_line(const ManifestEntry& e) { return to_json(e).dump(); }

namespace {

ManifestEntry entry_from_json(const json& j) {
  if (!j.is_object()) throw data_error("entry is not a JSON object");
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.audio_path = j.at("audio_path").get<std::string>();
  e.caption = j.at("caption").get<std::string>();
  e.category = j.at("category").get<std::string>();
  e.duration_s = j.at("duration_s").get<double>();
  for (const auto& ev : j.at("events"))
    e.events.push_back({ev.at("start_s").get<double>(), ev.at("end_s").get<double>()});
  return e;
}

}  // namespace

ManifestLoad parse_manifest(const std::string& text) {
  ManifestLoad out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ManifestEntry e = entry_from_json(json::parse(line));
      if (!is_known_category(e.category)) {
        out.errors.push_back({number, "unknown category '" + e.category + "'"});
        continue;
      }
      out.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      out.errors.push_back({number, ex.what()});
    } catch (const Error& ex) {
      out.errors.push_back({number, ex.what()});
    }
  }
  return out;
}

ManifestLoad load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

void save_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write manifest " + path.string());
  for (const auto& e : entries) out << to_jsonl_line(e) << '\n';
}

double ValidationReport::share(const std::string& category) const {
  std::size_t total = 0;
  for (const auto& [_, n] : histogram) total += n;
  const auto it = histogram.find(category);
  if (total == 0 || it == histogram.end()) return 0.0;
  return 100.0 * static_cast<double>(it->second) / static_cast<double>(total);
}

ValidationReport validate_manifest(const std::vector<ManifestEntry>& entries) {
  ValidationReport r;
  std::set<std::string> ids;
  for (const auto& e : entries) {
    const std::string who = "entry '" + e.id + "': ";
    if (e.id.empty()) r.errors.push_back("entry with empty id");
    if (!ids.insert(e.id).second) r.errors.push_back(who + "duplicate id");
    if (e.caption.empty()) r.errors.push_back(who + "empty caption");
    if (!is_known_category(e.category)) r.errors.push_back(who + "unknown category '" + e.category + "'");
    if (!(e.duration_s > 0.0)) r.errors.push_back(who + "duration must be positive");
    if (e.duration_s > 10.0) r.warnings.push_back(who + "duration " + std::to_string(e.duration_s) + " s exceeds 10 s");
    for (const auto& iv : e.events) {
      if (!(iv.end_s > iv.start_s))
        r.errors.push_back(who + "event end " + std::to_string(iv.end_s) + " is not after start " +
                           std::to_string(iv.start_s));
      if (iv.start_s < 0.0 || iv.end_s > e.duration_s)
        r.errors.push_back(who + "event outside [0, duration]");
    }
    ++r.histogram[e.category];
  }
  return r;
}

// ---------------------------------------------------------------- synthetic corpus

namespace {

const char* kind_name(SoundKind k) {
  switch (k) {
    case SoundKind::kTone: return "tone";
    case SoundKind::kNoise: return "noise";
    case SoundKind::kClicks: return "clicks";
  }
  return "?";
}

SoundKind kind_from_name(const std::string& s) {
  if (s == "tone") return SoundKind::kTone;
  if (s == "noise") return SoundKind::kNoise;
  if (s == "clicks") return SoundKind::kClicks;
  throw usage_error("unknown sound kind '" + s + "'");
}

const char* kNumbers[] = {"one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};

struct ToneBand {
  const char* word;
  double lo, hi;
};
const ToneBand kBands[] = {{"low", 300.0, 500.0}, {"mid", 800.0, 1200.0}, {"high", 2000.0, 3000.0}};

}  // namespace

void SyntheticSpec::validate() const {
  if (clips == 0) throw usage_error("synthetic spec: clips must be positive");
  if (!(clip_duration_s > 0.0)) throw usage_error("synthetic spec: clip duration must be positive");
  if (sample_rate <= 0) throw usage_error("synthetic spec: sample rate must be positive");
  if (min_events < 1 || max_events < min_events || max_events > 9)
    throw usage_error("synthetic spec: need 1 <= min_events <= max_events <= 9");
  if (!(min_event_s > 0.0) || max_event_s < min_event_s)
    throw usage_error("synthetic spec: need 0 < min_event_s <= max_event_s");
  if (min_gap_s < 0.0) throw usage_error("synthetic spec: min_gap_s must be non-negative");
  if (level_dbfs > 0.0) throw usage_error("synthetic spec: level must be at most 0 dBFS");
  if (kinds.empty()) throw usage_error("synthetic spec: no sound kinds");
  if (!(video_fps > 0.0) || feature_dim < 1 || feature_noise < 0.0)
    throw usage_error("synthetic spec: invalid feature settings");
  const double need = max_events * min_event_s + (max_events + 1) * min_gap_s;
  if (need > clip_duration_s)
    throw data_error("synthetic spec is infeasible: " + std::to_string(max_events) + " events of at least " +
                     std::to_string(min_event_s) + " s with gaps of " + std::to_string(min_gap_s) +
                     " s need " + std::to_string(need) + " s but clips last " + std::to_string(clip_duration_s) +
                     " s");
}

json to_json(const SyntheticSpec& s) {
  json kinds = json::array();
  for (auto k : s.kinds) kinds.push_back(kind_name(k));
  return {{"clips", s.clips},           {"clip_duration_s", s.clip_duration_s}, {"sample_rate", s.sample_rate},
          {"min_events", s.min_events}, {"max_events", s.max_events},           {"min_event_s", s.min_event_s},
          {"max_event_s", s.max_event_s}, {"min_gap_s", s.min_gap_s},           {"level_dbfs", s.level_dbfs},
          {"kinds", kinds},             {"video_fps", s.video_fps},             {"feature_dim", s.feature_dim},
          {"feature_noise", s.feature_noise}, {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  if (!j.is_object()) throw usage_error("synthetic spec must be a JSON object");
  static const std::set<std::string> kKeys = {"clips",      "clip_duration_s", "sample_rate", "min_events",
                                              "max_events", "min_event_s",     "max_event_s", "min_gap_s",
                                              "level_dbfs", "kinds",           "video_fps",   "feature_dim",
                                              "feature_noise", "seed"};
  for (const auto& [k, _] : j.items())
    if (!kKeys.count(k)) throw usage_error("synthetic spec: unknown key '" + k + "'");
  SyntheticSpec s;
  try {
    s.clips = j.value("clips", s.clips);
    s.clip_duration_s = j.value("clip_duration_s", s.clip_duration_s);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.min_events = j.value("min_events", s.min_events);
    s.max_events = j.value("max_events", s.max_events);
    s.min_event_s = j.value("min_event_s", s.min_event_s);
    s.max_event_s = j.value("max_event_s", s.max_event_s);
    s.min_gap_s = j.value("min_gap_s", s.min_gap_s);
    s.level_dbfs = j.value("level_dbfs", s.level_dbfs);
    s.video_fps = j.value("video_fps", s.video_fps);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.feature_noise = j.value("feature_noise", s.feature_noise);
    s.seed = j.value("seed", s.seed);
    if (j.contains("kinds")) {
      s.kinds.clear();
      for (const auto& k : j.at("kinds")) s.kinds.push_back(kind_from_name(k.get<std::string>()));
    }
  } catch (const json::exception& ex) {
    throw usage_error(std::string("synthetic spec: ") + ex.what());
  }
  s.validate();
  return s;
}

std::vector<std::string> caption_vocabulary() {
  return {"one",  "two",  "three", "low",    "mid",   "high",  "beep",
          "beeps", "hiss", "hisses", "metal", "click", "clicks"};
}

SyntheticClip synth_clip(const SyntheticSpec& spec, std::size_t index) {
  spec.validate();
  Rng rng = derive_rng(spec.seed, {0x5E7Cull, static_cast<std::uint64_t>(index)});
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform_draw(rng); };
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  SyntheticClip clip;
  clip.kind = spec.kinds[pick(spec.kinds.size())];
  const int n_events = spec.min_events + static_cast<int>(pick(static_cast<std::size_t>(spec.max_events - spec.min_events + 1)));

  // Durations first, then the leftover slack is split over the n+1 gaps.
  const double sr = spec.sample_rate;
  const auto n_samples = static_cast<std::size_t>(std::llround(spec.clip_duration_s * sr));
  std::vector<double> durs(static_cast<std::size_t>(n_events));
  for (auto& d : durs) d = uniform(spec.min_event_s, spec.max_event_s);
  double used = spec.min_gap_s * (n_events + 1);
  for (double d : durs) used += d;
  if (used > spec.clip_duration_s) {
    // Shrink towards the minimum so every drawn count stays feasible.
    const double excess = used - spec.clip_duration_s;
    double room = 0.0;
    for (double d : durs) room += d - spec.min_event_s;
    for (auto& d : durs) d -= (room > 0.0 ? (d - spec.min_event_s) / room : 0.0) * excess;
    used = spec.clip_duration_s;
  }
  const double slack = spec.clip_duration_s - used;
  std::vector<double> w(static_cast<std::size_t>(n_events + 1));
  double wsum = 0.0;
  for (auto& x : w) wsum += (x = -std::log(1.0 - uniform_draw(rng)));

  clip.audio.sample_rate = spec.sample_rate;
  clip.audio.samples.assign(n_samples, 0.0);
  clip.track.source_duration_s = static_cast<double>(n_samples) / sr;

  const double amp = std::pow(10.0, spec.level_dbfs / 20.0);
  const ToneBand& band = kBands[pick(3)];
  const double freq = uniform(band.lo, band.hi);
  const double click_rate = uniform(60.0, 100.0);
  constexpr double kTwoPi = 6.283185307179586476925286766559;

  double t = 0.0;
  for (int e = 0; e < n_events; ++e) {
    t += spec.min_gap_s + slack * w[static_cast<std::size_t>(e)] / wsum;
    const auto s0 = static_cast<std::size_t>(std::llround(t * sr));
    const auto s1 = std::min(n_samples, static_cast<std::size_t>(std::llround((t + durs[static_cast<std::size_t>(e)]) * sr)));
    t += durs[static_cast<std::size_t>(e)];
    auto* x = clip.audio.samples.data();
    switch (clip.kind) {
      case SoundKind::kTone:
        for (std::size_t i = s0; i < s1; ++i) x[i] = amp * std::sin(kTwoPi * freq * static_cast<double>(i - s0) / sr);
        break;
      case SoundKind::kNoise:
        for (std::size_t i = s0; i < s1; ++i) x[i] = amp * (2.0 * uniform_draw(rng) - 1.0);
        break;
      case SoundKind::kClicks: {
        const double period = sr / click_rate;
        for (std::size_t i = s0; i < s1; ++i) {
          const double phase = std::fmod(static_cast<double>(i - s0), period) / sr;
          x[i] = amp * std::exp(-phase / 0.004) * std::sin(kTwoPi * 2500.0 * phase);
        }
        break;
      }
    }
    clip.track.intervals.push_back({static_cast<double>(s0) / sr, static_cast<double>(s1) / sr});
  }

  std::ostringstream id;
  id << "clip_" << std::setfill('0') << std::setw(5) << index;
  auto& entry = clip.entry;
  entry.id = id.str();
  entry.audio_path = "audio/" + entry.id + ".wav";
  entry.events = clip.track.intervals;
  entry.duration_s = clip.track.source_duration_s;
  const bool plural = n_events > 1;
  const std::string count = kNumbers[n_events - 1];
  switch (clip.kind) {
    case SoundKind::kTone:
      entry.caption = count + " " + band.word + (plural ? " beeps" : " beep");
      entry.category = "Technology";
      break;
    case SoundKind::kNoise:
      entry.caption = count + (plural ? " hisses" : " hiss");
      entry.category = "Nature Weather";
      break;
    case SoundKind::kClicks:
      entry.caption = count + " metal" + (plural ? " clicks" : " click");
      entry.category = "Foley";
      break;
  }
  return clip;
}

std::vector<ManifestEntry> synth_generate(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  for (const char* sub : {"audio", "timelines", "features"}) fs::create_directories(out_dir / sub);
  std::vector<ManifestEntry> entries;
  entries.reserve(spec.clips);
  for (std::size_t i = 0; i < spec.clips; ++i) {
    const SyntheticClip clip = synth_clip(spec, i);
    dsp::save_wav(out_dir / clip.entry.audio_path, clip.audio, dsp::WavEncoding::kPcm16);
    {
      std::ofstream out(out_dir / "timelines" / (clip.entry.id + ".json"), std::ios::binary);
      if (!out) throw Error(ErrorKind::kIo, "cannot write timeline for " + clip.entry.id);
      out << timeline::to_json(clip.track).dump(2) << '\n';
    }
    // Visual stand-in: per-frame presence plus Gaussian noise.
    const auto frames = static_cast<std::size_t>(std::llround(clip.track.source_duration_s * spec.video_fps));
    const auto v = timeline::intervals_to_timeline(clip.track, spec.video_fps, std::max<std::size_t>(frames, 1));
    Rng rng = derive_rng(spec.seed, {0xFEA7ull, static_cast<std::uint64_t>(i)});
    binio::FrameFeatureSequence f;
    f.fps = spec.video_fps;
    f.features = normal_matrix<double>(static_cast<Eigen::Index>(v.size()), spec.feature_dim, rng, spec.feature_noise);
    for (std::size_t k = 0; k < v.size(); ++k) f.features.row(static_cast<Eigen::Index>(k)).array() += v.bits[k];
    binio::write_features(out_dir / "features" / (clip.entry.id + ".bin"), f);
    entries.push_back(clip.entry);
  }
  save_manifest(out_dir / "manifest.jsonl", entries);
  {
    std::ofstream out(out_dir / "spec.json", std::ios::binary);
    out << to_json(spec).dump(2) << '\n';
  }
  return entries;
}

// ---------------------------------------------------------------- captions

std::string build_caption_prompt(const CaptionRequest& req) {
  if (req.frames.size() != 4)
    throw usage_error("caption prompt needs exactly 4 frames, got " + std::to_string(req.frames.size()));
  static const char* kCues[4] = {"First ,", "Then ,", "After that,", "Finally ,"};
  std::string out;
  for (std::size_t i = 0; i < 4; ++i)
    out += std::string(kCues[i]) + "<Img><ImageFeature:" + req.frames[i] + "></Img>.\n";
  out += req.task_identifier + " " + req.instruction;
  return out;
}

std::string MockCaptionProvider::key(const CaptionRequest& req) {
  std::string k;
  for (std::size_t i = 0; i < req.frames.size(); ++i) k += (i ? "," : "") + req.frames[i];
  return k;
}

std::string MockCaptionProvider::describe(const CaptionRequest& req) {
  (void)build_caption_prompt(req);  // same validation as a real provider
  const auto it = table_.find(key(req));
  if (it == table_.end()) throw CaptionError(CaptionErrorCode::kUnknownRequest, "no canned caption for " + key(req));
  return it->second;
}

}  // namespace tcfoley::data
