#include "tcfoley/data.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

using namespace tcfoley;
using namespace tcfoley::data;
namespace fs = std::filesystem;

namespace {

std::string line_for(const std::string& id, const std::string& category, double duration = 4.0,
                     const std::string& events = "[{\"start_s\":0.5,\"end_s\":1.0}]") {
  return "{\"id\":\"" + id + "\",\"audio_path\":\"a/" + id + ".wav\",\"caption\":\"a bell rings\",\"category\":\"" +
         category + "\",\"duration_s\":" + std::to_string(duration) + ",\"events\":" + events + "}";
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tcfoley_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("category table has the 23 published names and shares") {
  const std::vector<std::pair<std::string, double>> published = {
      {"Household Daily", 14.11}, {"Transportation Vehicles", 10.42}, {"Impacts Crashes", 10.10},
      {"Foley", 8.24},           {"Human Elements", 7.77},           {"Industrial", 6.58},
      {"Weapons War", 5.83},     {"Cartoon Comical", 4.90},          {"Sports", 4.43},
      {"Animals Insects", 4.04}, {"Instruments", 3.68},              {"Water Liquid", 3.27},
      {"Technology", 2.70},      {"Horror", 2.41},                   {"Emergency", 2.20},
      {"Public Places", 1.87},   {"Sound Design Effects", 1.69},     {"Doors Windows", 1.56},
      {"Fire Explosions", 1.49}, {"Nature Weather", 1.02},           {"Leisure", 0.84},
      {"Multimedia", 0.47},      {"Bells", 0.37}};
  const auto& table = category_table();
  REQUIRE(table.size() == published.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(std::string(table[i].name) == published[i].first);
    CHECK(table[i].percent == published[i].second);
  }
  CHECK(is_known_category("Bells"));
  CHECK_FALSE(is_known_category("bells"));
}

TEST_CASE("load_manifest: empty file, accepted and rejected categories") {
  const fs::path dir = scratch_dir("manifest");
  { std::ofstream(dir / "empty.jsonl"); }
  const auto empty = load_manifest(dir / "empty.jsonl");
  CHECK(empty.entries.empty());
  CHECK(empty.errors.empty());

  const auto load = parse_manifest(line_for("a", "Bells") + "\n\n" + line_for("b", "Spaceships") + "\n{not json\n" +
                                   line_for("c", "Foley") + "\n");
  REQUIRE(load.entries.size() == 2);
  CHECK(load.entries[0].id == "a");
  CHECK(load.entries[1].id == "c");
  REQUIRE(load.errors.size() == 2);
  CHECK(load.errors[0].line == 3);
  CHECK(load.errors[0].message.find("Spaceships") != std::string::npos);
  CHECK(load.errors[1].line == 4);

  CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl"), Error);
}

TEST_CASE("validate_manifest: long clips warn, bad events fail") {
  auto entries = parse_manifest(line_for("long", "Bells", 12.0) + "\n" +
                                line_for("bad", "Bells", 4.0, "[{\"start_s\":2.0,\"end_s\":1.0}]") + "\n" +
                                line_for("outside", "Bells", 4.0, "[{\"start_s\":3.0,\"end_s\":5.0}]"))
                     .entries;
  REQUIRE(entries.size() == 3);
  auto r = validate_manifest({entries[0]});
  CHECK(r.ok());
  CHECK(r.warnings.size() == 1);

  r = validate_manifest({entries[1]});
  CHECK_FALSE(r.ok());
  r = validate_manifest({entries[2]});
  CHECK_FALSE(r.ok());

  r = validate_manifest({entries[0], entries[0]});
  CHECK_FALSE(r.ok());  // duplicate id
  CHECK(r.histogram.at("Bells") == 2);
}

TEST_CASE("histogram over a corpus sampled to the table proportions") {
  Rng rng(11);
  const auto& table = category_table();
  std::vector<ManifestEntry> entries;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = 100.0 * uniform_draw(rng), acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < table.size(); ++k) {
      acc += table[k].percent;
      if (u < acc) break;
    }
    ManifestEntry e;
    e.id = "e" + std::to_string(i);
    e.caption = "x";
    e.category = table[k].name;
    e.duration_s = 1.0;
    entries.push_back(e);
  }
  const auto r = validate_manifest(entries);
  CHECK(r.ok());
  // Binomial sd at p = 0.1411 over 20000 draws is about 0.25 percentage points.
  CHECK(std::abs(r.share("Household Daily") - 14.11) < 1.0);
  CHECK(std::abs(r.share("Bells") - 0.37) < 0.2);
}

TEST_CASE("manifest round trip is byte-stable") {
  const fs::path dir = scratch_dir("roundtrip");
  SyntheticSpec spec;
  spec.clips = 6;
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < spec.clips; ++i) entries.push_back(synth_clip(spec, i).entry);
  save_manifest(dir / "a.jsonl", entries);
  const auto load = load_manifest(dir / "a.jsonl");
  REQUIRE(load.errors.empty());
  save_manifest(dir / "b.jsonl", load.entries);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(to_jsonl_line(load.entries[0]) == to_jsonl_line(entries[0]));
}

TEST_CASE("synth_generate is byte-identical for a fixed seed") {
  SyntheticSpec spec;
  spec.clips = 5;
  spec.seed = 42;
  const fs::path a = scratch_dir("synth_a"), b = scratch_dir("synth_b");
  synth_generate(spec, a);
  synth_generate(spec, b);
  std::size_t files = 0;
  for (const auto& f : fs::recursive_directory_iterator(a)) {
    if (!f.is_regular_file()) continue;
    ++files;
    CHECK(slurp(f.path()) == slurp(b / fs::relative(f.path(), a)));
  }
  CHECK(files == 1 + 1 + 3 * spec.clips);

  spec.seed = 43;
  CHECK(synth_clip(spec, 0).audio.samples != synth_clip(SyntheticSpec{}, 0).audio.samples);
}

TEST_CASE("synthetic spec: infeasible and invalid settings") {
  SyntheticSpec spec;
  spec.max_events = 5;
  spec.min_event_s = 0.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.min_event_s = 0.7;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.kinds.clear();
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK_THROWS_AS(synthetic_spec_from_json(nlohmann::json{{"clipz", 3}}), Error);
  const auto back = synthetic_spec_from_json(to_json(SyntheticSpec{}));
  CHECK(to_json(back) == to_json(SyntheticSpec{}));
}

TEST_CASE("one 1 s event in 4 s clips gives a single 1 s run") {
  SyntheticSpec spec;
  spec.clip_duration_s = 4.0;
  spec.min_events = spec.max_events = 1;
  spec.min_event_s = spec.max_event_s = 1.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto clip = synth_clip(spec, i);
    REQUIRE(clip.track.size() == 1);
    CHECK(clip.track.intervals[0].duration() == doctest::Approx(1.0).epsilon(1e-9));
    const auto bits = timeline::intervals_to_timeline(clip.track, 100.0, 400);
    std::size_t runs = 0;
    for (std::size_t k = 0; k < bits.size(); ++k)
      if (bits.bits[k] && (k == 0 || !bits.bits[k - 1])) ++runs;
    CHECK(runs == 1);
    CHECK(std::abs(static_cast<double>(bits.count()) - 100.0) <= 1.0);
    CHECK(clip.entry.caption.rfind("one ", 0) == 0);
  }
}

TEST_CASE("extract_track recovers synthetic intervals within one activity frame") {
  SyntheticSpec spec;
  timeline::ActivityConfig act;
  const double tol = act.frame_len_s;
  double worst = 0.0;
  std::size_t mismatched_counts = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    const auto clip = synth_clip(spec, i);
    const auto got = timeline::extract_track(clip.audio, act);
    if (got.size() != clip.track.size()) {
      ++mismatched_counts;
      continue;
    }
    for (std::size_t k = 0; k < got.size(); ++k) {
      worst = std::max(worst, std::abs(got.intervals[k].start_s - clip.track.intervals[k].start_s));
      worst = std::max(worst, std::abs(got.intervals[k].end_s - clip.track.intervals[k].end_s));
    }
  }
  INFO("worst boundary error " << worst << " s");
  CHECK(mismatched_counts == 0);
  CHECK(worst <= tol);
}

TEST_CASE("captions name the event count and kind") {
  SyntheticSpec spec;
  const auto vocab = caption_vocabulary();
  for (std::size_t i = 0; i < 60; ++i) {
    const auto clip = synth_clip(spec, i);
    std::istringstream words(clip.entry.caption);
    std::string first, w;
    words >> first;
    const std::vector<std::string> numbers = {"one", "two", "three"};
    CHECK(first == numbers[clip.track.size() - 1]);
    std::istringstream all(clip.entry.caption);
    while (all >> w) CHECK(std::find(vocab.begin(), vocab.end(), w) != vocab.end());
    CHECK(validate_manifest({clip.entry}).ok());
  }
}

TEST_CASE("caption prompt matches the golden rendering") {
  CaptionRequest req;
  req.frames = {"frame_03", "frame_11", "frame_19", "frame_27"};
  std::string golden = slurp(TCFOLEY_TEST_DATA "/caption_prompt.golden.txt");
  while (!golden.empty() && (golden.back() == '\n' || golden.back() == '\r')) golden.pop_back();
  const std::string prompt = build_caption_prompt(req);
  CHECK(prompt == golden);

  std::size_t at = 0;
  for (const char* cue : {"First ,", "Then ,", "After that,", "Finally ,"}) {
    const auto pos = prompt.find(cue, at);
    REQUIRE(pos != std::string::npos);
    at = pos + 1;
  }
  CHECK(prompt.find("[foley] ") != std::string::npos);

  req.frames.pop_back();
  CHECK_THROWS_AS(build_caption_prompt(req), Error);
}

TEST_CASE("mock caption provider is deterministic and keyed by frames") {
  MockCaptionProvider mock(std::map<std::string, std::string>{{"a,b,c,d", "a door slams, then footsteps"}});
  CaptionRequest req;
  req.frames = {"a", "b", "c", "d"};
  CHECK(mock.describe(req) == "a door slams, then footsteps");
  CHECK(mock.describe(req) == mock.describe(req));
  req.frames[3] = "e";
  try {
    mock.describe(req);
    FAIL("expected an error");
  } catch (const CaptionError& e) {
    CHECK(e.code() == CaptionErrorCode::kUnknownRequest);
  }
}

TEST_CASE("http caption provider: unreachable endpoint fails within the timeout") {
  CaptionRequest req;
  req.frames = {"a", "b", "c", "d"};
  HttpCaptionProvider http("http://127.0.0.1:1/caption", std::chrono::milliseconds(500));
  const auto t0 = std::chrono::steady_clock::now();
  try {
    http.describe(req);
    FAIL("expected an error");
  } catch (const CaptionError& e) {
    CHECK((e.code() == CaptionErrorCode::kNetwork || e.code() == CaptionErrorCode::kTimeout));
    CHECK(e.kind() == ErrorKind::kNetwork);
  }
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(3));
  CHECK_THROWS_AS(HttpCaptionProvider("", std::chrono::milliseconds(5)), Error);
  CHECK_THROWS_AS(HttpCaptionProvider("http://x", std::chrono::milliseconds(0)), Error);
}

TEST_CASE("http caption provider against a local server: success and distinct failures") {
  httplib::Server server;
  std::string seen;
  server.Post("/ok", [&](const httplib::Request& r, httplib::Response& res) {
    seen = nlohmann::json::parse(r.body).at("prompt").get<std::string>();
    res.set_content("{\"caption\":\"two beeps\"}", "application/json");
  });
  server.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  server.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.set_content("nope", "text/plain"); });
  server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content("{\"caption\":\"late\"}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  CaptionRequest req;
  req.frames = {"a", "b", "c", "d"};
  CHECK(HttpCaptionProvider(base + "/ok", std::chrono::milliseconds(2000)).describe(req) == "two beeps");
  CHECK(seen == build_caption_prompt(req));

  auto code_of = [&](const std::string& path, int ms) {
    try {
      HttpCaptionProvider(base + path, std::chrono::milliseconds(ms)).describe(req);
    } catch (const CaptionError& e) {
      return e.code();
    }
    FAIL("expected an error");
    return CaptionErrorCode::kNetwork;
  };
  CHECK(code_of("/fail", 2000) == CaptionErrorCode::kStatus);
  CHECK(code_of("/bad", 2000) == CaptionErrorCode::kBadResponse);
  CHECK(code_of("/slow", 200) == CaptionErrorCode::kTimeout);

  server.stop();
  worker.join();
}
