#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "tcfoley_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code = -1;
  std::string out, err;
};

Run cli(const std::string& args) {
  const fs::path out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = std::string("\"") + TCFOLEY_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// A four-clip corpus shared by the tests below; generated once.
const fs::path& corpus() {
  static const fs::path dir = [] {
    const fs::path d = workdir() / "corpus";
    REQUIRE(cli("synth --out " + q(d) + " --clips 4 --seed 3").code == 0);
    return d;
  }();
  return dir;
}

const fs::path& config() {
  static const fs::path path = [] {
    const fs::path p = workdir() / "run.json";
    std::ofstream(p) << R"({"holdout": 1, "train": {"base": {"epochs": 1, "batch_size": 2},
                                                 "adapter": {"epochs": 1, "batch_size": 2}}})";
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("cli: usage errors exit 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("timeline extract").code == 1);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("cli: missing input exits 2 and names the file") {
  const auto r = cli("timeline extract " + q(workdir() / "nope.wav"));
  CHECK(r.code == 2);
  CHECK(r.err.find("nope.wav") != std::string::npos);
}

TEST_CASE("cli: timeline extract and condition build") {
  const fs::path wav = corpus() / "audio" / "clip_00000.wav";
  const fs::path tl = workdir() / "tl.json";
  REQUIRE(cli("timeline extract " + q(wav) + " --out " + q(tl)).code == 0);
  const std::string text = slurp(tl);
  CHECK(text.find("\"events\"") != std::string::npos);
  CHECK(text.find("\"timeline\"") != std::string::npos);

  CHECK(cli("condition build " + q(tl) + " --mel-frames 32 --resample --out " + q(workdir() / "c.mel")).code == 0);
  CHECK(cli("condition build " + q(tl) + " --mel-frames 7 --out " + q(workdir() / "bad.mel")).code == 2);
}

TEST_CASE("cli: manifest validate accepts synth output and rejects bad categories") {
  CHECK(cli("manifest validate " + q(corpus() / "manifest.jsonl")).code == 0);
  const fs::path bad = workdir() / "bad.jsonl";
  std::ofstream(bad) << R"({"id":"x","audio_path":"x.wav","caption":"c","category":"Spaceships","duration_s":1,"events":[]})"
                     << "\n";
  const auto r = cli("manifest validate " + q(bad));
  CHECK(r.code == 2);
  CHECK(r.out.find("line 1") != std::string::npos);
}

TEST_CASE("cli: eval of perfect predictions gives an all-ones mean row") {
  const auto r = cli("eval --pred-dir " + q(corpus() / "timelines") + " --gt-dir " + q(corpus() / "timelines"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\nmean,1.000000,1.000000,1.000000,1.000000,") != std::string::npos);
  CHECK(cli("eval --pred-dir " + q(workdir()) + " --gt-dir " + q(corpus() / "timelines")).code == 2);
}

TEST_CASE("cli: config schema rejects unknown keys") {
  const fs::path cfg = workdir() / "typo.json";
  std::ofstream(cfg) << R"({"scheduel": {"steps": 5}})";
  CHECK(cli("train base --config " + q(cfg) + " --corpus " + q(corpus()) + " --out " + q(workdir() / "x.ckpt")).code == 1);
}

TEST_CASE("cli: train, then sample deterministically") {
  const fs::path base = workdir() / "base.ckpt", ad = workdir() / "adapter.ckpt";
  REQUIRE(cli("train base --config " + q(config()) + " --corpus " + q(corpus()) + " --out " + q(base)).code == 0);
  REQUIRE(cli("train adapter --config " + q(config()) + " --corpus " + q(corpus()) + " --base " + q(base) +
              " --out " + q(ad))
              .code == 0);

  const fs::path tl = corpus() / "timelines" / "clip_00001.json";
  const std::string common = "sample --checkpoint " + q(ad) + " --caption \"two low beeps\" --duration 1.0 ";
  REQUIRE(cli(common + "--timeline " + q(tl) + " --seed 9 --out " + q(workdir() / "a.wav")).code == 0);
  REQUIRE(cli(common + "--timeline " + q(tl) + " --seed 9 --out " + q(workdir() / "b.wav")).code == 0);
  REQUIRE(cli(common + "--timeline " + q(tl) + " --seed 10 --out " + q(workdir() / "c.wav")).code == 0);
  CHECK(slurp(workdir() / "a.wav") == slurp(workdir() / "b.wav"));
  CHECK(slurp(workdir() / "a.wav") != slurp(workdir() / "c.wav"));

  CHECK(cli(common + "--seed 9 --out " + q(workdir() / "d.wav")).code == 1);
  CHECK(cli(common + "--no-adapter --seed 9 --out " + q(workdir() / "d.wav")).code == 0);
  CHECK(cli("sample --checkpoint " + q(workdir() / "absent.ckpt") + " --caption x --out " + q(workdir() / "e.wav"))
            .code == 2);
}

TEST_CASE("cli: caption prompt offline and with a mock table") {
  auto r = cli("caption --frames f1,f2,f3,f4");
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("First ,", 0) == 0);
  CHECK(cli("caption --frames f1,f2,f3").code == 1);
  const fs::path mock = workdir() / "mock.json";
  std::ofstream(mock) << R"({"f1,f2,f3,f4": "a bell rings"})";
  r = cli("caption --frames f1,f2,f3,f4 --mock " + q(mock));
  CHECK(r.out == "a bell rings\n");
}
