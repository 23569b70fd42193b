#include "tcfoley/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tcfoley::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'C', 'F', 'C', 'K', 'P', 'T', '\0'};

struct Blob {
  std::string name;
  const Mat<float>* value;
  bool trainable;
};

void append_rowmajor(std::vector<float>& out, const Mat<float>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
}

}  // namespace

void save(const fs::path& path, const Checkpoint& ckpt) {
  std::vector<Blob> blobs;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i)
    blobs.push_back({ckpt.params.name(i), &ckpt.params[i], ckpt.params.trainable(i)});
  json adam = nullptr;
  if (ckpt.adam) {
    const auto& a = *ckpt.adam;
    for (std::size_t k = 0; k < a.names.size(); ++k) {
      blobs.push_back({"adam.m/" + a.names[k], &a.m[k], false});
      blobs.push_back({"adam.v/" + a.names[k], &a.v[k], false});
    }
    adam = {{"steps", a.steps},
            {"lr", a.config.lr},
            {"beta1", a.config.beta1},
            {"beta2", a.config.beta2},
            {"eps", a.config.eps},
            {"names", a.names}};
  }

  json tensors = json::array();
  std::vector<float> payload;
  for (const auto& b : blobs) {
    tensors.push_back({{"name", b.name},
                       {"rows", b.value->rows()},
                       {"cols", b.value->cols()},
                       {"trainable", b.trainable},
                       {"offset", payload.size()}});
    append_rowmajor(payload, *b.value);
  }
  const json manifest = {{"version", kVersion}, {"layout", "row-major f32"}, {"meta", ckpt.meta},
                         {"tensors", tensors},  {"adam", adam}};
  const std::string text = manifest.dump();

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
    const std::uint32_t version = kVersion;
    const std::uint64_t len = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
    if (!out) throw Error(ErrorKind::kIo, "short write on checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw data_error(path.string() + " is not a checkpoint");
  if (version != kVersion)
    throw data_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw data_error(path.string() + ": truncated manifest");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& ex) {
    throw data_error(path.string() + ": bad manifest: " + ex.what());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw data_error(path.string() + ": payload is not a whole number of floats");
  std::vector<float> payload(bytes.size() / 4);
  std::memcpy(payload.data(), bytes.data(), bytes.size());

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", json::object());
  std::unordered_map<std::string, Mat<float>> extra;
  for (const auto& t : manifest.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>(), cols = t.at("cols").get<Eigen::Index>();
    const auto off = t.at("offset").get<std::size_t>();
    if (off + static_cast<std::size_t>(rows * cols) > payload.size())
      throw data_error(path.string() + ": tensor " + t.at("name").get<std::string>() + " overruns the payload");
    Mat<float> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = payload[off + static_cast<std::size_t>(i * cols + j)];
    const auto name = t.at("name").get<std::string>();
    if (name.rfind("adam.", 0) == 0)
      extra[name] = std::move(m);
    else
      ckpt.params.add(name, std::move(m), t.at("trainable").get<bool>());
  }
  if (!manifest.at("adam").is_null()) {
    const auto& a = manifest.at("adam");
    AdamState s;
    s.steps = a.at("steps").get<std::uint64_t>();
    s.config = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                a.at("eps").get<double>()};
    s.names = a.at("names").get<std::vector<std::string>>();
    for (const auto& n : s.names) {
      s.m.push_back(extra.at("adam.m/" + n));
      s.v.push_back(extra.at("adam.v/" + n));
    }
    ckpt.adam = std::move(s);
  }
  return ckpt;
}

void restore_params(ParamSet<float>& dst, const ParamSet<float>& src, bool flags) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const std::string& n = dst.name(i);
    if (!src.contains(n)) throw data_error("checkpoint lacks parameter " + n);
    const auto& v = src[src.index(n)];
    if (v.rows() != dst[i].rows() || v.cols() != dst[i].cols())
      throw data_error("checkpoint parameter " + n + " has the wrong shape");
    dst.mutable_value(i) = v;
  }
  if (flags)
    for (std::size_t i = 0; i < dst.size(); ++i) dst.set_trainable_at(i, src.trainable(src.index(dst.name(i))));
}

AdamState capture_adam(const training::Adam<float>& opt, const ParamSet<float>& p) {
  AdamState s;
  s.config = opt.config();
  s.steps = opt.steps_taken();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (opt.first_moment(i).size() == 0) continue;
    s.names.push_back(p.name(i));
    s.m.push_back(opt.first_moment(i));
    s.v.push_back(opt.second_moment(i));
  }
  return s;
}

training::Adam<float> restore_adam(const AdamState& s, const ParamSet<float>& p) {
  training::Adam<float> opt(p, s.config);
  opt.set_steps_taken(s.steps);
  for (std::size_t k = 0; k < s.names.size(); ++k) {
    const auto i = p.index(s.names[k]);
    if (!p.trainable(i)) throw data_error("optimizer state for frozen parameter " + s.names[k]);
    opt.first_moment(i) = s.m[k];
    opt.second_moment(i) = s.v[k];
  }
  return opt;
}

}  // namespace tcfoley::checkpoint
