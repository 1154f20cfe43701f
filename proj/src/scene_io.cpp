#include "dsf/scene_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dsf/binary_io.hpp"

namespace dsf::inline DSF_PREC {

namespace {
constexpr char kMagic[4] = {'D', 'S', 'F', '1'};

void put_points(ByteWriter& w, const Array& a) {
  for (Real v : a.values()) w.f32(static_cast<float>(v));
}

Array get_points(ByteReader& r, std::size_t n, const char* field) {
  Array a = Array::matrix(n, 3);
  for (auto& v : a.values()) {
    const float f = r.f32(field);
    if (!std::isfinite(f)) throw ParseError(std::string(field) + ": non-finite value");
    v = static_cast<Real>(f);
  }
  return a;
}
}  // namespace

std::vector<char> encode_scene(const ScenePair& pair) {
  pair.validate();
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kSceneFormatVersion);
  w.u32(static_cast<std::uint32_t>(pair.source.size()));
  w.u32(static_cast<std::uint32_t>(pair.target.size()));
  put_points(w, pair.source.points);
  put_points(w, pair.target.points);
  put_points(w, pair.gt_flow.vectors);
  for (auto m : pair.valid_mask) w.u8(m ? 1 : 0);
  return std::move(w).take();
}

ScenePair decode_scene(const std::vector<char>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("scene: bad magic (expected DSF1)");
  const std::uint32_t version = r.u32("version");
  if (version != kSceneFormatVersion) {
    throw ParseError("scene: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n1 = r.u32("n1");
  const std::uint32_t n2 = r.u32("n2");
  if (n1 == 0 || n2 == 0) throw ParseError("scene: empty point cloud header");
  const std::size_t expected = 16 + 12ull * n1 + 12ull * n2 + 12ull * n1 + n1;
  if (bytes.size() < expected) {
    // Report which section the data runs out in.
    const std::size_t avail = bytes.size();
    const char* field = avail < 16 + 12ull * n1               ? "source"
                        : avail < 16 + 12ull * (n1 + n2)      ? "target"
                        : avail < 16 + 12ull * (2 * n1 + n2)  ? "gt_flow"
                                                              : "valid_mask";
    throw ParseError(std::string("scene: truncated in ") + field + " (" + std::to_string(avail) +
                     " of " + std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) {
    throw ParseError("scene: " + std::to_string(bytes.size() - expected) +
                     " trailing bytes after valid_mask; gt_flow/valid_mask length does not "
                     "match n1");
  }
  ScenePair pair;
  pair.source.points = get_points(r, n1, "source");
  pair.target.points = get_points(r, n2, "target");
  pair.gt_flow.vectors = get_points(r, n1, "gt_flow");
  pair.valid_mask.resize(n1);
  for (auto& m : pair.valid_mask) {
    m = r.u8("valid_mask");
    if (m > 1) throw ParseError("valid_mask: value other than 0/1");
  }
  return pair;
}

void save_scene(const std::filesystem::path& path, const ScenePair& pair) {
  write_file(path, encode_scene(pair));
}

ScenePair load_scene(const std::filesystem::path& path) {
  try {
    return decode_scene(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / kManifestName, std::ios::binary);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::string name;
    if (i < dataset.names.size()) {
      name = dataset.names[i];
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "scene_%05zu.dsf", i);
      name = buf;
    }
    save_scene(dir / name, dataset.scenes[i]);
    manifest << name << '\n';
  }
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / kManifestName);
  if (!manifest) throw ParseError("dataset: missing " + (dir / kManifestName).string());
  Dataset ds;
  std::string line;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ds.scenes.push_back(load_scene(dir / line));
    ds.names.push_back(line);
  }
  if (ds.scenes.empty()) throw ParseError("dataset: manifest lists no scenes");
  return ds;
}

}  // namespace dsf::inline DSF_PREC
