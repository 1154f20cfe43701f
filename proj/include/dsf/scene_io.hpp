#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsf/pointcloud.hpp"

namespace dsf::inline DSF_PREC {

/// Malformed scene, checkpoint or config input.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kSceneFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.txt";

/// DSF1 little-endian binary: "DSF1", u32 version, u32 n1, u32 n2,
/// f32 source[n1x3], f32 target[n2x3], f32 gt_flow[n1x3], u8 valid_mask[n1].
void save_scene(const std::filesystem::path& path, const ScenePair& pair);
ScenePair load_scene(const std::filesystem::path& path);

std::vector<char> encode_scene(const ScenePair& pair);
ScenePair decode_scene(const std::vector<char>& bytes);

struct Dataset {
  std::vector<std::string> names;
  std::vector<ScenePair> scenes;

  std::size_t size() const noexcept { return scenes.size(); }
};

/// Writes every scene plus a manifest listing the filenames, one per line.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace dsf::inline DSF_PREC
