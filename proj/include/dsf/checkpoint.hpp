#pragma once
// Binary training snapshot: "DSFC", u32 version, config text, iteration,
// parameter records, optimizer records, RNG state. Tensor records are
// (name, rank, dims, little-endian f32 data).

#include <filesystem>

#include "dsf/config.hpp"
#include "dsf/optimizer.hpp"
#include "dsf/params.hpp"
#include "dsf/rng.hpp"

namespace dsf::inline DSF_PREC {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::uint64_t iteration = 0;
  ParamStore params;
  AdamW optimizer;
  RngStream rng;
};

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dsf::inline DSF_PREC
