#include "dsf/checkpoint.hpp"

#include <cstring>

#include "dsf/binary_io.hpp"
#include "dsf/scene_io.hpp"

namespace dsf::inline DSF_PREC {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'F', 'C'};

void write_tensor(ByteWriter& w, const std::string& name, const Array& a) {
  w.string(name);
  w.u32(static_cast<std::uint32_t>(a.rank()));
  for (auto d : a.shape()) w.u64(d);
  for (auto v : a.values()) w.f32(static_cast<float>(v));
}

std::pair<std::string, Array> read_tensor(ByteReader& r) {
  std::string name = r.string("tensor name");
  const std::uint32_t rank = r.u32("tensor rank");
  if (rank > 8) throw ParseError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = r.u64("tensor dims");
    if (d > (std::size_t{1} << 32)) throw ParseError("checkpoint: tensor '" + name + "' too large");
    count *= d;
  }
  if (count * 4 > r.remaining()) throw ParseError("truncated input while reading tensor data");
  Array a(shape);
  for (auto& v : a.values()) v = static_cast<Real>(r.f32("tensor data"));
  return {std::move(name), std::move(a)};
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.string(to_text(ckpt.config));
  w.u64(ckpt.iteration);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, e] : ckpt.params.entries()) write_tensor(w, name, e.value);
  w.u64(ckpt.optimizer.steps());
  w.u32(static_cast<std::uint32_t>(ckpt.optimizer.state().size()));
  for (const auto& [name, mom] : ckpt.optimizer.state()) {
    write_tensor(w, "m." + name, mom.m);
    write_tensor(w, "v." + name, mom.v);
  }
  w.u64(ckpt.rng.seed());
  w.u64(ckpt.rng.counter());
  return std::move(w).take();
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("checkpoint: bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.config = parse_config(r.string("config"));
  c.iteration = r.u64("iteration");
  const std::uint32_t n_params = r.u32("parameter count");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto [name, a] = read_tensor(r);
    if (c.params.contains(name)) throw ParseError("checkpoint: duplicate tensor '" + name + "'");
    c.params.add(name, std::move(a));
  }
  c.optimizer = AdamW(c.config.train.weight_decay);
  c.optimizer.set_steps(r.u64("optimizer steps"));
  const std::uint32_t n_state = r.u32("optimizer count");
  for (std::uint32_t i = 0; i < n_state; ++i) {
    auto [mname, m] = read_tensor(r);
    auto [vname, v] = read_tensor(r);
    if (mname.rfind("m.", 0) != 0 || vname != "v." + mname.substr(2)) {
      throw ParseError("checkpoint: malformed optimizer record '" + mname + "'");
    }
    const std::string name = mname.substr(2);
    if (!c.params.contains(name)) {
      throw ParseError("checkpoint: optimizer state for unknown tensor '" + name + "'");
    }
    c.optimizer.state().emplace(name, AdamW::Moments{std::move(m), std::move(v)});
  }
  const std::uint64_t seed = r.u64("rng seed");
  const std::uint64_t counter = r.u64("rng counter");
  c.rng = RngStream(seed, counter);
  if (r.remaining() != 0) throw ParseError("checkpoint: trailing bytes");
  check_denoiser_params(c.params, c.config.denoiser);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace dsf::inline DSF_PREC
