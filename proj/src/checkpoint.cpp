#include "wbk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wbk/error.hpp"

namespace wbk {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void floats(std::span<const float> v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (float x : v) f32(x);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * k);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats() {
    const std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * 4);
    std::vector<float> v(n);
    for (float& x : v) x = f32();
    return v;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::Data, "checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(ck.epoch);
  w.u64(ck.rng.key());
  w.u64(ck.rng.counter());
  w.str(ck.meta);

  const auto& params = ck.params.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    w.str(name);
    w.u8(p.frozen ? 1 : 0);
    const Shape s = p.value.shape();
    w.i32(s.n);
    w.i32(s.c);
    w.i32(s.h);
    w.i32(s.w);
    for (float x : p.value.values()) w.f32(x);
  }
  const auto& bn = ck.params.bn_stats();
  w.u32(static_cast<std::uint32_t>(bn.size()));
  for (const auto& [name, stats] : bn) {
    w.str(name);
    w.floats(stats.running_mean);
    w.floats(stats.running_var);
  }

  const Optimizer& opt = ck.optimizer;
  w.u8(opt.kind() == OptimizerKind::AdamW ? 0 : 1);
  w.f32(opt.learning_rate());
  w.f32(opt.weight_decay());
  w.u64(static_cast<std::uint64_t>(opt.steps()));
  w.u32(static_cast<std::uint32_t>(opt.slots().size()));
  for (const auto& [name, slot] : opt.slots()) {
    w.str(name);
    w.floats(slot.m);
    w.floats(slot.v);
  }

  w.u32(static_cast<std::uint32_t>(ck.epoch_losses.size()));
  for (double l : ck.epoch_losses) w.f64(l);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::Data, "checkpoint is truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw Error(ErrorKind::Data, "not a checkpoint (bad magic)");
  Reader r(bytes);
  for (int k = 0; k < 4; ++k) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Data, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.epoch = r.u32();
  const std::uint64_t key = r.u64();
  const std::uint64_t counter = r.u64();
  ck.rng = CounterRng(key, counter);
  ck.meta = r.str();

  const std::uint32_t n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    const bool frozen = r.u8() != 0;
    Shape s;
    s.n = r.i32();
    s.c = r.i32();
    s.h = r.i32();
    s.w = r.i32();
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) throw Error(ErrorKind::Data, "checkpoint tensor '" + name + "' has a bad shape");
    std::vector<float> vals(s.numel());
    for (float& x : vals) x = r.f32();
    ck.params.add(name, Tensor(s, std::move(vals)), frozen);
  }
  const std::uint32_t n_bn = r.u32();
  for (std::uint32_t i = 0; i < n_bn; ++i) {
    std::string name = r.str();
    BatchNormStats& st = ck.params.bn(name);
    st.running_mean = r.floats();
    st.running_var = r.floats();
  }

  const OptimizerKind kind = r.u8() == 0 ? OptimizerKind::AdamW : OptimizerKind::Sgd;
  const float lr = r.f32();
  const float wd = r.f32();
  const auto steps = static_cast<std::int64_t>(r.u64());
  std::map<std::string, OptimizerSlot> slots;
  const std::uint32_t n_slots = r.u32();
  for (std::uint32_t i = 0; i < n_slots; ++i) {
    std::string name = r.str();
    OptimizerSlot slot;
    slot.m = r.floats();
    slot.v = r.floats();
    slots.emplace(std::move(name), std::move(slot));
  }
  ck.optimizer = Optimizer(kind, lr, wd);
  ck.optimizer.restore(steps, std::move(slots));

  const std::uint32_t n_losses = r.u32();
  for (std::uint32_t i = 0; i < n_losses; ++i) ck.epoch_losses.push_back(r.f64());
  if (!r.at_end()) throw Error(ErrorKind::Data, "checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Data, "cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorKind::Data, "write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Data, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace wbk
