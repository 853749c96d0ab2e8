#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbk/nets.hpp"
#include "wbk/optim.hpp"
#include "wbk/rng.hpp"

namespace wbk {

inline constexpr char kCheckpointMagic[4] = {'B', 'S', 'W', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t epoch = 0;  // completed epochs
  CounterRng rng;
  ModelParams params;
  Optimizer optimizer;
  std::vector<double> epoch_losses;
  std::string meta;  // `key = value` lines describing the run
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wbk
