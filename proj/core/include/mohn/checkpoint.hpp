#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mohn/config.hpp"
#include "mohn/encoder.hpp"
#include "mohn/memory_bank.hpp"

namespace mohn {

// Full run state at a step boundary.  Loading one and continuing produces
// byte-identical metrics to the run that never stopped.
struct Checkpoint {
  TrainConfig config;
  EncoderParams query;
  EncoderParams key;
  std::vector<LayerParams> velocity;  // optimizer buffers, query shapes
  MemoryBank bank;
  std::array<std::uint64_t, 4> rng_state{};

  std::uint64_t step = 0;       // completed steps overall
  std::uint64_t epoch = 0;      // epoch the next step belongs to (0-based)
  std::uint64_t epoch_pos = 0;  // completed steps within that epoch
  std::vector<std::uint64_t> permutation;  // current epoch order; empty at
                                           // epoch boundaries

  // Normalization statistics the run trained with, so later evaluation
  // reproduces the exact input mapping.
  std::uint8_t vector_mode = 0;  // 1 when features are 1 x dim vectors
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
};

// Binary container: magic "MOHN", one version byte, then length-prefixed
// sections each followed by a CRC32 of its payload.  Little-endian
// throughout.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mohn
