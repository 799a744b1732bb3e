#pragma once

// Checkpoint files: one JSON manifest line, then little-endian float32
// sections whose element counts the manifest records.
//
//   {"format":"elsa-checkpoint","version":1,"stage":...,"epoch":...,
//    "data_std":...,"rng_state":"...","config":{...},
//    "encoder":{"input":..,"hidden":..,"embed":..,"shifts":..},
//    "prototypes":{"rows":k,"cols":z,"last_refresh_epoch":..},
//    "sections":[{"name":"encoder","count":n},{"name":"prototypes","count":k*z}]}\n
//   <float32 x n><float32 x k*z>
//
// Weights are stored at 32-bit precision and widened on load, so
// save -> load -> save reproduces the file byte for byte.

#include "elsa/config.hpp"
#include "elsa/encoder.hpp"
#include "elsa/prototypes.hpp"

#include <filesystem>
#include <string>

namespace elsa {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string stage = "pretrain";  // pretrain | finetune
  std::size_t epoch = 0;
  RunConfig config;
  double data_std = 1.0;  // unit of the augmentation scales
  std::string rng_state;  // textual std::mt19937_64 state
  EncoderParams encoder;
  PrototypeSet prototypes;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws ValidationError on a version mismatch or malformed content.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace elsa
